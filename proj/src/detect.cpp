#include "revforge/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace revforge {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

std::array<std::size_t, 3> effective_bounds(const RankBinConfig& config, std::size_t vocab_size) {
    if (!config.proportional) {
        const auto& b = config.bounds;
        if (!(b[0] >= 1 && b[0] < b[1] && b[1] < b[2])) throw std::invalid_argument("rank bin bounds must increase");
        return b;
    }
    auto share = [&](double f, std::size_t floor) {
        return std::max(floor, static_cast<std::size_t>(std::ceil(f * static_cast<double>(vocab_size))));
    };
    std::array<std::size_t, 3> b{share(0.01, 1), share(0.10, 2), share(0.50, 3)};
    b[1] = std::max(b[1], b[0] + 1);
    b[2] = std::max(b[2], b[1] + 1);
    return b;
}

RankBinFeature rank_bin_features(const LanguageModel& lm, std::string_view text, const RankBinConfig& config) {
    lm.require_trained();
    auto ids = encode(lm.vocabulary(), text);
    if (ids.size() <= 2) throw std::invalid_argument("rank_bin_features: text has no tokens");
    RankBinFeature f;
    f.bounds = effective_bounds(config, lm.vocab_size());

    auto state = lm.initial_state();
    lm.advance(*state, kBor);
    for (std::size_t t = 1; t + 1 < ids.size(); ++t) {
        const std::size_t rank = rank_in(lm.distribution(*state), ids[t]);
        std::size_t bin = 3;
        for (std::size_t k = 0; k < 3; ++k) {
            if (rank <= f.bounds[k]) {
                bin = k;
                break;
            }
        }
        ++f.counts[bin];
        lm.advance(*state, ids[t]);
    }
    return f;
}

PerplexityFeature perplexity_features(const LanguageModel& lm, std::string_view text) {
    lm.require_trained();
    auto ids = encode(lm.vocabulary(), text);
    if (ids.size() <= 2) throw std::invalid_argument("perplexity_features: text has no tokens");
    auto state = lm.initial_state();
    lm.advance(*state, kBor);
    double nll = 0.0;
    for (std::size_t t = 1; t + 1 < ids.size(); ++t) {
        nll -= std::log(std::max(lm.distribution(*state)[ids[t]], 1e-300));
        lm.advance(*state, ids[t]);
    }
    PerplexityFeature f;
    f.tokens = ids.size() - 2;
    f.mean_nll = nll / static_cast<double>(f.tokens);
    return f;
}

std::string_view to_string(DetectorKind kind) { return kind == DetectorKind::RankBin ? "rank_bin" : "perplexity"; }

Detector::Detector(DetectorKind kind, std::shared_ptr<const LanguageModel> lm, RankBinConfig bins)
    : kind_(kind), lm_(std::move(lm)), bins_(bins) {
    if (!lm_) throw std::invalid_argument("detector needs a scoring language model");
}

void Detector::set_regression(LogisticRegression regression) {
    const std::size_t expected = kind_ == DetectorKind::RankBin ? 4 : 2;
    if (regression.dimension() != expected)
        throw std::invalid_argument("detector regression must have " + std::to_string(expected) + " weights");
    regression_ = std::move(regression);
}

VectorXd Detector::features(std::string_view text) const {
    if (kind_ == DetectorKind::RankBin) {
        auto f = rank_bin_features(*lm_, text, bins_);
        VectorXd x(4);
        const double norm = bins_.normalized ? static_cast<double>(f.total()) : 1.0;
        for (int k = 0; k < 4; ++k) x[k] = static_cast<double>(f.counts[static_cast<std::size_t>(k)]) / norm;
        return x;
    }
    auto f = perplexity_features(*lm_, text);
    VectorXd x(2);
    x << f.mean_nll, static_cast<double>(f.tokens);
    return x;
}

DetectorScore Detector::score(const Review& review) const {
    if (!trained()) throw std::logic_error("detector " + name() + " is not trained");
    return {review.id, name(), regression_.score(features(review.text))};
}

Detector train_detector(DetectorKind kind, std::shared_ptr<const LanguageModel> lm, std::span<const Review> labeled,
                        const LogisticConfig& config, const RankBinConfig& bins, LogisticFitReport* report) {
    Detector d(kind, std::move(lm), bins);
    if (labeled.empty()) throw std::invalid_argument("train_detector: no labelled reviews");
    std::vector<int> labels;
    MatrixXd x;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        VectorXd f = d.features(labeled[i].text);
        if (i == 0) x.resize(static_cast<Eigen::Index>(labeled.size()), f.size());
        x.row(static_cast<Eigen::Index>(i)) = f.transpose();
        labels.push_back(labeled[i].provenance == Provenance::Fake ? 1 : 0);
    }
    if (std::all_of(labels.begin(), labels.end(), [&](int l) { return l == labels.front(); }))
        throw std::invalid_argument("train_detector needs both real and fake reviews");
    d.set_regression(LogisticRegression::fit(x, labels, config, report));
    return d;
}

std::string FusionModel::name() const {
    std::string out;
    for (const auto& m : members) {
        if (!out.empty()) out += "+";
        out += m;
    }
    return out;
}

double FusionModel::score(std::span<const double> member_scores) const {
    if (member_scores.size() != members.size()) throw std::invalid_argument("fusion: member score count mismatch");
    VectorXd s(static_cast<Eigen::Index>(member_scores.size()));
    for (std::size_t k = 0; k < member_scores.size(); ++k) s[static_cast<Eigen::Index>(k)] = member_scores[k];
    return regression.score(s);
}

FusionModel train_fusion(std::vector<std::string> members, std::span<const std::vector<double>> member_scores,
                         std::span<const int> labels, const LogisticConfig& config) {
    if (members.empty()) throw std::invalid_argument("fusion needs at least one member");
    if (member_scores.size() != labels.size()) throw std::invalid_argument("fusion: label count mismatch");
    if (member_scores.empty()) throw std::invalid_argument("fusion: no training samples");
    MatrixXd x(static_cast<Eigen::Index>(member_scores.size()), static_cast<Eigen::Index>(members.size()));
    for (std::size_t i = 0; i < member_scores.size(); ++i) {
        if (member_scores[i].size() != members.size())
            throw std::invalid_argument("fusion: sample " + std::to_string(i) + " has " +
                                        std::to_string(member_scores[i].size()) + " member scores, expected " +
                                        std::to_string(members.size()));
        for (std::size_t k = 0; k < members.size(); ++k)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = member_scores[i][k];
    }
    LogisticConfig cfg = config;
    cfg.standardize = false;
    FusionModel f;
    f.regression = LogisticRegression::fit(x, labels, cfg);
    f.members = std::move(members);
    const VectorXd w = f.regression.raw_weights();
    for (std::size_t k = 0; k < f.members.size(); ++k)
        if (w[static_cast<Eigen::Index>(k)] < 0.0) f.anti_predictive.push_back(f.members[k]);
    return f;
}

DetectionReport evaluate_detectors(std::span<const Detector> detectors, std::span<const FusionModel> fusions,
                                   std::span<const EvalDataset> datasets) {
    if (datasets.empty()) throw std::invalid_argument("evaluate_detectors: no datasets");
    DetectionReport report;
    for (const auto& d : datasets) report.datasets.push_back(d.name);

    // scores[dataset][detector][review]
    std::vector<std::vector<std::vector<double>>> scores(datasets.size());
    for (std::size_t ds = 0; ds < datasets.size(); ++ds) {
        for (const auto& det : detectors) {
            std::vector<double> col;
            for (const auto& r : datasets[ds].reviews) col.push_back(det.score(r).score);
            scores[ds].push_back(std::move(col));
        }
    }
    auto detector_index = [&](const std::string& name) {
        for (std::size_t k = 0; k < detectors.size(); ++k)
            if (detectors[k].name() == name) return k;
        throw std::invalid_argument("fusion member \"" + name + "\" is not among the evaluated detectors");
    };

    auto add_row = [&](const std::string& name, const std::vector<std::vector<double>>& per_dataset) {
        DetectionRow row;
        row.name = name;
        std::vector<ScoredSample> pooled;
        for (std::size_t ds = 0; ds < datasets.size(); ++ds) {
            std::vector<ScoredSample> samples;
            for (std::size_t i = 0; i < datasets[ds].reviews.size(); ++i) {
                const auto& r = datasets[ds].reviews[i];
                const bool fake = r.provenance == Provenance::Fake;
                samples.push_back({per_dataset[ds][i], fake});
                report.scores.push_back({datasets[ds].name, r.id, name, per_dataset[ds][i], fake});
            }
            row.per_dataset.push_back(compute_eer(samples));
            pooled.insert(pooled.end(), samples.begin(), samples.end());
        }
        row.overall = compute_eer(pooled);
        report.rows.push_back(std::move(row));
    };

    for (std::size_t k = 0; k < detectors.size(); ++k) {
        std::vector<std::vector<double>> per_dataset;
        for (std::size_t ds = 0; ds < datasets.size(); ++ds) per_dataset.push_back(scores[ds][k]);
        add_row(detectors[k].name(), per_dataset);
    }
    for (const auto& fusion : fusions) {
        std::vector<std::size_t> idx;
        for (const auto& m : fusion.members) idx.push_back(detector_index(m));
        std::vector<std::vector<double>> per_dataset;
        for (std::size_t ds = 0; ds < datasets.size(); ++ds) {
            std::vector<double> fused;
            std::vector<double> member(idx.size());
            for (std::size_t i = 0; i < datasets[ds].reviews.size(); ++i) {
                for (std::size_t k = 0; k < idx.size(); ++k) member[k] = scores[ds][idx[k]][i];
                fused.push_back(fusion.score(member));
            }
            per_dataset.push_back(std::move(fused));
        }
        add_row(fusion.name(), per_dataset);
    }
    return report;
}

namespace {

json eer_json(const EerResult& e) {
    return {{"eer", e.eer}, {"threshold", e.threshold}, {"n_fake", e.n_fake}, {"n_real", e.n_real}};
}

EerResult eer_from_json(const json& j) {
    return {j.at("eer").get<double>(), j.at("threshold").get<double>(), j.at("n_fake").get<std::size_t>(),
            j.at("n_real").get<std::size_t>()};
}

}  // namespace

json to_json(const DetectionReport& report) {
    json rows = json::array();
    for (const auto& r : report.rows) {
        json per = json::object();
        for (std::size_t ds = 0; ds < report.datasets.size(); ++ds) per[report.datasets[ds]] = eer_json(r.per_dataset[ds]);
        rows.push_back({{"detector", r.name}, {"datasets", per}, {"overall", eer_json(r.overall)}});
    }
    return {{"datasets", report.datasets}, {"rows", rows}};
}

DetectionReport detection_from_json(const json& j) {
    DetectionReport r;
    r.datasets = j.at("datasets").get<std::vector<std::string>>();
    for (const auto& row : j.at("rows")) {
        DetectionRow d;
        d.name = row.at("detector").get<std::string>();
        for (const auto& ds : r.datasets) d.per_dataset.push_back(eer_from_json(row.at("datasets").at(ds)));
        d.overall = eer_from_json(row.at("overall"));
        r.rows.push_back(std::move(d));
    }
    return r;
}

std::string format_detection_table(const DetectionReport& report) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Detector"};
    for (const auto& d : report.datasets) header.push_back(d);
    header.push_back("Overall");
    rows.push_back(header);
    auto pct = [](double v) {
        std::ostringstream ss;
        ss << std::fixed << std::setprecision(1) << 100.0 * v;
        return ss.str();
    };
    for (const auto& r : report.rows) {
        std::vector<std::string> row{r.name};
        for (const auto& e : r.per_dataset) row.push_back(pct(e.eer));
        row.push_back(pct(r.overall.eer));
        rows.push_back(row);
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    std::ostringstream out;
    out << "Equal error rate (%)\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            if (c) out << "  ";
            if (c == 0) out << std::left;
            else out << std::right;
            out << std::setw(static_cast<int>(width[c])) << rows[r][c];
        }
        out << '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c ? 2 : 0);
            out << std::string(total, '-') << '\n';
        }
    }
    return out.str();
}

void write_scores_csv(const DetectionReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "review_id,detector,score,is_fake\n";
    out << std::setprecision(17);
    for (const auto& s : report.scores) {
        std::string id = s.review_id;
        if (id.find_first_of(",\"\n") != std::string::npos) {
            std::string quoted = "\"";
            for (char c : id) {
                if (c == '"') quoted += '"';
                quoted += c;
            }
            id = quoted + "\"";
        }
        out << id << ',' << s.detector << ',' << s.score << ',' << (s.is_fake ? 1 : 0) << '\n';
    }
}

}  // namespace revforge
