#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "revforge/cli.hpp"
#include "revforge/model_io.hpp"
#include "revforge/rng.hpp"

namespace revforge::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << v;
    return ss.str();
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

json read_json(const fs::path& path) {
    json j = json::parse(read_text(path), nullptr, false);
    if (j.is_discarded()) throw std::runtime_error(path.string() + " is not valid JSON");
    return j;
}

/// Creates the run directory, refusing one that belongs to another config.
void open_run_dir(const RunConfig& config) {
    fs::create_directories(config.run_dir);
    const auto manifest = config.run_dir / "manifest.json";
    if (!fs::exists(manifest)) return;
    const auto digest = read_json(manifest).value("config_digest", std::string());
    if (digest != config_digest(config))
        throw ConfigError("run directory " + config.run_dir.string() + " holds outputs of config digest " + digest +
                          ", not " + config_digest(config));
}

/// Adds content digests of freshly written files to <run_dir>/manifest.json.
void record_artifacts(const RunConfig& config, const std::vector<std::string>& files) {
    const auto path = config.run_dir / "manifest.json";
    json manifest = json::object();
    if (fs::exists(path)) manifest = read_json(path);
    json artifacts = manifest.value("artifacts", json::object());
    for (const auto& f : files) {
        const auto full = config.run_dir / f;
        artifacts[f] = {{"fnv1a64", hex64(fnv1a64(read_text(full)))}, {"bytes", fs::file_size(full)}};
    }
    json content = config.tree;
    content["paths"].erase("run_dir");
    manifest = {{"config_digest", config_digest(config)}, {"config", content}, {"artifacts", artifacts}};
    write_text(path, manifest.dump(2) + "\n");
}

/// Writes into the run directory only when the target is there.
void record_if_local(const RunConfig& config, const fs::path& file, std::vector<std::string>& names) {
    if (file.parent_path() == config.run_dir) names.push_back(file.filename().string());
}

std::string describe_model(const LanguageModel& lm) {
    if (const auto* ng = dynamic_cast<const NgramModel*>(&lm))
        return "ngram-" + std::to_string(ng->order()) + " " + std::string(to_string(ng->smoothing().kind));
    if (const auto* ml = dynamic_cast<const MlstmModel*>(&lm)) return "mlstm-" + std::to_string(ml->hidden_size());
    return "uniform";
}

std::vector<Review> seed_reviews(const RunConfig& config, const Split& parts) {
    const std::size_t n = config.n_seeds == 0 ? parts.test.size() : std::min(config.n_seeds, parts.test.size());
    return {parts.test.begin(), parts.test.begin() + static_cast<std::ptrdiff_t>(n)};
}

std::string csv_field(const std::string& line, std::size_t& pos) {
    std::string out;
    if (pos < line.size() && line[pos] == '"') {
        ++pos;
        while (pos < line.size()) {
            if (line[pos] == '"') {
                if (pos + 1 < line.size() && line[pos + 1] == '"') {
                    out += '"';
                    pos += 2;
                    continue;
                }
                ++pos;
                break;
            }
            out += line[pos++];
        }
    } else {
        while (pos < line.size() && line[pos] != ',') out += line[pos++];
    }
    if (pos < line.size() && line[pos] == ',') ++pos;
    return out;
}

/// detector -> scored samples, from a scores.csv dump.
std::map<std::string, std::vector<ScoredSample>> read_scores_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    std::getline(in, line);
    if (line != "review_id,detector,score,is_fake") throw std::runtime_error(path.string() + ": unexpected header");
    std::map<std::string, std::vector<ScoredSample>> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t pos = 0;
        (void)csv_field(line, pos);
        const auto detector = csv_field(line, pos);
        const auto score = csv_field(line, pos);
        const auto fake = csv_field(line, pos);
        out[detector].push_back({std::stod(score), fake == "1"});
    }
    return out;
}

}  // namespace

std::vector<Review> load_corpus(const RunConfig& config) {
    if (config.corpus.empty()) return make_polarized_corpus(config.synthetic);
    auto reviews = load_reviews(config.corpus, format_from_path(config.corpus));
    if (reviews.empty()) throw ConfigError("corpus " + config.corpus.string() + " holds no reviews");
    return reviews;
}

Split split_corpus(const RunConfig& config, std::span<const Review> corpus) {
    return split(corpus, {config.train_fraction, derive_seed(config.seed, "split")});
}

void cmd_train_lm(const RunConfig& config, std::ostream& log) {
    open_run_dir(config);
    const auto corpus = load_corpus(config);
    const auto parts = split_corpus(config, corpus);
    const auto vocab = build_vocab(parts.train);
    const auto stream = concat_training_text(vocab, parts.train);
    const auto heldout = concat_training_text(vocab, parts.test);

    std::unique_ptr<LanguageModel> lm;
    json metrics = {{"vocab_size", vocab.size()}, {"train_tokens", stream.size()}};
    if (config.lm.kind == "ngram") {
        lm = std::make_unique<NgramModel>(NgramModel::train(vocab, stream, config.lm.order, config.lm.smoothing));
    } else {
        MlstmTrainReport report;
        auto model = MlstmModel::train(vocab, stream, config.lm.mlstm, &report);
        metrics["initial_loss"] = report.initial_loss;
        metrics["final_loss"] = report.final_loss;
        std::vector<std::pair<TokenSequence, Sentiment>> labeled;
        for (std::size_t i = 0; i < std::min(config.lm.neuron_examples, parts.train.size()); ++i)
            labeled.emplace_back(encode(vocab, parts.train[i].text), parts.train[i].sentiment);
        const bool both = std::any_of(labeled.begin(), labeled.end(),
                                      [](const auto& p) { return p.second == Sentiment::Positive; }) &&
                          std::any_of(labeled.begin(), labeled.end(),
                                      [](const auto& p) { return p.second == Sentiment::Negative; });
        if (both) {
            const auto neuron = find_sentiment_neuron(model, labeled);
            model.set_sentiment_neuron(neuron);
            metrics["sentiment_neuron"] = {{"index", neuron.index},
                                           {"polarity", neuron.polarity},
                                           {"correlation", neuron.correlation},
                                           {"low_confidence", neuron.low_confidence}};
        }
        lm = std::make_unique<MlstmModel>(std::move(model));
    }
    metrics["model"] = describe_model(*lm);
    metrics["heldout_perplexity"] = perplexity(*lm, heldout);

    save_language_model(*lm, config.lm_file());
    write_text(config.run_dir / "lm_metrics.json", metrics.dump(2) + "\n");
    std::vector<std::string> files{"lm_metrics.json"};
    record_if_local(config, config.lm_file(), files);
    record_artifacts(config, files);
    log << "trained " << metrics["model"].get<std::string>() << " on " << stream.size()
        << " tokens, held-out perplexity " << metrics["heldout_perplexity"].get<double>() << "\n";
}

void cmd_train_clf(const RunConfig& config, std::ostream& log) {
    open_run_dir(config);
    const auto corpus = load_corpus(config);
    const auto parts = split_corpus(config, corpus);
    const auto clf = SentimentClassifier::train(parts.train, config.classifier);
    const auto m = evaluate_accuracy(clf, parts.test);
    clf.save(config.clf_file());
    json metrics = {{"accuracy", m.accuracy},
                    {"total", m.total},
                    {"correct", m.correct},
                    {"true_positive", m.true_positive},
                    {"false_positive", m.false_positive},
                    {"true_negative", m.true_negative},
                    {"false_negative", m.false_negative}};
    write_text(config.run_dir / "classifier_metrics.json", metrics.dump(2) + "\n");
    std::vector<std::string> files{"classifier_metrics.json"};
    record_if_local(config, config.clf_file(), files);
    record_artifacts(config, files);
    log << "classifier held-out accuracy " << m.accuracy << " on " << m.total << " reviews\n";
}

void cmd_attack(const RunConfig& config, std::ostream& log) {
    open_run_dir(config);
    const auto lm = load_language_model(config.lm_file());
    const auto clf = SentimentClassifier::load(config.clf_file());
    const auto corpus = load_corpus(config);
    const auto parts = split_corpus(config, corpus);
    const auto seeds = seed_reviews(config, parts);
    if (seeds.empty()) throw ConfigError("no seed reviews in the held-out split");

    const auto checkpoint = config.run_dir / "attack_checkpoint.jsonl";
    const auto pool = run_attack(*lm, clf, config.attack, seeds, &checkpoint);
    const auto digest = config_digest(config);
    save_pool(pool, config.run_dir, digest);

    const auto report = preservation_from_outcomes(pool.seeds);
    const PreservationEntry entry{describe_model(*lm), config.corpus_name, report};
    json out = {{"model", entry.model}, {"dataset", entry.dataset}, {"report", to_json(report)}};
    write_text(config.run_dir / "preservation.json", out.dump(2) + "\n");
    write_text(config.run_dir / "preservation.txt", format_preservation_table(std::span(&entry, 1)));
    record_artifacts(config, {"pool.jsonl", "pool_manifest.json", "preservation.json", "preservation.txt"});
    log << "pool: " << pool.accepted.size() << " accepted of " << report.generated_total
        << " generated; sentiment-preserving rate " << report.rate << " (se " << report.standard_error << ")\n";
}

void cmd_detect(const RunConfig& config, std::ostream& log) {
    open_run_dir(config);
    const auto pool_path = config.run_dir / "pool.jsonl";
    if (!fs::exists(pool_path)) throw ConfigError("no fake review pool at " + pool_path.string() + "; run attack first");
    std::shared_ptr<const LanguageModel> lm = load_language_model(config.lm_file());
    auto fakes = load_reviews(pool_path, ReviewFormat::Jsonl);

    const auto corpus = load_corpus(config);
    const auto parts = split_corpus(config, corpus);
    std::set<std::string> seed_ids;
    for (const auto& s : seed_reviews(config, parts)) seed_ids.insert(s.id);
    std::vector<Review> reals;
    for (const auto& r : parts.test)
        if (!seed_ids.count(r.id)) reals.push_back(r);
    for (auto& r : reals) r.provenance = Provenance::Real;

    const auto& d = config.detect;
    if (fakes.size() < d.train_fake + d.eval_fake)
        throw ConfigError("pool holds " + std::to_string(fakes.size()) + " fake reviews, detection needs " +
                          std::to_string(d.train_fake + d.eval_fake));
    if (reals.size() < d.train_real + d.eval_real)
        throw ConfigError("held-out split has " + std::to_string(reals.size()) +
                          " real reviews not used as seeds, detection needs " +
                          std::to_string(d.train_real + d.eval_real));
    Rng(derive_seed(config.seed, "detect-fake")).shuffle(std::span<Review>(fakes));
    Rng(derive_seed(config.seed, "detect-real")).shuffle(std::span<Review>(reals));

    std::vector<Review> train, eval;
    train.insert(train.end(), reals.begin(), reals.begin() + static_cast<std::ptrdiff_t>(d.train_real));
    train.insert(train.end(), fakes.begin(), fakes.begin() + static_cast<std::ptrdiff_t>(d.train_fake));
    eval.insert(eval.end(), reals.begin() + static_cast<std::ptrdiff_t>(d.train_real),
                reals.begin() + static_cast<std::ptrdiff_t>(d.train_real + d.eval_real));
    eval.insert(eval.end(), fakes.begin() + static_cast<std::ptrdiff_t>(d.train_fake),
                fakes.begin() + static_cast<std::ptrdiff_t>(d.train_fake + d.eval_fake));

    std::vector<Detector> detectors{train_detector(DetectorKind::RankBin, lm, train, d.regression, d.bins),
                                    train_detector(DetectorKind::Perplexity, lm, train, d.regression, d.bins)};
    std::vector<std::vector<double>> member_scores;
    std::vector<int> labels;
    for (const auto& r : train) {
        member_scores.push_back({detectors[0].score(r).score, detectors[1].score(r).score});
        labels.push_back(r.provenance == Provenance::Fake ? 1 : 0);
    }
    std::vector<FusionModel> fusions{
        train_fusion({detectors[0].name(), detectors[1].name()}, member_scores, labels, d.regression)};
    const std::vector<EvalDataset> datasets{{config.corpus_name, eval}};
    const auto report = evaluate_detectors(detectors, fusions, datasets);

    json out = to_json(report);
    out["scoring_model"] = describe_model(*lm);
    out["train"] = {{"real", d.train_real}, {"fake", d.train_fake}};
    out["anti_predictive"] = fusions[0].anti_predictive;
    write_text(config.run_dir / "detection.json", out.dump(2) + "\n");
    write_text(config.run_dir / "detection.txt", format_detection_table(report));
    write_scores_csv(report, config.run_dir / "scores.csv");
    record_artifacts(config, {"detection.json", "detection.txt", "scores.csv"});
    log << format_detection_table(report);
    if (!fusions[0].anti_predictive.empty())
        log << "note: fusion weight is negative for " << fusions[0].anti_predictive.size() << " member(s)\n";
}

std::string cmd_report(const std::vector<fs::path>& run_dirs) {
    if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
    std::vector<PreservationEntry> entries;
    DetectionReport merged;
    std::map<std::string, std::vector<ScoredSample>> pooled;
    std::vector<std::string> order;
    std::map<std::string, std::vector<EerResult>> per_dataset;
    bool any_detection = false;

    for (const auto& dir : run_dirs) {
        if (!fs::is_directory(dir)) throw ConfigError("not a run directory: " + dir.string());
        if (fs::exists(dir / "preservation.json")) {
            const auto j = read_json(dir / "preservation.json");
            entries.push_back({j.at("model").get<std::string>(), j.at("dataset").get<std::string>(),
                               preservation_from_json(j.at("report"))});
        }
        if (fs::exists(dir / "detection.json")) {
            any_detection = true;
            const auto rep = detection_from_json(read_json(dir / "detection.json"));
            for (const auto& ds : rep.datasets) {
                std::string name = ds;
                for (int k = 2; std::find(merged.datasets.begin(), merged.datasets.end(), name) != merged.datasets.end();
                     ++k)
                    name = ds + " #" + std::to_string(k);
                merged.datasets.push_back(name);
            }
            const std::size_t before = merged.datasets.size() - rep.datasets.size();
            for (const auto& row : rep.rows) {
                if (!per_dataset.count(row.name)) {
                    order.push_back(row.name);
                    per_dataset[row.name] = std::vector<EerResult>(before, EerResult{});
                }
                auto& cells = per_dataset[row.name];
                cells.resize(before);
                cells.insert(cells.end(), row.per_dataset.begin(), row.per_dataset.end());
            }
            if (fs::exists(dir / "scores.csv"))
                for (auto& [name, samples] : read_scores_csv(dir / "scores.csv"))
                    pooled[name].insert(pooled[name].end(), samples.begin(), samples.end());
        }
    }

    std::ostringstream out;
    if (!entries.empty()) out << "Sentiment-preserving rate (%)\n" << format_preservation_table(entries) << "\n";
    if (any_detection) {
        for (const auto& name : order) {
            DetectionRow row;
            row.name = name;
            row.per_dataset = per_dataset[name];
            row.per_dataset.resize(merged.datasets.size());
            const auto& samples = pooled[name];
            const bool both = std::any_of(samples.begin(), samples.end(), [](auto& s) { return s.is_fake; }) &&
                              std::any_of(samples.begin(), samples.end(), [](auto& s) { return !s.is_fake; });
            row.overall = both ? compute_eer(samples) : EerResult{};
            merged.rows.push_back(std::move(row));
        }
        out << format_detection_table(merged);
    }
    if (entries.empty() && !any_detection) throw ConfigError("no preservation.json or detection.json found");
    return out.str();
}

void cmd_synth(const RunConfig& config, const fs::path& out, std::ostream& log) {
    const auto reviews = make_polarized_corpus(config.synthetic);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_reviews_jsonl(out, reviews);
    log << "wrote " << reviews.size() << " reviews to " << out.string() << "\n";
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"revforge: fake review generation and detection experiments"};
    app.require_subcommand(1);

    std::optional<fs::path> config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--set", overrides, "Override one config key, e.g. --set attack.n_per_seed=5");
        sub->add_option("--seed", seed, "Global rng seed");
    };

    auto* train_lm = app.add_subcommand("train-lm", "Train the language model");
    auto* train_clf = app.add_subcommand("train-clf", "Train the sentiment classifier");
    auto* attack = app.add_subcommand("attack", "Generate and validate the fake review pool");
    auto* detect = app.add_subcommand("detect", "Train and evaluate the detectors");
    auto* synth = app.add_subcommand("synth", "Write the synthetic corpus as JSONL");
    for (auto* sub : {train_lm, train_clf, attack, detect, synth}) add_common(sub);
    fs::path synth_out;
    synth->add_option("--out", synth_out, "Output JSONL file")->required();

    auto* report = app.add_subcommand("report", "Print merged result tables of one or more run directories");
    std::vector<fs::path> run_dirs;
    fs::path report_out;
    report->add_option("run_dirs", run_dirs, "Run directories")->required();
    report->add_option("--out", report_out, "Also write the tables to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }

    if (report->parsed()) {
        try {
            const auto text = cmd_report(run_dirs);
            out << text;
            if (!report_out.empty()) write_text(report_out, text);
            return kExitOk;
        } catch (const ConfigError& e) {
            err << "error: " << e.what() << "\n";
            return kExitValidation;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
            return kExitRuntime;
        }
    }

    RunConfig config;
    try {
        config = load_run_config(config_path, overrides, seed);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }

    try {
        if (train_lm->parsed()) cmd_train_lm(config, out);
        else if (train_clf->parsed()) cmd_train_clf(config, out);
        else if (attack->parsed()) cmd_attack(config, out);
        else if (detect->parsed()) cmd_detect(config, out);
        else if (synth->parsed()) cmd_synth(config, synth_out, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace revforge::cli
