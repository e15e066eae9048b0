#include "revforge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "revforge/rng.hpp"

namespace revforge {

using nlohmann::json;

void AttackConfig::validate() const {
    if (n_per_seed < 1) throw std::invalid_argument("n_per_seed must be at least 1");
    if (sampler.min_len < 1 || sampler.max_len < 1)
        throw std::invalid_argument("attack sampling needs min_len and max_len of at least 1");
    if (min_score && !(*min_score >= 0.0 && *min_score <= 1.0))
        throw std::invalid_argument("min_score must lie in [0, 1]");
    if (threads < 1) throw std::invalid_argument("threads must be at least 1");
}

std::string AttackConfig::digest() const {
    json j = {{"n_per_seed", n_per_seed},
              {"base_seed", base_seed},
              {"max_len", sampler.max_len},
              {"min_len", sampler.min_len},
              {"temperature", sampler.temperature},
              {"top_k", sampler.top_k},
              {"min_score", min_score ? json(*min_score) : json(nullptr)}};
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(j.dump());
    return ss.str();
}

std::uint64_t candidate_seed(std::uint64_t base_seed, std::string_view seed_id, std::size_t index) {
    return splitmix64(splitmix64(base_seed ^ fnv1a64(seed_id)) + splitmix64(index + 1));
}

TokenSequence seed_context(const Vocabulary& vocab, std::string_view text) {
    auto ids = encode(vocab, text);
    ids.pop_back();  // trailing <eor>
    return ids;
}

std::vector<Review> generate_candidates(const LanguageModel& lm, const Review& seed, std::size_t n,
                                        const SamplerConfig& sampler, std::uint64_t base_seed) {
    if (n < 1) throw std::invalid_argument("generate_candidates: n must be at least 1");
    lm.require_trained();
    const auto context = seed_context(lm.vocabulary(), seed.text);
    std::vector<Review> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        SamplerConfig cfg = sampler;
        cfg.rng_seed = candidate_seed(base_seed, seed.id, i);
        auto continuation = sample(lm, context, cfg);
        Review r;
        r.id = seed.id + "-fake-" + std::to_string(i + 1);
        r.text = decode(lm.vocabulary(), continuation);
        if (r.text.empty()) throw std::runtime_error("sampler produced an empty continuation for seed " + seed.id);
        r.sentiment = seed.sentiment;
        r.provenance = Provenance::Fake;
        r.seed_id = seed.id;
        out.push_back(std::move(r));
    }
    return out;
}

ValidationResult validate(const SentimentClassifier& clf, Sentiment seed_sentiment, std::span<const Review> candidates,
                          std::optional<double> min_score) {
    ValidationResult out;
    for (const auto& c : candidates) {
        const auto pred = clf.predict(c.text);
        bool ok = pred.label == seed_sentiment;
        if (ok && min_score) {
            const double confidence = seed_sentiment == Sentiment::Positive ? pred.score : 1.0 - pred.score;
            ok = confidence >= *min_score;
        }
        (ok ? out.accepted : out.rejected).push_back(c);
    }
    return out;
}

namespace {

SeedOutcome attack_one(const LanguageModel& lm, const SentimentClassifier& clf, const AttackConfig& config,
                       const Review& seed) {
    auto candidates = generate_candidates(lm, seed, config.n_per_seed, config.sampler, config.base_seed);
    SeedOutcome o;
    o.seed_id = seed.id;
    o.seed_sentiment = seed.sentiment;
    o.generated = candidates.size();
    for (const auto& c : candidates)
        if (clf.predict(c.text).label == seed.sentiment) ++o.preserved;
    auto v = validate(clf, seed.sentiment, candidates, config.min_score);
    o.rejected = v.rejected.size();
    o.accepted = std::move(v.accepted);
    return o;
}

json outcome_to_json(const SeedOutcome& o) {
    json accepted = json::array();
    for (const auto& r : o.accepted) accepted.push_back(json::parse(review_to_json_line(r)));
    return {{"seed_id", o.seed_id},
            {"seed_sentiment", std::string(to_string(o.seed_sentiment))},
            {"generated", o.generated},
            {"preserved", o.preserved},
            {"rejected", o.rejected},
            {"accepted", accepted}};
}

SeedOutcome outcome_from_json(const json& j) {
    SeedOutcome o;
    o.seed_id = j.at("seed_id").get<std::string>();
    o.seed_sentiment = parse_sentiment(j.at("seed_sentiment").get<std::string>());
    o.generated = j.at("generated").get<std::size_t>();
    o.preserved = j.at("preserved").get<std::size_t>();
    o.rejected = j.at("rejected").get<std::size_t>();
    std::string lines;
    for (const auto& r : j.at("accepted")) lines += r.dump() + "\n";
    o.accepted = parse_reviews_jsonl(lines);
    return o;
}

/// Append-only per-seed log. The first line records the attack digest.
class Checkpoint {
public:
    Checkpoint(const std::filesystem::path& path, const std::string& digest) : path_(path) {
        std::ifstream in(path);
        if (in) {
            std::string line;
            std::size_t line_no = 0;
            while (std::getline(in, line)) {
                ++line_no;
                if (line.empty()) continue;
                json j;
                try {
                    j = json::parse(line);
                } catch (const json::parse_error&) {
                    // A torn final line from an interrupted write is dropped.
                    break;
                }
                if (line_no == 1) {
                    if (j.value("attack_digest", std::string()) != digest)
                        throw std::runtime_error("checkpoint " + path.string() +
                                                 " was written by a different attack configuration");
                    continue;
                }
                auto o = outcome_from_json(j);
                done_.emplace(o.seed_id, std::move(o));
            }
        }
        in.close();
        // Rewrite so that a torn tail never precedes new records.
        out_.open(path, std::ios::trunc);
        if (!out_) throw std::runtime_error("cannot write checkpoint " + path.string());
        out_ << json{{"attack_digest", digest}}.dump() << '\n';
        for (const auto& [id, o] : done_) out_ << outcome_to_json(o).dump() << '\n';
        out_.flush();
    }

    const SeedOutcome* find(const std::string& seed_id) const {
        auto it = done_.find(seed_id);
        return it == done_.end() ? nullptr : &it->second;
    }

    void record(const SeedOutcome& o) {
        std::lock_guard lock(mu_);
        out_ << outcome_to_json(o).dump() << '\n';
        out_.flush();
        if (!out_) throw std::runtime_error("checkpoint write failed for " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::map<std::string, SeedOutcome> done_;
    std::ofstream out_;
    std::mutex mu_;
};

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> workers;
    for (std::size_t t = 0; t < threads; ++t) {
        workers.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& w : workers) w.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

FakeReviewPool run_attack(const LanguageModel& lm, const SentimentClassifier& clf, const AttackConfig& config,
                          std::span<const Review> seeds, const std::filesystem::path* checkpoint) {
    config.validate();
    if (seeds.empty()) throw std::invalid_argument("run_attack needs at least one seed review");
    lm.require_trained();
    if (!clf.trained()) throw std::logic_error("sentiment classifier is not trained");
    {
        std::map<std::string, int> ids;
        for (const auto& s : seeds)
            if (++ids[s.id] > 1) throw std::invalid_argument("duplicate seed id " + s.id);
    }

    std::optional<Checkpoint> log;
    if (checkpoint) log.emplace(*checkpoint, config.digest());

    std::vector<SeedOutcome> outcomes(seeds.size());
    parallel_for(seeds.size(), config.threads, [&](std::size_t i) {
        if (log) {
            if (const auto* done = log->find(seeds[i].id)) {
                outcomes[i] = *done;
                return;
            }
        }
        outcomes[i] = attack_one(lm, clf, config, seeds[i]);
        if (log) log->record(outcomes[i]);
    });

    FakeReviewPool pool;
    pool.base_seed = config.base_seed;
    pool.n_per_seed = config.n_per_seed;
    for (auto& o : outcomes) pool.accepted.insert(pool.accepted.end(), o.accepted.begin(), o.accepted.end());
    pool.seeds = std::move(outcomes);
    return pool;
}

PreservationReport preservation_from_outcomes(std::span<const SeedOutcome> outcomes) {
    PreservationReport rep;
    std::vector<double> rates;
    for (const auto& o : outcomes) {
        rep.per_seed.push_back({o.seed_id, o.preserved, o.generated});
        rep.preserved_total += o.preserved;
        rep.generated_total += o.generated;
        if (o.generated > 0) rates.push_back(static_cast<double>(o.preserved) / static_cast<double>(o.generated));
    }
    if (rep.generated_total > 0)
        rep.rate = static_cast<double>(rep.preserved_total) / static_cast<double>(rep.generated_total);
    if (rates.size() > 1) {
        double mean = 0.0;
        for (double r : rates) mean += r;
        mean /= static_cast<double>(rates.size());
        double ss = 0.0;
        for (double r : rates) ss += (r - mean) * (r - mean);
        const double sd = std::sqrt(ss / static_cast<double>(rates.size() - 1));
        rep.standard_error = sd / std::sqrt(static_cast<double>(rates.size()));
    }
    return rep;
}

PreservationReport sentiment_preserving_rate(const LanguageModel& lm, const SentimentClassifier& clf,
                                             std::span<const Review> seeds, std::size_t n_per_seed,
                                             const SamplerConfig& sampler, std::uint64_t base_seed,
                                             std::size_t threads) {
    if (seeds.empty()) throw std::invalid_argument("sentiment_preserving_rate needs seed reviews");
    lm.require_trained();
    if (!clf.trained()) throw std::logic_error("sentiment classifier is not trained");
    std::vector<SeedOutcome> outcomes(seeds.size());
    parallel_for(seeds.size(), threads, [&](std::size_t i) {
        auto candidates = generate_candidates(lm, seeds[i], n_per_seed, sampler, base_seed);
        auto& o = outcomes[i];
        o.seed_id = seeds[i].id;
        o.seed_sentiment = seeds[i].sentiment;
        o.generated = candidates.size();
        for (const auto& c : candidates)
            if (clf.predict(c.text).label == seeds[i].sentiment) ++o.preserved;
    });
    return preservation_from_outcomes(outcomes);
}

json to_json(const PreservationReport& report) {
    json per_seed = json::array();
    for (const auto& s : report.per_seed)
        per_seed.push_back({{"seed_id", s.seed_id}, {"preserved", s.preserved}, {"generated", s.generated}});
    return {{"rate", report.rate},
            {"standard_error", report.standard_error},
            {"preserved_total", report.preserved_total},
            {"generated_total", report.generated_total},
            {"per_seed", per_seed}};
}

PreservationReport preservation_from_json(const json& j) {
    PreservationReport r;
    r.rate = j.at("rate").get<double>();
    r.standard_error = j.at("standard_error").get<double>();
    r.preserved_total = j.at("preserved_total").get<std::size_t>();
    r.generated_total = j.at("generated_total").get<std::size_t>();
    for (const auto& s : j.at("per_seed"))
        r.per_seed.push_back({s.at("seed_id").get<std::string>(), s.at("preserved").get<std::size_t>(),
                              s.at("generated").get<std::size_t>()});
    return r;
}

namespace {

std::string render_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& row : rows) {
        if (width.size() < row.size()) width.resize(row.size(), 0);
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::ostringstream out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            if (c) out << "  ";
            if (c + 1 < rows[r].size()) out << std::left << std::setw(static_cast<int>(width[c])) << rows[r][c];
            else out << rows[r][c];
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

}  // namespace

std::string format_preservation_table(std::span<const PreservationEntry> entries) {
    std::vector<std::string> models, datasets;
    auto note = [](std::vector<std::string>& v, const std::string& s) {
        if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    };
    for (const auto& e : entries) {
        note(models, e.model);
        note(datasets, e.dataset);
    }
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Model"};
    for (const auto& d : datasets) header.push_back(d);
    rows.push_back(header);
    for (const auto& m : models) {
        std::vector<std::string> row{m};
        for (const auto& d : datasets) {
            std::string cell = "-";
            for (const auto& e : entries) {
                if (e.model != m || e.dataset != d) continue;
                std::ostringstream ss;
                ss << std::fixed << std::setprecision(1) << 100.0 * e.report.rate << " ± "
                   << 100.0 * e.report.standard_error;
                cell = ss.str();
            }
            row.push_back(cell);
        }
        rows.push_back(row);
    }
    return render_table(rows);
}

json pool_manifest(const FakeReviewPool& pool, const std::string& config_digest) {
    json per_seed = json::array();
    std::size_t rejected = 0;
    for (const auto& s : pool.seeds) {
        per_seed.push_back({{"seed_id", s.seed_id},
                            {"seed_sentiment", std::string(to_string(s.seed_sentiment))},
                            {"generated", s.generated},
                            {"preserved", s.preserved},
                            {"accepted", s.accepted.size()},
                            {"rejected", s.rejected}});
        rejected += s.rejected;
    }
    return {{"config_digest", config_digest},
            {"rng_base", pool.base_seed},
            {"n_per_seed", pool.n_per_seed},
            {"accepted_total", pool.accepted.size()},
            {"rejected_total", rejected},
            {"per_seed", per_seed}};
}

void save_pool(const FakeReviewPool& pool, const std::filesystem::path& dir, const std::string& config_digest) {
    std::filesystem::create_directories(dir);
    save_reviews_jsonl(dir / "pool.jsonl", pool.accepted);
    std::ofstream out(dir / "pool_manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write pool manifest in " + dir.string());
    out << pool_manifest(pool, config_digest).dump(2) << '\n';
}

}  // namespace revforge
