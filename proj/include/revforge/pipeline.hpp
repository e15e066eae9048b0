#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "revforge/corpus.hpp"
#include "revforge/langmodel.hpp"
#include "revforge/sentiment.hpp"

namespace revforge {

struct AttackConfig {
    /// Candidates generated per seed review.
    std::size_t n_per_seed = 20;
    SamplerConfig sampler;
    /// Candidate i of seed s samples with candidate_seed(base_seed, s.id, i).
    std::uint64_t base_seed = 0;
    /// When set, an accepted candidate also needs classifier confidence
    /// (score for positive seeds, 1 - score for negative ones) >= min_score.
    std::optional<double> min_score;
    /// Seeds processed concurrently; output does not depend on it.
    std::size_t threads = 1;

    void validate() const;
    /// Stable digest of every field that influences the generated pool.
    std::string digest() const;
};

std::uint64_t candidate_seed(std::uint64_t base_seed, std::string_view seed_id, std::size_t index);

/// Conditioning context for a seed review: <bor> followed by its tokens.
TokenSequence seed_context(const Vocabulary& vocab, std::string_view text);

/// n fake reviews sampled after consuming the seed text. Candidates carry the
/// seed's sentiment as their intended label.
std::vector<Review> generate_candidates(const LanguageModel& lm, const Review& seed, std::size_t n,
                                        const SamplerConfig& sampler, std::uint64_t base_seed);

struct ValidationResult {
    std::vector<Review> accepted;
    std::vector<Review> rejected;
};

/// Order-preserving partition by classifier agreement with the seed sentiment.
ValidationResult validate(const SentimentClassifier& clf, Sentiment seed_sentiment, std::span<const Review> candidates,
                          std::optional<double> min_score = std::nullopt);

struct SeedOutcome {
    std::string seed_id;
    Sentiment seed_sentiment = Sentiment::Positive;
    std::size_t generated = 0;
    /// Candidates whose predicted label matched, before any min_score filter.
    std::size_t preserved = 0;
    std::size_t rejected = 0;
    std::vector<Review> accepted;
};

struct FakeReviewPool {
    std::vector<Review> accepted;
    /// In seed order.
    std::vector<SeedOutcome> seeds;
    std::uint64_t base_seed = 0;
    std::size_t n_per_seed = 0;
};

/// Generation then validation for every seed; per-seed results are merged in
/// seed order. With a checkpoint path, each finished seed is appended to that
/// JSONL file and seeds already present there are not regenerated.
FakeReviewPool run_attack(const LanguageModel& lm, const SentimentClassifier& clf, const AttackConfig& config,
                          std::span<const Review> seeds, const std::filesystem::path* checkpoint = nullptr);

struct SeedRate {
    std::string seed_id;
    std::size_t preserved = 0;
    std::size_t generated = 0;
};

struct PreservationReport {
    double rate = 0.0;
    /// Sample standard deviation of per-seed rates over sqrt(#seeds).
    double standard_error = 0.0;
    std::size_t preserved_total = 0;
    std::size_t generated_total = 0;
    std::vector<SeedRate> per_seed;
};

PreservationReport preservation_from_outcomes(std::span<const SeedOutcome> outcomes);

/// Rate over all generated candidates, unfiltered.
PreservationReport sentiment_preserving_rate(const LanguageModel& lm, const SentimentClassifier& clf,
                                             std::span<const Review> seeds, std::size_t n_per_seed,
                                             const SamplerConfig& sampler, std::uint64_t base_seed,
                                             std::size_t threads = 1);

nlohmann::json to_json(const PreservationReport& report);
PreservationReport preservation_from_json(const nlohmann::json& j);

/// One cell of the rate table: rows are models, columns datasets.
struct PreservationEntry {
    std::string model;
    std::string dataset;
    PreservationReport report;
};

/// Aligned text table, one row per model, "rate ± se" in percent per dataset.
std::string format_preservation_table(std::span<const PreservationEntry> entries);

nlohmann::json pool_manifest(const FakeReviewPool& pool, const std::string& config_digest);

/// Writes <dir>/pool.jsonl and <dir>/pool_manifest.json.
void save_pool(const FakeReviewPool& pool, const std::filesystem::path& dir, const std::string& config_digest);

}  // namespace revforge
