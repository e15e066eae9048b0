#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "revforge/corpus.hpp"

namespace revforge {

struct ClassifierConfig {
    std::size_t hash_dim = std::size_t{1} << 18;
    /// Word n-grams of order 1..max_ngram are hashed (1 or 2).
    std::size_t max_ngram = 2;
    std::size_t epochs = 10;
    double learning_rate = 0.1;
    double l2 = 1e-6;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct Prediction {
    Sentiment label = Sentiment::Positive;
    /// P(positive).
    double score = 0.5;
};

/// Sparse signed-hash feature vector, sorted by bucket.
using HashedFeatures = std::vector<std::pair<std::uint32_t, double>>;

HashedFeatures hash_features(std::string_view text, std::size_t hash_dim, std::size_t max_ngram);

struct ClassifierTrainReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

/// Logistic regression over hashed word n-grams. Positive iff score >= 0.5.
class SentimentClassifier {
public:
    /// Untrained.
    SentimentClassifier() = default;

    /// SGD with per-epoch shuffling. Throws std::invalid_argument when the
    /// training set is empty or holds a single class.
    static SentimentClassifier train(std::span<const Review> train, const ClassifierConfig& config,
                                     ClassifierTrainReport* report = nullptr);

    static SentimentClassifier from_weights(std::size_t max_ngram, std::vector<double> weights, double bias);

    bool trained() const { return trained_; }
    std::size_t hash_dim() const { return weights_.size(); }
    std::size_t max_ngram() const { return max_ngram_; }
    const std::vector<double>& weights() const { return weights_; }
    double bias() const { return bias_; }

    Prediction predict(std::string_view text) const;

    /// Mean logistic loss against the reviews' sentiment labels.
    double mean_log_loss(std::span<const Review> reviews) const;

    std::string serialize() const;
    static SentimentClassifier deserialize(std::string_view bytes);
    void save(const std::filesystem::path& path) const;
    static SentimentClassifier load(const std::filesystem::path& path);

private:
    double margin(const HashedFeatures& x) const;

    std::vector<double> weights_;
    double bias_ = 0.0;
    std::size_t max_ngram_ = 2;
    bool trained_ = false;
};

struct ClassifierMetrics {
    double accuracy = 0.0;
    std::size_t total = 0;
    std::size_t correct = 0;
    /// Confusion counts with Positive as the reference class.
    std::size_t true_positive = 0, false_positive = 0, true_negative = 0, false_negative = 0;
    /// 0 when the denominator is empty.
    double precision_positive = 0.0, recall_positive = 0.0;
    double precision_negative = 0.0, recall_negative = 0.0;
};

ClassifierMetrics evaluate_accuracy(const SentimentClassifier& clf, std::span<const Review> test);

}  // namespace revforge
