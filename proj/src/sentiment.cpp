#include "revforge/sentiment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "revforge/rng.hpp"
#include "revforge/serialize.hpp"

namespace revforge {

void ClassifierConfig::validate() const {
    if (hash_dim == 0 || hash_dim > (std::size_t{1} << 31)) throw std::invalid_argument("hash_dim out of range");
    if (max_ngram < 1 || max_ngram > 2) throw std::invalid_argument("max_ngram must be 1 or 2");
    if (epochs == 0) throw std::invalid_argument("classifier epochs must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("classifier learning_rate must be positive");
    if (!(l2 >= 0.0)) throw std::invalid_argument("classifier l2 must be non-negative");
}

HashedFeatures hash_features(std::string_view text, std::size_t hash_dim, std::size_t max_ngram) {
    if (hash_dim == 0) throw std::invalid_argument("hash_dim must be positive");
    auto tokens = tokenize(text);
    std::map<std::uint32_t, double> acc;
    auto add = [&](const std::string& key) {
        const std::uint64_t h = fnv1a64(key);
        const auto bucket = static_cast<std::uint32_t>(h % hash_dim);
        const double sign = (splitmix64(h) >> 63) ? -1.0 : 1.0;
        acc[bucket] += sign;
    };
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        add("1\x1f" + tokens[i]);
        if (max_ngram >= 2 && i + 1 < tokens.size()) add("2\x1f" + tokens[i] + "\x1f" + tokens[i + 1]);
    }
    HashedFeatures out;
    out.reserve(acc.size());
    for (const auto& [b, v] : acc)
        if (v != 0.0) out.emplace_back(b, v);
    return out;
}

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// -log sigmoid(z) for y=1, -log(1 - sigmoid(z)) for y=0, stable in z.
double log_loss(double z, double y) {
    const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return softplus - y * z;
}

}  // namespace

double SentimentClassifier::margin(const HashedFeatures& x) const {
    double z = bias_;
    for (const auto& [b, v] : x) z += weights_[b] * v;
    return z;
}

SentimentClassifier SentimentClassifier::train(std::span<const Review> train, const ClassifierConfig& config,
                                               ClassifierTrainReport* report) {
    config.validate();
    if (train.empty()) throw std::invalid_argument("classifier training set is empty");
    const bool has_pos = std::any_of(train.begin(), train.end(), [](const Review& r) { return r.sentiment == Sentiment::Positive; });
    const bool has_neg = std::any_of(train.begin(), train.end(), [](const Review& r) { return r.sentiment == Sentiment::Negative; });
    if (!has_pos || !has_neg) throw std::invalid_argument("classifier training set must contain both sentiments");

    SentimentClassifier clf;
    clf.weights_.assign(config.hash_dim, 0.0);
    clf.max_ngram_ = config.max_ngram;
    clf.trained_ = true;

    std::vector<HashedFeatures> xs;
    std::vector<double> ys;
    xs.reserve(train.size());
    for (const auto& r : train) {
        xs.push_back(hash_features(r.text, config.hash_dim, config.max_ngram));
        ys.push_back(r.sentiment == Sentiment::Positive ? 1.0 : 0.0);
    }
    auto mean_loss = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) s += log_loss(clf.margin(xs[i]), ys[i]);
        return s / static_cast<double>(xs.size());
    };
    ClassifierTrainReport local;
    local.initial_loss = mean_loss();

    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng rng(derive_seed(config.rng_seed, "classifier-epoch", epoch));
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t idx : order) {
            const auto& x = xs[idx];
            const double g = sigmoid(clf.margin(x)) - ys[idx];
            for (const auto& [b, v] : x)
                clf.weights_[b] -= config.learning_rate * (g * v + config.l2 * clf.weights_[b]);
            clf.bias_ -= config.learning_rate * g;
        }
    }
    local.final_loss = mean_loss();
    if (!std::isfinite(local.final_loss)) throw std::runtime_error("classifier training diverged");
    if (report) *report = local;
    return clf;
}

SentimentClassifier SentimentClassifier::from_weights(std::size_t max_ngram, std::vector<double> weights,
                                                      double bias) {
    if (weights.empty()) throw std::invalid_argument("classifier needs at least one weight");
    if (max_ngram < 1 || max_ngram > 2) throw std::invalid_argument("max_ngram must be 1 or 2");
    if (!std::isfinite(bias) || !std::all_of(weights.begin(), weights.end(), [](double w) { return std::isfinite(w); }))
        throw std::invalid_argument("classifier weights must be finite");
    SentimentClassifier clf;
    clf.weights_ = std::move(weights);
    clf.bias_ = bias;
    clf.max_ngram_ = max_ngram;
    clf.trained_ = true;
    return clf;
}

Prediction SentimentClassifier::predict(std::string_view text) const {
    if (!trained_) throw std::logic_error("sentiment classifier is not trained");
    const double score = sigmoid(margin(hash_features(text, weights_.size(), max_ngram_)));
    return {score >= 0.5 ? Sentiment::Positive : Sentiment::Negative, score};
}

double SentimentClassifier::mean_log_loss(std::span<const Review> reviews) const {
    if (!trained_) throw std::logic_error("sentiment classifier is not trained");
    if (reviews.empty()) throw std::invalid_argument("mean_log_loss of an empty set");
    double s = 0.0;
    for (const auto& r : reviews)
        s += log_loss(margin(hash_features(r.text, weights_.size(), max_ngram_)),
                      r.sentiment == Sentiment::Positive ? 1.0 : 0.0);
    return s / static_cast<double>(reviews.size());
}

std::string SentimentClassifier::serialize() const {
    if (!trained_) throw std::logic_error("cannot serialise an untrained classifier");
    BinaryWriter w;
    w.header(ContainerKind::SentimentClassifier);
    w.u64(weights_.size());
    w.u32(static_cast<std::uint32_t>(max_ngram_));
    w.f64(bias_);
    std::uint64_t nonzero = 0;
    for (double v : weights_)
        if (v != 0.0) ++nonzero;
    w.u64(nonzero);
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        if (weights_[i] == 0.0) continue;
        w.u32(static_cast<std::uint32_t>(i));
        w.f64(weights_[i]);
    }
    return w.bytes();
}

SentimentClassifier SentimentClassifier::deserialize(std::string_view bytes) {
    BinaryReader r(bytes);
    if (r.header() != ContainerKind::SentimentClassifier)
        throw FormatError("RFLM container does not hold a sentiment classifier");
    const auto dim = r.u64();
    if (dim == 0 || dim > (std::uint64_t{1} << 31)) throw FormatError("implausible hash dimension");
    const auto max_ngram = r.u32();
    const double bias = r.f64();
    std::vector<double> weights(dim, 0.0);
    const auto nonzero = r.u64();
    for (std::uint64_t k = 0; k < nonzero; ++k) {
        const auto idx = r.u32();
        if (idx >= dim) throw FormatError("classifier weight index out of range");
        weights[idx] = r.f64();
    }
    r.expect_end();
    try {
        return from_weights(max_ngram, std::move(weights), bias);
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }
}

void SentimentClassifier::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

SentimentClassifier SentimentClassifier::load(const std::filesystem::path& path) {
    return deserialize(read_file_bytes(path));
}

ClassifierMetrics evaluate_accuracy(const SentimentClassifier& clf, std::span<const Review> test) {
    if (test.empty()) throw std::invalid_argument("evaluation set is empty");
    ClassifierMetrics m;
    m.total = test.size();
    for (const auto& r : test) {
        const bool predicted_pos = clf.predict(r.text).label == Sentiment::Positive;
        const bool actual_pos = r.sentiment == Sentiment::Positive;
        if (predicted_pos && actual_pos) ++m.true_positive;
        else if (predicted_pos) ++m.false_positive;
        else if (!actual_pos) ++m.true_negative;
        else ++m.false_negative;
    }
    m.correct = m.true_positive + m.true_negative;
    m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.total);
    auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
    m.precision_positive = ratio(m.true_positive, m.true_positive + m.false_positive);
    m.recall_positive = ratio(m.true_positive, m.true_positive + m.false_negative);
    m.precision_negative = ratio(m.true_negative, m.true_negative + m.false_negative);
    m.recall_negative = ratio(m.true_negative, m.true_negative + m.false_positive);
    return m;
}

}  // namespace revforge
