#include "revforge/langmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "revforge/mlstm.hpp"
#include "revforge/rng.hpp"

namespace revforge {

double NextTokenDistribution::sum() const {
    double s = 0.0;
    for (double p : probabilities) s += p;
    return s;
}

TokenId NextTokenDistribution::argmax() const {
    TokenId best = 0;
    for (TokenId i = 1; i < probabilities.size(); ++i)
        if (probabilities[i] > probabilities[best]) best = i;
    return best;
}

std::size_t rank_in(const NextTokenDistribution& dist, TokenId token) {
    if (token >= dist.size())
        throw std::out_of_range("token id " + std::to_string(token) + " outside distribution of size " +
                                std::to_string(dist.size()));
    const double p = dist[token];
    std::size_t rank = 1;
    for (TokenId i = 0; i < dist.size(); ++i) {
        if (dist[i] > p || (dist[i] == p && i < token)) ++rank;
    }
    return rank;
}

void LanguageModel::require_trained() const {
    if (!trained()) throw std::logic_error("language model is not trained");
}

NextTokenDistribution LanguageModel::next_token_dist(std::span<const TokenId> context) const {
    require_trained();
    auto state = initial_state();
    for (TokenId t : context) advance(*state, t);
    return distribution(*state);
}

namespace {

struct EmptyState final : ModelState {
    std::unique_ptr<ModelState> clone() const override { return std::make_unique<EmptyState>(); }
};

}  // namespace

std::unique_ptr<ModelState> UniformModel::initial_state() const { return std::make_unique<EmptyState>(); }

void UniformModel::advance(ModelState&, TokenId token) const {
    if (token >= vocab_.size()) throw std::out_of_range("token id outside vocabulary");
}

NextTokenDistribution UniformModel::distribution(const ModelState&) const {
    return {std::vector<double>(vocab_.size(), 1.0 / static_cast<double>(vocab_.size()))};
}

double log_likelihood(const LanguageModel& model, std::span<const TokenId> seq, std::span<const TokenId> context) {
    model.require_trained();
    auto state = model.initial_state();
    for (TokenId t : context) model.advance(*state, t);
    double total = 0.0;
    for (TokenId t : seq) {
        auto dist = model.distribution(*state);
        if (t >= dist.size()) throw std::out_of_range("token id outside vocabulary");
        const double p = dist[t];
        if (p == 0.0) return kImpossible;
        total += std::log(p);
        model.advance(*state, t);
    }
    return total;
}

double perplexity(const LanguageModel& model, std::span<const TokenId> seq, std::span<const TokenId> context) {
    if (seq.empty()) throw std::invalid_argument("perplexity of an empty sequence is undefined");
    const double ll = log_likelihood(model, seq, context);
    if (ll == kImpossible) return std::numeric_limits<double>::infinity();
    return std::exp(-ll / static_cast<double>(seq.size()));
}

std::size_t token_rank(const LanguageModel& model, std::span<const TokenId> context, TokenId token) {
    if (token >= model.vocab_size()) throw std::out_of_range("token id outside vocabulary");
    return rank_in(model.next_token_dist(context), token);
}

void SamplerConfig::validate(std::size_t vocab_size) const {
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw std::invalid_argument("sampler temperature must be positive");
    if (top_k < 1 || top_k > vocab_size)
        throw std::invalid_argument("sampler top_k must lie in [1, " + std::to_string(vocab_size) + "]");
    if (clamp && !std::isfinite(clamp->value)) throw std::invalid_argument("clamp value must be finite");
}

std::vector<double> sampling_weights(const NextTokenDistribution& dist, const SamplerConfig& cfg,
                                     std::size_t emitted) {
    const std::size_t v = dist.size();
    std::vector<TokenId> allowed;
    allowed.reserve(v);
    for (TokenId i = 0; i < v; ++i) {
        if (dist[i] <= 0.0) continue;
        if (i == kBor) continue;
        if (i == kEor && emitted < cfg.min_len) continue;
        allowed.push_back(i);
    }
    std::vector<double> weights(v, 0.0);
    if (allowed.empty()) return weights;

    // Scaled logits; the sort below only needs the order of ln p, which the
    // positive temperature preserves.
    std::vector<double> logits(v, 0.0);
    for (TokenId i : allowed) logits[i] = std::log(dist[i]) / cfg.temperature;

    const std::size_t keep = std::min(cfg.top_k, allowed.size());
    std::partial_sort(allowed.begin(), allowed.begin() + static_cast<std::ptrdiff_t>(keep), allowed.end(),
                      [&](TokenId a, TokenId b) {
                          if (logits[a] != logits[b]) return logits[a] > logits[b];
                          return a < b;
                      });
    allowed.resize(keep);

    const double top = logits[allowed.front()];
    double z = 0.0;
    for (TokenId i : allowed) {
        weights[i] = std::exp(logits[i] - top);
        z += weights[i];
    }
    for (TokenId i : allowed) weights[i] /= z;
    return weights;
}

namespace {

TokenId draw(const std::vector<double>& weights, const NextTokenDistribution& dist, Rng& rng) {
    // Walk candidates in rank order so the draw is independent of id layout
    // beyond the documented tie rule.
    std::vector<TokenId> order;
    for (TokenId i = 0; i < weights.size(); ++i)
        if (weights[i] > 0.0) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
        if (dist[a] != dist[b]) return dist[a] > dist[b];
        return a < b;
    });
    const double u = rng.uniform();
    double acc = 0.0;
    for (TokenId i : order) {
        acc += weights[i];
        if (u < acc) return i;
    }
    return order.back();
}

}  // namespace

TokenSequence sample(const LanguageModel& model, std::span<const TokenId> seed, const SamplerConfig& cfg,
                     const StepObserver& observer) {
    model.require_trained();
    cfg.validate(model.vocab_size());

    std::unique_ptr<ModelState> state;
    if (cfg.clamp) {
        const auto* mlstm = dynamic_cast<const MlstmModel*>(&model);
        if (!mlstm) throw std::invalid_argument("neuron clamping requires an mLSTM model");
        state = mlstm->initial_state(cfg.clamp);
    } else {
        state = model.initial_state();
    }
    if (observer) observer(*state);
    for (TokenId t : seed) {
        model.advance(*state, t);
        if (observer) observer(*state);
    }

    Rng rng(cfg.rng_seed);
    TokenSequence out;
    while (out.size() < cfg.max_len) {
        auto dist = model.distribution(*state);
        auto weights = sampling_weights(dist, cfg, out.size());
        if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) break;
        TokenId next = draw(weights, dist, rng);
        if (next == kEor) break;
        out.push_back(next);
        model.advance(*state, next);
        if (observer) observer(*state);
    }
    return out;
}

TokenSequence sample_clamped(const LanguageModel& model, std::span<const TokenId> seed, const SamplerConfig& cfg,
                             const StepObserver& observer) {
    if (!cfg.clamp) throw std::invalid_argument("sample_clamped requires a clamp specification");
    model.require_trained();
    const auto* mlstm = dynamic_cast<const MlstmModel*>(&model);
    if (!mlstm) throw std::invalid_argument("neuron clamping requires an mLSTM model");
    if (cfg.clamp->neuron >= mlstm->hidden_size())
        throw std::out_of_range("clamp neuron " + std::to_string(cfg.clamp->neuron) + " outside hidden size " +
                                std::to_string(mlstm->hidden_size()));
    return sample(model, seed, cfg, observer);
}

}  // namespace revforge
