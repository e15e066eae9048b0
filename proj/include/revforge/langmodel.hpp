#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "revforge/corpus.hpp"

namespace revforge {

enum class ModelKind : std::uint32_t { Ngram = 1, Mlstm = 2, Uniform = 3 };

/// P(x_t | x_1..x_{t-1}) over the whole vocabulary.
struct NextTokenDistribution {
    std::vector<double> probabilities;

    std::size_t size() const { return probabilities.size(); }
    double operator[](TokenId id) const { return probabilities[id]; }
    double sum() const;
    TokenId argmax() const;  // ties go to the lower id
};

/// Rank of `token` when the distribution is sorted by descending probability,
/// ties broken by ascending token id. 1-based.
std::size_t rank_in(const NextTokenDistribution& dist, TokenId token);

/// Opaque per-model recurrent/Markov state.
class ModelState {
public:
    virtual ~ModelState() = default;
    virtual std::unique_ptr<ModelState> clone() const = 0;
};

/// Autoregressive model queried through an incrementally advanced state, so
/// that scoring and sampling a sequence costs one update per token.
class LanguageModel {
public:
    virtual ~LanguageModel() = default;

    virtual ModelKind kind() const = 0;
    virtual const Vocabulary& vocabulary() const = 0;
    virtual bool trained() const = 0;

    /// State for the empty context.
    virtual std::unique_ptr<ModelState> initial_state() const = 0;
    virtual void advance(ModelState& state, TokenId token) const = 0;
    virtual NextTokenDistribution distribution(const ModelState& state) const = 0;

    std::size_t vocab_size() const { return vocabulary().size(); }

    /// Throws std::logic_error when the model is untrained.
    void require_trained() const;

    NextTokenDistribution next_token_dist(std::span<const TokenId> context) const;
};

/// Every token equally likely regardless of context.
class UniformModel final : public LanguageModel {
public:
    explicit UniformModel(Vocabulary vocab) : vocab_(std::move(vocab)) {}

    ModelKind kind() const override { return ModelKind::Uniform; }
    const Vocabulary& vocabulary() const override { return vocab_; }
    bool trained() const override { return true; }
    std::unique_ptr<ModelState> initial_state() const override;
    void advance(ModelState& state, TokenId token) const override;
    NextTokenDistribution distribution(const ModelState& state) const override;

private:
    Vocabulary vocab_;
};

/// Returned by log_likelihood when some conditional probability is exactly zero.
inline constexpr double kImpossible = -std::numeric_limits<double>::infinity();

/// Sum over t of ln P(seq_t | context ++ seq_<t), in nats. The context tokens
/// condition the first term but are not scored themselves.
double log_likelihood(const LanguageModel& model, std::span<const TokenId> seq,
                      std::span<const TokenId> context = {});

/// exp(-log_likelihood / |seq|); +inf when the sequence is impossible.
double perplexity(const LanguageModel& model, std::span<const TokenId> seq, std::span<const TokenId> context = {});

std::size_t token_rank(const LanguageModel& model, std::span<const TokenId> context, TokenId token);

struct ClampSpec {
    std::size_t neuron = 0;
    double value = 1.0;
};

struct SamplerConfig {
    std::size_t max_len = 165;
    /// <eor> is masked until this many tokens have been emitted.
    std::size_t min_len = 1;
    double temperature = 1.0;
    std::size_t top_k = 40;
    std::uint64_t rng_seed = 0;
    std::optional<ClampSpec> clamp;

    /// Throws std::invalid_argument on non-positive temperature or a top_k
    /// outside [1, vocab_size].
    void validate(std::size_t vocab_size) const;
};

/// Called with the model state after it is created and after every token it
/// consumes, seed tokens included.
using StepObserver = std::function<void(const ModelState&)>;

/// Consumes `seed` and returns only the continuation, without the terminating
/// <eor>. Per step: log-probabilities / temperature, top-k truncation (ties by
/// ascending id), renormalisation, one draw. <bor> is never emitted.
/// A clamp in `cfg` requires an mLSTM model.
TokenSequence sample(const LanguageModel& model, std::span<const TokenId> seed, const SamplerConfig& cfg,
                     const StepObserver& observer = {});

/// Same as sample(), but the config must carry a clamp.
TokenSequence sample_clamped(const LanguageModel& model, std::span<const TokenId> seed, const SamplerConfig& cfg,
                             const StepObserver& observer = {});

/// Probabilities the sampler draws from at one step, after masking,
/// temperature and top-k. Exposed for inspection and tests.
std::vector<double> sampling_weights(const NextTokenDistribution& dist, const SamplerConfig& cfg,
                                     std::size_t emitted);

}  // namespace revforge
