#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "revforge/langmodel.hpp"

namespace revforge {

enum class Smoothing : std::uint32_t { Mle = 0, AddK = 1, KneserNey = 2 };

std::string_view to_string(Smoothing s);
Smoothing parse_smoothing(std::string_view s);

struct SmoothingSpec {
    Smoothing kind = Smoothing::KneserNey;
    double add_k = 1.0;
    double discount = 0.75;

    void validate() const;
};

/// Count-based n-gram model over a fixed vocabulary.
///
/// A query with context c uses the last min(|c|, order-1) tokens. A shorter
/// history (start of a sequence) is scored by the lower-order model of the
/// same smoothing family, so an empty context gets the unigram estimate.
///
///   mle         c(h,w) / c(h); an unseen history backs off to its longest
///               seen suffix.
///   add_k       (c(h,w) + k) / (c(h) + k|V|).
///   kneser_ney  interpolated, absolute discount d: raw counts at the top
///               level, continuation counts N1+(. h' w) below it, and the
///               uniform distribution under the unigram level.
class NgramModel final : public LanguageModel {
public:
    /// Untrained.
    NgramModel() = default;

    /// Throws std::invalid_argument when the stream is shorter than `order`
    /// or holds ids outside the vocabulary.
    static NgramModel train(Vocabulary vocab, std::span<const TokenId> stream, std::size_t order,
                            SmoothingSpec smoothing);

    ModelKind kind() const override { return ModelKind::Ngram; }
    const Vocabulary& vocabulary() const override { return vocab_; }
    bool trained() const override { return order_ > 0; }
    std::unique_ptr<ModelState> initial_state() const override;
    void advance(ModelState& state, TokenId token) const override;
    NextTokenDistribution distribution(const ModelState& state) const override;

    std::size_t order() const { return order_; }
    const SmoothingSpec& smoothing() const { return smoothing_; }

    /// Successor counts keyed by history; one table per history length.
    struct HistoryCounts {
        std::uint64_t total = 0;
        std::map<TokenId, std::uint64_t> next;
    };
    using CountTable = std::map<TokenSequence, HistoryCounts>;

    /// raw_counts()[j] maps each length-j history to its successor counts.
    const std::vector<CountTable>& raw_counts() const { return raw_; }

    /// Rebuilds a model from stored raw counts (deserialisation path).
    static NgramModel from_counts(Vocabulary vocab, std::size_t order, SmoothingSpec smoothing,
                                  std::vector<CountTable> raw);

private:
    void derive_continuation_counts();
    std::vector<double> distribution_for(std::span<const TokenId> history) const;

    Vocabulary vocab_;
    std::size_t order_ = 0;
    SmoothingSpec smoothing_;
    std::vector<CountTable> raw_;
    std::vector<CountTable> continuation_;
};

}  // namespace revforge
