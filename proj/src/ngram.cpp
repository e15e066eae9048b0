#include "revforge/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace revforge {

std::string_view to_string(Smoothing s) {
    switch (s) {
        case Smoothing::Mle: return "mle";
        case Smoothing::AddK: return "add_k";
        case Smoothing::KneserNey: return "kneser_ney";
    }
    return "?";
}

Smoothing parse_smoothing(std::string_view s) {
    if (s == "mle") return Smoothing::Mle;
    if (s == "add_k") return Smoothing::AddK;
    if (s == "kneser_ney") return Smoothing::KneserNey;
    throw std::invalid_argument("unknown smoothing \"" + std::string(s) + "\"");
}

void SmoothingSpec::validate() const {
    if (kind == Smoothing::AddK && !(add_k > 0.0)) throw std::invalid_argument("add_k must be positive");
    if (kind == Smoothing::KneserNey && !(discount > 0.0 && discount <= 1.0))
        throw std::invalid_argument("Kneser-Ney discount must lie in (0, 1]");
}

namespace {

struct NgramState final : ModelState {
    TokenSequence history;
    std::unique_ptr<ModelState> clone() const override { return std::make_unique<NgramState>(*this); }
};

}  // namespace

NgramModel NgramModel::train(Vocabulary vocab, std::span<const TokenId> stream, std::size_t order,
                             SmoothingSpec smoothing) {
    if (order < 1) throw std::invalid_argument("n-gram order must be >= 1");
    if (stream.size() < order)
        throw std::invalid_argument("training stream of " + std::to_string(stream.size()) +
                                    " tokens is shorter than the order " + std::to_string(order));
    smoothing.validate();
    for (TokenId t : stream)
        if (t >= vocab.size()) throw std::invalid_argument("training stream holds an id outside the vocabulary");

    std::vector<CountTable> raw(order);
    for (std::size_t j = 0; j < order; ++j) {
        for (std::size_t end = j; end < stream.size(); ++end) {
            TokenSequence history(stream.begin() + static_cast<std::ptrdiff_t>(end - j),
                                  stream.begin() + static_cast<std::ptrdiff_t>(end));
            auto& h = raw[j][history];
            ++h.total;
            ++h.next[stream[end]];
        }
    }
    return from_counts(std::move(vocab), order, smoothing, std::move(raw));
}

NgramModel NgramModel::from_counts(Vocabulary vocab, std::size_t order, SmoothingSpec smoothing,
                                   std::vector<CountTable> raw) {
    if (order < 1 || raw.size() != order) throw std::invalid_argument("n-gram count tables do not match the order");
    smoothing.validate();
    NgramModel m;
    m.vocab_ = std::move(vocab);
    m.order_ = order;
    m.smoothing_ = smoothing;
    m.raw_ = std::move(raw);
    m.derive_continuation_counts();
    return m;
}

void NgramModel::derive_continuation_counts() {
    // continuation_[j][h'][w] = number of distinct v with c(v h' w) > 0.
    continuation_.assign(order_ > 0 ? order_ - 1 : 0, {});
    for (std::size_t j = 0; j + 1 < order_; ++j) {
        for (const auto& [history, counts] : raw_[j + 1]) {
            TokenSequence shorter(history.begin() + 1, history.end());
            auto& h = continuation_[j][shorter];
            for (const auto& [w, c] : counts.next) {
                (void)c;
                ++h.next[w];
                ++h.total;
            }
        }
    }
}

std::unique_ptr<ModelState> NgramModel::initial_state() const { return std::make_unique<NgramState>(); }

void NgramModel::advance(ModelState& state, TokenId token) const {
    if (token >= vocab_.size()) throw std::out_of_range("token id outside vocabulary");
    auto& s = static_cast<NgramState&>(state);
    s.history.push_back(token);
    const std::size_t k = order_ > 0 ? order_ - 1 : 0;
    if (s.history.size() > k) s.history.erase(s.history.begin(), s.history.end() - static_cast<std::ptrdiff_t>(k));
}

NextTokenDistribution NgramModel::distribution(const ModelState& state) const {
    require_trained();
    return {distribution_for(static_cast<const NgramState&>(state).history)};
}

std::vector<double> NgramModel::distribution_for(std::span<const TokenId> history) const {
    const std::size_t v = vocab_.size();
    const std::size_t top = std::min(history.size(), order_ - 1);
    auto suffix = [&](std::size_t j) { return TokenSequence(history.end() - static_cast<std::ptrdiff_t>(j), history.end()); };
    auto find = [](const CountTable& table, const TokenSequence& key) -> const HistoryCounts* {
        auto it = table.find(key);
        return it == table.end() || it->second.total == 0 ? nullptr : &it->second;
    };

    std::vector<double> p(v, 0.0);
    switch (smoothing_.kind) {
        case Smoothing::Mle: {
            for (std::size_t j = top + 1; j-- > 0;) {
                if (const auto* h = find(raw_[j], suffix(j))) {
                    for (const auto& [w, c] : h->next)
                        p[w] = static_cast<double>(c) / static_cast<double>(h->total);
                    return p;
                }
            }
            throw std::logic_error("n-gram model has no unigram counts");
        }
        case Smoothing::AddK: {
            const double k = smoothing_.add_k;
            const auto* h = find(raw_[top], suffix(top));
            const double denom = (h ? static_cast<double>(h->total) : 0.0) + k * static_cast<double>(v);
            std::fill(p.begin(), p.end(), k / denom);
            if (h)
                for (const auto& [w, c] : h->next) p[w] = (static_cast<double>(c) + k) / denom;
            return p;
        }
        case Smoothing::KneserNey: {
            const double d = smoothing_.discount;
            std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(v));
            std::vector<double> level(v);
            for (std::size_t j = 0; j <= top; ++j) {
                const auto& table = j == top ? raw_[j] : continuation_[j];
                const auto* h = find(table, suffix(j));
                if (!h) continue;
                const double total = static_cast<double>(h->total);
                const double backoff = d * static_cast<double>(h->next.size()) / total;
                for (std::size_t w = 0; w < v; ++w) level[w] = backoff * p[w];
                for (const auto& [w, c] : h->next) level[w] += std::max(static_cast<double>(c) - d, 0.0) / total;
                p.swap(level);
            }
            return p;
        }
    }
    return p;
}

}  // namespace revforge
