#pragma once

#include <cstdint>
#include <vector>

#include "revforge/corpus.hpp"

namespace revforge {

/// Template-grammar review generator with disjoint positive and negative word
/// inventories. Nouns, brand names and a few function words are shared.
/// Brands and nouns follow a Zipf law so held-out text contains a long tail of rare words.
struct PolarizedCorpusConfig {
    std::size_t n_reviews = 2000;
    std::size_t n_brands = 200;
    /// Made-up product nouns appended, Zipf-weighted, after the 20 common ones.
    std::size_t n_rare_nouns = 300;
    std::size_t min_sentences = 2;
    std::size_t max_sentences = 5;
    /// Probability that a review carries one sentence of the opposite polarity.
    double mixed_fraction = 0.0;
    std::uint64_t rng_seed = 1;
};

/// Balanced: exactly floor(n/2) negative reviews, the rest positive.
std::vector<Review> make_polarized_corpus(const PolarizedCorpusConfig& config);

/// Words that only ever appear in reviews of the given polarity.
std::vector<std::string> polarity_inventory(Sentiment s);

}  // namespace revforge
