#include "revforge/synth.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <string>

#include "revforge/rng.hpp"

namespace revforge {

namespace {

struct Inventory {
    std::vector<std::string> adjectives;
    std::vector<std::string> adverbs;
    std::vector<std::string> verbs;
    std::vector<std::string> closings;
    std::string copula;
    std::string end;
};

const Inventory& inventory(Sentiment s) {
    static const Inventory positive{
        {"great", "excellent", "amazing", "perfect", "wonderful", "fantastic", "superb", "lovely", "solid",
         "brilliant", "reliable", "sturdy"},
        {"truly", "really", "simply", "incredibly"},
        {"love", "adore", "enjoy", "recommend"},
        {"highly recommended", "five stars", "worth every penny", "would buy again"},
        "is",
        "!"};
    static const Inventory negative{
        {"terrible", "awful", "horrible", "useless", "broken", "flimsy", "disappointing", "cheap", "faulty",
         "defective", "worthless", "poor"},
        {"sadly", "utterly", "totally", "frankly"},
        {"hate", "regret", "dislike", "returned"},
        {"avoid at all costs", "one star", "waste of money", "a total letdown"},
        "was",
        "."};
    return s == Sentiment::Positive ? positive : negative;
}

const std::vector<std::string>& common_nouns() {
    static const std::vector<std::string> n{"phone",   "battery", "screen",  "case",    "charger", "camera", "speaker",
                                            "cable",   "keyboard", "mouse",  "headset", "lamp",    "blender", "kettle",
                                            "backpack", "watch",  "printer", "router",  "monitor", "tablet"};
    return n;
}

/// Pronounceable made-up words, distinct from each other and from `taken`.
std::vector<std::string> make_words(std::size_t count, Rng& rng, std::set<std::string>& taken) {
    static const std::array<const char*, 16> onsets{"b", "d", "f", "g", "k", "l", "m", "n",
                                                    "p", "r", "s", "t", "v", "z", "tr", "qu"};
    static const std::array<const char*, 6> vowels{"a", "e", "i", "o", "u", "y"};
    static const std::array<const char*, 8> codas{"x", "n", "r", "k", "l", "m", "s", "th"};
    std::vector<std::string> out;
    while (out.size() < count) {
        std::string name;
        std::size_t syllables = 2 + rng.below(2);
        for (std::size_t s = 0; s < syllables; ++s) {
            name += onsets[rng.below(onsets.size())];
            name += vowels[rng.below(vowels.size())];
        }
        name += codas[rng.below(codas.size())];
        if (taken.insert(name).second) out.push_back(name);
    }
    return out;
}

class ZipfPicker {
public:
    explicit ZipfPicker(std::vector<std::string> items) : items_(std::move(items)), cdf_(items_.size()) {
        double total = 0.0;
        for (std::size_t i = 0; i < items_.size(); ++i) total += 1.0 / static_cast<double>(i + 1);
        double acc = 0.0;
        for (std::size_t i = 0; i < items_.size(); ++i) {
            acc += 1.0 / static_cast<double>(i + 1) / total;
            cdf_[i] = acc;
        }
    }

    const std::string& operator()(Rng& rng) const {
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), rng.uniform());
        auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), items_.size() - 1);
        return items_[idx];
    }

private:
    std::vector<std::string> items_;
    std::vector<double> cdf_;
};

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& items) {
    return items[rng.below(items.size())];
}

class SentenceWriter {
public:
    SentenceWriter(Rng& rng, const ZipfPicker& brands, const ZipfPicker& nouns)
        : rng_(rng), brand_(brands), noun_(nouns) {}

    std::string sentence(Sentiment s) {
        const auto& inv = inventory(s);
        switch (rng_.below(5)) {
            case 0:
                return "the " + noun_(rng_) + " " + inv.copula + " " + pick(rng_, inv.adverbs) + " " +
                       pick(rng_, inv.adjectives) + " " + inv.end;
            case 1:
                return "i " + pick(rng_, inv.verbs) + " this " + noun_(rng_) + " " + inv.end;
            case 2:
                return brand_(rng_) + " makes " + pick(rng_, inv.adjectives) + " stuff " + inv.end;
            case 3:
                return "my " + brand_(rng_) + " " + noun_(rng_) + " " + inv.copula + " " +
                       pick(rng_, inv.adjectives) + " " + inv.end;
            default:
                return pick(rng_, inv.closings) + " " + inv.end;
        }
    }

private:
    Rng& rng_;
    const ZipfPicker& brand_;
    const ZipfPicker& noun_;
};

}  // namespace

std::vector<std::string> polarity_inventory(Sentiment s) {
    const auto& inv = inventory(s);
    std::vector<std::string> words = inv.adjectives;
    words.insert(words.end(), inv.adverbs.begin(), inv.adverbs.end());
    words.insert(words.end(), inv.verbs.begin(), inv.verbs.end());
    for (const auto& c : inv.closings)
        for (auto& t : tokenize(c)) words.push_back(t);
    words.push_back(inv.copula);
    words.push_back(inv.end);
    return words;
}

std::vector<Review> make_polarized_corpus(const PolarizedCorpusConfig& config) {
    if (config.n_brands == 0) throw std::invalid_argument("make_polarized_corpus: n_brands must be positive");
    if (config.min_sentences == 0 || config.max_sentences < config.min_sentences)
        throw std::invalid_argument("make_polarized_corpus: bad sentence range");

    std::set<std::string> taken;
    for (Sentiment s : {Sentiment::Positive, Sentiment::Negative})
        for (auto& w : polarity_inventory(s)) taken.insert(w);
    for (const auto& n : common_nouns()) taken.insert(n);
    Rng word_rng(derive_seed(config.rng_seed, "brands"));
    ZipfPicker brands(make_words(config.n_brands, word_rng, taken));
    std::vector<std::string> noun_list = common_nouns();
    Rng noun_rng(derive_seed(config.rng_seed, "nouns"));
    for (auto& n : make_words(config.n_rare_nouns, noun_rng, taken)) noun_list.push_back(std::move(n));
    ZipfPicker nouns(std::move(noun_list));

    Rng rng(derive_seed(config.rng_seed, "reviews"));
    std::vector<Sentiment> labels(config.n_reviews, Sentiment::Positive);
    for (std::size_t i = 0; i < config.n_reviews / 2; ++i) labels[i] = Sentiment::Negative;
    rng.shuffle(std::span<Sentiment>(labels));

    SentenceWriter writer(rng, brands, nouns);
    std::vector<Review> out;
    out.reserve(config.n_reviews);
    const std::size_t span = config.max_sentences - config.min_sentences + 1;
    for (std::size_t i = 0; i < config.n_reviews; ++i) {
        Sentiment s = labels[i];
        std::size_t n_sentences = config.min_sentences + rng.below(span);
        std::size_t mixed_at = n_sentences;
        if (n_sentences > 1 && rng.uniform() < config.mixed_fraction) mixed_at = 1 + rng.below(n_sentences - 1);
        std::string text;
        for (std::size_t k = 0; k < n_sentences; ++k) {
            Sentiment sentence_polarity =
                k == mixed_at ? (s == Sentiment::Positive ? Sentiment::Negative : Sentiment::Positive) : s;
            if (!text.empty()) text.push_back(' ');
            text += writer.sentence(sentence_polarity);
        }
        Review r;
        r.id = "syn" + std::to_string(i + 1);
        r.text = std::move(text);
        r.sentiment = s;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace revforge
