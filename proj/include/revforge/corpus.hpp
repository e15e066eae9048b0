#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace revforge {

enum class Sentiment { Positive, Negative };
enum class Provenance { Real, Fake };

std::string_view to_string(Sentiment s);
std::string_view to_string(Provenance p);
Sentiment parse_sentiment(std::string_view s);
Provenance parse_provenance(std::string_view s);

struct Review {
    std::string id;
    std::string text;
    Sentiment sentiment = Sentiment::Positive;
    Provenance provenance = Provenance::Real;
    std::optional<std::string> seed_id;

    /// Throws std::invalid_argument when the text is blank or the
    /// provenance/seed_id pairing is inconsistent.
    void validate() const;
};

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

/// Reserved token ids; they occupy the three lowest indices of every vocabulary.
inline constexpr TokenId kUnk = 0;
inline constexpr TokenId kEor = 1;
inline constexpr TokenId kBor = 2;
inline constexpr std::size_t kReservedCount = 3;

inline constexpr std::string_view kUnkText = "<unk>";
inline constexpr std::string_view kEorText = "<eor>";
inline constexpr std::string_view kBorText = "<bor>";

class Vocabulary {
public:
    /// Reserved tokens only.
    Vocabulary();

    /// Builds from the non-reserved tokens in index order. Duplicates or
    /// reserved spellings are rejected.
    static Vocabulary from_tokens(std::vector<std::string> tokens);

    std::size_t size() const { return tokens_.size(); }
    TokenId lookup(std::string_view token) const;
    bool contains(std::string_view token) const;
    const std::string& token_at(TokenId id) const;

    /// Every token, reserved ones first.
    const std::vector<std::string>& tokens() const { return tokens_; }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Raised by load_reviews; `line()` is the 1-based physical line of the record.
class ReviewParseError : public std::runtime_error {
public:
    ReviewParseError(std::size_t line, const std::string& what);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

enum class ReviewFormat { Jsonl, Csv };

ReviewFormat format_from_path(const std::filesystem::path& path);

std::vector<Review> load_reviews(const std::filesystem::path& path, ReviewFormat format);
std::vector<Review> parse_reviews_jsonl(std::string_view content);
std::vector<Review> parse_reviews_csv(std::string_view content);

void save_reviews_jsonl(const std::filesystem::path& path, std::span<const Review> reviews);
std::string review_to_json_line(const Review& review);

/// Lowercases ASCII, splits on whitespace and detaches trailing . , ! ? marks.
std::vector<std::string> tokenize(std::string_view text);

Vocabulary build_vocab(std::span<const Review> reviews, std::size_t min_count = 1);

/// <bor> tokens... <eor>, with unknown words mapped to <unk>.
TokenSequence encode(const Vocabulary& vocab, std::string_view text);

/// Space-joined tokens; <bor> and <eor> are dropped, <unk> is rendered literally.
std::string decode(const Vocabulary& vocab, std::span<const TokenId> ids);

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t rng_seed = 0;
};

struct Split {
    std::vector<Review> train;
    std::vector<Review> test;
};

/// Stratified per sentiment; both sides keep input order.
Split split(std::span<const Review> reviews, const SplitSpec& spec);

/// <bor> r1 <eor> <bor> r2 <eor> ... over the given reviews in order.
TokenSequence concat_training_text(const Vocabulary& vocab, std::span<const Review> reviews);

}  // namespace revforge
