#include "revforge/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "revforge/rng.hpp"

namespace revforge {

using nlohmann::json;

std::string_view to_string(Sentiment s) { return s == Sentiment::Positive ? "positive" : "negative"; }

std::string_view to_string(Provenance p) { return p == Provenance::Real ? "real" : "fake"; }

Sentiment parse_sentiment(std::string_view s) {
    if (s == "positive") return Sentiment::Positive;
    if (s == "negative") return Sentiment::Negative;
    throw std::invalid_argument("unknown sentiment label \"" + std::string(s) + "\"");
}

Provenance parse_provenance(std::string_view s) {
    if (s == "real") return Provenance::Real;
    if (s == "fake") return Provenance::Fake;
    throw std::invalid_argument("unknown provenance \"" + std::string(s) + "\"");
}

namespace {

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

void Review::validate() const {
    if (is_blank(text)) throw std::invalid_argument("review " + id + ": text is empty");
    if (provenance == Provenance::Fake && !seed_id)
        throw std::invalid_argument("review " + id + ": fake review without seed_id");
    if (provenance == Provenance::Real && seed_id)
        throw std::invalid_argument("review " + id + ": real review carries a seed_id");
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
    tokens_ = {std::string(kUnkText), std::string(kEorText), std::string(kBorText)};
    for (TokenId i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    Vocabulary v;
    v.tokens_.reserve(kReservedCount + tokens.size());
    for (auto& t : tokens) {
        auto id = static_cast<TokenId>(v.tokens_.size());
        if (!v.index_.emplace(t, id).second)
            throw std::invalid_argument("duplicate or reserved vocabulary token \"" + t + "\"");
        v.tokens_.push_back(std::move(t));
    }
    return v;
}

TokenId Vocabulary::lookup(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

const std::string& Vocabulary::token_at(TokenId id) const {
    if (id >= tokens_.size())
        throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                                std::to_string(tokens_.size()));
    return tokens_[id];
}

// ---------------------------------------------------------------------------
// Loading

ReviewParseError::ReviewParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

ReviewFormat format_from_path(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    if (ext == ".csv") return ReviewFormat::Csv;
    if (ext == ".jsonl" || ext == ".json") return ReviewFormat::Jsonl;
    throw std::invalid_argument("cannot infer review format from \"" + path.string() + "\"");
}

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void finish_record(Review& r, std::size_t record_no, std::size_t line) {
    if (r.id.empty()) r.id = std::to_string(record_no);
    try {
        r.validate();
    } catch (const std::invalid_argument& e) {
        throw ReviewParseError(line, e.what());
    }
}

}  // namespace

std::vector<Review> parse_reviews_jsonl(std::string_view content) {
    std::vector<Review> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
        auto end = content.find('\n', pos);
        if (end == std::string_view::npos) end = content.size();
        std::string_view line = content.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (is_blank(line)) continue;

        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ReviewParseError(line_no, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object()) throw ReviewParseError(line_no, "record is not a JSON object");

        Review r;
        for (auto& [key, value] : obj.items()) {
            if (key != "id" && key != "text" && key != "sentiment" && key != "provenance" && key != "seed_id")
                throw ReviewParseError(line_no, "unknown field \"" + key + "\"");
        }
        auto get_string = [&](const char* key) -> std::optional<std::string> {
            auto it = obj.find(key);
            if (it == obj.end() || it->is_null()) return std::nullopt;
            if (it->is_string()) return it->get<std::string>();
            if (it->is_number_integer() && std::string_view(key) != "text") return it->dump();
            throw ReviewParseError(line_no, std::string("field \"") + key + "\" has the wrong type");
        };
        auto text = get_string("text");
        if (!text) throw ReviewParseError(line_no, "missing field \"text\"");
        auto sentiment = get_string("sentiment");
        if (!sentiment) throw ReviewParseError(line_no, "missing field \"sentiment\"");
        r.text = std::move(*text);
        try {
            r.sentiment = parse_sentiment(*sentiment);
            if (auto p = get_string("provenance")) r.provenance = parse_provenance(*p);
        } catch (const std::invalid_argument& e) {
            throw ReviewParseError(line_no, e.what());
        }
        if (auto id = get_string("id")) r.id = std::move(*id);
        r.seed_id = get_string("seed_id");
        finish_record(r, out.size() + 1, line_no);
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

struct CsvRecord {
    std::vector<std::string> fields;
    std::size_t line = 0;
};

// RFC 4180: quoted fields may contain separators, doubled quotes and newlines.
std::vector<CsvRecord> parse_csv(std::string_view content) {
    std::vector<CsvRecord> records;
    std::size_t line = 1;
    std::size_t i = 0;
    while (i < content.size()) {
        CsvRecord rec;
        rec.line = line;
        std::string field;
        bool record_done = false;
        while (!record_done) {
            field.clear();
            if (i < content.size() && content[i] == '"') {
                ++i;
                for (;;) {
                    if (i >= content.size()) throw ReviewParseError(rec.line, "unterminated quoted field");
                    char c = content[i++];
                    if (c == '"') {
                        if (i < content.size() && content[i] == '"') {
                            field.push_back('"');
                            ++i;
                        } else {
                            break;
                        }
                    } else {
                        if (c == '\n') ++line;
                        field.push_back(c);
                    }
                }
                if (i < content.size() && content[i] != ',' && content[i] != '\n' && content[i] != '\r')
                    throw ReviewParseError(rec.line, "unexpected character after closing quote");
            } else {
                while (i < content.size() && content[i] != ',' && content[i] != '\n' && content[i] != '\r')
                    field.push_back(content[i++]);
            }
            rec.fields.push_back(field);
            if (i >= content.size()) {
                record_done = true;
            } else if (content[i] == ',') {
                ++i;
            } else {
                if (content[i] == '\r') ++i;
                if (i < content.size() && content[i] == '\n') ++i;
                ++line;
                record_done = true;
            }
        }
        bool empty_line = rec.fields.size() == 1 && rec.fields[0].empty();
        if (!empty_line) records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace

std::vector<Review> parse_reviews_csv(std::string_view content) {
    auto records = parse_csv(content);
    if (records.empty()) throw ReviewParseError(1, "missing CSV header");

    const auto& header = records.front();
    std::map<std::string, std::size_t> column;
    for (std::size_t c = 0; c < header.fields.size(); ++c) {
        const auto& name = header.fields[c];
        if (name != "id" && name != "sentiment" && name != "text" && name != "provenance" && name != "seed_id")
            throw ReviewParseError(header.line, "unknown CSV column \"" + name + "\"");
        if (!column.emplace(name, c).second)
            throw ReviewParseError(header.line, "duplicate CSV column \"" + name + "\"");
    }
    if (!column.count("text") || !column.count("sentiment"))
        throw ReviewParseError(header.line, "CSV header must name \"sentiment\" and \"text\" columns");

    std::vector<Review> out;
    for (std::size_t k = 1; k < records.size(); ++k) {
        const auto& rec = records[k];
        if (rec.fields.size() != header.fields.size())
            throw ReviewParseError(rec.line, "expected " + std::to_string(header.fields.size()) + " fields, found " +
                                                 std::to_string(rec.fields.size()));
        auto field = [&](const char* name) -> std::optional<std::string> {
            auto it = column.find(name);
            if (it == column.end() || rec.fields[it->second].empty()) return std::nullopt;
            return rec.fields[it->second];
        };
        Review r;
        r.text = field("text").value_or("");
        try {
            r.sentiment = parse_sentiment(field("sentiment").value_or(""));
            if (auto p = field("provenance")) r.provenance = parse_provenance(*p);
        } catch (const std::invalid_argument& e) {
            throw ReviewParseError(rec.line, e.what());
        }
        if (auto id = field("id")) r.id = std::move(*id);
        r.seed_id = field("seed_id");
        finish_record(r, out.size() + 1, rec.line);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<Review> load_reviews(const std::filesystem::path& path, ReviewFormat format) {
    auto content = read_file(path);
    return format == ReviewFormat::Jsonl ? parse_reviews_jsonl(content) : parse_reviews_csv(content);
}

std::string review_to_json_line(const Review& review) {
    json obj = json::object();
    obj["id"] = review.id;
    obj["text"] = review.text;
    obj["sentiment"] = std::string(to_string(review.sentiment));
    obj["provenance"] = std::string(to_string(review.provenance));
    if (review.seed_id) obj["seed_id"] = *review.seed_id;
    return obj.dump();
}

void save_reviews_jsonl(const std::filesystem::path& path, std::span<const Review> reviews) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& r : reviews) out << review_to_json_line(r) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Tokens

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (start == i) break;

        std::string word(text.substr(start, i - start));
        for (auto& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

        std::vector<std::string> trailing;
        auto is_mark = [](char c) { return c == '.' || c == ',' || c == '!' || c == '?'; };
        while (word.size() > 1 && is_mark(word.back())) {
            trailing.emplace_back(1, word.back());
            word.pop_back();
        }
        out.push_back(std::move(word));
        out.insert(out.end(), trailing.rbegin(), trailing.rend());
    }
    return out;
}

Vocabulary build_vocab(std::span<const Review> reviews, std::size_t min_count) {
    if (reviews.empty()) throw std::invalid_argument("build_vocab: no reviews");
    if (min_count < 1) throw std::invalid_argument("build_vocab: min_count must be >= 1");

    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& r : reviews)
        for (auto& t : tokenize(r.text)) ++counts[std::move(t)];

    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [tok, n] : counts) {
        if (n < min_count) continue;
        if (tok == kUnkText || tok == kEorText || tok == kBorText) continue;
        kept.emplace_back(tok, n);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> tokens;
    tokens.reserve(kept.size());
    for (auto& [tok, n] : kept) tokens.push_back(std::move(tok));
    return Vocabulary::from_tokens(std::move(tokens));
}

TokenSequence encode(const Vocabulary& vocab, std::string_view text) {
    auto toks = tokenize(text);
    TokenSequence ids;
    ids.reserve(toks.size() + 2);
    ids.push_back(kBor);
    for (const auto& t : toks) ids.push_back(vocab.lookup(t));
    ids.push_back(kEor);
    return ids;
}

std::string decode(const Vocabulary& vocab, std::span<const TokenId> ids) {
    std::string out;
    for (TokenId id : ids) {
        const auto& tok = vocab.token_at(id);
        if (id == kBor || id == kEor) continue;
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splitting

Split split(std::span<const Review> reviews, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw std::invalid_argument("train_fraction must lie strictly between 0 and 1");

    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < reviews.size(); ++i)
        by_class[reviews[i].sentiment == Sentiment::Positive ? 0 : 1].push_back(i);

    // Overall train size is fixed first; per-class quotas then follow the
    // largest-remainder rule so each class is within one review of its share.
    const auto total_train = static_cast<std::size_t>(std::llround(spec.train_fraction * reviews.size()));
    std::size_t quota[2];
    double remainder[2];
    std::size_t assigned = 0;
    for (int c = 0; c < 2; ++c) {
        double exact = spec.train_fraction * static_cast<double>(by_class[c].size());
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        remainder[c] = exact - static_cast<double>(quota[c]);
        assigned += quota[c];
    }
    while (assigned < total_train) {
        int c = remainder[0] >= remainder[1] ? 0 : 1;
        if (quota[c] == by_class[c].size()) c = 1 - c;
        ++quota[c];
        remainder[c] = -1.0;
        ++assigned;
    }

    Rng rng(spec.rng_seed);
    std::vector<bool> in_train(reviews.size(), false);
    for (int c = 0; c < 2; ++c) {
        auto idx = by_class[c];
        rng.shuffle(std::span<std::size_t>(idx));
        for (std::size_t k = 0; k < quota[c]; ++k) in_train[idx[k]] = true;
    }

    Split out;
    for (std::size_t i = 0; i < reviews.size(); ++i) (in_train[i] ? out.train : out.test).push_back(reviews[i]);
    return out;
}

TokenSequence concat_training_text(const Vocabulary& vocab, std::span<const Review> reviews) {
    TokenSequence stream;
    for (const auto& r : reviews) {
        auto ids = encode(vocab, r.text);
        stream.insert(stream.end(), ids.begin(), ids.end());
    }
    return stream;
}

}  // namespace revforge
