#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include "revforge/corpus.hpp"
#include "revforge/rng.hpp"
#include "revforge/synth.hpp"

using namespace revforge;

namespace {

Review make_review(std::string id, std::string text, Sentiment s) {
    Review r;
    r.id = std::move(id);
    r.text = std::move(text);
    r.sentiment = s;
    return r;
}

std::vector<Review> balanced(std::size_t n) {
    std::vector<Review> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(make_review("r" + std::to_string(i), "word" + std::to_string(i),
                                  i % 2 ? Sentiment::Negative : Sentiment::Positive));
    return out;
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
    auto path = std::filesystem::temp_directory_path() / ("revforge_test_" + name);
    std::ofstream(path, std::ios::binary) << content;
    return path;
}

}  // namespace

TEST_SUITE("corpus") {
    TEST_CASE("jsonl with two records loads in order") {
        auto reviews = parse_reviews_jsonl(
            "{\"id\":\"a\",\"text\":\"Great phone!\",\"sentiment\":\"positive\"}\n"
            "{\"id\":\"b\",\"text\":\"Bad case.\",\"sentiment\":\"negative\"}\n");
        REQUIRE(reviews.size() == 2);
        CHECK(reviews[0].id == "a");
        CHECK(reviews[1].id == "b");
        CHECK(reviews[0].sentiment == Sentiment::Positive);
        CHECK(reviews[1].sentiment == Sentiment::Negative);
        CHECK(reviews[0].provenance == Provenance::Real);
    }

    TEST_CASE("missing ids become record numbers") {
        auto reviews = parse_reviews_jsonl(
            "{\"text\":\"one\",\"sentiment\":\"positive\"}\n\n{\"text\":\"two\",\"sentiment\":\"negative\"}\n");
        REQUIRE(reviews.size() == 2);
        CHECK(reviews[0].id == "1");
        CHECK(reviews[1].id == "2");
    }

    TEST_CASE("record missing text on line 3 is reported with its line") {
        const std::string content =
            "{\"text\":\"one\",\"sentiment\":\"positive\"}\n"
            "{\"text\":\"two\",\"sentiment\":\"positive\"}\n"
            "{\"sentiment\":\"negative\"}\n";
        try {
            parse_reviews_jsonl(content);
            FAIL("expected an error");
        } catch (const ReviewParseError& e) {
            CHECK(e.line() == 3);
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        }
        auto path = temp_file("missing.jsonl", content);
        CHECK_THROWS_AS(load_reviews(path, ReviewFormat::Jsonl), ReviewParseError);
        std::filesystem::remove(path);
    }

    TEST_CASE("unknown sentiment label names the value") {
        try {
            parse_reviews_jsonl("{\"text\":\"x\",\"sentiment\":\"meh\"}\n");
            FAIL("expected an error");
        } catch (const ReviewParseError& e) {
            CHECK(std::string(e.what()).find("meh") != std::string::npos);
        }
        CHECK_THROWS_AS(parse_reviews_csv("sentiment,text\nsoso,hello\n"), ReviewParseError);
    }

    TEST_CASE("unknown jsonl keys and malformed lines are rejected") {
        CHECK_THROWS_AS(parse_reviews_jsonl("{\"text\":\"x\",\"sentiment\":\"positive\",\"stars\":5}\n"),
                        ReviewParseError);
        CHECK_THROWS_AS(parse_reviews_jsonl("{\"text\":\"x\",\n"), ReviewParseError);
        CHECK_THROWS_AS(parse_reviews_jsonl("{\"text\":\"   \",\"sentiment\":\"positive\"}\n"), ReviewParseError);
        CHECK_THROWS_AS(parse_reviews_jsonl("{\"text\":\"x\",\"sentiment\":\"positive\",\"provenance\":\"fake\"}\n"),
                        ReviewParseError);
    }

    TEST_CASE("csv with 1000 balanced records counts 500 per class") {
        std::string csv = "id,sentiment,text\n";
        std::size_t expect_pos = 0;
        for (int i = 0; i < 1000; ++i) {
            const bool pos = i % 2 == 0;
            expect_pos += pos;
            csv += std::to_string(i) + "," + (pos ? "positive" : "negative") + ",\"text, number " +
                   std::to_string(i) + " said \"\"hi\"\"\"\n";
        }
        auto path = temp_file("balanced.csv", csv);
        REQUIRE(format_from_path(path) == ReviewFormat::Csv);
        auto reviews = load_reviews(path, ReviewFormat::Csv);
        std::filesystem::remove(path);
        REQUIRE(reviews.size() == 1000);
        auto n_pos = std::count_if(reviews.begin(), reviews.end(),
                                   [](const Review& r) { return r.sentiment == Sentiment::Positive; });
        CHECK(static_cast<std::size_t>(n_pos) == expect_pos);
        CHECK(n_pos == 500);
        CHECK(reviews[7].text == "text, number 7 said \"hi\"");
    }

    TEST_CASE("csv header problems") {
        CHECK_THROWS_AS(parse_reviews_csv(""), ReviewParseError);
        CHECK_THROWS_AS(parse_reviews_csv("id,text\n1,x\n"), ReviewParseError);
        CHECK_THROWS_AS(parse_reviews_csv("id,sentiment,text,stars\n1,positive,x,5\n"), ReviewParseError);
        try {
            parse_reviews_csv("sentiment,text\npositive,a\npositive\n");
            FAIL("expected an error");
        } catch (const ReviewParseError& e) {
            CHECK(e.line() == 3);
        }
    }

    TEST_CASE("jsonl save and load round trip") {
        std::vector<Review> reviews = balanced(4);
        reviews[1].provenance = Provenance::Fake;
        reviews[1].seed_id = "r0";
        reviews[2].text = "quote \" and\nnewline";
        auto path = std::filesystem::temp_directory_path() / "revforge_test_roundtrip.jsonl";
        save_reviews_jsonl(path, reviews);
        auto back = load_reviews(path, ReviewFormat::Jsonl);
        std::filesystem::remove(path);
        REQUIRE(back.size() == reviews.size());
        for (std::size_t i = 0; i < reviews.size(); ++i) {
            CHECK(back[i].id == reviews[i].id);
            CHECK(back[i].text == reviews[i].text);
            CHECK(back[i].sentiment == reviews[i].sentiment);
            CHECK(back[i].provenance == reviews[i].provenance);
            CHECK(back[i].seed_id == reviews[i].seed_id);
        }
    }

    TEST_CASE("review invariants") {
        Review r = make_review("x", "  ", Sentiment::Positive);
        CHECK_THROWS_AS(r.validate(), std::invalid_argument);
        r.text = "ok";
        CHECK_NOTHROW(r.validate());
        r.provenance = Provenance::Fake;
        CHECK_THROWS_AS(r.validate(), std::invalid_argument);
        r.seed_id = "s";
        CHECK_NOTHROW(r.validate());
        r.provenance = Provenance::Real;
        CHECK_THROWS_AS(r.validate(), std::invalid_argument);
    }

    TEST_CASE("tokenize examples") {
        CHECK(tokenize("Great phone!") == std::vector<std::string>{"great", "phone", "!"});
        CHECK(tokenize("").empty());
        CHECK(tokenize("I bought it. Twice.") == std::vector<std::string>{"i", "bought", "it", ".", "twice", "."});
        CHECK(tokenize("wow!!") == std::vector<std::string>{"wow", "!", "!"});
        CHECK(tokenize("  spaced\tout\n") == std::vector<std::string>{"spaced", "out"});
        CHECK(tokenize("! ?") == std::vector<std::string>{"!", "?"});
    }

    TEST_CASE("build_vocab ordering and min_count") {
        std::vector<Review> corpus{make_review("1", "a a b", Sentiment::Positive)};
        auto v1 = build_vocab(corpus, 1);
        REQUIRE(v1.size() == 5);
        CHECK(v1.token_at(kUnk) == kUnkText);
        CHECK(v1.token_at(kEor) == kEorText);
        CHECK(v1.token_at(kBor) == kBorText);
        CHECK(v1.token_at(3) == "a");
        CHECK(v1.token_at(4) == "b");
        auto v2 = build_vocab(corpus, 2);
        REQUIRE(v2.size() == 4);
        CHECK(v2.token_at(3) == "a");
        CHECK_THROWS_AS(build_vocab(std::vector<Review>{}, 1), std::invalid_argument);
    }

    TEST_CASE("build_vocab breaks frequency ties lexicographically and is reproducible") {
        std::vector<Review> corpus{make_review("1", "zeta alpha mid mid", Sentiment::Positive),
                                   make_review("2", "beta", Sentiment::Negative)};
        auto v = build_vocab(corpus);
        CHECK(v.tokens() == std::vector<std::string>{std::string(kUnkText), std::string(kEorText),
                                                     std::string(kBorText), "mid", "alpha", "beta", "zeta"});
        CHECK(build_vocab(corpus) == v);
    }

    TEST_CASE("lookup and token_at are inverse on the non-reserved range") {
        auto corpus = make_polarized_corpus({.n_reviews = 200});
        auto v = build_vocab(corpus);
        for (TokenId id = static_cast<TokenId>(kReservedCount); id < v.size(); ++id) CHECK(v.lookup(v.token_at(id)) == id);
        CHECK(v.lookup("never-seen-word") == kUnk);
        CHECK_THROWS_AS(v.token_at(static_cast<TokenId>(v.size())), std::out_of_range);
        CHECK_THROWS_AS(Vocabulary::from_tokens({"a", "a"}), std::invalid_argument);
        CHECK_THROWS_AS(Vocabulary::from_tokens({"<eor>"}), std::invalid_argument);
    }

    TEST_CASE("encode and decode") {
        auto v = Vocabulary::from_tokens({"great", "phone", "!"});
        auto ids = encode(v, "Great phone!");
        CHECK(ids == TokenSequence{kBor, 3, 4, 5, kEor});
        CHECK(decode(v, ids) == "great phone !");

        auto oov = encode(v, "great camera !");
        CHECK(std::count(oov.begin(), oov.end(), kUnk) == 1);
        CHECK(decode(v, oov) == "great <unk> !");

        CHECK_THROWS_AS(decode(v, TokenSequence{999999}), std::out_of_range);
    }

    TEST_CASE("round trip property over random in-vocabulary texts") {
        auto corpus = make_polarized_corpus({.n_reviews = 100, .rng_seed = 4});
        auto v = build_vocab(corpus);
        Rng rng(9);
        for (int trial = 0; trial < 200; ++trial) {
            std::string text;
            const std::size_t len = rng.below(20);
            for (std::size_t i = 0; i < len; ++i) {
                if (i) text += ' ';
                text += v.token_at(static_cast<TokenId>(kReservedCount + rng.below(v.size() - kReservedCount)));
            }
            const auto toks = tokenize(text);
            std::string joined;
            for (std::size_t i = 0; i < toks.size(); ++i) joined += (i ? " " : "") + toks[i];
            CHECK(decode(v, encode(v, text)) == joined);
        }
    }

    TEST_CASE("split: 10 reviews at 0.9 gives 9/1 and is stable") {
        auto reviews = balanced(10);
        auto a = split(reviews, {0.9, 5});
        auto b = split(reviews, {0.9, 5});
        CHECK(a.train.size() == 9);
        CHECK(a.test.size() == 1);
        REQUIRE(a.test.size() == b.test.size());
        CHECK(a.test[0].id == b.test[0].id);
    }

    TEST_CASE("split: balanced 100 at 0.8 keeps 40 +- 1 per class") {
        auto reviews = balanced(100);
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            auto s = split(reviews, {0.8, seed});
            auto pos = std::count_if(s.train.begin(), s.train.end(),
                                     [](const Review& r) { return r.sentiment == Sentiment::Positive; });
            auto neg = static_cast<std::ptrdiff_t>(s.train.size()) - pos;
            CHECK(std::abs(pos - 40) <= 1);
            CHECK(std::abs(neg - 40) <= 1);
        }
    }

    TEST_CASE("split is a partition that keeps input order") {
        auto reviews = make_polarized_corpus({.n_reviews = 301, .rng_seed = 2});
        auto s = split(reviews, {0.7, 11});
        CHECK(s.train.size() + s.test.size() == reviews.size());
        std::map<std::string, int> seen;
        for (const auto& r : s.train) ++seen[r.id];
        for (const auto& r : s.test) ++seen[r.id];
        CHECK(seen.size() == reviews.size());
        for (const auto& [id, n] : seen) CHECK(n == 1);
        auto position = [&](const std::string& id) {
            return std::find_if(reviews.begin(), reviews.end(), [&](const Review& r) { return r.id == id; }) -
                   reviews.begin();
        };
        for (std::size_t i = 1; i < s.train.size(); ++i) CHECK(position(s.train[i - 1].id) < position(s.train[i].id));
        for (std::size_t i = 1; i < s.test.size(); ++i) CHECK(position(s.test[i - 1].id) < position(s.test[i].id));
    }

    TEST_CASE("split rejects fractions outside (0, 1)") {
        auto reviews = balanced(10);
        CHECK_THROWS_AS(split(reviews, {1.0, 0}), std::invalid_argument);
        CHECK_THROWS_AS(split(reviews, {0.0, 0}), std::invalid_argument);
        CHECK_THROWS_AS(split(reviews, {-0.5, 0}), std::invalid_argument);
    }

    TEST_CASE("concat_training_text") {
        auto v = Vocabulary::from_tokens({"a", "b", "c"});
        std::vector<Review> two{make_review("1", "a b c", Sentiment::Positive),
                                make_review("2", "c b a", Sentiment::Negative)};
        auto stream = concat_training_text(v, two);
        CHECK(stream.size() == 10);
        CHECK(stream == TokenSequence{kBor, 3, 4, 5, kEor, kBor, 5, 4, 3, kEor});
        CHECK(concat_training_text(v, std::vector<Review>{}).empty());
    }

    TEST_CASE("concat_training_text length formula on random corpora") {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            auto corpus = make_polarized_corpus({.n_reviews = 10 + seed * 3, .rng_seed = seed});
            auto v = build_vocab(corpus);
            std::size_t expect = 0;
            for (const auto& r : corpus) expect += tokenize(r.text).size() + 2;
            CHECK(concat_training_text(v, corpus).size() == expect);
        }
    }

    TEST_CASE("synthetic corpus is balanced, labelled and uses disjoint inventories") {
        auto corpus = make_polarized_corpus({.n_reviews = 501, .rng_seed = 3});
        REQUIRE(corpus.size() == 501);
        auto neg = std::count_if(corpus.begin(), corpus.end(),
                                 [](const Review& r) { return r.sentiment == Sentiment::Negative; });
        CHECK(neg == 250);
        auto pos_words = polarity_inventory(Sentiment::Positive);
        auto neg_words = polarity_inventory(Sentiment::Negative);
        for (const auto& w : pos_words) CHECK(std::find(neg_words.begin(), neg_words.end(), w) == neg_words.end());
        for (const auto& r : corpus) {
            const auto& other = r.sentiment == Sentiment::Positive ? neg_words : pos_words;
            for (const auto& t : tokenize(r.text)) CHECK(std::find(other.begin(), other.end(), t) == other.end());
        }
        auto again = make_polarized_corpus({.n_reviews = 501, .rng_seed = 3});
        for (std::size_t i = 0; i < corpus.size(); ++i) CHECK(again[i].text == corpus[i].text);
    }
}
