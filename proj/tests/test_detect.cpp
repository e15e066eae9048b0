#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "revforge/detect.hpp"
#include "revforge/ngram.hpp"
#include "revforge/rng.hpp"
#include "revforge/synth.hpp"

using namespace revforge;

namespace {

std::vector<ScoredSample> samples(std::vector<double> fakes, std::vector<double> reals) {
    std::vector<ScoredSample> s;
    for (double x : fakes) s.push_back({x, true});
    for (double x : reals) s.push_back({x, false});
    return s;
}

std::vector<ScoredSample> random_instance(Rng& rng) {
    const std::size_t n = 2 + rng.below(499);
    std::vector<ScoredSample> s(n);
    // Coarse grids produce many ties, fine ones almost none.
    const double grid = rng.below(2) ? 1.0 / static_cast<double>(1 + rng.below(20)) : 0.0;
    const double shift = rng.uniform(-1, 1);
    for (auto& x : s) {
        x.is_fake = rng.below(2) == 1;
        double v = rng.uniform() + (x.is_fake ? shift : 0.0);
        if (grid > 0) v = std::round(v / grid) * grid;
        x.score = v;
    }
    s[0].is_fake = true;
    s[1].is_fake = false;
    return s;
}

Review review(std::string id, std::string text, Provenance p) {
    Review r;
    r.id = std::move(id);
    r.text = std::move(text);
    r.provenance = p;
    if (p == Provenance::Fake) r.seed_id = "s";
    return r;
}

struct Toy {
    std::vector<Review> corpus = make_polarized_corpus({.n_reviews = 200, .rng_seed = 13});
    std::shared_ptr<const LanguageModel> lm;
    Toy() {
        auto v = build_vocab(corpus);
        lm = std::make_shared<NgramModel>(NgramModel::train(v, concat_training_text(v, corpus), 3, {}));
    }
};

Toy& toy() {
    static Toy t;
    return t;
}

// Corpus texts labelled fake, scrambled out-of-vocabulary texts labelled real.
std::vector<Review> separable_set(std::size_t n) {
    auto& t = toy();
    std::vector<Review> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(review("f" + std::to_string(i), t.corpus[i].text, Provenance::Fake));
        std::string junk;
        for (std::size_t k = 0; k <= i % 5; ++k) junk += "zq" + std::to_string(i * 7 + k) + " ";
        out.push_back(review("r" + std::to_string(i), junk, Provenance::Real));
    }
    return out;
}

}  // namespace

TEST_SUITE("detect") {
    TEST_CASE("EER examples") {
        auto perfect = samples({0.9, 0.8}, {0.1, 0.2});
        CHECK(compute_eer(perfect).eer == 0.0);
        auto third = samples({0.9, 0.4, 0.8}, {0.1, 0.5, 0.2});
        CHECK(compute_eer(third).eer == doctest::Approx(1.0 / 3.0));
        CHECK(oracle::eer_sweep(third) == doctest::Approx(1.0 / 3.0));
        auto same = samples({0.3, 0.7, 0.5, 0.5}, {0.5, 0.3, 0.7, 0.5});
        CHECK(compute_eer(same).eer == doctest::Approx(0.5));
        auto r = compute_eer(third);
        CHECK(r.n_fake == 3);
        CHECK(r.n_real == 3);
    }

    TEST_CASE("EER needs both classes and finite scores") {
        auto fakes = samples({0.1, 0.2}, {});
        CHECK_THROWS_AS(compute_eer(fakes), std::invalid_argument);
        auto reals = samples({}, {0.1});
        CHECK_THROWS_AS(compute_eer(reals), std::invalid_argument);
        auto nan = samples({std::nan("")}, {0.1});
        CHECK_THROWS_AS(compute_eer(nan), std::invalid_argument);
    }

    TEST_CASE("EER matches the threshold sweep on random instances") {
        Rng rng(2024);
        for (int k = 0; k < 500; ++k) {
            auto s = random_instance(rng);
            const double got = compute_eer(s).eer;
            const double want = oracle::eer_sweep(s);
            INFO("instance " << k << " size " << s.size());
            REQUIRE(std::abs(got - want) <= 1e-9);
            CHECK(got >= 0.0);
            CHECK(got <= 1.0);
        }
    }

    TEST_CASE("EER is invariant under strictly increasing maps") {
        Rng rng(77);
        for (int k = 0; k < 200; ++k) {
            auto s = random_instance(rng);
            const double a = rng.uniform(0.1, 3.0), b = rng.uniform(-5, 5);
            auto mapped = s;
            for (auto& x : mapped) x.score = std::exp(a * x.score) + b;
            CHECK(std::abs(compute_eer(mapped).eer - compute_eer(s).eer) <= 1e-12);
        }
    }

    TEST_CASE("swapping labels with reversed scores keeps the EER") {
        Rng rng(5);
        for (int k = 0; k < 200; ++k) {
            auto s = random_instance(rng);
            auto swapped = s;
            for (auto& x : swapped) {
                x.is_fake = !x.is_fake;
                x.score = -x.score;
            }
            CHECK(compute_eer(swapped).eer == doctest::Approx(oracle::eer_sweep(s)).epsilon(1e-9));
        }
    }

    TEST_CASE("effective bounds") {
        RankBinConfig c;
        CHECK(effective_bounds(c, 50) == std::array<std::size_t, 3>{10, 100, 1000});
        c.proportional = true;
        CHECK(effective_bounds(c, 1000) == std::array<std::size_t, 3>{10, 100, 500});
        CHECK(effective_bounds(c, 4) == std::array<std::size_t, 3>{1, 2, 3});
        RankBinConfig bad;
        bad.bounds = {5, 5, 10};
        CHECK_THROWS_AS(effective_bounds(bad, 10), std::invalid_argument);
    }

    TEST_CASE("every token at rank 1 fills the first bin") {
        auto v = Vocabulary::from_tokens({"a"});
        // A bigram model that has only ever seen "a" after "a" and <bor>.
        TokenSequence stream{kBor, 3, 3, 3, 3, 3, 3, kEor};
        auto lm = NgramModel::train(v, stream, 2, {.kind = Smoothing::Mle});
        auto f = rank_bin_features(lm, "a a a a a");
        CHECK(f.counts == std::array<std::uint64_t, 4>{5, 0, 0, 0});
        CHECK(f.total() == 5);
        CHECK_THROWS_AS(rank_bin_features(lm, "   "), std::invalid_argument);
        CHECK_THROWS_AS(perplexity_features(lm, ""), std::invalid_argument);
    }

    TEST_CASE("bigram ranks on a six-token fixture match a sort of the full distribution") {
        auto v = Vocabulary::from_tokens({"a", "b", "c", "d"});
        const TokenSequence stream{kBor, 3, 4, 3, 5, 3, 4, 6, kEor, kBor, 4, 4, 5, 3, kEor};
        auto lm = NgramModel::train(v, stream, 2, {.kind = Smoothing::KneserNey});
        const std::string text = "a b d c a d";
        auto ids = encode(v, text);

        RankBinConfig bins;
        bins.bounds = {1, 2, 4};
        std::array<std::uint64_t, 4> expect{};
        for (std::size_t t = 1; t + 1 < ids.size(); ++t) {
            auto p = oracle::ngram_distribution(stream, v.size(), 2, {.kind = Smoothing::KneserNey}, {ids[t - 1]});
            std::size_t rank = 1;
            for (TokenId w = 0; w < p.size(); ++w)
                if (p[w] > p[ids[t]] || (p[w] == p[ids[t]] && w < ids[t])) ++rank;
            std::size_t bin = rank <= 1 ? 0 : rank <= 2 ? 1 : rank <= 4 ? 2 : 3;
            ++expect[bin];
        }
        auto f = rank_bin_features(lm, text, bins);
        CHECK(f.counts == expect);
        CHECK(f.total() == 6);
    }

    TEST_CASE("bin counts always sum to the token count") {
        auto& t = toy();
        RankBinConfig prop;
        prop.proportional = true;
        for (std::size_t i = 0; i < 40; ++i) {
            const auto& text = t.corpus[i].text;
            const auto n = tokenize(text).size();
            CHECK(rank_bin_features(*t.lm, text).total() == n);
            CHECK(rank_bin_features(*t.lm, text, prop).total() == n);
            CHECK(perplexity_features(*t.lm, text).tokens == n);
        }
    }

    TEST_CASE("perplexity feature is the mean negative log-likelihood") {
        auto& t = toy();
        const auto& text = t.corpus[3].text;
        auto ids = encode(t.lm->vocabulary(), text);
        TokenSequence body(ids.begin() + 1, ids.end() - 1);
        TokenSequence ctx{kBor};
        auto f = perplexity_features(*t.lm, text);
        CHECK(f.mean_nll == doctest::Approx(-log_likelihood(*t.lm, body, ctx) / static_cast<double>(body.size())));
    }

    TEST_CASE("zero-weight regression scores one half") {
        auto& t = toy();
        for (auto kind : {DetectorKind::RankBin, DetectorKind::Perplexity}) {
            Detector d(kind, t.lm);
            const auto dim = kind == DetectorKind::RankBin ? 4 : 2;
            d.set_regression(LogisticRegression::from_weights(Eigen::VectorXd::Zero(dim), 0.0));
            auto r = review("x", t.corpus[0].text, Provenance::Real);
            CHECK(d.score(r).score == 0.5);
            CHECK(d.score(r).review_id == "x");
            CHECK(d.score(r).detector == d.name());
            CHECK_THROWS_AS(d.set_regression(LogisticRegression::from_weights(Eigen::VectorXd::Zero(3), 0.0)),
                            std::invalid_argument);
        }
    }

    TEST_CASE("untrained detectors refuse to score") {
        Detector d(DetectorKind::RankBin, toy().lm);
        CHECK_FALSE(d.trained());
        CHECK_THROWS_AS(d.score(review("x", "good", Provenance::Real)), std::logic_error);
        CHECK_THROWS_AS(Detector(DetectorKind::RankBin, nullptr), std::invalid_argument);
    }

    TEST_CASE("normalised bins are shares") {
        RankBinConfig bins;
        bins.normalized = true;
        Detector d(DetectorKind::RankBin, toy().lm, bins);
        auto x = d.features(toy().corpus[0].text);
        CHECK(x.sum() == doctest::Approx(1.0));
    }

    TEST_CASE("separable data gives training EER 0 and training is deterministic") {
        auto data = separable_set(60);
        auto& t = toy();
        for (auto kind : {DetectorKind::RankBin, DetectorKind::Perplexity}) {
            LogisticFitReport rep;
            auto d = train_detector(kind, t.lm, data, {}, {}, &rep);
            CHECK(rep.final_loss < rep.initial_loss);
            std::vector<ScoredSample> s;
            for (const auto& r : data) s.push_back({d.score(r).score, r.provenance == Provenance::Fake});
            CHECK(compute_eer(s).eer == 0.0);
            auto again = train_detector(kind, t.lm, data);
            CHECK(again.regression().raw_weights() == d.regression().raw_weights());
            CHECK(again.regression().raw_bias() == d.regression().raw_bias());
            CHECK(d.score(data[0]).score == d.score(data[0]).score);
        }
    }

    TEST_CASE("detector training needs both classes") {
        auto data = separable_set(5);
        std::vector<Review> fakes;
        for (const auto& r : data)
            if (r.provenance == Provenance::Fake) fakes.push_back(r);
        CHECK_THROWS_AS(train_detector(DetectorKind::RankBin, toy().lm, fakes), std::invalid_argument);
        std::vector<Review> none;
        CHECK_THROWS_AS(train_detector(DetectorKind::Perplexity, toy().lm, none), std::invalid_argument);
    }

    TEST_CASE("fusion weights agree with plain gradient descent") {
        const std::vector<std::vector<double>> s{{0.9, 0.7}, {0.8, 0.2}, {0.3, 0.6},
                                                 {0.4, 0.1}, {0.2, 0.3}, {0.6, 0.8}};
        const std::vector<int> y{1, 1, 1, 0, 0, 0};
        LogisticConfig cfg;
        cfg.l2 = 1e-2;
        auto fusion = train_fusion({"a", "b"}, s, y, cfg);
        Eigen::MatrixXd x(6, 2);
        for (int i = 0; i < 6; ++i) x.row(i) << s[i][0], s[i][1];
        auto theta = oracle::logistic_gd(x, y, cfg.l2);
        CHECK(std::abs(fusion.regression.raw_weights()[0] - theta[0]) < 1e-6);
        CHECK(std::abs(fusion.regression.raw_weights()[1] - theta[1]) < 1e-6);
        CHECK(std::abs(fusion.regression.raw_bias() - theta[2]) < 1e-6);
        CHECK(fusion.name() == "a+b");
        const std::vector<double> probe{0.5, 0.5};
        CHECK(fusion.score(probe) == doctest::Approx(1 / (1 + std::exp(-(0.5 * theta[0] + 0.5 * theta[1] + theta[2])))));
    }

    TEST_CASE("a single member keeps its ranking") {
        Rng rng(3);
        std::vector<std::vector<double>> s;
        std::vector<int> y;
        for (int i = 0; i < 50; ++i) {
            y.push_back(i % 2);
            s.push_back({rng.uniform() + 0.5 * (i % 2)});
        }
        auto f = train_fusion({"m"}, s, y);
        CHECK(f.anti_predictive.empty());
        for (int i = 0; i < 50; ++i)
            for (int j = 0; j < 50; ++j)
                if (s[i][0] < s[j][0]) CHECK(f.score(s[i]) < f.score(s[j]));

        // A reversed member is flagged.
        for (auto& v : s) v[0] = -v[0];
        auto flipped = train_fusion({"m"}, s, y);
        CHECK(flipped.anti_predictive == std::vector<std::string>{"m"});
    }

    TEST_CASE("two identical members rank like either one") {
        Rng rng(4);
        std::vector<std::vector<double>> s;
        std::vector<int> y;
        for (int i = 0; i < 40; ++i) {
            y.push_back(i % 2);
            const double v = rng.uniform() + 0.4 * (i % 2);
            s.push_back({v, v});
        }
        auto f = train_fusion({"m", "m2"}, s, y);
        for (int i = 0; i < 40; ++i)
            for (int j = 0; j < 40; ++j)
                if (s[i][0] < s[j][0]) CHECK(f.score(s[i]) < f.score(s[j]));
    }

    TEST_CASE("a constant member leaves the fused EER unchanged") {
        Rng rng(8);
        std::vector<std::vector<double>> base, with_const;
        std::vector<int> y;
        for (int i = 0; i < 200; ++i) {
            y.push_back(i % 3 == 0 ? 0 : 1);
            const double a = rng.uniform() + 0.3 * y.back(), b = rng.uniform() + 0.2 * y.back();
            base.push_back({a, b});
            with_const.push_back({a, b, 0.5});
        }
        auto f2 = train_fusion({"a", "b"}, base, y);
        auto f3 = train_fusion({"a", "b", "c"}, with_const, y);
        std::vector<ScoredSample> s2, s3;
        for (int i = 0; i < 200; ++i) {
            s2.push_back({f2.score(base[i]), y[i] == 1});
            s3.push_back({f3.score(with_const[i]), y[i] == 1});
        }
        CHECK(std::abs(compute_eer(s2).eer - compute_eer(s3).eer) <= 0.01);
    }

    TEST_CASE("fusion input errors") {
        std::vector<std::vector<double>> s{{0.1, 0.2}, {0.3}};
        std::vector<int> y{0, 1};
        CHECK_THROWS_AS(train_fusion({"a", "b"}, s, y), std::invalid_argument);
        std::vector<std::vector<double>> ok{{0.1}, {0.3}};
        std::vector<int> one{1, 1};
        CHECK_THROWS_AS(train_fusion({"a"}, ok, one), std::invalid_argument);
        std::vector<int> short_labels{1};
        CHECK_THROWS_AS(train_fusion({"a"}, ok, short_labels), std::invalid_argument);
        auto f = train_fusion({"a"}, ok, y);
        const std::vector<double> two{0.1, 0.2};
        CHECK_THROWS_AS(f.score(two), std::invalid_argument);
    }

    TEST_CASE("evaluation report, JSON round trip, table and scores file") {
        auto& t = toy();
        auto train = separable_set(30);
        auto rb = train_detector(DetectorKind::RankBin, t.lm, train);
        auto px = train_detector(DetectorKind::Perplexity, t.lm, train);
        std::vector<Detector> dets{rb, px};

        std::vector<std::vector<double>> ms;
        std::vector<int> y;
        for (const auto& r : train) {
            ms.push_back({rb.score(r).score, px.score(r).score});
            y.push_back(r.provenance == Provenance::Fake);
        }
        std::vector<FusionModel> fus{train_fusion({"rank_bin", "perplexity"}, ms, y)};

        auto eval_a = separable_set(40);
        std::vector<Review> eval_b(eval_a.begin() + 40, eval_a.end());
        eval_a.resize(40);
        eval_b.push_back(review("odd,\"id\"", "zz top", Provenance::Real));
        std::vector<EvalDataset> ds{{"alpha", eval_a}, {"beta", eval_b}};
        auto report = evaluate_detectors(dets, fus, ds);

        REQUIRE(report.rows.size() == 3);
        CHECK(report.rows[0].name == "rank_bin");
        CHECK(report.rows[2].name == "rank_bin+perplexity");
        CHECK(report.datasets == std::vector<std::string>{"alpha", "beta"});
        CHECK(report.scores.size() == 3 * (eval_a.size() + eval_b.size()));
        for (const auto& row : report.rows) {
            REQUIRE(row.per_dataset.size() == 2);
            CHECK(row.overall.n_fake + row.overall.n_real == eval_a.size() + eval_b.size());
            // Overall pools the scores of both datasets.
            std::vector<ScoredSample> pooled;
            for (const auto& s : report.scores)
                if (s.detector == row.name) pooled.push_back({s.score, s.is_fake});
            CHECK(row.overall.eer == compute_eer(pooled).eer);
        }

        auto back = detection_from_json(to_json(report));
        CHECK(to_json(back) == to_json(report));

        auto table = format_detection_table(report);
        std::istringstream lines(table);
        std::string title, header, rule;
        std::getline(lines, title);
        std::getline(lines, header);
        std::getline(lines, rule);
        CHECK(title == "Equal error rate (%)");
        CHECK(header.find("Detector") == 0);
        CHECK(header.find("alpha") != std::string::npos);
        CHECK(header.find("Overall") != std::string::npos);
        CHECK(rule.find_first_not_of('-') == std::string::npos);

        auto path = std::filesystem::temp_directory_path() / "revforge_test_scores.csv";
        write_scores_csv(report, path);
        std::ifstream in(path);
        std::string line;
        std::getline(in, line);
        CHECK(line == "review_id,detector,score,is_fake");
        std::size_t n = 0, quoted = 0;
        while (std::getline(in, line)) {
            ++n;
            if (line.rfind("\"odd,\"\"id\"\"\"", 0) == 0) ++quoted;
        }
        CHECK(n == report.scores.size());
        CHECK(quoted == 3);
        std::filesystem::remove(path);

        std::vector<FusionModel> stray{FusionModel{{"nope"}, {}, {}}};
        CHECK_THROWS_AS(evaluate_detectors(dets, stray, ds), std::invalid_argument);
        std::vector<EvalDataset> none;
        CHECK_THROWS_AS(evaluate_detectors(dets, fus, none), std::invalid_argument);
    }
}
