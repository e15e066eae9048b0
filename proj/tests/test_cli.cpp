#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "revforge/cli.hpp"

using namespace revforge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = 0;
    std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "revforge");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    Outcome o;
    o.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    return d;
}

// A run small enough for a unit test.
std::vector<std::string> small_run(const fs::path& dir) {
    return {"--set", "paths.run_dir=" + dir.string(),
            "--set", "corpus.synthetic.n_reviews=600",
            "--set", "classifier.hash_dim=4096",
            "--set", "sampler.max_len=40",
            "--set", "attack.n_seeds=10",
            "--set", "attack.n_per_seed=15",
            "--set", "detect.train_real=20",
            "--set", "detect.train_fake=40",
            "--set", "detect.eval_real=10",
            "--set", "detect.eval_fake=20",
            "--seed", "3"};
}

Outcome step(const std::string& command, const fs::path& dir) {
    auto args = small_run(dir);
    args.insert(args.begin(), command);
    return invoke(args);
}

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("help and usage errors") {
        CHECK(invoke({"--help"}).code == cli::kExitOk);
        CHECK(invoke({}).code == cli::kExitValidation);
        CHECK(invoke({"frobnicate"}).code == cli::kExitValidation);
        CHECK(invoke({"train-lm", "--no-such-flag"}).code == cli::kExitValidation);
        CHECK(invoke({"synth"}).code == cli::kExitValidation);
    }

    TEST_CASE("a mistyped config key is named in the error") {
        auto dir = fresh_dir("revforge_cli_typo");
        fs::create_directories(dir);
        const auto cfg = dir / "config.json";
        std::ofstream(cfg) << R"({"attack": {"n_per_sed": 5}})";
        auto o = invoke({"train-lm", "--config", cfg.string()});
        CHECK(o.code == cli::kExitValidation);
        CHECK(o.err.find("attack.n_per_sed") != std::string::npos);

        auto bad = invoke({"train-lm", "--set", "lm.ordr=2"});
        CHECK(bad.code == cli::kExitValidation);
        CHECK(bad.err.find("lm.ordr") != std::string::npos);
        CHECK(invoke({"train-lm", "--set", "lm.order=\"three\""}).code == cli::kExitValidation);
        CHECK(invoke({"train-lm", "--set", "lm.kind=transformer"}).code == cli::kExitValidation);
        CHECK(invoke({"train-lm", "--config", (dir / "missing.json").string()}).code == cli::kExitValidation);
        fs::remove_all(dir);
    }

    TEST_CASE("config merging and overrides") {
        auto tree = cli::default_config_tree();
        cli::apply_override(tree, "attack.n_per_seed=5");
        cli::apply_override(tree, "lm.smoothing=add_k");
        cli::apply_override(tree, "attack.min_score=0.7");
        CHECK(tree["attack"]["n_per_seed"] == 5);
        CHECK(tree["lm"]["smoothing"] == "add_k");
        CHECK(tree["attack"]["min_score"] == 0.7);
        CHECK_THROWS_AS(cli::apply_override(tree, "attack"), cli::ConfigError);
        CHECK_THROWS_AS(cli::apply_override(tree, "attack=3"), cli::ConfigError);
        CHECK_THROWS_AS(cli::merge_config(tree, nlohmann::json{{"detect", {{"bogus", 1}}}}), cli::ConfigError);

        auto a = cli::config_from_tree(cli::default_config_tree());
        auto moved = cli::default_config_tree();
        moved["paths"]["run_dir"] = "elsewhere";
        auto b = cli::config_from_tree(moved);
        CHECK(cli::config_digest(a) == cli::config_digest(b));
        CHECK(cli::config_digest(a).size() == 16);
        auto reseeded = cli::default_config_tree();
        reseeded["seed"] = 2;
        CHECK(cli::config_digest(cli::config_from_tree(reseeded)) != cli::config_digest(a));
        CHECK(a.attack.n_per_seed == 20);
        CHECK(a.detect.train_real == 120);
        CHECK(a.detect.train_fake == 240);
        CHECK(a.detect.eval_real == 80);
        CHECK(a.detect.eval_fake == 160);
        CHECK(a.attack.sampler.max_len == 165);
    }

    TEST_CASE("synth writes a corpus") {
        auto dir = fresh_dir("revforge_cli_synth");
        fs::create_directories(dir);
        auto o = invoke({"synth", "--out", (dir / "toy.jsonl").string(), "--set", "corpus.synthetic.n_reviews=50"});
        CHECK(o.code == cli::kExitOk);
        auto reviews = load_reviews(dir / "toy.jsonl", ReviewFormat::Jsonl);
        CHECK(reviews.size() == 50);
        fs::remove_all(dir);
    }

    TEST_CASE("end to end run, rerun and report") {
        auto dir = fresh_dir("revforge_cli_e2e");
        for (const char* cmd : {"train-lm", "train-clf", "attack", "detect"}) {
            auto o = step(cmd, dir);
            INFO(cmd << ": " << o.err);
            REQUIRE(o.code == cli::kExitOk);
        }
        for (const char* f : {"lm.bin", "classifier.bin", "pool.jsonl", "pool_manifest.json", "preservation.json",
                              "detection.json", "detection.txt", "scores.csv", "manifest.json"})
            CHECK(fs::exists(dir / f));

        const auto pool = slurp(dir / "pool.jsonl");
        const auto detection = slurp(dir / "detection.json");
        const auto preservation = slurp(dir / "preservation.json");
        REQUIRE(step("attack", dir).code == cli::kExitOk);
        REQUIRE(step("detect", dir).code == cli::kExitOk);
        CHECK(slurp(dir / "pool.jsonl") == pool);
        CHECK(slurp(dir / "preservation.json") == preservation);
        CHECK(slurp(dir / "detection.json") == detection);

        auto rep = invoke({"report", dir.string(), "--out", (dir / "report.txt").string()});
        CHECK(rep.code == cli::kExitOk);
        CHECK(rep.out.find("Equal error rate (%)") != std::string::npos);
        CHECK(rep.out.find("rank_bin+perplexity") != std::string::npos);
        CHECK(slurp(dir / "report.txt") == rep.out);

        // The run directory belongs to its config.
        auto args = small_run(dir);
        args.insert(args.begin(), "detect");
        args.push_back("--set");
        args.push_back("detect.l2=0.5");
        auto clash = invoke(args);
        CHECK(clash.code == cli::kExitValidation);
        CHECK(clash.err.find("digest") != std::string::npos);

        CHECK(invoke({"report", (dir / "nope").string()}).code != cli::kExitOk);
        fs::remove_all(dir);
    }

    TEST_CASE("attack without a trained model is a runtime error") {
        auto dir = fresh_dir("revforge_cli_nolm");
        auto o = step("attack", dir);
        CHECK(o.code == cli::kExitRuntime);
        CHECK_FALSE(o.err.empty());
        fs::remove_all(dir);
    }
}
