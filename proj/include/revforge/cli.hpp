#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "revforge/detect.hpp"
#include "revforge/logistic.hpp"
#include "revforge/mlstm.hpp"
#include "revforge/ngram.hpp"
#include "revforge/pipeline.hpp"
#include "revforge/sentiment.hpp"
#include "revforge/synth.hpp"

namespace revforge::cli {

/// Bad configuration or arguments; maps to exit code 1.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

/// Every recognised key with its default value. Config files and --set
/// overrides may only name keys present here.
nlohmann::json default_config_tree();

/// Deep-merges `overrides` into `base`. Throws ConfigError naming the first
/// unknown key (dotted path) or a value whose JSON type does not match.
void merge_config(nlohmann::json& base, const nlohmann::json& overrides, const std::string& prefix = "");

/// Applies "a.b.c=value". The value is parsed as JSON when possible and
/// taken as a plain string otherwise.
void apply_override(nlohmann::json& tree, const std::string& assignment);

struct LmSettings {
    std::string kind = "ngram";  // ngram | mlstm
    std::size_t order = 3;
    SmoothingSpec smoothing;
    MlstmConfig mlstm;
    /// Training reviews used to locate the sentiment unit of an mLSTM.
    std::size_t neuron_examples = 400;
};

struct DetectSettings {
    std::size_t train_real = 120;
    std::size_t train_fake = 240;
    std::size_t eval_real = 80;
    std::size_t eval_fake = 160;
    RankBinConfig bins;
    LogisticConfig regression;
};

struct RunConfig {
    nlohmann::json tree;
    std::uint64_t seed = 1;

    std::filesystem::path corpus;  // empty: synthetic corpus
    std::string corpus_name;
    std::filesystem::path run_dir;
    std::filesystem::path lm_path;   // empty: <run_dir>/lm.bin
    std::filesystem::path clf_path;  // empty: <run_dir>/classifier.bin

    PolarizedCorpusConfig synthetic;
    double train_fraction = 0.8;
    LmSettings lm;
    ClassifierConfig classifier;
    AttackConfig attack;
    /// Seeds drawn from the held-out split; 0 = all of it.
    std::size_t n_seeds = 40;
    DetectSettings detect;

    std::filesystem::path lm_file() const { return lm_path.empty() ? run_dir / "lm.bin" : lm_path; }
    std::filesystem::path clf_file() const { return clf_path.empty() ? run_dir / "classifier.bin" : clf_path; }
};

/// Defaults, then the file at `config_path`, then each override, then `seed`.
/// Throws ConfigError on unknown keys, bad types, invalid values or an
/// unresolvable corpus path.
RunConfig load_run_config(const std::optional<std::filesystem::path>& config_path,
                          const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed);

RunConfig config_from_tree(nlohmann::json tree);

/// 16 hex digits, FNV-1a over the canonical JSON of the resolved tree.
std::string config_digest(const RunConfig& config);

/// Reviews of the configured corpus, loaded or generated.
std::vector<Review> load_corpus(const RunConfig& config);
Split split_corpus(const RunConfig& config, std::span<const Review> corpus);

void cmd_train_lm(const RunConfig& config, std::ostream& log);
void cmd_train_clf(const RunConfig& config, std::ostream& log);
void cmd_attack(const RunConfig& config, std::ostream& log);
void cmd_detect(const RunConfig& config, std::ostream& log);
/// Merged preservation and detection tables over the given run directories.
std::string cmd_report(const std::vector<std::filesystem::path>& run_dirs);
void cmd_synth(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);

/// Full command line entry point; returns the process exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace revforge::cli
