#include <fstream>
#include <iomanip>
#include <sstream>

#include "revforge/cli.hpp"
#include "revforge/rng.hpp"

namespace revforge::cli {

using nlohmann::json;

json default_config_tree() {
    return {
        {"seed", 1},
        {"paths", {{"corpus", ""}, {"corpus_name", ""}, {"run_dir", "run"}, {"lm", ""}, {"classifier", ""}}},
        {"corpus",
         {{"train_fraction", 0.8},
          {"synthetic",
           {{"n_reviews", 2000},
            {"n_brands", 200},
            {"n_rare_nouns", 300},
            {"min_sentences", 2},
            {"max_sentences", 5},
            {"mixed_fraction", 0.0}}}}},
        {"lm",
         {{"kind", "ngram"},
          {"order", 3},
          {"smoothing", "kneser_ney"},
          {"add_k", 1.0},
          {"discount", 0.75},
          {"hidden_size", 24},
          {"embed_size", 0},
          {"epochs", 6},
          {"learning_rate", 1e-2},
          {"batch_len", 32},
          {"lanes", 8},
          {"grad_clip", 5.0},
          {"neuron_examples", 400}}},
        {"classifier",
         {{"hash_dim", 1 << 18}, {"max_ngram", 2}, {"epochs", 10}, {"learning_rate", 0.1}, {"l2", 1e-6}}},
        {"sampler", {{"max_len", 165}, {"min_len", 1}, {"temperature", 1.0}, {"top_k", 40}}},
        {"attack", {{"n_per_seed", 20}, {"n_seeds", 40}, {"min_score", nullptr}, {"threads", 1}}},
        {"detect",
         {{"train_real", 120},
          {"train_fake", 240},
          {"eval_real", 80},
          {"eval_fake", 160},
          {"bins", {10, 100, 1000}},
          {"proportional_bins", false},
          {"normalized_bins", false},
          {"l2", 1e-3}}},
    };
}

namespace {

bool compatible(const json& def, const json& value) {
    if (def.is_null()) return value.is_null() || value.is_number();  // optional number
    if (def.is_number()) return value.is_number();
    return def.type() == value.type();
}

json* find_key(json& tree, const std::string& dotted) {
    json* node = &tree;
    std::size_t start = 0;
    while (true) {
        const auto dot = dotted.find('.', start);
        const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(part)) return nullptr;
        node = &(*node)[part];
        if (dot == std::string::npos) return node;
        start = dot + 1;
    }
}

template <typename T>
T get_as(const json& tree, const char* a, const char* b) {
    try {
        return tree.at(a).at(b).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key ") + a + "." + b + " has the wrong type");
    }
}

std::size_t get_count(const json& tree, const char* a, const char* b) {
    const auto& v = tree.at(a).at(b);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError(std::string("config key ") + a + "." + b + " must be a non-negative integer");
    return v.get<std::size_t>();
}

}  // namespace

void merge_config(json& base, const json& overrides, const std::string& prefix) {
    if (!overrides.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, value] : overrides.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config key: " + path);
        json& slot = base[key];
        if (slot.is_object()) {
            if (!value.is_object()) throw ConfigError("config key " + path + " must be an object");
            merge_config(slot, value, path);
        } else {
            if (!compatible(slot, value)) throw ConfigError("config key " + path + " has the wrong type");
            slot = value;
        }
    }
}

void apply_override(json& tree, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    const json* slot = find_key(tree, key);
    if (!slot) throw ConfigError("unknown config key: " + key);
    if (slot->is_string() && !value.is_string()) value = text;
    if (slot->is_object()) throw ConfigError("config key " + key + " is a section, not a value");
    json patch = value;
    for (std::size_t end = key.size(); end != std::string::npos;) {
        const auto dot = key.rfind('.', end - 1);
        const std::size_t begin = dot == std::string::npos ? 0 : dot + 1;
        patch = json{{key.substr(begin, end - begin), patch}};
        if (dot == std::string::npos) break;
        end = dot;
    }
    merge_config(tree, patch);
}

RunConfig config_from_tree(json tree) {
    RunConfig c;
    const auto& t = tree;
    if (!t.at("seed").is_number_unsigned() && !(t.at("seed").is_number_integer() && t.at("seed").get<long long>() >= 0))
        throw ConfigError("config key seed must be a non-negative integer");
    c.seed = t.at("seed").get<std::uint64_t>();

    c.corpus = get_as<std::string>(t, "paths", "corpus");
    c.corpus_name = get_as<std::string>(t, "paths", "corpus_name");
    if (c.corpus_name.empty()) c.corpus_name = c.corpus.empty() ? "synthetic" : c.corpus.stem().string();
    c.run_dir = get_as<std::string>(t, "paths", "run_dir");
    if (c.run_dir.empty()) throw ConfigError("paths.run_dir must not be empty");
    c.lm_path = get_as<std::string>(t, "paths", "lm");
    c.clf_path = get_as<std::string>(t, "paths", "classifier");
    if (!c.corpus.empty() && !std::filesystem::is_regular_file(c.corpus))
        throw ConfigError("paths.corpus does not exist: " + c.corpus.string());
    if (!c.corpus.empty()) (void)format_from_path(c.corpus);

    c.synthetic.n_reviews = get_count(t.at("corpus"), "synthetic", "n_reviews");
    c.synthetic.n_brands = get_count(t.at("corpus"), "synthetic", "n_brands");
    c.synthetic.n_rare_nouns = get_count(t.at("corpus"), "synthetic", "n_rare_nouns");
    c.synthetic.min_sentences = get_count(t.at("corpus"), "synthetic", "min_sentences");
    c.synthetic.max_sentences = get_count(t.at("corpus"), "synthetic", "max_sentences");
    c.synthetic.mixed_fraction = get_as<double>(t.at("corpus"), "synthetic", "mixed_fraction");
    c.synthetic.rng_seed = derive_seed(c.seed, "corpus");
    c.train_fraction = get_as<double>(t, "corpus", "train_fraction");
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
        throw ConfigError("corpus.train_fraction must lie strictly between 0 and 1");
    if (c.synthetic.n_brands == 0) throw ConfigError("corpus.synthetic.n_brands must be positive");
    if (c.synthetic.min_sentences == 0 || c.synthetic.max_sentences < c.synthetic.min_sentences)
        throw ConfigError("corpus.synthetic sentence range is empty");
    if (!(c.synthetic.mixed_fraction >= 0.0 && c.synthetic.mixed_fraction <= 1.0))
        throw ConfigError("corpus.synthetic.mixed_fraction must lie in [0, 1]");

    c.lm.kind = get_as<std::string>(t, "lm", "kind");
    if (c.lm.kind != "ngram" && c.lm.kind != "mlstm")
        throw ConfigError("lm.kind must be \"ngram\" or \"mlstm\", got \"" + c.lm.kind + "\"");
    c.lm.order = get_count(t, "lm", "order");
    if (c.lm.order < 1) throw ConfigError("lm.order must be at least 1");
    try {
        c.lm.smoothing.kind = parse_smoothing(get_as<std::string>(t, "lm", "smoothing"));
        c.lm.smoothing.add_k = get_as<double>(t, "lm", "add_k");
        c.lm.smoothing.discount = get_as<double>(t, "lm", "discount");
        c.lm.smoothing.validate();
        c.lm.mlstm.hidden_size = get_count(t, "lm", "hidden_size");
        c.lm.mlstm.embed_size = get_count(t, "lm", "embed_size");
        c.lm.mlstm.epochs = get_count(t, "lm", "epochs");
        c.lm.mlstm.learning_rate = get_as<double>(t, "lm", "learning_rate");
        c.lm.mlstm.batch_len = get_count(t, "lm", "batch_len");
        c.lm.mlstm.lanes = get_count(t, "lm", "lanes");
        c.lm.mlstm.grad_clip = get_as<double>(t, "lm", "grad_clip");
        c.lm.mlstm.rng_seed = derive_seed(c.seed, "lm");
        c.lm.mlstm.validate();
        c.lm.neuron_examples = get_count(t, "lm", "neuron_examples");

        c.classifier.hash_dim = get_count(t, "classifier", "hash_dim");
        c.classifier.max_ngram = get_count(t, "classifier", "max_ngram");
        c.classifier.epochs = get_count(t, "classifier", "epochs");
        c.classifier.learning_rate = get_as<double>(t, "classifier", "learning_rate");
        c.classifier.l2 = get_as<double>(t, "classifier", "l2");
        c.classifier.rng_seed = derive_seed(c.seed, "classifier");
        c.classifier.validate();

        c.attack.sampler.max_len = get_count(t, "sampler", "max_len");
        c.attack.sampler.min_len = get_count(t, "sampler", "min_len");
        c.attack.sampler.temperature = get_as<double>(t, "sampler", "temperature");
        c.attack.sampler.top_k = get_count(t, "sampler", "top_k");
        if (!(c.attack.sampler.temperature > 0.0)) throw ConfigError("sampler.temperature must be positive");
        if (c.attack.sampler.top_k < 1) throw ConfigError("sampler.top_k must be at least 1");
        c.attack.n_per_seed = get_count(t, "attack", "n_per_seed");
        c.n_seeds = get_count(t, "attack", "n_seeds");
        const auto& ms = t.at("attack").at("min_score");
        if (!ms.is_null()) c.attack.min_score = ms.get<double>();
        c.attack.threads = get_count(t, "attack", "threads");
        c.attack.base_seed = derive_seed(c.seed, "attack");
        c.attack.validate();

        c.detect.train_real = get_count(t, "detect", "train_real");
        c.detect.train_fake = get_count(t, "detect", "train_fake");
        c.detect.eval_real = get_count(t, "detect", "eval_real");
        c.detect.eval_fake = get_count(t, "detect", "eval_fake");
        if (!c.detect.train_real || !c.detect.train_fake || !c.detect.eval_real || !c.detect.eval_fake)
            throw ConfigError("detect split sizes must all be positive");
        const auto bins = get_as<std::vector<std::size_t>>(t, "detect", "bins");
        if (bins.size() != 3) throw ConfigError("detect.bins must hold exactly three bounds");
        c.detect.bins.bounds = {bins[0], bins[1], bins[2]};
        c.detect.bins.proportional = get_as<bool>(t, "detect", "proportional_bins");
        c.detect.bins.normalized = get_as<bool>(t, "detect", "normalized_bins");
        if (!c.detect.bins.proportional) (void)effective_bounds(c.detect.bins, 0);
        c.detect.regression.l2 = get_as<double>(t, "detect", "l2");
        c.detect.regression.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    c.tree = std::move(tree);
    return c;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& config_path,
                          const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed) {
    json tree = default_config_tree();
    if (config_path) {
        std::ifstream in(*config_path);
        if (!in) throw ConfigError("cannot read config file " + config_path->string());
        json file = json::parse(in, nullptr, false);
        if (file.is_discarded()) throw ConfigError("config file is not valid JSON: " + config_path->string());
        merge_config(tree, file);
    }
    for (const auto& o : overrides) apply_override(tree, o);
    if (seed) tree["seed"] = *seed;
    return config_from_tree(std::move(tree));
}

std::string config_digest(const RunConfig& config) {
    std::ostringstream ss;
    json content = config.tree;
    content["paths"].erase("run_dir");  // where outputs go does not change them
    ss << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(content.dump());
    return ss.str();
}

}  // namespace revforge::cli
