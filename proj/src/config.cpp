#include "hazemeta/config.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>

#include "hazemeta/errors.hpp"

namespace hazemeta::config {

using json = nlohmann::json;

RunConfig default_config() {
    RunConfig cfg;
    cfg.domains = {
        {0, 0.4, 0.8, 0.8, 1.0, 1.0, 100},
        {1, 1.0, 1.6, 0.7, 0.9, 1.3, 101},
    };
    cfg.heldout = {
        {2, 1.8, 2.4, 0.85, 1.0, 0.8, 102},
    };
    return cfg;
}

namespace {

json domain_to_json(const datagen::DomainSpec& d) {
    return {{"id", d.id},           {"beta_min", d.beta_min},     {"beta_max", d.beta_max},
            {"a_min", d.a_min},     {"a_max", d.a_max},           {"depth_bias", d.depth_bias},
            {"seed", d.rng_seed}};
}

datagen::DomainSpec domain_from_json(const json& j) {
    static const std::vector<std::string> keys = {"id",    "beta_min",   "beta_max", "a_min",
                                                  "a_max", "depth_bias", "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
            throw ConfigError("unknown domain key '" + it.key() + "'");
        }
    }
    datagen::DomainSpec d;
    d.id = j.value("id", 0);
    d.beta_min = j.value("beta_min", d.beta_min);
    d.beta_max = j.value("beta_max", d.beta_max);
    d.a_min = j.value("a_min", d.a_min);
    d.a_max = j.value("a_max", d.a_max);
    d.depth_bias = j.value("depth_bias", d.depth_bias);
    d.rng_seed = j.value("seed", d.rng_seed);
    return d;
}

using Setter = std::function<void(RunConfig&, const json&)>;

template <typename T>
T as(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "': invalid value " + v.dump());
    }
}

const std::map<std::string, Setter>& registry() {
    using DR = aggregate::DistanceReduction;
    using AG = trainer::AggregatorKind;
    using AK = trainer::AdaptKind;
    static const std::map<std::string, Setter> reg = {
        {"train.n_tasks", [](RunConfig& c, const json& v) { c.train.num_tasks = as<int>(v, "train.n_tasks"); }},
        {"train.k", [](RunConfig& c, const json& v) { c.train.samples_per_task = as<int>(v, "train.k"); }},
        {"train.crop_size", [](RunConfig& c, const json& v) { c.train.crop_size = as<int64_t>(v, "train.crop_size"); }},
        {"train.lr", [](RunConfig& c, const json& v) { c.train.learning_rate = as<double>(v, "train.lr"); }},
        {"train.adam_beta1", [](RunConfig& c, const json& v) { c.train.adam_beta1 = as<double>(v, "train.adam_beta1"); }},
        {"train.adam_beta2", [](RunConfig& c, const json& v) { c.train.adam_beta2 = as<double>(v, "train.adam_beta2"); }},
        {"train.max_steps", [](RunConfig& c, const json& v) { c.train.max_steps = as<int64_t>(v, "train.max_steps"); }},
        {"train.checkpoint_every", [](RunConfig& c, const json& v) { c.train.checkpoint_every = as<int64_t>(v, "train.checkpoint_every"); }},
        {"train.seed", [](RunConfig& c, const json& v) { c.train.seed = as<uint64_t>(v, "train.seed"); }},
        {"train.deterministic", [](RunConfig& c, const json& v) { c.train.deterministic = as<bool>(v, "train.deterministic"); }},
        {"train.lambda1", [](RunConfig& c, const json& v) { c.train.loss_weights.lambda1 = as<double>(v, "train.lambda1"); }},
        {"train.lambda2", [](RunConfig& c, const json& v) { c.train.loss_weights.lambda2 = as<double>(v, "train.lambda2"); }},
        {"train.lambda3", [](RunConfig& c, const json& v) { c.train.loss_weights.lambda3 = as<double>(v, "train.lambda3"); }},
        {"train.lambda4", [](RunConfig& c, const json& v) { c.train.loss_weights.lambda4 = as<double>(v, "train.lambda4"); }},
        {"train.aggregator",
         [](RunConfig& c, const json& v) {
             auto s = as<std::string>(v, "train.aggregator");
             if (s == "average") c.train.aggregator = AG::Average;
             else if (s == "distance_aware") c.train.aggregator = AG::DistanceAware;
             else throw ConfigError("train.aggregator must be 'average' or 'distance_aware'");
         }},
        {"train.distance_reduction",
         [](RunConfig& c, const json& v) {
             auto s = as<std::string>(v, "train.distance_reduction");
             if (s == "mean") c.train.distance_reduction = DR::Mean;
             else if (s == "sum") c.train.distance_reduction = DR::Sum;
             else throw ConfigError("train.distance_reduction must be 'mean' or 'sum'");
         }},
        {"train.adapt_net",
         [](RunConfig& c, const json& v) {
             auto s = as<std::string>(v, "train.adapt_net");
             if (s == "plain_conv") c.train.adapt_net = AK::PlainConv;
             else if (s == "cg_conv") c.train.adapt_net = AK::CgConv;
             else throw ConfigError("train.adapt_net must be 'plain_conv' or 'cg_conv'");
         }},
        {"train.dcr", [](RunConfig& c, const json& v) { c.train.dcr_enabled = as<bool>(v, "train.dcr"); }},
        {"train.conditioning", [](RunConfig& c, const json& v) { c.train.conditioning_enabled = as<bool>(v, "train.conditioning"); }},
        {"train.sigma", [](RunConfig& c, const json& v) { c.train.dcr_options.sigma = as<double>(v, "train.sigma"); }},
        {"train.bandwidth", [](RunConfig& c, const json& v) { c.train.dcr_options.contextual.bandwidth = as<double>(v, "train.bandwidth"); }},
        {"train.cx_normalized", [](RunConfig& c, const json& v) { c.train.dcr_options.contextual.normalized = as<bool>(v, "train.cx_normalized"); }},
        {"eval.n_images", [](RunConfig& c, const json& v) { c.eval.n_images = as<int>(v, "eval.n_images"); }},
        {"eval.seed", [](RunConfig& c, const json& v) { c.eval.seed = as<uint64_t>(v, "eval.seed"); }},
        {"eval.image_size", [](RunConfig& c, const json& v) { c.eval.image_size = as<int64_t>(v, "eval.image_size"); }},
        {"eval.context_size", [](RunConfig& c, const json& v) { c.eval.context_size = as<int>(v, "eval.context_size"); }},
        {"ablation.seeds",
         [](RunConfig& c, const json& v) { c.ablation_seeds = as<std::vector<uint64_t>>(v, "ablation.seeds"); }},
        {"data.domains",
         [](RunConfig& c, const json& v) {
             c.domains.clear();
             for (const auto& dj : v) c.domains.push_back(domain_from_json(dj));
         }},
        {"data.heldout",
         [](RunConfig& c, const json& v) {
             c.heldout.clear();
             for (const auto& dj : v) c.heldout.push_back(domain_from_json(dj));
         }},
    };
    return reg;
}

size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (size_t j = 1; j <= b.size(); ++j) {
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                               prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::string nearest_key(const std::string& key) {
    std::string best;
    size_t best_d = SIZE_MAX;
    for (const auto& [k, _] : registry()) {
        auto d = edit_distance(key, k);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

void apply(RunConfig& cfg, const std::string& key, const json& value) {
    auto it = registry().find(key);
    if (it == registry().end()) {
        throw ConfigError("unknown config key '" + key + "' (did you mean '" + nearest_key(key) +
                          "'?)");
    }
    it->second(cfg, value);
}

json parse_override_value(const std::string& text) {
    auto parsed = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded()) return json(text); // bare strings like "average"
    return parsed;
}

} // namespace

std::vector<std::string> known_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, _] : registry()) keys.push_back(k);
    return keys;
}

std::string RunConfig::to_json() const {
    json t = json::parse(train.to_json());
    json j;
    j["train"] = {};
    j["train"]["n_tasks"] = t["n_tasks"];
    j["train"]["k"] = t["k"];
    j["train"]["crop_size"] = t["crop_size"];
    j["train"]["lr"] = t["lr"];
    j["train"]["adam_beta1"] = t["adam_beta1"];
    j["train"]["adam_beta2"] = t["adam_beta2"];
    j["train"]["max_steps"] = t["max_steps"];
    j["train"]["checkpoint_every"] = t["checkpoint_every"];
    j["train"]["seed"] = t["seed"];
    j["train"]["deterministic"] = t["deterministic"];
    j["train"]["lambda1"] = t["lambda1"];
    j["train"]["lambda2"] = t["lambda2"];
    j["train"]["lambda3"] = t["lambda3"];
    j["train"]["lambda4"] = t["lambda4"];
    j["train"]["aggregator"] = t["aggregator"];
    j["train"]["distance_reduction"] = t["distance_reduction"];
    j["train"]["adapt_net"] = t["adapt_net"];
    j["train"]["dcr"] = t["dcr"];
    j["train"]["conditioning"] = t["conditioning"];
    j["train"]["sigma"] = t["sigma"];
    j["train"]["bandwidth"] = t["bandwidth"];
    j["train"]["cx_normalized"] = t["cx_normalized"];
    j["eval"] = {{"n_images", eval.n_images},
                 {"seed", eval.seed},
                 {"image_size", eval.image_size},
                 {"context_size", eval.context_size}};
    j["ablation"] = {{"seeds", ablation_seeds}};
    j["data"]["domains"] = json::array();
    for (const auto& d : domains) j["data"]["domains"].push_back(domain_to_json(d));
    j["data"]["heldout"] = json::array();
    for (const auto& d : heldout) j["data"]["heldout"].push_back(domain_to_json(d));
    return j.dump(2);
}

RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
    RunConfig cfg = default_config();
    if (!text.empty()) {
        json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded()) throw ConfigError("config file is not valid JSON");
        if (!j.is_object() && !j.is_null()) throw ConfigError("config root must be a JSON object");
        if (j.is_object()) {
            for (auto sec = j.begin(); sec != j.end(); ++sec) {
                if (!sec.value().is_object()) {
                    throw ConfigError("config section '" + sec.key() + "' must be an object");
                }
                for (auto it = sec.value().begin(); it != sec.value().end(); ++it) {
                    apply(cfg, sec.key() + "." + it.key(), it.value());
                }
            }
        }
    }
    for (const auto& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("override '" + ov + "' must have the form section.key=value");
        }
        apply(cfg, ov.substr(0, eq), parse_override_value(ov.substr(eq + 1)));
    }
    if (const char* env_seed = std::getenv("HAZEMETA_SEED")) {
        try {
            cfg.train.seed = std::stoull(env_seed);
        } catch (const std::exception&) {
            throw ConfigError("HAZEMETA_SEED is not an integer");
        }
    }
    try {
        for (const auto& d : cfg.domains) d.validate();
        for (const auto& d : cfg.heldout) d.validate();
    } catch (const c10::Error& e) {
        throw ConfigError(e.what_without_backtrace());
    }
    return cfg;
}

RunConfig parse_config(const std::filesystem::path& file,
                       const std::vector<std::string>& overrides) {
    std::string text;
    if (!file.empty()) {
        std::ifstream in(file);
        if (!in) throw IoError("cannot open config file " + file.string());
        text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    return parse_config_text(text, overrides);
}

void save_resolved(const RunConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "resolved_config.json");
    if (!out) throw IoError("cannot write resolved config in " + dir.string());
    out << cfg.to_json() << "\n";
}

} // namespace hazemeta::config
