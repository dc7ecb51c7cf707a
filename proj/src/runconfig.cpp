#include "fairpipe/runconfig.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <optional>

#include "fairpipe/errors.hpp"
#include "fairpipe/rng.hpp"

namespace fairpipe {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& section,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) {
        throw ConfigError("config section '" + section + "' must be an object");
    }
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) {
            if (key == a) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw ConfigError("unknown config key '" +
                              (section.empty() ? key : section + "." + key) + "'");
        }
    }
}

std::optional<std::string> env_value(const std::string& section, const std::string& field) {
    std::string name = "FAIRPIPE_";
    if (!section.empty()) name += section + "_";
    name += field;
    for (auto& c : name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    const char* v = std::getenv(name.c_str());
    if (v == nullptr) return std::nullopt;
    return std::string(v);
}

template <typename T>
T parse_scalar(const std::string& text, const std::string& what);

template <>
double parse_scalar<double>(const std::string& text, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse '" + text + "' as a number for " + what);
    }
}

template <>
std::uint64_t parse_scalar<std::uint64_t>(const std::string& text, const std::string& what) {
    try {
        std::size_t pos = 0;
        const auto v = std::stoull(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse '" + text + "' as an integer for " + what);
    }
}

template <>
int parse_scalar<int>(const std::string& text, const std::string& what) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse '" + text + "' as an integer for " + what);
    }
}

template <>
std::string parse_scalar<std::string>(const std::string& text, const std::string&) {
    return text;
}

// Reads section.field from JSON if present, then lets the environment
// override it. Returns whether either source set the value.
template <typename T>
bool read_field(const json* section_obj, const std::string& section, const std::string& field,
                T* out) {
    bool set = false;
    if (section_obj != nullptr && section_obj->contains(field)) {
        try {
            *out = section_obj->at(field).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config field '" + section + "." + field + "': " + e.what());
        }
        set = true;
    }
    if (const auto env = env_value(section, field)) {
        *out = parse_scalar<T>(*env, section + "." + field);
        set = true;
    }
    return set;
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    c.datagen.seed = derive_seed(c.seed, "datagen");
    c.embedder.seed = derive_seed(c.seed, "embedder");
    c.train.seed = derive_seed(c.seed, "train");
    c.projection.seed = derive_seed(c.seed, "projection");
    return c;
}

RunConfig RunConfig::from_json_text(const std::string& text, bool apply_env) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        // Map the byte offset to a line number for the CLI diagnostics.
        std::size_t line = 1;
        for (std::size_t i = 0; i < std::min(e.byte, text.size()); ++i) {
            if (text[i] == '\n') ++line;
        }
        throw ConfigError("config parse error at line " + std::to_string(line) + ": " +
                          e.what());
    }
    check_keys(doc, "",
               {"seed", "out", "val_fraction", "datagen", "embedder", "train", "adversarial",
                "attribution", "audit", "projection"});

    // With the environment disabled we substitute an empty lookup by giving
    // fields a section name no variable can match.
    const auto section_ptr = [&](const char* name) -> const json* {
        return doc.contains(name) ? &doc.at(name) : nullptr;
    };

    RunConfig c;
    auto field = [&](const json* obj, const std::string& section, const std::string& name,
                     auto* out) {
        if (apply_env) return read_field(obj, section, name, out);
        bool set = false;
        if (obj != nullptr && obj->contains(name)) {
            using T = std::remove_pointer_t<decltype(out)>;
            try {
                *out = obj->at(name).get<T>();
            } catch (const json::exception& e) {
                throw ConfigError("config field '" + section + "." + name + "': " + e.what());
            }
            set = true;
        }
        return set;
    };

    field(&doc, "", "seed", &c.seed);
    field(&doc, "", "out", &c.out);
    field(&doc, "", "val_fraction", &c.val_fraction);

    bool datagen_seed_set = false;
    bool embedder_seed_set = false;
    bool train_seed_set = false;
    bool projection_seed_set = false;

    if (const json* s = section_ptr("datagen"); s != nullptr || apply_env) {
        if (s != nullptr) {
            check_keys(*s, "datagen",
                       {"n_profiles", "delta", "proxy_rate", "sector_weights", "max_len",
                        "seed"});
            if (s->contains("sector_weights")) {
                const auto w = s->at("sector_weights").get<std::vector<std::vector<double>>>();
                if (w.size() != kNumSectors) throw ConfigError("sector_weights must have 4 rows");
                for (int row = 0; row < kNumSectors; ++row) {
                    if (w[row].size() != kNumCompetencies) {
                        throw ConfigError("sector_weights rows must have 7 entries");
                    }
                    std::copy(w[row].begin(), w[row].end(),
                              c.datagen.sector_weights[row].begin());
                }
            }
        }
        field(s, "datagen", "n_profiles", &c.datagen.n_profiles);
        field(s, "datagen", "delta", &c.datagen.delta);
        field(s, "datagen", "proxy_rate", &c.datagen.proxy_rate);
        field(s, "datagen", "max_len", &c.datagen.max_len);
        datagen_seed_set = field(s, "datagen", "seed", &c.datagen.seed);
    }

    if (const json* s = section_ptr("embedder"); s != nullptr || apply_env) {
        if (s != nullptr) check_keys(*s, "embedder", {"dim", "kind", "seed", "path"});
        field(s, "embedder", "dim", &c.embedder.dim);
        std::string kind = to_string(c.embedder.kind);
        if (field(s, "embedder", "kind", &kind)) {
            c.embedder.kind = embedder_kind_from_string(kind);
        }
        embedder_seed_set = field(s, "embedder", "seed", &c.embedder.seed);
        field(s, "embedder", "path", &c.embedder.path);
    }

    if (const json* s = section_ptr("train"); s != nullptr || apply_env) {
        if (s != nullptr) {
            check_keys(*s, "train",
                       {"epochs", "batch_size", "lr", "beta1", "beta2", "eps", "weight_decay",
                        "seed", "target"});
        }
        field(s, "train", "epochs", &c.train.epochs);
        field(s, "train", "batch_size", &c.train.batch_size);
        field(s, "train", "lr", &c.train.lr);
        field(s, "train", "beta1", &c.train.beta1);
        field(s, "train", "beta2", &c.train.beta2);
        field(s, "train", "eps", &c.train.eps);
        field(s, "train", "weight_decay", &c.train.weight_decay);
        train_seed_set = field(s, "train", "seed", &c.train.seed);
        std::string target = to_string(c.train.target);
        if (field(s, "train", "target", &target)) {
            c.train.target = train_target_from_string(target);
        }
    }

    if (const json* s = section_ptr("adversarial"); s != nullptr || apply_env) {
        if (s != nullptr) check_keys(*s, "adversarial", {"lambda", "mu"});
        field(s, "adversarial", "lambda", &c.adv_lambda);
        field(s, "adversarial", "mu", &c.adv_mu);
    }

    if (const json* s = section_ptr("attribution"); s != nullptr || apply_env) {
        if (s != nullptr) {
            check_keys(*s, "attribution",
                       {"ig_steps", "per_resume_k", "per_group_k", "iterations"});
        }
        field(s, "attribution", "ig_steps", &c.attribution.ig_steps);
        field(s, "attribution", "per_resume_k", &c.attribution.per_resume_k);
        field(s, "attribution", "per_group_k", &c.attribution.per_group_k);
        field(s, "attribution", "iterations", &c.attribution.iterations);
    }

    if (const json* s = section_ptr("audit"); s != nullptr || apply_env) {
        if (s != nullptr) check_keys(*s, "audit", {"top_k", "bins", "smoothing"});
        field(s, "audit", "top_k", &c.audit.top_k);
        field(s, "audit", "bins", &c.audit.bins);
        field(s, "audit", "smoothing", &c.audit.smoothing);
    }

    if (const json* s = section_ptr("projection"); s != nullptr || apply_env) {
        if (s != nullptr) {
            check_keys(*s, "projection",
                       {"perplexity", "iterations", "learning_rate", "early_exaggeration",
                        "exaggeration_iters", "momentum_start", "momentum_final",
                        "momentum_switch_iter", "seed", "log_every", "sample_size"});
        }
        field(s, "projection", "perplexity", &c.projection.perplexity);
        field(s, "projection", "iterations", &c.projection.iterations);
        field(s, "projection", "learning_rate", &c.projection.learning_rate);
        field(s, "projection", "early_exaggeration", &c.projection.early_exaggeration);
        field(s, "projection", "exaggeration_iters", &c.projection.exaggeration_iters);
        field(s, "projection", "momentum_start", &c.projection.momentum_start);
        field(s, "projection", "momentum_final", &c.projection.momentum_final);
        field(s, "projection", "momentum_switch_iter", &c.projection.momentum_switch_iter);
        projection_seed_set = field(s, "projection", "seed", &c.projection.seed);
        field(s, "projection", "log_every", &c.projection.log_every);
        field(s, "projection", "sample_size", &c.projection_sample);
    }

    if (!datagen_seed_set) c.datagen.seed = derive_seed(c.seed, "datagen");
    if (!embedder_seed_set) c.embedder.seed = derive_seed(c.seed, "embedder");
    if (!train_seed_set) c.train.seed = derive_seed(c.seed, "train");
    if (!projection_seed_set) c.projection.seed = derive_seed(c.seed, "projection");
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path, bool apply_env) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text, apply_env);
}

void RunConfig::validate() const {
    datagen.validate();
    embedder.validate();
    train.validate();
    attribution.validate();
    if (val_fraction <= 0.0 || val_fraction >= 1.0) {
        throw ConfigError("val_fraction must lie in (0, 1)");
    }
    if (adv_lambda < 0.0) throw ConfigError("adversarial.lambda must be non-negative");
    if (audit.top_k == 0) throw ConfigError("audit.top_k must be positive");
    if (audit.bins < 2) throw ConfigError("audit.bins must be at least 2");
    if (audit.smoothing <= 0.0) throw ConfigError("audit.smoothing must be positive");
    if (projection_sample < 10) throw ConfigError("projection.sample_size must be at least 10");
}

std::string RunConfig::resolved_json() const {
    json j;
    j["seed"] = seed;
    j["out"] = out;
    j["val_fraction"] = val_fraction;
    j["datagen"] = {{"n_profiles", datagen.n_profiles},
                    {"delta", datagen.delta},
                    {"proxy_rate", datagen.proxy_rate},
                    {"sector_weights", datagen.sector_weights},
                    {"max_len", datagen.max_len},
                    {"seed", datagen.seed}};
    j["embedder"] = {{"dim", embedder.dim},
                     {"kind", to_string(embedder.kind)},
                     {"seed", embedder.seed},
                     {"path", embedder.path}};
    j["train"] = {{"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"lr", train.lr},
                  {"beta1", train.beta1},
                  {"beta2", train.beta2},
                  {"eps", train.eps},
                  {"weight_decay", train.weight_decay},
                  {"seed", train.seed},
                  {"target", to_string(train.target)}};
    j["adversarial"] = {{"lambda", adv_lambda}, {"mu", adv_mu}};
    j["attribution"] = {{"ig_steps", attribution.ig_steps},
                        {"per_resume_k", attribution.per_resume_k},
                        {"per_group_k", attribution.per_group_k},
                        {"iterations", attribution.iterations}};
    j["audit"] = {{"top_k", audit.top_k}, {"bins", audit.bins}, {"smoothing", audit.smoothing}};
    j["projection"] = {{"perplexity", projection.perplexity},
                       {"iterations", projection.iterations},
                       {"learning_rate", projection.learning_rate},
                       {"early_exaggeration", projection.early_exaggeration},
                       {"exaggeration_iters", projection.exaggeration_iters},
                       {"momentum_start", projection.momentum_start},
                       {"momentum_final", projection.momentum_final},
                       {"momentum_switch_iter", projection.momentum_switch_iter},
                       {"seed", projection.seed},
                       {"log_every", projection.log_every},
                       {"sample_size", projection_sample}};
    return j.dump(2) + "\n";
}

}  // namespace fairpipe
