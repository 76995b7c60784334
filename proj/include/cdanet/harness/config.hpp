#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdanet/harness/optimizer.hpp"
#include "cdanet/losses/losses.hpp"
#include "cdanet/network/model.hpp"
#include "cdanet/preprocess/preprocess.hpp"

namespace cdanet {

using nlohmann::json;

/// Everything one experiment needs. Serialised as nested JSON sections
/// (model, preprocess, loss, optimizer, training, paths).
struct ExperimentConfig {
    ModelVariantSpec model;
    PreprocessConfig preprocess;
    LossWeights loss;
    AdamConfig optimizer;
    int epochs = 50;
    int batch_size = 1;
    int max_steps = 0;     // 0: no cap beyond epochs
    int eval_every = 0;    // steps between validations; 0: once per epoch
    bool augment = true;
    int n_folds = 5;
    std::uint64_t seed = 0;
    std::string data_root = "data";
    std::string output_root = "runs";
    std::string label_map;  // empty: <data_root>/labels.txt if present, else the default map

    ExperimentConfig() {
        model.base_channels = 16;
        model.input_grid = preprocess.target_size;
    }

    void validate() const {
        model.validate();
        preprocess.validate();
        loss.validate();
        optimizer.validate();
        if (model.input_grid != preprocess.target_size)
            throw std::invalid_argument("model.input_grid " + grid_str(model.input_grid) +
                                        " must equal preprocess.target_size " + grid_str(preprocess.target_size));
        if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
        if (max_steps < 0 || eval_every < 0) throw std::invalid_argument("max_steps and eval_every must be >= 0");
        if (n_folds < 2) throw std::invalid_argument("n_folds must be at least 2 for cross-validation");
    }
};

namespace config_detail {

inline json grid_json(Grid3 g) { return json::array({g.d, g.h, g.w}); }
inline Grid3 grid_from(const json& j) {
    if (j.is_number_integer()) {
        const int n = j.get<int>();
        return {n, n, n};
    }
    if (!j.is_array() || j.size() != 3) throw std::invalid_argument("grid must be [D, H, W] or a single integer");
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

template <class V>
void take(const json& j, const char* key, V& dst) {
    if (j.contains(key)) dst = j.at(key).get<V>();
}

}  // namespace config_detail

inline json to_json(const ExperimentConfig& c) {
    using config_detail::grid_json;
    return json{
        {"model",
         {{"variant", std::string(variant_name(c.model.variant))},
          {"base_channels", c.model.base_channels},
          {"depth", c.model.depth},
          {"n_structures", c.model.n_structures},
          {"n_seg_classes", c.model.n_seg_classes},
          {"init_seed", c.model.init_seed}}},
        {"preprocess",
         {{"window_low", c.preprocess.window_low},
          {"window_high", c.preprocess.window_high},
          {"target_size", grid_json(c.preprocess.target_size)},
          {"noise_sigma", c.preprocess.noise_sigma},
          {"rotation_max_deg", c.preprocess.rotation_max_deg},
          {"cutout_max_fraction", c.preprocess.cutout_max_fraction},
          {"augmentation_probability", c.preprocess.augmentation_probability}}},
        {"loss",
         {{"lambda_seg", c.loss.seg},
          {"lambda_contour", c.loss.contour},
          {"lambda_distance", c.loss.distance},
          {"lambda_penalty", c.loss.penalty},
          {"bce_background", c.loss.bce_background},
          {"bce_contour", c.loss.bce_contour},
          {"gd_epsilon", c.loss.gd_epsilon},
          {"log_clamp", c.loss.log_clamp}}},
        {"optimizer",
         {{"name", "adam"},
          {"learning_rate", c.optimizer.learning_rate},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"epsilon", c.optimizer.epsilon}}},
        {"training",
         {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"max_steps", c.max_steps},
          {"eval_every", c.eval_every},
          {"augment", c.augment},
          {"n_folds", c.n_folds},
          {"seed", c.seed}}},
        {"paths", {{"data_root", c.data_root}, {"output_root", c.output_root}, {"label_map", c.label_map}}},
    };
}

inline ExperimentConfig from_json(const json& j) {
    using config_detail::take;
    ExperimentConfig c;
    static const char* sections[] = {"model", "preprocess", "loss", "optimizer", "training", "paths"};
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* s : sections) ok = ok || k == s;
        if (!ok) throw std::invalid_argument("unknown config section '" + k + "'");
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        if (m.contains("variant")) c.model.variant = parse_variant(m["variant"].get<std::string>());
        take(m, "base_channels", c.model.base_channels);
        take(m, "depth", c.model.depth);
        take(m, "n_structures", c.model.n_structures);
        c.model.n_seg_classes = c.model.n_structures + 1;
        take(m, "n_seg_classes", c.model.n_seg_classes);
        take(m, "init_seed", c.model.init_seed);
    }
    if (j.contains("preprocess")) {
        const auto& p = j["preprocess"];
        take(p, "window_low", c.preprocess.window_low);
        take(p, "window_high", c.preprocess.window_high);
        if (p.contains("target_size")) c.preprocess.target_size = config_detail::grid_from(p["target_size"]);
        take(p, "noise_sigma", c.preprocess.noise_sigma);
        take(p, "rotation_max_deg", c.preprocess.rotation_max_deg);
        take(p, "cutout_max_fraction", c.preprocess.cutout_max_fraction);
        take(p, "augmentation_probability", c.preprocess.augmentation_probability);
    }
    if (j.contains("loss")) {
        const auto& l = j["loss"];
        take(l, "lambda_seg", c.loss.seg);
        take(l, "lambda_contour", c.loss.contour);
        take(l, "lambda_distance", c.loss.distance);
        take(l, "lambda_penalty", c.loss.penalty);
        take(l, "bce_background", c.loss.bce_background);
        take(l, "bce_contour", c.loss.bce_contour);
        take(l, "gd_epsilon", c.loss.gd_epsilon);
        take(l, "log_clamp", c.loss.log_clamp);
    }
    if (j.contains("optimizer")) {
        const auto& o = j["optimizer"];
        if (o.contains("name") && o["name"].get<std::string>() != "adam")
            throw std::invalid_argument("only the adam optimizer is available");
        take(o, "learning_rate", c.optimizer.learning_rate);
        take(o, "beta1", c.optimizer.beta1);
        take(o, "beta2", c.optimizer.beta2);
        take(o, "epsilon", c.optimizer.epsilon);
    }
    if (j.contains("training")) {
        const auto& t = j["training"];
        take(t, "epochs", c.epochs);
        take(t, "batch_size", c.batch_size);
        take(t, "max_steps", c.max_steps);
        take(t, "eval_every", c.eval_every);
        take(t, "augment", c.augment);
        take(t, "n_folds", c.n_folds);
        take(t, "seed", c.seed);
    }
    if (j.contains("paths")) {
        const auto& p = j["paths"];
        take(p, "data_root", c.data_root);
        take(p, "output_root", c.output_root);
        take(p, "label_map", c.label_map);
    }
    c.model.input_grid = c.preprocess.target_size;
    return c;
}

/// Applies `section.key=value`; the value is parsed as JSON when possible,
/// otherwise taken as a string.
inline void apply_override(ExperimentConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw std::invalid_argument("override must look like section.key=value, got '" + assignment + "'");
    const std::string section = assignment.substr(0, dot);
    const std::string key = assignment.substr(dot + 1, eq - dot - 1);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    json j = to_json(c);
    if (!j.contains(section)) throw std::invalid_argument("unknown config section '" + section + "'");
    if (!j[section].contains(key)) throw std::invalid_argument("unknown config key '" + section + "." + key + "'");
    j[section][key] = value;
    // n_seg_classes follows n_structures unless set explicitly
    if (section == "model" && key == "n_structures") j["model"].erase("n_seg_classes");
    c = from_json(j);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

inline void save_config(const ExperimentConfig& c, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write config " + path);
    f << to_json(c).dump(2) << "\n";
}

/// CDANET_DATA_ROOT, when set, replaces paths.data_root.
inline void apply_environment(ExperimentConfig& c) {
    if (const char* env = std::getenv("CDANET_DATA_ROOT"); env && *env) c.data_root = env;
}

/// 64-bit FNV-1a; stable across runs and platforms.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

/// Hash of the preprocessing settings that shape the supervision targets.
inline std::string target_config_hash(const PreprocessConfig& p) {
    const json j{{"window_low", p.window_low},
                 {"window_high", p.window_high},
                 {"target_size", config_detail::grid_json(p.target_size)},
                 {"format", 1}};
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

}  // namespace cdanet
