#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdanet/harness/optimizer.hpp"
#include "cdanet/network/model.hpp"

namespace cdanet {

inline nlohmann::json spec_to_json(const ModelVariantSpec& s) {
    return {{"variant", std::string(variant_name(s.variant))},
            {"base_channels", s.base_channels},
            {"depth", s.depth},
            {"n_structures", s.n_structures},
            {"n_seg_classes", s.n_seg_classes},
            {"input_grid", {s.input_grid.d, s.input_grid.h, s.input_grid.w}},
            {"init_seed", s.init_seed}};
}

inline ModelVariantSpec spec_from_json(const nlohmann::json& j) {
    ModelVariantSpec s;
    s.variant = parse_variant(j.at("variant").get<std::string>());
    s.base_channels = j.at("base_channels").get<int>();
    s.depth = j.at("depth").get<int>();
    s.n_structures = j.at("n_structures").get<int>();
    s.n_seg_classes = j.at("n_seg_classes").get<int>();
    const auto& g = j.at("input_grid");
    s.input_grid = {g.at(0).get<int>(), g.at(1).get<int>(), g.at(2).get<int>()};
    s.init_seed = j.at("init_seed").get<std::uint64_t>();
    s.validate();
    return s;
}

inline bool same_architecture(const ModelVariantSpec& a, const ModelVariantSpec& b) {
    return a.variant == b.variant && a.base_channels == b.base_channels && a.depth == b.depth &&
           a.n_structures == b.n_structures && a.n_seg_classes == b.n_seg_classes && a.input_grid == b.input_grid;
}

/// Progress stored next to the weights.
struct TrainingState {
    std::int64_t step = 0;
    std::optional<double> best_val_dsc;
    std::int64_t best_step = 0;
};

struct Checkpoint {
    ModelVariantSpec spec;
    TrainingState state;
    nlohmann::json header;
};

namespace ckpt_detail {

inline constexpr char kMagic[8] = {'C', 'D', 'A', 'N', 'E', 'T', 'C', '1'};

template <class V>
void put(std::ofstream& f, const V* p, std::size_t n) {
    f.write(reinterpret_cast<const char*>(p), std::streamsize(n * sizeof(V)));
}
template <class V>
void get(std::ifstream& f, V* p, std::size_t n, const std::string& path) {
    f.read(reinterpret_cast<char*>(p), std::streamsize(n * sizeof(V)));
    if (!f) throw std::runtime_error("checkpoint " + path + " is truncated");
}

}  // namespace ckpt_detail

/// Layout: magic, u64 header length, JSON header (spec, parameter names and
/// shapes, training state, optimizer config and step), float weights in
/// registry order, then the double first and second moments.
inline void save_checkpoint(const std::string& path, const CdaNet<float>& model, const Adam<float>& opt,
                            const TrainingState& state) {
    using namespace ckpt_detail;
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : model.parameters().all()) params.push_back({{"name", p.name}, {"shape", p.var->value.shape()}});
    nlohmann::json h{{"format", 1},
                     {"spec", spec_to_json(model.spec())},
                     {"params", params},
                     {"state",
                      {{"step", state.step},
                       {"best_val_dsc", state.best_val_dsc ? nlohmann::json(*state.best_val_dsc) : nlohmann::json()},
                       {"best_step", state.best_step}}},
                     {"adam",
                      {{"steps", opt.steps()},
                       {"learning_rate", opt.config().learning_rate},
                       {"beta1", opt.config().beta1},
                       {"beta2", opt.config().beta2},
                       {"epsilon", opt.config().epsilon}}}};
    const std::string text = h.dump();
    if (const auto dir = std::filesystem::path(path).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write checkpoint " + tmp);
        const std::uint64_t len = text.size();
        put(f, kMagic, sizeof kMagic);
        put(f, &len, 1);
        put(f, text.data(), text.size());
        for (const auto& p : model.parameters().all()) put(f, p.var->value.data(), p.var->value.size());
        for (const auto& m : opt.first_moments()) put(f, m.data(), m.size());
        for (const auto& v : opt.second_moments()) put(f, v.data(), v.size());
        if (!f) throw std::runtime_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline nlohmann::json read_header(std::ifstream& f, const std::string& path) {
    using namespace ckpt_detail;
    char magic[8];
    get(f, magic, sizeof magic, path);
    if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw std::runtime_error(path + " is not a checkpoint");
    std::uint64_t len = 0;
    get(f, &len, 1, path);
    if (len > (1u << 26)) throw std::runtime_error("checkpoint " + path + " has an implausible header");
    std::string text(len, '\0');
    get(f, text.data(), len, path);
    return nlohmann::json::parse(text);
}

/// Header only: spec and training state.
inline Checkpoint peek_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint " + path);
    Checkpoint c;
    c.header = read_header(f, path);
    c.spec = spec_from_json(c.header.at("spec"));
    const auto& s = c.header.at("state");
    c.state.step = s.at("step").get<std::int64_t>();
    if (!s.at("best_val_dsc").is_null()) c.state.best_val_dsc = s.at("best_val_dsc").get<double>();
    c.state.best_step = s.at("best_step").get<std::int64_t>();
    return c;
}

/// Fills `model` (and `opt` when given) from a checkpoint with the same architecture.
inline Checkpoint load_checkpoint(const std::string& path, CdaNet<float>& model, Adam<float>* opt = nullptr) {
    using namespace ckpt_detail;
    Checkpoint c = peek_checkpoint(path);
    if (!same_architecture(c.spec, model.spec()))
        throw std::invalid_argument("checkpoint " + path + " holds a " + std::string(variant_name(c.spec.variant)) +
                                    " model that does not match the configured " + std::string(variant_name(model.spec().variant)) +
                                    " architecture");
    std::ifstream f(path, std::ios::binary);
    read_header(f, path);
    const auto& params = model.parameters().all();
    const auto& names = c.header.at("params");
    if (names.size() != params.size()) throw std::runtime_error("checkpoint " + path + ": parameter count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (names[k].at("name").get<std::string>() != params[k].name ||
            names[k].at("shape").get<Shape>() != params[k].var->value.shape())
            throw std::runtime_error("checkpoint " + path + ": parameter " + params[k].name + " does not match");
    }
    for (const auto& p : params) get(f, p.var->value.storage().data(), p.var->value.size(), path);
    if (opt) {
        for (auto& m : opt->first_moments()) get(f, m.data(), m.size(), path);
        for (auto& v : opt->second_moments()) get(f, v.data(), v.size(), path);
        opt->set_steps(c.header.at("adam").at("steps").get<std::int64_t>());
    }
    return c;
}

}  // namespace cdanet
