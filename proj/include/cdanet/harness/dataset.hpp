#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdanet/harness/config.hpp"
#include "cdanet/losses/losses.hpp"
#include "cdanet/preprocess/edt.hpp"
#include "cdanet/preprocess/preprocess.hpp"
#include "cdanet/volume_io/volume_io.hpp"

namespace cdanet {

namespace fs = std::filesystem;

using Logger = std::function<void(const std::string&)>;

inline Logger stderr_logger() {
    return [](const std::string& s) { std::cerr << s << "\n"; };
}
inline Logger null_logger() {
    return [](const std::string&) {};
}
/// An empty logger is silent.
inline void emit(const Logger& log, const std::string& msg) {
    if (log) log(msg);
}

/// Files of one case found under the data root.
struct CaseFiles {
    std::string id;
    std::string image;
    std::string label;  // empty when no ground truth exists
};

inline constexpr const char* kLabelMapFile = "labels.txt";

/// `<id>_image.nii[.gz]` with optional `<id>_label.nii[.gz]`, sorted by id.
inline std::vector<CaseFiles> discover_cases(const std::string& root) {
    if (!fs::is_directory(root)) throw std::runtime_error("data root " + root + " is not a directory");
    std::vector<CaseFiles> out;
    for (const auto& e : fs::directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        for (const char* ext : {"_image.nii.gz", "_image.nii"}) {
            const std::size_t n = std::strlen(ext);
            if (name.size() <= n || name.compare(name.size() - n, n, ext) != 0) continue;
            CaseFiles c;
            c.id = name.substr(0, name.size() - n);
            c.image = e.path().string();
            for (const char* lext : {"_label.nii.gz", "_label.nii"}) {
                const fs::path p = fs::path(root) / (c.id + lext);
                if (fs::exists(p)) {
                    c.label = p.string();
                    break;
                }
            }
            out.push_back(c);
            break;
        }
    }
    std::sort(out.begin(), out.end(), [](const CaseFiles& a, const CaseFiles& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].id == out[i - 1].id) throw std::runtime_error("case " + out[i].id + " has both .nii and .nii.gz images");
    return out;
}

/// Label map from the config, else `<data_root>/labels.txt`, else the first
/// n_structures default codes. Its size must match the model.
inline LabelMap resolve_label_map(const ExperimentConfig& cfg) {
    LabelMap m;
    if (!cfg.label_map.empty()) {
        m = LabelMap::load(cfg.label_map);
    } else if (const fs::path p = fs::path(cfg.data_root) / kLabelMapFile; fs::exists(p)) {
        m = LabelMap::load(p.string());
    } else {
        m = LabelMap::default_prefix(cfg.model.n_structures);
    }
    if (m.size() != cfg.model.n_structures)
        throw std::invalid_argument("label map has " + std::to_string(m.size()) + " structures but the model expects " +
                                    std::to_string(cfg.model.n_structures));
    return m;
}

/// One case ready for the network: intensities windowed and resized, labels
/// resized by nearest neighbour, targets derived from the resized labels.
struct PreparedCase {
    std::string id;
    IntensityVolume image;             // normalised, network grid
    std::optional<LabelVolume> labels; // network grid
    LossTargets<float> targets;        // empty when there is no ground truth
    Grid3 native_grid;
    Spacing native_spacing;
    std::optional<LabelVolume> native_labels;

    bool has_ground_truth() const { return labels.has_value(); }

    /// (1,D,H,W) network input.
    Tensor<float> input() const {
        const Grid3 g = image.grid();
        return image.voxels.reshaped({1, g.d, g.h, g.w});
    }
};

/// Contour and FDT stacks for one label volume.
struct TargetStacks {
    ChannelMapStack contour;
    ChannelMapStack distance;
};

inline TargetStacks compute_target_stacks(const LabelVolume& labels) {
    const auto fg = one_hot(labels, false);
    return {contour_target(fg), fdt_target(fg)};
}

inline LossTargets<float> assemble_targets(const LabelVolume& labels, const TargetStacks& t) {
    return {one_hot(labels, true).values, t.contour.values, t.distance.values};
}

// --- on-disk target cache -------------------------------------------------

namespace cache_detail {

inline constexpr char kMagic[8] = {'C', 'D', 'A', 'T', 'G', 'T', '0', '1'};

inline void gz_write(gzFile f, const void* p, std::size_t n, const std::string& path) {
    if (n && gzwrite(f, p, static_cast<unsigned>(n)) != int(n)) throw std::runtime_error("write failed: " + path);
}
inline void gz_read(gzFile f, void* p, std::size_t n, const std::string& path) {
    if (n && gzread(f, p, static_cast<unsigned>(n)) != int(n)) throw std::runtime_error("truncated target file " + path);
}

}  // namespace cache_detail

inline void save_targets(const TargetStacks& t, const std::string& path) {
    using namespace cache_detail;
    fs::create_directories(fs::path(path).parent_path());
    const std::string tmp = path + ".tmp";
    gzFile f = gzopen(tmp.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write " + tmp);
    const Grid3 g = t.contour.grid();
    const std::int32_t hdr[4] = {t.contour.channels(), g.d, g.h, g.w};
    try {
        gz_write(f, kMagic, sizeof kMagic, path);
        gz_write(f, hdr, sizeof hdr, path);
        gz_write(f, t.contour.values.data(), t.contour.values.size() * sizeof(float), path);
        gz_write(f, t.distance.values.data(), t.distance.values.size() * sizeof(float), path);
    } catch (...) {
        gzclose(f);
        throw;
    }
    if (gzclose(f) != Z_OK) throw std::runtime_error("cannot finish " + tmp);
    fs::rename(tmp, path);
}

/// Reads a cached stack pair and re-checks it against `labels`: shapes, binary
/// contour, non-negative distances that are zero exactly on background.
inline TargetStacks load_targets(const std::string& path, const LabelVolume& labels) {
    using namespace cache_detail;
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open target file " + path);
    TargetStacks t;
    try {
        char magic[8];
        gz_read(f, magic, sizeof magic, path);
        if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw std::runtime_error(path + " is not a target file");
        std::int32_t hdr[4];
        gz_read(f, hdr, sizeof hdr, path);
        const Grid3 g{hdr[1], hdr[2], hdr[3]};
        if (hdr[0] != labels.label_map.size() || g != labels.grid())
            throw std::runtime_error(path + ": cached targets do not match the label volume");
        t.contour = {Tensor<float>::stack(hdr[0], g), MapRole::Contour};
        t.distance = {Tensor<float>::stack(hdr[0], g), MapRole::Distance};
        gz_read(f, t.contour.values.data(), t.contour.values.size() * sizeof(float), path);
        gz_read(f, t.distance.values.data(), t.distance.values.size() * sizeof(float), path);
    } catch (...) {
        gzclose(f);
        throw;
    }
    gzclose(f);

    t.contour.validate();
    t.distance.validate();
    for (float v : t.contour.values.values())
        if (v != 0.f && v != 1.f) throw std::runtime_error(path + ": contour target is not binary");
    const auto fg = one_hot(labels, false);
    for (std::size_t i = 0; i < fg.values.size(); ++i)
        if ((fg.values[i] > 0.5f) != (t.distance.values[i] > 0.f))
            throw std::runtime_error(path + ": distance target disagrees with the labels");
    return t;
}

inline std::string target_cache_path(const ExperimentConfig& cfg, const std::string& case_id) {
    return (fs::path(cfg.output_root) / "cache" / target_config_hash(cfg.preprocess) / (case_id + ".targets.gz")).string();
}

struct PrepareOptions {
    bool use_cache = true;    // read cached targets when present
    bool write_cache = false; // store freshly computed targets
    Logger log = null_logger();
};

/// Loads and preprocesses one case. Ground truth is optional.
inline PreparedCase prepare_case(const CaseFiles& files, const ExperimentConfig& cfg, const LabelMap& map,
                                 const PrepareOptions& opt = {}) {
    PreparedCase pc;
    pc.id = files.id;
    const IntensityVolume raw = load_volume(files.image);
    pc.native_grid = raw.grid();
    pc.native_spacing = raw.spacing;
    pc.image = resize(window_normalize(raw, cfg.preprocess), cfg.preprocess.target_size);
    if (files.label.empty()) return pc;

    LabelVolume native = load_labels(files.label, map);
    if (native.grid() != pc.native_grid)
        throw std::runtime_error("case " + files.id + ": label grid " + grid_str(native.grid()) +
                                 " differs from image grid " + grid_str(pc.native_grid));
    native.spacing = raw.spacing;
    LabelVolume net = resize(native, cfg.preprocess.target_size);

    const std::string cache = target_cache_path(cfg, files.id);
    TargetStacks t;
    if (opt.use_cache && fs::exists(cache)) {
        t = load_targets(cache, net);
        emit(opt.log, "cache hit: " + files.id + " (" + cache + ")");
    } else {
        t = compute_target_stacks(net);
        if (opt.write_cache) {
            save_targets(t, cache);
            emit(opt.log, "targets written: " + files.id + " (" + cache + ")");
        }
    }
    pc.targets = assemble_targets(net, t);
    pc.labels = std::move(net);
    pc.native_labels = std::move(native);
    return pc;
}

inline std::vector<PreparedCase> prepare_cases(const std::vector<CaseFiles>& files, const ExperimentConfig& cfg,
                                               const LabelMap& map, const PrepareOptions& opt = {}) {
    std::vector<PreparedCase> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(prepare_case(f, cfg, map, opt));
    return out;
}

/// Writes a phantom as `<id>_image.nii.gz` and `<id>_label.nii.gz`.
inline void write_case(const std::string& dir, const std::string& id, const IntensityVolume& image,
                       const LabelVolume& labels) {
    fs::create_directories(dir);
    save_volume(image, (fs::path(dir) / (id + "_image.nii.gz")).string());
    save_prediction(labels, (fs::path(dir) / (id + "_label.nii.gz")).string());
}

}  // namespace cdanet
