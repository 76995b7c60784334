#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "cdanet/harness/config.hpp"
#include "cdanet/harness/dataset.hpp"
#include "cdanet/volume_io/phantom.hpp"

namespace cdanet::testing {

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("cdanet_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path.string(); }
    std::string sub(const std::string& s) const { return (path / s).string(); }
};

inline std::string phantom_id(int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "phantom_%03d", i);
    return buf;
}

/// `count` phantoms with seeds first_seed, first_seed+1, ... plus labels.txt.
inline void write_phantom_set(const std::string& dir, int count, Grid3 size, int n_structures,
                              std::uint64_t first_seed = 0) {
    for (int i = 0; i < count; ++i) {
        const auto p = generate_phantom(first_seed + std::uint64_t(i), size, n_structures);
        write_case(dir, phantom_id(i), p.image, p.labels);
        if (i == 0) p.labels.label_map.save((std::filesystem::path(dir) / kLabelMapFile).string());
    }
}

/// Small, fast configuration on an n^3 grid without augmentation.
inline ExperimentConfig small_config(const std::string& data_root, const std::string& output_root, int n, int n_structures,
                                     Variant v, int base_channels = 4, int depth = 2) {
    ExperimentConfig c;
    c.preprocess.target_size = {n, n, n};
    c.model.input_grid = c.preprocess.target_size;
    c.model.variant = v;
    c.model.base_channels = base_channels;
    c.model.depth = depth;
    c.model.n_structures = n_structures;
    c.model.n_seg_classes = n_structures + 1;
    c.model.init_seed = 7;
    c.augment = false;
    c.data_root = data_root;
    c.output_root = output_root;
    c.seed = 1234;
    return c;
}

}  // namespace cdanet::testing
