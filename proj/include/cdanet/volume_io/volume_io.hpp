#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "cdanet/volume_io/nifti.hpp"
#include "cdanet/volume_io/types.hpp"

namespace cdanet {

inline IntensityVolume load_volume(const std::string& path) {
    auto raw = nifti::read(path);
    IntensityVolume v{Tensor<float>::volume(raw.grid), raw.spacing};
    for (std::size_t i = 0; i < raw.values.size(); ++i) v.voxels[i] = static_cast<float>(raw.values[i]);
    v.validate();
    return v;
}

inline void save_volume(const IntensityVolume& v, const std::string& path) {
    v.validate();
    nifti::write_float(path, v.voxels, v.spacing);
}

/// Reads a label file and checks every nonzero code against `label_map`.
inline LabelVolume load_labels(const std::string& path, const LabelMap& label_map) {
    auto raw = nifti::read(path);
    LabelVolume lv{Tensor<std::int32_t>::volume(raw.grid), label_map, raw.spacing};
    for (std::size_t i = 0; i < raw.values.size(); ++i) {
        const double x = raw.values[i];
        if (x != std::round(x) || x < double(INT32_MIN) || x > double(INT32_MAX))
            throw std::invalid_argument(path + ": label file holds non-integer value " + std::to_string(x));
        lv.voxels[i] = static_cast<std::int32_t>(x);
    }
    lv.validate();
    return lv;
}

/// Writes labels as int32 codes; reloading yields identical codes.
inline void save_prediction(const LabelVolume& labels, const std::string& path) {
    labels.validate();
    nifti::write_int32(path, labels.voxels, labels.spacing);
}

/// Writes a single-channel attention map as a scalar volume; values must lie in [0,1].
inline void export_attention(const FeatureMap& map, const std::string& path, Spacing spacing = {}) {
    if (map.values.rank() != 4 || map.channels() != 1)
        throw std::invalid_argument("attention export expects a (1,D,H,W) map, got " + shape_str(map.values.shape()));
    for (float v : map.values.values())
        if (!(v >= 0.f && v <= 1.f))
            throw std::invalid_argument("attention value " + std::to_string(v) + " outside [0,1]");
    const Grid3 g = map.grid();
    nifti::write_float(path, map.values.reshaped({g.d, g.h, g.w}), spacing);
}

/// One channel per structure (plus a leading background channel when asked).
inline ChannelMapStack one_hot(const LabelVolume& labels, bool include_background) {
    labels.validate();
    const auto cls = labels.class_indices();
    const int n = labels.label_map.size();
    const int C = include_background ? n + 1 : n;
    const int shift = include_background ? 0 : 1;
    const Grid3 g = labels.grid();
    ChannelMapStack s{Tensor<float>::stack(C, g), MapRole::OneHot};
    const std::size_t N = g.numel();
    for (std::size_t i = 0; i < N; ++i) {
        const int c = cls[i] - shift;
        if (c >= 0) s.values[std::size_t(c) * N + i] = 1.f;
    }
    return s;
}

/// Argmax over channels of a stack that includes background -> class indices.
inline Tensor<std::int32_t> argmax_channels(const Tensor<float>& stack) {
    const int C = stack.channels();
    const Grid3 g = stack.grid();
    const std::size_t N = g.numel();
    Tensor<std::int32_t> out = Tensor<std::int32_t>::volume(g);
    for (std::size_t i = 0; i < N; ++i) {
        int best = 0;
        for (int c = 1; c < C; ++c)
            if (stack[c * N + i] > stack[best * N + i]) best = c;
        out[i] = best;
    }
    return out;
}

/// Inverse of one_hot(include_background = true).
inline LabelVolume decode(const ChannelMapStack& stack, const LabelMap& map, Spacing spacing = {}) {
    if (stack.channels() != map.size() + 1)
        throw std::invalid_argument("decode expects " + std::to_string(map.size() + 1) + " channels including background");
    return LabelVolume::from_class_indices(argmax_channels(stack.values), map, spacing);
}

}  // namespace cdanet
