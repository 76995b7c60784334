#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "cdanet/core/resample.hpp"
#include "cdanet/volume_io/types.hpp"

namespace cdanet {

struct PreprocessConfig {
    double window_low = -300;   // HU
    double window_high = 1000;  // HU
    // 128 x 128 x 64 network input with the 64 taken as the slice (D) axis.
    Grid3 target_size{64, 128, 128};
    double noise_sigma = 0.02;           // fraction of the normalised [0,1] range
    double rotation_max_deg = 10;
    double cutout_max_fraction = 0.125;  // per-axis upper bound of the cutout box
    double augmentation_probability = 0.5;

    void validate() const {
        if (!(window_low < window_high)) throw std::invalid_argument("window_low must be below window_high");
        if (target_size.d <= 0 || target_size.h <= 0 || target_size.w <= 0)
            throw std::invalid_argument("target_size must be positive");
        if (!(noise_sigma >= 0)) throw std::invalid_argument("noise_sigma must be non-negative");
        if (!(rotation_max_deg >= 0 && rotation_max_deg <= 180)) throw std::invalid_argument("rotation_max_deg out of range");
        if (!(cutout_max_fraction >= 0 && cutout_max_fraction <= 1))
            throw std::invalid_argument("cutout_max_fraction must lie in [0,1]");
        if (!(augmentation_probability >= 0 && augmentation_probability <= 1))
            throw std::invalid_argument("augmentation_probability must lie in [0,1]");
    }
};

/// clamp((v - low) / (high - low), 0, 1) voxelwise.
inline IntensityVolume window_normalize(const IntensityVolume& vol, const PreprocessConfig& cfg) {
    cfg.validate();
    IntensityVolume out = vol;
    const double span = cfg.window_high - cfg.window_low;
    for (auto& v : out.voxels.values())
        v = static_cast<float>(std::clamp((double(v) - cfg.window_low) / span, 0.0, 1.0));
    return out;
}

inline Spacing rescaled_spacing(Spacing s, Grid3 from, Grid3 to) {
    return {s.d * from.d / to.d, s.h * from.h / to.h, s.w * from.w / to.w};
}

/// Trilinear resampling of intensities.
inline IntensityVolume resize(const IntensityVolume& vol, Grid3 target) {
    if (vol.voxels.empty()) throw std::invalid_argument("resize of an empty volume");
    if (target.d <= 0 || target.h <= 0 || target.w <= 0) throw std::invalid_argument("resize target must be positive");
    return {resize_trilinear(vol.voxels, target), rescaled_spacing(vol.spacing, vol.grid(), target)};
}

/// Nearest-neighbour resampling of labels; the output code set is a subset of the input's.
inline LabelVolume resize(const LabelVolume& labels, Grid3 target) {
    if (labels.voxels.empty()) throw std::invalid_argument("resize of an empty label volume");
    if (target.d <= 0 || target.h <= 0 || target.w <= 0) throw std::invalid_argument("resize target must be positive");
    return {resize_nearest(labels.voxels, target), labels.label_map,
            rescaled_spacing(labels.spacing, labels.grid(), target)};
}

namespace contour_detail {

// Sum of a binary channel over the 3-voxel window along one axis, zero padded.
inline Tensor<int> box3(const Tensor<int>& x, int axis) {
    const Grid3 g = x.grid();
    Tensor<int> y = Tensor<int>::volume(g);
    for (int d = 0; d < g.d; ++d)
        for (int h = 0; h < g.h; ++h)
            for (int w = 0; w < g.w; ++w) {
                int acc = 0;
                for (int o = -1; o <= 1; ++o) {
                    int dd = d, hh = h, ww = w;
                    (axis == 0 ? dd : axis == 1 ? hh : ww) += o;
                    if (dd < 0 || hh < 0 || ww < 0 || dd >= g.d || hh >= g.h || ww >= g.w) continue;
                    acc += x.at(dd, hh, ww);
                }
                y.at(d, h, w) = acc;
            }
    return y;
}

// Central difference along one axis, zero padded.
inline Tensor<int> diff3(const Tensor<int>& x, int axis) {
    const Grid3 g = x.grid();
    Tensor<int> y = Tensor<int>::volume(g);
    for (int d = 0; d < g.d; ++d)
        for (int h = 0; h < g.h; ++h)
            for (int w = 0; w < g.w; ++w) {
                auto sample = [&](int o) {
                    int dd = d, hh = h, ww = w;
                    (axis == 0 ? dd : axis == 1 ? hh : ww) += o;
                    if (dd < 0 || hh < 0 || ww < 0 || dd >= g.d || hh >= g.h || ww >= g.w) return 0;
                    return x.at(dd, hh, ww);
                };
                y.at(d, h, w) = sample(1) - sample(-1);
            }
    return y;
}

}  // namespace contour_detail

/// 3D Prewitt gradient of each binary channel; a voxel is contour wherever any
/// gradient component is nonzero. Outside the volume counts as 0.
inline ChannelMapStack contour_target(const ChannelMapStack& onehot) {
    onehot.require_role(MapRole::OneHot, "contour_target");
    const Grid3 g = onehot.grid();
    const std::size_t n = g.numel();
    ChannelMapStack out{Tensor<float>::stack(onehot.channels(), g), MapRole::Contour};
    using contour_detail::box3;
    using contour_detail::diff3;
    for (int c = 0; c < onehot.channels(); ++c) {
        Tensor<int> m = Tensor<int>::volume(g);
        for (std::size_t i = 0; i < n; ++i) m[i] = onehot.values[c * n + i] > 0.5f ? 1 : 0;
        const auto gd = diff3(box3(box3(m, 1), 2), 0);
        const auto gh = diff3(box3(box3(m, 0), 2), 1);
        const auto gw = diff3(box3(box3(m, 0), 1), 2);
        for (std::size_t i = 0; i < n; ++i)
            out.values[c * n + i] = (gd[i] != 0 || gh[i] != 0 || gw[i] != 0) ? 1.f : 0.f;
    }
    return out;
}

}  // namespace cdanet
