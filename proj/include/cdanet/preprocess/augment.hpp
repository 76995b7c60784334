#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>

#include "cdanet/preprocess/preprocess.hpp"

namespace cdanet {

namespace augment_detail {

// cos/sin with exact values at multiples of 90 degrees.
inline std::pair<double, double> exact_cos_sin(double degrees) {
    const double q = degrees / 90.0;
    if (q == std::round(q)) {
        const int k = ((static_cast<int>(std::round(q)) % 4) + 4) % 4;
        constexpr double c[4] = {1, 0, -1, 0}, s[4] = {0, 1, 0, -1};
        return {c[k], s[k]};
    }
    const double r = degrees * std::numbers::pi / 180.0;
    return {std::cos(r), std::sin(r)};
}

}  // namespace augment_detail

/// In-plane rotation about `axis` (0 = D, 1 = H, 2 = W) through the volume
/// centre. Intensities are interpolated trilinearly, labels by nearest
/// neighbour; samples from outside the volume become 0.
inline std::pair<IntensityVolume, LabelVolume> rotate(const IntensityVolume& vol, const LabelVolume& labels, int axis,
                                                      double degrees) {
    if (vol.grid() != labels.grid()) throw std::invalid_argument("rotate: volume and labels are not aligned");
    if (axis < 0 || axis > 2) throw std::invalid_argument("rotate: axis must be 0, 1 or 2");
    const Grid3 g = vol.grid();
    const auto [c, s] = augment_detail::exact_cos_sin(degrees);
    const int n[3] = {g.d, g.h, g.w};
    const int a = axis == 0 ? 1 : 0;  // rotation plane (a, b)
    const int b = axis == 2 ? 1 : 2;
    const double ca = (n[a] - 1) / 2.0, cb = (n[b] - 1) / 2.0;

    IntensityVolume ov{Tensor<float>::volume(g), vol.spacing};
    LabelVolume ol{Tensor<std::int32_t>::volume(g), labels.label_map, labels.spacing};
    for (int d = 0; d < g.d; ++d)
        for (int h = 0; h < g.h; ++h)
            for (int w = 0; w < g.w; ++w) {
                const int q[3] = {d, h, w};
                // inverse map: rotate output coordinates by -degrees
                const double ya = q[a] - ca, yb = q[b] - cb;
                double src[3] = {double(d), double(h), double(w)};
                src[a] = ca + c * ya + s * yb;
                src[b] = cb - s * ya + c * yb;

                int ni[3];
                bool inside = true;
                for (int k = 0; k < 3; ++k) {
                    ni[k] = static_cast<int>(std::lround(src[k]));
                    inside = inside && ni[k] >= 0 && ni[k] < n[k];
                }
                if (inside) ol.voxels.at(d, h, w) = labels.voxels.at(ni[0], ni[1], ni[2]);

                int lo[3];
                double fr[3];
                bool ok = true;
                for (int k = 0; k < 3; ++k) {
                    if (src[k] < -1e-9 || src[k] > n[k] - 1 + 1e-9) ok = false;
                    const double cl = std::clamp(src[k], 0.0, double(n[k] - 1));
                    lo[k] = std::min(static_cast<int>(std::floor(cl)), n[k] - 1);
                    fr[k] = cl - lo[k];
                }
                if (!ok) continue;
                double acc = 0;
                for (int i = 0; i < 8; ++i) {
                    int idx[3];
                    double wgt = 1;
                    for (int k = 0; k < 3; ++k) {
                        const int bit = (i >> k) & 1;
                        idx[k] = std::min(lo[k] + bit, n[k] - 1);
                        wgt *= bit ? fr[k] : 1 - fr[k];
                    }
                    if (wgt != 0) acc += wgt * vol.voxels.at(idx[0], idx[1], idx[2]);
                }
                ov.voxels.at(d, h, w) = static_cast<float>(acc);
            }
    return {std::move(ov), std::move(ol)};
}

/// Zeroes one axis-aligned box of the volume; labels are left alone.
struct CutoutBox {
    int d0, h0, w0, dd, dh, dw;
};

inline void apply_cutout(IntensityVolume& vol, const CutoutBox& box) {
    for (int d = box.d0; d < box.d0 + box.dd; ++d)
        for (int h = box.h0; h < box.h0 + box.dh; ++h)
            for (int w = box.w0; w < box.w0 + box.dw; ++w) vol.voxels.at(d, h, w) = 0.f;
}

/// Which augmentations a call applied.
struct AugmentRecord {
    bool noise = false;
    bool rotation = false;
    int rotation_axis = 0;
    double rotation_deg = 0;
    bool cutout = false;
    CutoutBox box{};
};

/// Gaussian noise, a small rotation and a cutout, each with probability
/// cfg.augmentation_probability. Expects a normalised volume. The geometric
/// transform hits volume and labels alike; noise and cutout hit the volume only.
inline std::pair<IntensityVolume, LabelVolume> augment(const IntensityVolume& vol, const LabelVolume& labels,
                                                       const PreprocessConfig& cfg, std::mt19937_64& rng,
                                                       AugmentRecord* record = nullptr) {
    cfg.validate();
    if (vol.grid() != labels.grid()) throw std::invalid_argument("augment: volume and labels are not aligned");
    AugmentRecord rec;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double p = cfg.augmentation_probability;
    IntensityVolume v = vol;
    LabelVolume l = labels;
    const Grid3 g = vol.grid();

    if (p > 0 && u01(rng) < p && cfg.rotation_max_deg > 0) {
        rec.rotation = true;
        rec.rotation_axis = std::uniform_int_distribution<int>(0, 2)(rng);
        rec.rotation_deg = (2 * u01(rng) - 1) * cfg.rotation_max_deg;
        std::tie(v, l) = rotate(v, l, rec.rotation_axis, rec.rotation_deg);
    }
    if (p > 0 && u01(rng) < p && cfg.noise_sigma > 0) {
        rec.noise = true;
        std::normal_distribution<double> nd(0.0, cfg.noise_sigma);
        for (auto& x : v.voxels.values()) x = static_cast<float>(x + nd(rng));
    }
    if (p > 0 && u01(rng) < p && cfg.cutout_max_fraction > 0) {
        rec.cutout = true;
        auto extent = [&](int n) {
            const int hi = std::max(1, static_cast<int>(std::floor(n * cfg.cutout_max_fraction)));
            return std::uniform_int_distribution<int>(1, hi)(rng);
        };
        rec.box.dd = extent(g.d);
        rec.box.dh = extent(g.h);
        rec.box.dw = extent(g.w);
        rec.box.d0 = std::uniform_int_distribution<int>(0, g.d - rec.box.dd)(rng);
        rec.box.h0 = std::uniform_int_distribution<int>(0, g.h - rec.box.dh)(rng);
        rec.box.w0 = std::uniform_int_distribution<int>(0, g.w - rec.box.dw)(rng);
        apply_cutout(v, rec.box);
    }
    if (record) *record = rec;
    return {std::move(v), std::move(l)};
}

}  // namespace cdanet
