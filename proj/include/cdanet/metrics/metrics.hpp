#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdanet/preprocess/edt.hpp"
#include "cdanet/volume_io/types.hpp"

namespace cdanet {

using Mask = Tensor<std::uint8_t>;

/// Foreground voxels of a mask that touch background through a face (or the
/// volume border), in raster order.
struct SurfaceSet {
    std::vector<std::array<int, 3>> voxels;
    Spacing spacing;

    std::size_t size() const { return voxels.size(); }
    bool empty() const { return voxels.empty(); }
};

namespace metrics_detail {

inline void require_same(const Mask& x, const Mask& y, const char* what) {
    if (x.shape() != y.shape())
        throw std::invalid_argument(std::string(what) + ": mask shapes differ " + shape_str(x.shape()) + " vs " +
                                    shape_str(y.shape()));
}

struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0, x = 0, y = 0;
};

inline Counts count(const Mask& pred, const Mask& gt) {
    Counts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, g = gt[i] != 0;
        c.tp += p && g;
        c.fp += p && !g;
        c.fn += !p && g;
        c.x += p;
        c.y += g;
    }
    return c;
}

}  // namespace metrics_detail

/// 2|X n Y| / (|X| + |Y|); 1 when both are empty.
inline double dsc(const Mask& x, const Mask& y) {
    metrics_detail::require_same(x, y, "dsc");
    const auto c = metrics_detail::count(x, y);
    if (c.x + c.y == 0) return 1.0;
    return 2.0 * double(c.tp) / double(c.x + c.y);
}

/// |X n Y| / |X u Y|; 1 when both are empty.
inline double jaccard(const Mask& x, const Mask& y) {
    metrics_detail::require_same(x, y, "jaccard");
    const auto c = metrics_detail::count(x, y);
    const std::size_t uni = c.x + c.y - c.tp;
    if (uni == 0) return 1.0;
    return double(c.tp) / double(uni);
}

inline SurfaceSet extract_surface(const Mask& m, Spacing spacing = {}) {
    const Grid3 g = m.grid();
    SurfaceSet s{{}, spacing};
    auto bg = [&](int d, int h, int w) {
        if (d < 0 || h < 0 || w < 0 || d >= g.d || h >= g.h || w >= g.w) return true;
        return m.at(d, h, w) == 0;
    };
    for (int d = 0; d < g.d; ++d)
        for (int h = 0; h < g.h; ++h)
            for (int w = 0; w < g.w; ++w) {
                if (!m.at(d, h, w)) continue;
                if (bg(d - 1, h, w) || bg(d + 1, h, w) || bg(d, h - 1, w) || bg(d, h + 1, w) || bg(d, h, w - 1) ||
                    bg(d, h, w + 1))
                    s.voxels.push_back({d, h, w});
            }
    return s;
}

/// Distance from each voxel of `from` to the nearest voxel of `to`, using the
/// exact distance transform of `to` on the shared grid.
inline std::vector<double> directed_surface_distances(const SurfaceSet& from, const SurfaceSet& to, Grid3 g) {
    Mask sites = Mask::volume(g);
    for (const auto& v : to.voxels) sites.at(v[0], v[1], v[2]) = 1;
    const auto sq = squared_distance_to_sites(sites);
    std::vector<double> out;
    out.reserve(from.size());
    for (const auto& v : from.voxels) out.push_back(std::sqrt(sq.at(v[0], v[1], v[2])));
    return out;
}

/// q-th percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> v, double q) {
    if (v.empty()) throw std::invalid_argument("percentile of an empty list");
    std::sort(v.begin(), v.end());
    const double pos = q / 100.0 * double(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

/// Symmetric 95th-percentile Hausdorff distance in voxel units; empty when
/// either mask is empty.
inline std::optional<double> hd95(const Mask& x, const Mask& y) {
    metrics_detail::require_same(x, y, "hd95");
    const auto sx = extract_surface(x), sy = extract_surface(y);
    if (sx.empty() || sy.empty()) return std::nullopt;
    const Grid3 g = x.grid();
    return std::max(percentile(directed_surface_distances(sx, sy, g), 95.0),
                    percentile(directed_surface_distances(sy, sx, g), 95.0));
}

/// Average symmetric surface distance in voxel units; empty when either mask is empty.
inline std::optional<double> assd(const Mask& x, const Mask& y) {
    metrics_detail::require_same(x, y, "assd");
    const auto sx = extract_surface(x), sy = extract_surface(y);
    if (sx.empty() || sy.empty()) return std::nullopt;
    const Grid3 g = x.grid();
    double total = 0;
    for (double d : directed_surface_distances(sx, sy, g)) total += d;
    for (double d : directed_surface_distances(sy, sx, g)) total += d;
    return total / double(sx.size() + sy.size());
}

struct SensitivityPrecision {
    std::optional<double> sensitivity, precision;
};

/// TP/(TP+FN) and TP/(TP+FP); a zero denominator leaves the value empty.
inline SensitivityPrecision sensitivity_precision(const Mask& pred, const Mask& gt) {
    metrics_detail::require_same(pred, gt, "sensitivity_precision");
    const auto c = metrics_detail::count(pred, gt);
    SensitivityPrecision r;
    if (c.tp + c.fn > 0) r.sensitivity = double(c.tp) / double(c.tp + c.fn);
    if (c.tp + c.fp > 0) r.precision = double(c.tp) / double(c.tp + c.fp);
    return r;
}

inline Mask class_mask(const Tensor<std::int32_t>& cls, int k) {
    Mask m(cls.shape());
    for (std::size_t i = 0; i < cls.size(); ++i) m[i] = cls[i] == k;
    return m;
}

inline Mask foreground_mask(const Tensor<std::int32_t>& cls) {
    Mask m(cls.shape());
    for (std::size_t i = 0; i < cls.size(); ++i) m[i] = cls[i] != 0;
    return m;
}

}  // namespace cdanet
