#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "cdanet/core/tensor.hpp"
#include "cdanet/volume_io/types.hpp"

namespace cdanet {

namespace edt_detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas rooted at finite samples of f (Felzenszwalb &
// Huttenlocher). `d` receives min_q (p - q)^2 + f[q]; all-infinite rows stay infinite.
inline void envelope_1d(const double* f, int n, std::ptrdiff_t stride, double* d, std::vector<int>& v,
                        std::vector<double>& z, std::vector<double>& row) {
    row.resize(std::size_t(n));
    for (int i = 0; i < n; ++i) row[i] = f[i * stride];
    v.resize(std::size_t(n));
    z.resize(std::size_t(n) + 1);
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (row[q] == kInf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        double s;
        for (;;) {
            const int p = v[k];
            s = ((row[q] + double(q) * q) - (row[p] + double(p) * p)) / (2.0 * (q - p));
            if (s <= z[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        if (s <= z[k]) {  // k == 0 and the new parabola dominates everywhere
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (k < 0) {
        for (int i = 0; i < n; ++i) d[i * stride] = kInf;
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[j + 1] < q) ++j;
        const double dq = double(q - v[j]);
        d[q * stride] = dq * dq + row[v[j]];
    }
}

}  // namespace edt_detail

/// Exact squared Euclidean distance (voxel units) from every voxel to the
/// nearest voxel with site[v] != 0. Infinite everywhere when there are no sites.
/// Separable lower-envelope passes along W, H, then D; linear in the voxel count.
inline Tensor<double> squared_distance_to_sites(const Tensor<std::uint8_t>& site) {
    const Grid3 g = site.grid();
    Tensor<double> f = Tensor<double>::volume(g);
    for (std::size_t i = 0; i < site.size(); ++i) f[i] = site[i] ? 0.0 : edt_detail::kInf;
    std::vector<int> v;
    std::vector<double> z, row;
    double* p = f.data();
    for (int d = 0; d < g.d; ++d)
        for (int h = 0; h < g.h; ++h) {
            double* r = p + (std::size_t(d) * g.h + h) * g.w;
            edt_detail::envelope_1d(r, g.w, 1, r, v, z, row);
        }
    for (int d = 0; d < g.d; ++d)
        for (int w = 0; w < g.w; ++w) {
            double* r = p + std::size_t(d) * g.h * g.w + w;
            edt_detail::envelope_1d(r, g.h, g.w, r, v, z, row);
        }
    for (int h = 0; h < g.h; ++h)
        for (int w = 0; w < g.w; ++w) {
            double* r = p + std::size_t(h) * g.w + w;
            edt_detail::envelope_1d(r, g.d, std::ptrdiff_t(g.h) * g.w, r, v, z, row);
        }
    return f;
}

/// Foreground distance transform of a binary mask: each foreground voxel gets
/// its Euclidean distance to the nearest background voxel, with the volume
/// border treated as background; background voxels get 0.
inline Tensor<double> foreground_distance(const Tensor<std::uint8_t>& mask) {
    const Grid3 g = mask.grid();
    const Grid3 pg{g.d + 2, g.h + 2, g.w + 2};
    Tensor<std::uint8_t> site = Tensor<std::uint8_t>::volume(pg, 1);
    for (int d = 0; d < g.d; ++d)
        for (int h = 0; h < g.h; ++h)
            for (int w = 0; w < g.w; ++w) site.at(d + 1, h + 1, w + 1) = mask.at(d, h, w) ? 0 : 1;
    const auto sq = squared_distance_to_sites(site);
    Tensor<double> out = Tensor<double>::volume(g);
    for (int d = 0; d < g.d; ++d)
        for (int h = 0; h < g.h; ++h)
            for (int w = 0; w < g.w; ++w) out.at(d, h, w) = std::sqrt(sq.at(d + 1, h + 1, w + 1));
    return out;
}

/// O(n^2) reference for foreground_distance: scans every background voxel,
/// including a one-voxel background frame around the volume.
inline Tensor<double> edt_bruteforce(const Tensor<std::uint8_t>& mask) {
    const Grid3 g = mask.grid();
    std::vector<std::array<int, 3>> bg;
    for (int d = -1; d <= g.d; ++d)
        for (int h = -1; h <= g.h; ++h)
            for (int w = -1; w <= g.w; ++w) {
                const bool inside = d >= 0 && h >= 0 && w >= 0 && d < g.d && h < g.h && w < g.w;
                if (!inside || !mask.at(d, h, w)) bg.push_back({d, h, w});
            }
    Tensor<double> out = Tensor<double>::volume(g);
    for (int d = 0; d < g.d; ++d)
        for (int h = 0; h < g.h; ++h)
            for (int w = 0; w < g.w; ++w) {
                if (!mask.at(d, h, w)) continue;
                long best = std::numeric_limits<long>::max();
                for (const auto& b : bg) {
                    const long dd = d - b[0], dh = h - b[1], dw = w - b[2];
                    best = std::min(best, dd * dd + dh * dh + dw * dw);
                }
                out.at(d, h, w) = std::sqrt(double(best));
            }
    return out;
}

/// Per-structure foreground distance maps from a one-hot stack.
inline ChannelMapStack fdt_target(const ChannelMapStack& onehot) {
    onehot.require_role(MapRole::OneHot, "fdt_target");
    const Grid3 g = onehot.grid();
    const std::size_t n = g.numel();
    ChannelMapStack out{Tensor<float>::stack(onehot.channels(), g), MapRole::Distance};
    Tensor<std::uint8_t> mask = Tensor<std::uint8_t>::volume(g);
    for (int c = 0; c < onehot.channels(); ++c) {
        for (std::size_t i = 0; i < n; ++i) mask[i] = onehot.values[c * n + i] > 0.5f ? 1 : 0;
        const auto dt = foreground_distance(mask);
        for (std::size_t i = 0; i < n; ++i) out.values[c * n + i] = static_cast<float>(dt[i]);
    }
    return out;
}

}  // namespace cdanet
