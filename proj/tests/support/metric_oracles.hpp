#pragma once

// Brute-force references for the evaluation metrics: explicit set
// enumeration, all-pairs surface distances, sort-based percentiles.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "cdanet/metrics/metrics.hpp"

namespace cdanet::testing {

inline Mask random_mask(std::mt19937_64& rng, Grid3 g, double p) {
    std::bernoulli_distribution b(p);
    Mask m = Mask::volume(g);
    for (auto& v : m.values()) v = b(rng);
    return m;
}

inline std::vector<std::array<int, 3>> naive_surface(const Mask& m) {
    const Grid3 g = m.grid();
    std::vector<std::array<int, 3>> s;
    const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (int d = 0; d < g.d; ++d)
        for (int h = 0; h < g.h; ++h)
            for (int w = 0; w < g.w; ++w) {
                if (!m.at(d, h, w)) continue;
                bool edge = false;
                for (const auto& o : off) {
                    const int dd = d + o[0], hh = h + o[1], ww = w + o[2];
                    if (dd < 0 || hh < 0 || ww < 0 || dd >= g.d || hh >= g.h || ww >= g.w || !m.at(dd, hh, ww))
                        edge = true;
                }
                if (edge) s.push_back({d, h, w});
            }
    return s;
}

inline std::vector<double> naive_directed(const std::vector<std::array<int, 3>>& a,
                                          const std::vector<std::array<int, 3>>& b) {
    std::vector<double> out;
    for (const auto& p : a) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : b) {
            const double dd = p[0] - q[0], dh = p[1] - q[1], dw = p[2] - q[2];
            best = std::min(best, std::sqrt(dd * dd + dh * dh + dw * dw));
        }
        out.push_back(best);
    }
    return out;
}

inline double naive_p95(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const double pos = 0.95 * double(v.size() - 1);
    const auto lo = std::size_t(pos);
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] * (1 - (pos - double(lo))) + v[lo + 1] * (pos - double(lo));
}

struct NaiveMetrics {
    double dsc, ji;
    std::optional<double> hd95, assd, sens, prec;
};

inline NaiveMetrics naive_metrics(const Mask& x, const Mask& y) {
    double inter = 0, nx = 0, ny = 0, uni = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        inter += x[i] && y[i];
        uni += x[i] || y[i];
        nx += x[i] != 0;
        ny += y[i] != 0;
    }
    NaiveMetrics r{};
    r.dsc = nx + ny == 0 ? 1.0 : 2 * inter / (nx + ny);
    r.ji = uni == 0 ? 1.0 : inter / uni;
    const auto sx = naive_surface(x), sy = naive_surface(y);
    if (!sx.empty() && !sy.empty()) {
        const auto a = naive_directed(sx, sy), b = naive_directed(sy, sx);
        r.hd95 = std::max(naive_p95(a), naive_p95(b));
        double t = 0;
        for (double v : a) t += v;
        for (double v : b) t += v;
        r.assd = t / double(a.size() + b.size());
    }
    // x is the prediction, y the reference
    if (ny > 0) r.sens = inter / ny;
    if (nx > 0) r.prec = inter / nx;
    return r;
}

}  // namespace cdanet::testing
