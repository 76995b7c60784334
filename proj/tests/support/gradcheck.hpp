#pragma once

// Central finite-difference checks against reverse-mode gradients. Test-only.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cdanet/core/autograd.hpp"

namespace cdanet::testing {

struct GradSample {
    std::string where;
    double analytic = 0, numeric = 0;

    double rel_error() const {
        const double scale = std::max(std::abs(analytic), std::abs(numeric));
        if (scale < 1e-9) return std::abs(analytic - numeric);
        return std::abs(analytic - numeric) / scale;
    }
};

/// Perturbs `leaf->value[idx]` by +-h and compares the slope of `loss` with the
/// gradient stored on the leaf after one backward pass at the base point.
inline GradSample check_entry(const std::function<Var<double>()>& loss, const Var<double>& leaf, std::size_t idx,
                              double h = 1e-5) {
    GradSample s;
    const double orig = leaf->value[idx];
    leaf->value[idx] = orig + h;
    const double fp = loss()->value[0];
    leaf->value[idx] = orig - h;
    const double fm = loss()->value[0];
    leaf->value[idx] = orig;
    s.numeric = (fp - fm) / (2 * h);
    s.analytic = leaf->grad.empty() ? 0.0 : leaf->grad[idx];
    return s;
}

/// Runs backward once, then checks `samples` random entries of each leaf.
inline std::vector<GradSample> check_leaves(const std::function<Var<double>()>& loss,
                                            const std::vector<Var<double>>& leaves, int samples, std::uint64_t seed,
                                            double h = 1e-5) {
    for (const auto& l : leaves) l->zero_grad();
    backward(loss());
    std::mt19937_64 rng(seed);
    std::vector<GradSample> out;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        std::uniform_int_distribution<std::size_t> pick(0, leaves[li]->value.size() - 1);
        for (int s = 0; s < samples; ++s) {
            const std::size_t idx = pick(rng);
            auto g = check_entry(loss, leaves[li], idx, h);
            g.where = "leaf " + std::to_string(li) + "[" + std::to_string(idx) + "]";
            out.push_back(g);
        }
    }
    return out;
}

inline double max_rel_error(const std::vector<GradSample>& s) {
    double m = 0;
    for (const auto& g : s) m = std::max(m, g.rel_error());
    return m;
}

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
    Tensor<double> t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.values()) v = u(rng);
    return t;
}

}  // namespace cdanet::testing
