#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdanet/core/autograd.hpp"
#include "cdanet/core/ops.hpp"
#include "cdanet/network/variant.hpp"

namespace cdanet {

/// Weights of the combined objective and of its terms.
struct LossWeights {
    double seg = 1.0;      // lambda_1, generalized Dice on the segmentation head
    double contour = 20.0; // lambda_2, weighted BCE on the contour head
    double distance = 10.0;// lambda_3, MSE on the distance head
    double penalty = 1.0;  // lambda_4, penalty energy
    double bce_background = 0.001;
    double bce_contour = 0.999;
    double gd_epsilon = 1e-6;
    double log_clamp = 1e-7;

    void validate() const {
        for (double v : {seg, contour, distance, penalty, bce_background, bce_contour})
            if (!(v >= 0) || !std::isfinite(v)) throw std::invalid_argument("loss weights must be finite and non-negative");
        if (std::abs(bce_background + bce_contour - 1.0) > 1e-9)
            throw std::invalid_argument("BCE class weights must sum to 1");
        if (!(gd_epsilon > 0)) throw std::invalid_argument("gd_epsilon must be positive");
        if (!(log_clamp > 0 && log_clamp < 0.5)) throw std::invalid_argument("log_clamp must lie in (0, 0.5)");
    }
};

namespace losses {

/// 1 - 2 sum_c w_c sum_n r p / sum_c w_c sum_n (r + p), with w_c = 1/((sum_n r)^2 + eps).
/// `probs` and `onehot` are (C,D,H,W) including the background channel.
template <class T>
Var<T> generalized_dice(const Var<T>& probs, const Tensor<T>& onehot, double eps = 1e-6) {
    require_same_shape(probs->value, onehot, "generalized_dice");
    const int C = probs->value.channels();
    const std::size_t n = probs->value.grid().numel();
    std::vector<T> w(C);
    T num = 0, den = 0;
    for (int c = 0; c < C; ++c) {
        T rs = 0, inter = 0, ps = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const T r = onehot[c * n + i], p = probs->value[c * n + i];
            rs += r;
            inter += r * p;
            ps += p;
        }
        w[c] = T(1) / (rs * rs + T(eps));
        num += w[c] * inter;
        den += w[c] * (rs + ps);
    }
    Tensor<T> y({1}, den == T(0) ? T(0) : T(1) - T(2) * num / den);
    return make_result<T>(std::move(y), {probs}, [probs, onehot, w = std::move(w), num, den, C, n](Node<T>& out) {
        if (den == T(0)) return;
        Tensor<T>& g = probs->grad_buffer();
        const T go = out.grad[0];
        for (int c = 0; c < C; ++c) {
            const T k = -T(2) * w[c] / (den * den) * go;
            for (std::size_t i = 0; i < n; ++i) g[c * n + i] += k * (onehot[c * n + i] * den - num);
        }
    });
}

/// Class-weighted binary cross-entropy on logits, mean over voxels and channels.
/// w_fg weighs the contour (y = 1) term, w_bg the background (y = 0) term.
template <class T>
Var<T> weighted_bce(const Var<T>& logits, const Tensor<T>& target, double w_bg = 0.001, double w_fg = 0.999,
                    double log_clamp = 1e-7) {
    require_same_shape(logits->value, target, "weighted_bce");
    const std::size_t n = target.size();
    const T lo = T(log_clamp), hi = T(1) - T(log_clamp);
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T p = ops::sigmoid_scalar(logits->value[i]);
        const T y = target[i];
        acc -= w_fg * y * std::log(std::max(p, lo)) + w_bg * (T(1) - y) * std::log(std::max(T(1) - p, lo));
    }
    Tensor<T> out({1}, T(acc / double(n)));
    return make_result<T>(std::move(out), {logits}, [logits, target, w_bg, w_fg, lo, hi, n](Node<T>& o) {
        Tensor<T>& g = logits->grad_buffer();
        const T go = o.grad[0] / T(n);
        for (std::size_t i = 0; i < n; ++i) {
            const T p = ops::sigmoid_scalar(logits->value[i]);
            const T y = target[i];
            T d = 0;
            if (p > lo) d -= T(w_fg) * y * (T(1) - p);
            if (p < hi) d += T(w_bg) * (T(1) - y) * p;
            g[i] += go * d;
        }
    });
}

/// (1/n) sum (y - p)^2 over every voxel and channel.
template <class T>
Var<T> mse(const Var<T>& pred, const Tensor<T>& target) {
    require_same_shape(pred->value, target, "mse");
    const std::size_t n = target.size();
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = double(target[i]) - double(pred->value[i]);
        acc += d * d;
    }
    Tensor<T> out({1}, T(acc / double(n)));
    return make_result<T>(std::move(out), {pred}, [pred, target, n](Node<T>& o) {
        Tensor<T>& g = pred->grad_buffer();
        const T k = T(2) * o.grad[0] / T(n);
        for (std::size_t i = 0; i < n; ++i) g[i] += k * (pred->value[i] - target[i]);
    });
}

/// Mean of sigmoid(contour) * (1 - clamp(dt, 0, 1)): contour response where the
/// predicted distance map says background.
template <class T>
Var<T> penalty_energy(const Var<T>& contour_logits, const Var<T>& dt_pred) {
    require_same_shape(contour_logits->value, dt_pred->value, "penalty_energy");
    const std::size_t n = dt_pred->value.size();
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T s = ops::sigmoid_scalar(contour_logits->value[i]);
        const T inv = T(1) - std::clamp(dt_pred->value[i], T(0), T(1));
        acc += double(s * inv);
    }
    Tensor<T> out({1}, T(acc / double(n)));
    return make_result<T>(std::move(out), {contour_logits, dt_pred}, [contour_logits, dt_pred, n](Node<T>& o) {
        const T go = o.grad[0] / T(n);
        T* gc = contour_logits->requires_grad ? contour_logits->grad_buffer().data() : nullptr;
        T* gd = dt_pred->requires_grad ? dt_pred->grad_buffer().data() : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
            const T s = ops::sigmoid_scalar(contour_logits->value[i]);
            const T d = dt_pred->value[i];
            const T inv = T(1) - std::clamp(d, T(0), T(1));
            if (gc) gc[i] += go * s * (T(1) - s) * inv;
            if (gd && d > T(0) && d < T(1)) gd[i] -= go * s;
        }
    });
}

}  // namespace losses

/// Supervision for one volume on the network grid.
template <class T>
struct LossTargets {
    Tensor<T> onehot;    // (n_structures + 1) channels, background first
    Tensor<T> contour;   // n_structures channels
    Tensor<T> distance;  // n_structures channels
};

/// Per-term values of one evaluation of the combined objective. Terms whose
/// head is absent are empty.
struct LossBreakdown {
    double total = 0;
    double seg = 0;
    std::optional<double> contour, distance, penalty;

    bool all_finite() const {
        auto ok = [](const std::optional<double>& v) { return !v || std::isfinite(*v); };
        return std::isfinite(total) && std::isfinite(seg) && ok(contour) && ok(distance) && ok(penalty);
    }
    std::string describe() const {
        auto f = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("-"); };
        return "L=" + std::to_string(total) + " L_O=" + std::to_string(seg) + " L_C=" + f(contour) +
               " L_DT=" + f(distance) + " E_p=" + f(penalty);
    }
};

template <class T>
struct TotalLoss {
    Var<T> value;
    LossBreakdown breakdown;
};

/// lambda_1 L_O + lambda_2 L_C + lambda_3 L_DT + lambda_4 E_p, restricted to the
/// heads the variant has.
template <class T>
TotalLoss<T> total_loss(const ForwardOutputs<T>& out, const LossTargets<T>& targets, const LossWeights& lw,
                        Variant variant) {
    lw.validate();
    if (!out.seg_logits) throw std::invalid_argument("total_loss: missing segmentation logits");
    if (targets.onehot.empty()) throw std::invalid_argument("total_loss: missing one-hot target");

    std::vector<Var<T>> terms;
    std::vector<T> weights;
    LossBreakdown b;

    auto probs = ops::softmax_channels(out.seg_logits);
    auto l_seg = losses::generalized_dice(probs, targets.onehot, lw.gd_epsilon);
    terms.push_back(l_seg);
    weights.push_back(T(lw.seg));
    b.seg = double(l_seg->value[0]);

    if (has_ctn(variant)) {
        if (!out.contour_logits) throw std::invalid_argument("total_loss: variant expects contour logits");
        if (targets.contour.empty()) throw std::invalid_argument("total_loss: missing contour target for the contour head");
        auto l_c = losses::weighted_bce(*out.contour_logits, targets.contour, lw.bce_background, lw.bce_contour,
                                        lw.log_clamp);
        terms.push_back(l_c);
        weights.push_back(T(lw.contour));
        b.contour = double(l_c->value[0]);
    }
    if (has_dttn(variant)) {
        if (!out.dt_pred) throw std::invalid_argument("total_loss: variant expects distance predictions");
        if (targets.distance.empty())
            throw std::invalid_argument("total_loss: missing distance target for the distance head");
        auto l_dt = losses::mse(*out.dt_pred, targets.distance);
        terms.push_back(l_dt);
        weights.push_back(T(lw.distance));
        b.distance = double(l_dt->value[0]);
    }
    if (has_penalty(variant)) {
        auto e_p = losses::penalty_energy(*out.contour_logits, *out.dt_pred);
        terms.push_back(e_p);
        weights.push_back(T(lw.penalty));
        b.penalty = double(e_p->value[0]);
    }
    auto total = ops::weighted_sum(terms, weights);
    b.total = double(total->value[0]);
    return {total, b};
}

}  // namespace cdanet
