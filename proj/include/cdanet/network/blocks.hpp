#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdanet/network/layers.hpp"

namespace cdanet {

/// Learned gates, or every gate pinned to exactly 1.
enum class GateMode { Learned, Unit };

/// Grouped 3x3x3 convolution, pointwise 1x1x1 projection, normalisation, ReLU.
/// `groups` defaults to the input channel count (depthwise).
template <class T>
struct SeparableConvBlock {
    Conv<T> spatial, pointwise;
    InstanceNorm<T> norm;
    int in_channels = 0, out_channels = 0;

    SeparableConvBlock() = default;
    SeparableConvBlock(ParameterRegistry<T>& reg, const std::string& name, int cin, int cout, int groups = 0)
        : in_channels(cin), out_channels(cout) {
        if (groups == 0) groups = cin;
        if (groups < 0 || cin % groups != 0)
            throw std::invalid_argument(name + ": " + std::to_string(cin) + " input channels not divisible into " +
                                        std::to_string(groups) + " groups");
        spatial = Conv<T>(reg, name + ".spatial", cin, cin, 3, groups, false);
        pointwise = Conv<T>(reg, name + ".pointwise", cin, cout, 1, 1, false);
        norm = InstanceNorm<T>(reg, name + ".norm", cout);
    }

    Var<T> operator()(const Var<T>& x) const {
        if (x->value.channels() != in_channels)
            throw std::invalid_argument("separable block expects " + std::to_string(in_channels) + " channels, got " +
                                        std::to_string(x->value.channels()));
        return ops::relu(norm(pointwise(spatial(x))));
    }
};

/// Squeeze-and-excitation style channel gate: pooled descriptor -> bottleneck MLP -> sigmoid.
template <class T>
struct ChannelGate {
    Conv<T> reduce, expand;

    ChannelGate() = default;
    ChannelGate(ParameterRegistry<T>& reg, const std::string& name, int channels, int reduction = 2) {
        const int hidden = std::max(1, channels / reduction);
        reduce = Conv<T>(reg, name + ".reduce", channels, hidden, 1);
        expand = Conv<T>(reg, name + ".expand", hidden, channels, 1);
    }

    /// Returns (C,1,1,1) gates in (0,1).
    Var<T> operator()(const Var<T>& x) const {
        return ops::sigmoid(expand(ops::relu(reduce(ops::global_avg_pool(x)))));
    }
};

/// Single-level encoder-decoder of separable blocks followed by channel attention.
/// Output grid equals the input grid; dims must be even.
template <class T>
struct VTransition {
    SeparableConvBlock<T> encode, bottom, decode;
    ChannelGate<T> gate;
    int out_channels = 0;

    VTransition() = default;
    VTransition(ParameterRegistry<T>& reg, const std::string& name, int cin, int cout)
        : encode(reg, name + ".encode", cin, cout),
          bottom(reg, name + ".bottom", cout, cout),
          decode(reg, name + ".decode", 2 * cout, cout),
          gate(reg, name + ".gate", cout),
          out_channels(cout) {}

    /// Features before channel attention.
    Var<T> ungated(const Var<T>& x) const {
        const Grid3 g = x->value.grid();
        if (g.d % 2 || g.h % 2 || g.w % 2)
            throw std::invalid_argument("V-transition needs even spatial dims, got " + grid_str(g));
        auto e = encode(x);
        auto b = bottom(ops::max_pool2(e));
        return decode(ops::concat<T>({e, ops::resize(b, g)}));
    }

    Var<T> operator()(const Var<T>& x, GateMode mode = GateMode::Learned) const {
        auto h = ungated(x);
        if (mode == GateMode::Unit) return ops::scale_channels(h, constant(Tensor<T>({out_channels, 1, 1, 1}, T(1))));
        return ops::scale_channels(h, gate(h));
    }
};

/// Channel gate from max- and average-pooled descriptors through a shared MLP,
/// then a spatial gate from channel-pooled maps.
template <class T>
struct Cbam {
    Conv<T> mlp_reduce, mlp_expand, spatial;

    struct Result {
        Var<T> output, channel_gate, spatial_gate;
    };

    Cbam() = default;
    Cbam(ParameterRegistry<T>& reg, const std::string& name, int channels, int reduction = 2, int spatial_kernel = 7) {
        const int hidden = std::max(1, channels / reduction);
        mlp_reduce = Conv<T>(reg, name + ".mlp_reduce", channels, hidden, 1);
        mlp_expand = Conv<T>(reg, name + ".mlp_expand", hidden, channels, 1);
        spatial = Conv<T>(reg, name + ".spatial", 2, 1, spatial_kernel);
    }

    Result forward(const Var<T>& x, GateMode mode = GateMode::Learned) const {
        const int C = x->value.channels();
        const Grid3 g = x->value.grid();
        Var<T> cg, sg;
        if (mode == GateMode::Unit) {
            cg = constant(Tensor<T>({C, 1, 1, 1}, T(1)));
        } else {
            auto mlp = [&](const Var<T>& d) { return mlp_expand(ops::relu(mlp_reduce(d))); };
            cg = ops::sigmoid(ops::add(mlp(ops::global_avg_pool(x)), mlp(ops::global_max_pool(x))));
        }
        auto xc = ops::scale_channels(x, cg);
        if (mode == GateMode::Unit) {
            sg = constant(Tensor<T>::stack(1, g, T(1)));
        } else {
            sg = ops::sigmoid(spatial(ops::concat<T>({ops::channel_mean(xc), ops::channel_max(xc)})));
        }
        return {ops::mul_broadcast(xc, sg), cg, sg};
    }
    Var<T> operator()(const Var<T>& x, GateMode mode = GateMode::Learned) const { return forward(x, mode).output; }
};

/// Spatial attention built from backbone features plus contour probabilities
/// and/or predicted distance maps: A = sigmoid(conv(f_i; f_c; f_dt)), f_o = f_i * A.
template <class T>
struct ShapeAwareAttention {
    Conv<T> mix, score;
    int feature_channels = 0, contour_channels = 0, distance_channels = 0;

    struct Result {
        Var<T> output;     // f_o, same shape as f_i
        Var<T> attention;  // A, (1,D,H,W)
    };

    ShapeAwareAttention() = default;
    ShapeAwareAttention(ParameterRegistry<T>& reg, const std::string& name, int feat, int contour, int distance)
        : feature_channels(feat), contour_channels(contour), distance_channels(distance) {
        const int cin = feat + contour + distance;
        mix = Conv<T>(reg, name + ".mix", cin, feat, 3);
        score = Conv<T>(reg, name + ".score", feat, 1, 1);
    }

    Result forward(const Var<T>& f_i, const std::optional<Var<T>>& f_c, const std::optional<Var<T>>& f_dt) const {
        const Grid3 g = f_i->value.grid();
        std::vector<Var<T>> parts{f_i};
        auto take = [&](const std::optional<Var<T>>& f, int channels, const char* what) {
            if (channels == 0) return;
            if (!f) throw std::invalid_argument(std::string("shape-aware attention needs ") + what);
            if ((*f)->value.grid() != g)
                throw std::invalid_argument(std::string("shape-aware attention: ") + what + " grid " +
                                            grid_str((*f)->value.grid()) + " differs from feature grid " + grid_str(g));
            if ((*f)->value.channels() != channels)
                throw std::invalid_argument(std::string("shape-aware attention: wrong channel count for ") + what);
            parts.push_back(*f);
        };
        if (f_i->value.channels() != feature_channels)
            throw std::invalid_argument("shape-aware attention: wrong feature channel count");
        take(f_c, contour_channels, "contour features");
        take(f_dt, distance_channels, "distance features");
        auto a = ops::sigmoid(score(ops::relu(mix(ops::concat(parts)))));
        return {ops::mul_broadcast(f_i, a), a};
    }
};

}  // namespace cdanet
