#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdanet/core/autograd.hpp"
#include "cdanet/core/ops.hpp"

namespace cdanet {

template <class T>
struct NamedParameter {
    std::string name;
    Var<T> var;
};

/// Owns every trainable tensor of a model in registration order. Layers keep
/// shared handles to the same nodes.
template <class T>
class ParameterRegistry {
public:
    explicit ParameterRegistry(std::uint64_t seed) : rng_(seed) {}

    Var<T> add(const std::string& name, Tensor<T> init) {
        for (const auto& p : params_)
            if (p.name == name) throw std::logic_error("duplicate parameter name: " + name);
        auto v = parameter(std::move(init));
        params_.push_back({name, v});
        return v;
    }

    /// He-normal initialisation drawn in double so float and double models
    /// built from one seed start from the same weights up to rounding.
    Var<T> add_he(const std::string& name, Shape shape, std::size_t fan_in) {
        Tensor<T> t(std::move(shape));
        std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / double(std::max<std::size_t>(fan_in, 1))));
        for (auto& v : t.values()) v = static_cast<T>(nd(rng_));
        return add(name, std::move(t));
    }

    const std::vector<NamedParameter<T>>& all() const { return params_; }

    Var<T> find(const std::string& name) const {
        for (const auto& p : params_)
            if (p.name == name) return p.var;
        throw std::out_of_range("no parameter named " + name);
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.var->value.size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.var->zero_grad();
    }

private:
    std::mt19937_64 rng_;
    std::vector<NamedParameter<T>> params_;
};

/// Stride-1 "same" convolution with bias.
template <class T>
struct Conv {
    Var<T> weight, bias;
    int groups = 1;

    Conv() = default;
    Conv(ParameterRegistry<T>& reg, const std::string& name, int cin, int cout, int k, int groups_ = 1,
         bool with_bias = true)
        : groups(groups_) {
        if (cin <= 0 || cout <= 0) throw std::invalid_argument(name + ": channel counts must be positive");
        if (groups <= 0 || cin % groups != 0 || cout % groups != 0)
            throw std::invalid_argument(name + ": channels " + std::to_string(cin) + "->" + std::to_string(cout) +
                                        " are not divisible by " + std::to_string(groups) + " groups");
        const int cin_g = cin / groups;
        weight = reg.add_he(name + ".weight", {cout, cin_g, k, k, k}, std::size_t(cin_g) * k * k * k);
        if (with_bias) bias = reg.add(name + ".bias", Tensor<T>({cout}));
    }
    Var<T> operator()(const Var<T>& x) const { return ops::conv3d(x, weight, bias, groups); }
};

template <class T>
struct InstanceNorm {
    Var<T> gamma, beta;

    InstanceNorm() = default;
    InstanceNorm(ParameterRegistry<T>& reg, const std::string& name, int channels) {
        gamma = reg.add(name + ".gamma", Tensor<T>({channels}, T(1)));
        beta = reg.add(name + ".beta", Tensor<T>({channels}));
    }
    Var<T> operator()(const Var<T>& x) const { return ops::instance_norm(x, gamma, beta); }
};

/// Dense 3x3x3 convolution, instance normalisation, ReLU.
template <class T>
struct ConvNormAct {
    Conv<T> conv;
    InstanceNorm<T> norm;

    ConvNormAct() = default;
    ConvNormAct(ParameterRegistry<T>& reg, const std::string& name, int cin, int cout)
        : conv(reg, name + ".conv", cin, cout, 3, 1, false), norm(reg, name + ".norm", cout) {}
    Var<T> operator()(const Var<T>& x) const { return ops::relu(norm(conv(x))); }
};

}  // namespace cdanet
