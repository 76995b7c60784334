#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdanet/network/layers.hpp"

namespace cdanet {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
        if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw std::invalid_argument("betas must lie in [0,1)");
        if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
    }
};

/// Adam over every parameter of a registry; moments are kept in double.
template <class T>
class Adam {
public:
    Adam(const ParameterRegistry<T>& params, AdamConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        for (const auto& p : params.all()) {
            vars_.push_back(p.var);
            m_.emplace_back(p.var->value.size(), 0.0);
            v_.emplace_back(p.var->value.size(), 0.0);
        }
    }

    const AdamConfig& config() const { return cfg_; }
    std::int64_t steps() const { return t_; }

    /// Applies one update from the gradients currently held by the parameters.
    /// Parameters without a gradient still age their moments.
    void step() {
        ++t_;
        const double bc1 = 1 - std::pow(cfg_.beta1, double(t_));
        const double bc2 = 1 - std::pow(cfg_.beta2, double(t_));
        for (std::size_t k = 0; k < vars_.size(); ++k) {
            auto& node = *vars_[k];
            auto& m = m_[k];
            auto& v = v_[k];
            const bool has = !node.grad.empty();
            for (std::size_t i = 0; i < m.size(); ++i) {
                const double g = has ? double(node.grad[i]) : 0.0;
                m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g * g;
                const double upd = cfg_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.epsilon);
                node.value[i] = static_cast<T>(double(node.value[i]) - upd);
            }
        }
    }

    // State access for checkpoints.
    std::vector<std::vector<double>>& first_moments() { return m_; }
    std::vector<std::vector<double>>& second_moments() { return v_; }
    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }
    void set_steps(std::int64_t t) { t_ = t; }

private:
    std::vector<Var<T>> vars_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace cdanet
