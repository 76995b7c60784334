#pragma once

// Finite-difference checks of loss terms through a whole double-precision model.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cdanet/losses/losses.hpp"
#include "cdanet/network/model.hpp"
#include "support/gradcheck.hpp"

namespace cdanet::testing {

enum class LossTerm { Seg, Contour, Distance, Penalty, Total };

inline const char* term_name(LossTerm t) {
    switch (t) {
        case LossTerm::Seg: return "L_O";
        case LossTerm::Contour: return "L_C";
        case LossTerm::Distance: return "L_DT";
        case LossTerm::Penalty: return "E_p";
        case LossTerm::Total: return "L";
    }
    return "?";
}

/// Toy problem: 8^3 input, 3 structures (4 segmentation channels), depth 2.
struct ToyProblem {
    CdaNet<double> model;
    Tensor<double> input;
    LossTargets<double> targets;

    explicit ToyProblem(std::uint64_t seed, Variant v = Variant::BaseCtnDttnPenalty)
        : model(make_spec(seed, v)) {
        std::mt19937_64 rng(seed + 1000);
        input = random_tensor({1, 8, 8, 8}, rng, 0, 1);
        const Grid3 g{8, 8, 8};
        targets.onehot = Tensor<double>::stack(4, g);
        std::uniform_int_distribution<int> pick(0, 3);
        for (std::size_t i = 0; i < g.numel(); ++i) targets.onehot[std::size_t(pick(rng)) * g.numel() + i] = 1;
        targets.contour = Tensor<double>::stack(3, g);
        std::bernoulli_distribution b(0.3);
        for (auto& x : targets.contour.values()) x = b(rng);
        targets.distance = random_tensor({3, 8, 8, 8}, rng, 0, 2);
        // Zero-initialised biases behind all-zero ReLU features put raw distance
        // outputs exactly on the clamp kink at 0; random biases move them off it.
        std::uniform_real_distribution<double> ub(-0.5, 0.5);
        for (const auto& np : model.parameters().all())
            if (np.name.size() > 5 && np.name.compare(np.name.size() - 5, 5, ".bias") == 0)
                for (auto& v : np.var->value.values()) v = ub(rng);
    }

    static ModelVariantSpec make_spec(std::uint64_t seed, Variant v) {
        ModelVariantSpec s;
        s.variant = v;
        s.base_channels = 2;
        s.depth = 2;
        s.n_structures = 3;
        s.n_seg_classes = 4;
        s.input_grid = {8, 8, 8};
        s.init_seed = seed;
        return s;
    }

    Var<double> loss(LossTerm term) const {
        const auto out = model.forward(constant(input));
        const LossWeights lw;
        switch (term) {
            case LossTerm::Seg:
                return losses::generalized_dice(ops::softmax_channels(out.seg_logits), targets.onehot, lw.gd_epsilon);
            case LossTerm::Contour:
                return losses::weighted_bce(*out.contour_logits, targets.contour, lw.bce_background, lw.bce_contour,
                                            lw.log_clamp);
            case LossTerm::Distance: return losses::mse(*out.dt_pred, targets.distance);
            case LossTerm::Penalty: return losses::penalty_energy(*out.contour_logits, *out.dt_pred);
            case LossTerm::Total: return total_loss(out, targets, lw, model.variant()).value;
        }
        return {};
    }
};

/// Compares analytic and central-difference gradients at `samples` random
/// (parameter, entry) positions. Only parameters the term depends on are drawn.
inline std::vector<GradSample> check_model_term(ToyProblem& p, LossTerm term, int samples, std::uint64_t seed) {
    auto& params = p.model.parameters();
    params.zero_grad();
    backward(p.loss(term));
    std::vector<NamedParameter<double>> live;
    for (const auto& np : params.all())
        if (!np.var->grad.empty()) live.push_back(np);
    std::mt19937_64 rng(seed);
    std::vector<GradSample> out;
    for (int s = 0; s < samples; ++s) {
        const auto& np = live[std::uniform_int_distribution<std::size_t>(0, live.size() - 1)(rng)];
        const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, np.var->value.size() - 1)(rng);
        auto g = check_entry([&] { return p.loss(term); }, np.var, idx, 1e-6);
        g.where = np.name + "[" + std::to_string(idx) + "]";
        out.push_back(g);
    }
    return out;
}

}  // namespace cdanet::testing
