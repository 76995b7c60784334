#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "cdanet/network/backbone.hpp"
#include "cdanet/network/blocks.hpp"
#include "cdanet/network/variant.hpp"

namespace cdanet {

/// Architecture description; embedded in checkpoints.
struct ModelVariantSpec {
    Variant variant = Variant::BaseCtnDttnPenalty;
    int base_channels = 16;
    int depth = 3;
    int n_structures = 7;
    int n_seg_classes = 8;
    Grid3 input_grid{64, 128, 128};
    std::uint64_t init_seed = 0;

    void validate() const {
        if (base_channels < 1) throw std::invalid_argument("base_channels must be positive");
        if (depth < 1) throw std::invalid_argument("depth must be at least 1");
        if (n_structures < 1) throw std::invalid_argument("n_structures must be positive");
        if (n_seg_classes != n_structures + 1)
            throw std::invalid_argument("n_seg_classes must equal n_structures + 1 (background is a class)");
        const int m = 1 << depth;
        if (input_grid.d <= 0 || input_grid.h <= 0 || input_grid.w <= 0 || input_grid.d % m || input_grid.h % m ||
            input_grid.w % m)
            throw std::invalid_argument("input grid " + grid_str(input_grid) + " must be positive and divisible by " +
                                        std::to_string(m));
    }
};

/// Contour- and distance-guided attention network and its ablations.
template <class T>
class CdaNet {
public:
    explicit CdaNet(const ModelVariantSpec& spec) : spec_(spec), params_(spec.init_seed) {
        spec_.validate();
        const Variant v = spec_.variant;
        const int c = spec_.base_channels;
        const int n = spec_.n_structures;
        backbone_ = UNetBackbone<T>(params_, 1, c, spec_.depth);
        if (has_cbam(v)) cbam_ = Cbam<T>(params_, "cbam", c);
        if (has_ctn(v)) {
            ctn_ = VTransition<T>(params_, "ctn.transition", backbone_.low_channels(), c);
            ctn_head_ = Conv<T>(params_, "ctn.head", c, n, 1);
        }
        if (has_dttn(v)) {
            dttn_ = VTransition<T>(params_, "dttn.transition", backbone_.high_channels(), c);
            dttn_head_ = Conv<T>(params_, "dttn.head", c, n, 1);
        }
        if (has_shape_attention(v))
            attention_ = ShapeAwareAttention<T>(params_, "attention", c, has_ctn(v) ? n : 0, has_dttn(v) ? n : 0);
        refine_ = VTransition<T>(params_, "refine", c, c);
        seg_head_ = Conv<T>(params_, "seg.head", c, spec_.n_seg_classes, 1);
    }

    CdaNet(const CdaNet&) = delete;
    CdaNet& operator=(const CdaNet&) = delete;
    CdaNet(CdaNet&&) = default;
    CdaNet& operator=(CdaNet&&) = default;

    const ModelVariantSpec& spec() const { return spec_; }
    Variant variant() const { return spec_.variant; }
    ParameterRegistry<T>& parameters() { return params_; }
    const ParameterRegistry<T>& parameters() const { return params_; }

    const UNetBackbone<T>& backbone() const { return backbone_; }
    const ShapeAwareAttention<T>& attention_module() const { return attention_; }
    const VTransition<T>& refine_module() const { return refine_; }

    /// Contour logits from low-level features.
    Var<T> ctn_forward(const Var<T>& low) const {
        if (!has_ctn(spec_.variant))
            throw std::logic_error("variant " + std::string(variant_name(spec_.variant)) + " has no contour head");
        return ctn_head_(ctn_(low));
    }

    /// Distance-map regression from high-level features.
    Var<T> dttn_forward(const Var<T>& high) const {
        if (!has_dttn(spec_.variant))
            throw std::logic_error("variant " + std::string(variant_name(spec_.variant)) + " has no distance head");
        return dttn_head_(dttn_(high));
    }

    /// `x` is a (1,D,H,W) normalised volume on the configured grid.
    ForwardOutputs<T> forward(const Var<T>& x) const {
        if (x->value.rank() != 4 || x->value.channels() != 1)
            throw std::invalid_argument("network input must be (1,D,H,W), got " + shape_str(x->value.shape()));
        if (x->value.grid() != spec_.input_grid)
            throw std::invalid_argument("input grid " + grid_str(x->value.grid()) + " does not match configured " +
                                        grid_str(spec_.input_grid));
        const Variant v = spec_.variant;
        ForwardOutputs<T> out;
        auto feats = backbone_.forward(x);
        Var<T> f = feats.dec;
        if (has_cbam(v)) f = cbam_(f);
        std::optional<Var<T>> f_c, f_dt;
        if (has_ctn(v)) {
            out.contour_logits = ctn_forward(feats.low);
            f_c = ops::sigmoid(*out.contour_logits);
        }
        if (has_dttn(v)) {
            out.dt_pred = dttn_forward(feats.high);
            f_dt = out.dt_pred;
        }
        if (has_shape_attention(v)) {
            auto r = attention_.forward(f, f_c, f_dt);
            f = r.output;
            out.attention = r.attention;
        }
        out.seg_logits = seg_head_(refine_(f));
        return out;
    }

private:
    ModelVariantSpec spec_;
    ParameterRegistry<T> params_;
    UNetBackbone<T> backbone_;
    Cbam<T> cbam_;
    VTransition<T> ctn_, dttn_, refine_;
    Conv<T> ctn_head_, dttn_head_, seg_head_;
    ShapeAwareAttention<T> attention_;
};

template <class T = float>
CdaNet<T> build_variant(const ModelVariantSpec& spec) {
    return CdaNet<T>(spec);
}

/// Wraps a (D,H,W) or (1,D,H,W) volume as network input and runs the model.
template <class T>
ForwardOutputs<T> cda_forward(const CdaNet<T>& model, const Tensor<T>& volume) {
    Tensor<T> x = volume.rank() == 3 ? volume.reshaped({1, volume.dim(0), volume.dim(1), volume.dim(2)}) : volume;
    return model.forward(constant(std::move(x)));
}

}  // namespace cdanet
