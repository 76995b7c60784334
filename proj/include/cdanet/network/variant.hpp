#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "cdanet/core/autograd.hpp"

namespace cdanet {

/// Rows of the ablation grid.
enum class Variant { Base, BaseCbam, BaseCtn, BaseDttn, BaseCtnDttn, BaseCtnDttnPenalty };

inline constexpr std::array<Variant, 6> kAllVariants{Variant::Base,     Variant::BaseCbam,    Variant::BaseCtn,
                                                     Variant::BaseDttn, Variant::BaseCtnDttn, Variant::BaseCtnDttnPenalty};

inline std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::Base: return "base";
        case Variant::BaseCbam: return "base+CBAM";
        case Variant::BaseCtn: return "base+CTN";
        case Variant::BaseDttn: return "base+DTTN";
        case Variant::BaseCtnDttn: return "base+CTN+DTTN";
        case Variant::BaseCtnDttnPenalty: return "base+CTN+DTTN+penalty";
    }
    return "?";
}

inline Variant parse_variant(std::string_view name) {
    for (Variant v : kAllVariants)
        if (variant_name(v) == name) return v;
    std::string known;
    for (Variant v : kAllVariants) known += (known.empty() ? "" : ", ") + std::string(variant_name(v));
    throw std::invalid_argument("unknown variant '" + std::string(name) + "' (expected one of: " + known + ")");
}

inline bool has_ctn(Variant v) {
    return v == Variant::BaseCtn || v == Variant::BaseCtnDttn || v == Variant::BaseCtnDttnPenalty;
}
inline bool has_dttn(Variant v) {
    return v == Variant::BaseDttn || v == Variant::BaseCtnDttn || v == Variant::BaseCtnDttnPenalty;
}
inline bool has_shape_attention(Variant v) { return has_ctn(v) || has_dttn(v); }
inline bool has_cbam(Variant v) { return v == Variant::BaseCbam; }
inline bool has_penalty(Variant v) { return v == Variant::BaseCtnDttnPenalty; }

/// Everything one forward pass produces. Heads a variant lacks stay empty.
template <class T>
struct ForwardOutputs {
    Var<T> seg_logits;                     // (n_structures + 1, D, H, W)
    std::optional<Var<T>> contour_logits;  // (n_structures, D, H, W), pre-sigmoid
    std::optional<Var<T>> dt_pred;         // (n_structures, D, H, W), raw regression
    std::optional<Var<T>> attention;       // (1, D, H, W), in (0,1)
};

}  // namespace cdanet
