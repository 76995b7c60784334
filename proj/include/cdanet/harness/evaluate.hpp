#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdanet/harness/dataset.hpp"
#include "cdanet/metrics/report.hpp"
#include "cdanet/network/model.hpp"
#include "cdanet/preprocess/preprocess.hpp"

namespace cdanet {

/// Argmax segmentation on the network grid, as class indices.
inline Tensor<std::int32_t> predict_classes(const CdaNet<float>& model, const PreparedCase& c) {
    NoGradGuard ng;
    const auto out = model.forward(constant(c.input()));
    return argmax_channels(out.seg_logits->value);
}

/// Prediction mapped back to the native grid by nearest neighbour.
inline LabelVolume predict_labels(const CdaNet<float>& model, const PreparedCase& c, const LabelMap& map) {
    const auto net = LabelVolume::from_class_indices(predict_classes(model, c), map, c.image.spacing);
    LabelVolume native = resize(net, c.native_grid);
    native.spacing = c.native_spacing;
    return native;
}

/// Shape-aware attention map (1,D,H,W) on the network grid.
inline FeatureMap attention_map(const CdaNet<float>& model, const PreparedCase& c) {
    if (!has_shape_attention(model.variant()))
        throw std::invalid_argument("variant " + std::string(variant_name(model.variant())) +
                                    " has no shape-aware attention");
    NoGradGuard ng;
    const auto out = model.forward(constant(c.input()));
    return {(*out.attention)->value, FeatureRole::Attention};
}

struct EvaluationResult {
    MetricsReport per_case;
    MetricsReport summary;  // one "mean" row per structure
    std::map<std::string, std::map<std::string, int>> undefined;

    std::optional<double> wh_dsc() const {
        const auto* r = summary.find("mean", kWholeHeart);
        return r ? r->dsc : std::nullopt;
    }
};

/// Scores every case against its native-resolution ground truth.
inline EvaluationResult evaluate_cases(const CdaNet<float>& model, const std::vector<const PreparedCase*>& cases,
                                       const LabelMap& map) {
    EvaluationResult res;
    for (const PreparedCase* c : cases) {
        if (!c->native_labels) throw std::invalid_argument("case " + c->id + " has no ground truth to evaluate against");
        res.per_case.append(evaluate_case(predict_labels(model, *c, map), *c->native_labels, c->id));
    }
    res.summary = aggregate(res.per_case, "mean", &res.undefined);
    return res;
}

inline EvaluationResult evaluate_cases(const CdaNet<float>& model, const std::vector<PreparedCase>& cases,
                                       const LabelMap& map) {
    std::vector<const PreparedCase*> ptrs;
    for (const auto& c : cases) ptrs.push_back(&c);
    return evaluate_cases(model, ptrs, map);
}

/// per_case.{csv,json} and summary.{csv,json} under `dir`.
inline void write_evaluation(const EvaluationResult& r, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const auto p = std::filesystem::path(dir);
    r.per_case.write((p / "per_case.csv").string(), (p / "per_case.json").string());
    r.summary.write((p / "summary.csv").string(), (p / "summary.json").string());
}

}  // namespace cdanet
