#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdanet/metrics/metrics.hpp"

namespace cdanet {

inline constexpr const char* kWholeHeart = "WH";

/// One (case, structure) line of a report. Empty optionals mark undefined metrics.
struct MetricsRow {
    std::string case_id;
    std::string structure;
    std::optional<double> dsc, ji, hd95, assd, sensitivity, precision;
};

inline constexpr const char* kMetricColumns[] = {"dsc", "ji", "hd95", "assd", "sensitivity", "precision"};

inline std::optional<double> metric_value(const MetricsRow& r, const std::string& col) {
    if (col == "dsc") return r.dsc;
    if (col == "ji") return r.ji;
    if (col == "hd95") return r.hd95;
    if (col == "assd") return r.assd;
    if (col == "sensitivity") return r.sensitivity;
    if (col == "precision") return r.precision;
    throw std::invalid_argument("unknown metric column " + col);
}

inline std::optional<double>& metric_slot(MetricsRow& r, const std::string& col) {
    if (col == "dsc") return r.dsc;
    if (col == "ji") return r.ji;
    if (col == "hd95") return r.hd95;
    if (col == "assd") return r.assd;
    if (col == "sensitivity") return r.sensitivity;
    if (col == "precision") return r.precision;
    throw std::invalid_argument("unknown metric column " + col);
}

inline MetricsRow score_masks(const std::string& case_id, const std::string& structure, const Mask& pred, const Mask& gt) {
    MetricsRow r{case_id, structure, {}, {}, {}, {}, {}, {}};
    r.dsc = dsc(pred, gt);
    r.ji = jaccard(pred, gt);
    r.hd95 = hd95(pred, gt);
    r.assd = assd(pred, gt);
    const auto sp = sensitivity_precision(pred, gt);
    r.sensitivity = sp.sensitivity;
    r.precision = sp.precision;
    return r;
}

/// Per-structure rows in label-map order followed by the whole-heart row.
struct MetricsReport {
    std::vector<MetricsRow> rows;

    const MetricsRow* find(const std::string& case_id, const std::string& structure) const {
        for (const auto& r : rows)
            if (r.case_id == case_id && r.structure == structure) return &r;
        return nullptr;
    }

    void append(const MetricsReport& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }

    std::string to_csv() const {
        std::string s = "case_id,structure";
        for (const char* c : kMetricColumns) s += std::string(",") + c;
        s += "\n";
        for (const auto& r : rows) {
            s += r.case_id + "," + r.structure;
            for (const char* c : kMetricColumns) {
                const auto v = metric_value(r, c);
                char buf[64];
                if (v)
                    std::snprintf(buf, sizeof buf, ",%.6f", *v);
                else
                    std::snprintf(buf, sizeof buf, ",NA");
                s += buf;
            }
            s += "\n";
        }
        return s;
    }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : rows) {
            nlohmann::json j{{"case_id", r.case_id}, {"structure", r.structure}};
            for (const char* c : kMetricColumns) {
                const auto v = metric_value(r, c);
                j[c] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
            }
            arr.push_back(std::move(j));
        }
        return arr;
    }

    void write(const std::string& csv_path, const std::string& json_path) const {
        std::ofstream c(csv_path);
        if (!c) throw std::runtime_error("cannot write " + csv_path);
        c << to_csv();
        std::ofstream j(json_path);
        if (!j) throw std::runtime_error("cannot write " + json_path);
        j << to_json().dump(2) << "\n";
    }
};

/// Mean over rows per structure, skipping undefined values. `undefined`
/// receives, per structure and metric, how many rows were skipped.
inline MetricsReport aggregate(const MetricsReport& report, const std::string& label = "mean",
                               std::map<std::string, std::map<std::string, int>>* undefined = nullptr) {
    std::vector<std::string> order;
    std::map<std::string, std::map<std::string, std::pair<double, int>>> acc;
    for (const auto& r : report.rows) {
        if (!acc.count(r.structure)) order.push_back(r.structure);
        auto& a = acc[r.structure];
        for (const char* c : kMetricColumns) {
            auto& [sum, n] = a[c];
            if (auto v = metric_value(r, c)) {
                sum += *v;
                ++n;
            } else if (undefined) {
                ++(*undefined)[r.structure][c];
            }
        }
    }
    MetricsReport out;
    for (const auto& s : order) {
        MetricsRow row{label, s, {}, {}, {}, {}, {}, {}};
        for (const char* c : kMetricColumns) {
            const auto [sum, n] = acc[s][c];
            if (n > 0) metric_slot(row, c) = sum / n;
        }
        out.rows.push_back(row);
    }
    return out;
}

/// All six metrics per structure of `gt`'s label map plus the whole-heart union.
inline MetricsReport evaluate_case(const LabelVolume& pred, const LabelVolume& gt, const std::string& case_id = "case") {
    if (pred.voxels.shape() != gt.voxels.shape())
        throw std::invalid_argument("evaluate_case: prediction " + shape_str(pred.voxels.shape()) +
                                    " is not aligned with ground truth " + shape_str(gt.voxels.shape()));
    const auto pc = pred.class_indices(), gc = gt.class_indices();
    MetricsReport rep;
    for (int k = 1; k <= gt.label_map.size(); ++k)
        rep.rows.push_back(score_masks(case_id, gt.label_map.name(k), class_mask(pc, k), class_mask(gc, k)));
    rep.rows.push_back(score_masks(case_id, kWholeHeart, foreground_mask(pc), foreground_mask(gc)));
    return rep;
}

}  // namespace cdanet
