#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdanet/harness/trainer.hpp"

namespace cdanet {

struct AblationRow {
    Variant variant = Variant::Base;
    MetricsReport summary;            // validation means over all folds' cases
    MetricsReport per_case;           // every validation case of every fold
    std::optional<double> untrained_wh_dsc;  // same folds, initial weights
};

/// Rows are variants; columns are `<structure>_<metric>` for every structure
/// of the label map and the whole heart.
struct AblationTable {
    std::vector<std::string> structures;  // label-map order, WH last
    std::vector<AblationRow> rows;

    std::vector<std::string> columns() const {
        std::vector<std::string> cols;
        for (const auto& s : structures)
            for (const char* m : kMetricColumns) cols.push_back(s + "_" + m);
        return cols;
    }

    std::optional<double> value(const AblationRow& r, const std::string& structure, const std::string& metric) const {
        const auto* row = r.summary.find("mean", structure);
        return row ? metric_value(*row, metric) : std::nullopt;
    }

    const AblationRow& row(Variant v) const {
        for (const auto& r : rows)
            if (r.variant == v) return r;
        throw std::out_of_range("no ablation row for " + std::string(variant_name(v)));
    }

    std::string to_csv() const {
        std::string s = "variant";
        for (const auto& c : columns()) s += "," + c;
        s += ",untrained_WH_dsc\n";
        auto put = [&](const std::optional<double>& v) {
            char buf[32];
            if (v)
                std::snprintf(buf, sizeof buf, ",%.6f", *v);
            else
                std::snprintf(buf, sizeof buf, ",NA");
            s += buf;
        };
        for (const auto& r : rows) {
            s += std::string(variant_name(r.variant));
            for (const auto& st : structures)
                for (const char* m : kMetricColumns) put(value(r, st, m));
            put(r.untrained_wh_dsc);
            s += "\n";
        }
        return s;
    }
};

struct AblationOptions {
    std::string out_dir;  // empty: nothing is written
    Logger log = null_logger();
};

/// Trains and validates every variant on the same folds with the same seed.
inline AblationTable run_ablation(const ExperimentConfig& base_cfg, const std::vector<Variant>& variants,
                                  const LoadedData& data, const AblationOptions& options = {}) {
    if (variants.empty()) throw std::invalid_argument("run_ablation needs at least one variant");
    base_cfg.validate();
    const auto folds = split_folds(data.ids(), base_cfg.n_folds, base_cfg.seed);

    AblationTable table;
    for (int k = 1; k <= data.map.size(); ++k) table.structures.push_back(data.map.name(k));
    table.structures.push_back(kWholeHeart);

    for (const Variant v : variants) {
        ExperimentConfig cfg = base_cfg;
        cfg.model.variant = v;
        AblationRow row;
        row.variant = v;
        MetricsReport untrained;
        for (std::size_t f = 0; f < folds.size(); ++f) {
            const auto train = data.select(folds[f].train_ids);
            const auto val = data.select(folds[f].val_ids);
            CdaNet<float> model(cfg.model);
            untrained.append(evaluate_cases(model, val, data.map).per_case);
            Adam<float> opt(model.parameters(), cfg.optimizer);
            TrainOptions to;
            to.log = options.log;
            if (!options.out_dir.empty())
                to.out_dir = (std::filesystem::path(options.out_dir) / std::string(variant_name(v)) /
                              ("fold" + std::to_string(f)))
                                 .string();
            train_model(model, opt, cfg, train, val, data.map, to);
            const auto ev = evaluate_cases(model, val, data.map);
            row.per_case.append(ev.per_case);
            emit(options.log, std::string(variant_name(v)) + " fold " + std::to_string(f) + " WH DSC " +
                        (ev.wh_dsc() ? std::to_string(*ev.wh_dsc()) : "NA"));
        }
        row.summary = aggregate(row.per_case);
        if (const auto* u = aggregate(untrained).find("mean", kWholeHeart)) row.untrained_wh_dsc = u->dsc;
        table.rows.push_back(std::move(row));
    }
    if (!options.out_dir.empty()) {
        std::filesystem::create_directories(options.out_dir);
        std::ofstream f(std::filesystem::path(options.out_dir) / "ablation.csv");
        if (!f) throw std::runtime_error("cannot write ablation table under " + options.out_dir);
        f << table.to_csv();
    }
    return table;
}

}  // namespace cdanet
