#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdanet/harness/checkpoint.hpp"
#include "cdanet/harness/config.hpp"
#include "cdanet/harness/dataset.hpp"
#include "cdanet/harness/evaluate.hpp"
#include "cdanet/harness/folds.hpp"
#include "cdanet/harness/optimizer.hpp"
#include "cdanet/preprocess/augment.hpp"

namespace cdanet {

/// Thrown when any loss term stops being finite; carries what is needed to
/// reproduce the step.
class NonFiniteLoss : public std::runtime_error {
public:
    NonFiniteLoss(std::int64_t step, std::string case_id, LossBreakdown b)
        : std::runtime_error("non-finite loss at step " + std::to_string(step) + " on case " + case_id + ": " +
                             b.describe()),
          step_(step), case_id_(std::move(case_id)), breakdown_(b) {}

    std::int64_t step() const { return step_; }
    const std::string& case_id() const { return case_id_; }
    const LossBreakdown& breakdown() const { return breakdown_; }

private:
    std::int64_t step_;
    std::string case_id_;
    LossBreakdown breakdown_;
};

struct StepRecord {
    std::int64_t step = 0;
    int epoch = 0;
    std::string case_id;
    LossBreakdown loss;
};

struct ValidationRecord {
    std::int64_t step = 0;
    std::optional<double> wh_dsc;
};

struct TrainOptions {
    std::string out_dir;  // empty: nothing is written
    std::string resume;   // checkpoint to continue from
    Logger log = null_logger();
};

struct TrainResult {
    std::vector<StepRecord> steps;
    std::vector<ValidationRecord> validations;
    TrainingState state;
    std::string best_checkpoint, last_checkpoint;
};

namespace train_detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t tag) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(a), std::uint32_t(a >> 32),
                      std::uint32_t(b), std::uint32_t(tag)};
    return std::mt19937_64(seq);
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.8g", v);
    return buf;
}
inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

inline nlohmann::json breakdown_json(const LossBreakdown& b) {
    auto o = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
    return {{"L", b.total}, {"L_O", b.seg}, {"L_C", o(b.contour)}, {"L_DT", o(b.distance)}, {"E_p", o(b.penalty)}};
}

}  // namespace train_detail

inline std::int64_t steps_per_epoch(std::size_t n_train, int batch_size) {
    return std::int64_t((n_train + std::size_t(batch_size) - 1) / std::size_t(batch_size));
}

inline std::int64_t planned_steps(const ExperimentConfig& cfg, std::size_t n_train) {
    std::int64_t total = std::int64_t(cfg.epochs) * steps_per_epoch(n_train, cfg.batch_size);
    if (cfg.max_steps > 0) total = std::min<std::int64_t>(total, cfg.max_steps);
    return total;
}

/// Case order of one epoch; a function of (seed, epoch) only, so a resumed
/// run replays the same schedule.
inline std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    auto rng = train_detail::stream(seed, std::uint64_t(epoch), 0, 1);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

/// Network input and targets for one step, augmented when enabled. A rotation
/// changes the labels, so its targets are recomputed; noise and cutout leave
/// the cached targets valid.
inline std::pair<Tensor<float>, LossTargets<float>> training_sample(const PreparedCase& c, const ExperimentConfig& cfg,
                                                                    std::mt19937_64& rng) {
    if (!cfg.augment || cfg.preprocess.augmentation_probability == 0) return {c.input(), c.targets};
    AugmentRecord rec;
    auto [img, lab] = augment(c.image, *c.labels, cfg.preprocess, rng, &rec);
    const Grid3 g = img.grid();
    Tensor<float> x = std::move(img.voxels).reshaped({1, g.d, g.h, g.w});
    if (!rec.rotation) return {std::move(x), c.targets};
    return {std::move(x), assemble_targets(lab, compute_target_stacks(lab))};
}

/// Adam on total_loss over `train`, validating on `val` by whole-heart DSC.
/// Writes train_log.csv, validation.csv, last.ckpt and best.ckpt to
/// options.out_dir when it is set.
inline TrainResult train_model(CdaNet<float>& model, Adam<float>& opt, const ExperimentConfig& cfg,
                               const std::vector<const PreparedCase*>& train,
                               const std::vector<const PreparedCase*>& val, const LabelMap& map,
                               const TrainOptions& options = {}) {
    using namespace train_detail;
    cfg.validate();
    if (train.empty()) throw std::invalid_argument("no training cases");
    for (const auto* c : train)
        if (!c->has_ground_truth()) throw std::invalid_argument("training case " + c->id + " has no labels");

    TrainResult res;
    if (!options.resume.empty()) {
        res.state = load_checkpoint(options.resume, model, &opt).state;
        emit(options.log, "resumed from " + options.resume + " at step " + std::to_string(res.state.step));
    }

    const bool files = !options.out_dir.empty();
    const std::filesystem::path dir(options.out_dir);
    std::ofstream log_csv, val_csv;
    if (files) {
        std::filesystem::create_directories(dir);
        const bool append = !options.resume.empty() && std::filesystem::exists(dir / "train_log.csv");
        const auto mode = append ? std::ios::app : std::ios::trunc;
        log_csv.open(dir / "train_log.csv", std::ios::out | mode);
        val_csv.open(dir / "validation.csv", std::ios::out | mode);
        if (!log_csv || !val_csv) throw std::runtime_error("cannot write logs under " + dir.string());
        if (!append) {
            log_csv << "step,epoch,case_id,L,L_O,L_C,L_DT,E_p\n";
            val_csv << "step,wh_dsc\n";
        }
        res.best_checkpoint = (dir / "best.ckpt").string();
        res.last_checkpoint = (dir / "last.ckpt").string();
    }

    const std::int64_t spe = steps_per_epoch(train.size(), cfg.batch_size);
    const std::int64_t total = planned_steps(cfg, train.size());
    auto& params = model.parameters();

    auto validate_now = [&](std::int64_t step) {
        ValidationRecord v{step, {}};
        if (!val.empty()) v.wh_dsc = evaluate_cases(model, val, map).wh_dsc();
        res.validations.push_back(v);
        if (files) val_csv << step << "," << fmt(v.wh_dsc) << std::endl;
        emit(options.log, "step " + std::to_string(step) + " validation WH DSC " + (v.wh_dsc ? fmt(*v.wh_dsc) : "NA"));
        const double score = v.wh_dsc.value_or(-1.0);
        if (!res.state.best_val_dsc || score > *res.state.best_val_dsc) {
            res.state.best_val_dsc = score;
            res.state.best_step = step;
            if (files) save_checkpoint(res.best_checkpoint, model, opt, res.state);
        }
    };

    std::vector<std::size_t> order;
    int order_epoch = -1;
    for (std::int64_t s = res.state.step; s < total; ++s) {
        const int epoch = int(s / spe);
        if (epoch != order_epoch) {
            order = epoch_order(cfg.seed, epoch, train.size());
            order_epoch = epoch;
        }
        const std::size_t first = std::size_t(s % spe) * std::size_t(cfg.batch_size);
        const std::size_t last = std::min(first + std::size_t(cfg.batch_size), train.size());

        params.zero_grad();
        for (std::size_t b = first; b < last; ++b) {
            const PreparedCase& c = *train[order[b]];
            auto rng = stream(cfg.seed, std::uint64_t(s), b - first, 2);
            auto [x, targets] = training_sample(c, cfg, rng);
            const auto out = model.forward(constant(std::move(x)));
            auto loss = total_loss(out, targets, cfg.loss, model.variant());
            if (!loss.breakdown.all_finite()) {
                if (files) {
                    std::ofstream d(dir / "nonfinite.json");
                    d << nlohmann::json{{"step", s}, {"epoch", epoch}, {"case_id", c.id},
                                        {"loss", breakdown_json(loss.breakdown)}}
                             .dump(2)
                      << "\n";
                }
                throw NonFiniteLoss(s, c.id, loss.breakdown);
            }
            backward(loss.value);
            res.steps.push_back({s, epoch, c.id, loss.breakdown});
            if (files) {
                const auto& l = loss.breakdown;
                log_csv << s << "," << epoch << "," << c.id << "," << fmt(l.total) << "," << fmt(l.seg) << ","
                        << fmt(l.contour) << "," << fmt(l.distance) << "," << fmt(l.penalty) << "\n";
            }
        }
        if (const std::size_t n = last - first; n > 1)
            for (const auto& p : params.all())
                if (!p.var->grad.empty())
                    for (auto& g : p.var->grad.values()) g /= float(n);
        opt.step();
        res.state.step = s + 1;

        const bool epoch_end = (s + 1) % spe == 0;
        const bool due = cfg.eval_every > 0 ? (s + 1) % cfg.eval_every == 0 : epoch_end;
        if (due || s + 1 == total) {
            if (files) log_csv.flush();
            validate_now(s + 1);
        }
    }
    if (files) save_checkpoint(res.last_checkpoint, model, opt, res.state);
    return res;
}

/// Cases of one run, discovered under cfg.data_root and prepared through the cache.
struct LoadedData {
    LabelMap map;
    std::vector<PreparedCase> cases;

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& c : cases) out.push_back(c.id);
        return out;
    }
    std::vector<const PreparedCase*> select(const std::vector<std::string>& ids) const {
        std::vector<const PreparedCase*> out;
        for (const auto& id : ids) {
            const PreparedCase* hit = nullptr;
            for (const auto& c : cases)
                if (c.id == id) hit = &c;
            if (!hit) throw std::invalid_argument("unknown case " + id);
            out.push_back(hit);
        }
        return out;
    }
};

inline LoadedData load_data(const ExperimentConfig& cfg, const PrepareOptions& opt) {
    LoadedData d;
    d.map = resolve_label_map(cfg);
    const auto files = discover_cases(cfg.data_root);
    if (files.empty()) throw std::runtime_error("no *_image.nii[.gz] files under " + cfg.data_root);
    d.cases = prepare_cases(files, cfg, d.map, opt);
    return d;
}

/// Training and validation ids: fold `fold` of split_folds, or every case for
/// both when fold < 0.
inline Fold fold_ids(const ExperimentConfig& cfg, const std::vector<std::string>& ids, int fold) {
    if (fold < 0) return {ids, ids};
    const auto folds = split_folds(ids, cfg.n_folds, cfg.seed);
    if (fold >= int(folds.size()))
        throw std::invalid_argument("fold " + std::to_string(fold) + " out of range for " +
                                    std::to_string(folds.size()) + " folds");
    return folds[std::size_t(fold)];
}

}  // namespace cdanet
