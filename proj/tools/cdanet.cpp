// cdanet: command-line front end for targets, phantoms, training, evaluation,
// prediction, ablation and attention export.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cdanet/harness/ablation.hpp"
#include "cdanet/harness/checkpoint.hpp"
#include "cdanet/harness/config.hpp"
#include "cdanet/harness/dataset.hpp"
#include "cdanet/harness/evaluate.hpp"
#include "cdanet/harness/trainer.hpp"
#include "cdanet/volume_io/phantom.hpp"

namespace fs = std::filesystem;
using namespace cdanet;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    bool quiet = false;
};

ExperimentConfig resolve_config(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
    for (const auto& o : c.overrides) apply_override(cfg, o);
    apply_environment(cfg);
    cfg.validate();
    return cfg;
}

Logger logger(const Common& c) { return c.quiet ? null_logger() : stderr_logger(); }

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<const PreparedCase*> pick_cases(const LoadedData& data, const std::string& list) {
    if (list.empty()) {
        std::vector<const PreparedCase*> all;
        for (const auto& c : data.cases) all.push_back(&c);
        return all;
    }
    return data.select(split_list(list));
}

CdaNet<float> model_from_checkpoint(const ExperimentConfig& cfg, const std::string& path) {
    CdaNet<float> model(cfg.model);
    load_checkpoint(path, model);
    return model;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CDA-Net cardiac segmentation: targets, phantoms, training, evaluation and ablation"};
    app.name("cdanet");
    app.require_subcommand(1);
    app.fallthrough();
    Common common;
    app.add_option("--config", common.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    app.add_option("--set", common.overrides, "Override a config key, section.key=value (repeatable)");
    app.add_flag("-q,--quiet", common.quiet, "Suppress progress messages");

    // make-targets
    auto* mk = app.add_subcommand("make-targets", "Precompute contour and distance targets into the cache");

    // phantom
    auto* ph = app.add_subcommand("phantom", "Write synthetic phantom volumes");
    std::uint64_t ph_seed = 0;
    int ph_size = 32, ph_count = 1, ph_structures = 3;
    std::string ph_out;
    ph->add_option("--seed", ph_seed, "Seed of the first phantom")->capture_default_str();
    ph->add_option("--size", ph_size, "Edge length of the cubic grid (>= 16)")->capture_default_str();
    ph->add_option("--count", ph_count, "Number of phantoms (seeds seed, seed+1, ...)")->capture_default_str();
    ph->add_option("--structures", ph_structures, "Number of labelled structures")->capture_default_str();
    ph->add_option("--out", ph_out, "Output directory")->required();

    // train
    auto* tr = app.add_subcommand("train", "Train one model");
    int tr_fold = -1;
    std::string tr_resume, tr_out;
    tr->add_option("--fold", tr_fold, "Cross-validation fold; -1 trains and validates on every case")
        ->capture_default_str();
    tr->add_option("--resume", tr_resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
    tr->add_option("--out", tr_out, "Run directory (default <output_root>/train[/fold<k>])");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Score a checkpoint against ground truth at native resolution");
    std::string ev_ckpt, ev_cases, ev_out;
    ev->add_option("--checkpoint", ev_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--cases", ev_cases, "Comma-separated case ids (default: all)");
    ev->add_option("--out", ev_out, "Report directory (default <output_root>/eval)");

    // predict
    auto* pr = app.add_subcommand("predict", "Write label volumes predicted by a checkpoint");
    std::string pr_ckpt, pr_cases, pr_out;
    pr->add_option("--checkpoint", pr_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
    pr->add_option("--cases", pr_cases, "Comma-separated case ids (default: all)");
    pr->add_option("--out", pr_out, "Output directory (default <output_root>/predictions)");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Cross-validate several variants on shared folds");
    std::string ab_variants, ab_out;
    ab->add_option("--variants", ab_variants, "Comma-separated variant names (default: all six)");
    ab->add_option("--out", ab_out, "Output directory (default <output_root>/ablation)");

    // export-attention
    auto* ea = app.add_subcommand("export-attention", "Write the shape-aware attention map of one case");
    std::string ea_ckpt, ea_case, ea_out;
    ea->add_option("--checkpoint", ea_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
    ea->add_option("--case", ea_case, "Case id")->required();
    ea->add_option("--out", ea_out, "Output volume (.nii or .nii.gz)")->required();

    if (argc < 2) {
        std::cerr << app.help() << "\n";
        return 2;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << "\n" << app.help() << "\n";
        return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
    }

    try {
        const Logger log = logger(common);

        if (*ph) {
            const Grid3 g{ph_size, ph_size, ph_size};
            for (int i = 0; i < ph_count; ++i) {
                const std::uint64_t seed = ph_seed + std::uint64_t(i);
                const auto p = generate_phantom(seed, g, ph_structures);
                char id[48];
                std::snprintf(id, sizeof id, "phantom_%03llu", static_cast<unsigned long long>(seed));
                write_case(ph_out, id, p.image, p.labels);
                if (i == 0) p.labels.label_map.save((fs::path(ph_out) / kLabelMapFile).string());
                log(std::string("wrote ") + id);
            }
            return 0;
        }

        const ExperimentConfig cfg = resolve_config(common);

        if (*mk) {
            PrepareOptions opt{false, true, log};
            const auto data = load_data(cfg, opt);
            log("targets ready for " + std::to_string(data.cases.size()) + " cases");
            return 0;
        }

        PrepareOptions opt{true, false, log};

        if (*tr) {
            const auto data = load_data(cfg, opt);
            const Fold f = fold_ids(cfg, data.ids(), tr_fold);
            TrainOptions to;
            to.log = log;
            to.resume = tr_resume;
            to.out_dir = !tr_out.empty() ? tr_out
                         : tr_fold < 0   ? (fs::path(cfg.output_root) / "train").string()
                                         : (fs::path(cfg.output_root) / "train" / ("fold" + std::to_string(tr_fold))).string();
            fs::create_directories(to.out_dir);
            save_config(cfg, (fs::path(to.out_dir) / "config.json").string());
            CdaNet<float> model(cfg.model);
            Adam<float> adam(model.parameters(), cfg.optimizer);
            const auto r = train_model(model, adam, cfg, data.select(f.train_ids), data.select(f.val_ids), data.map, to);
            std::cout << "steps " << r.state.step << ", best validation WH DSC "
                      << (r.state.best_val_dsc ? std::to_string(*r.state.best_val_dsc) : "NA") << " at step "
                      << r.state.best_step << "\n"
                      << "best checkpoint " << r.best_checkpoint << "\n";
            return 0;
        }

        if (*ev) {
            const auto data = load_data(cfg, opt);
            const auto model = model_from_checkpoint(cfg, ev_ckpt);
            const auto res = evaluate_cases(model, pick_cases(data, ev_cases), data.map);
            const std::string out = ev_out.empty() ? (fs::path(cfg.output_root) / "eval").string() : ev_out;
            write_evaluation(res, out);
            std::cout << res.summary.to_csv();
            return 0;
        }

        if (*pr) {
            const auto data = load_data(cfg, opt);
            const auto model = model_from_checkpoint(cfg, pr_ckpt);
            const std::string out = pr_out.empty() ? (fs::path(cfg.output_root) / "predictions").string() : pr_out;
            fs::create_directories(out);
            for (const auto* c : pick_cases(data, pr_cases)) {
                const auto path = (fs::path(out) / (c->id + "_pred.nii.gz")).string();
                save_prediction(predict_labels(model, *c, data.map), path);
                log("wrote " + path);
            }
            return 0;
        }

        if (*ab) {
            std::vector<Variant> variants;
            if (ab_variants.empty())
                variants.assign(kAllVariants.begin(), kAllVariants.end());
            else
                for (const auto& n : split_list(ab_variants)) variants.push_back(parse_variant(n));
            const auto data = load_data(cfg, opt);
            const std::string out = ab_out.empty() ? (fs::path(cfg.output_root) / "ablation").string() : ab_out;
            const auto table = run_ablation(cfg, variants, data, {out, log});
            std::cout << table.to_csv();
            return 0;
        }

        if (*ea) {
            const auto data = load_data(cfg, opt);
            const auto model = model_from_checkpoint(cfg, ea_ckpt);
            const auto* c = data.select({ea_case}).front();
            export_attention(attention_map(model, *c), ea_out, c->image.spacing);
            log("wrote " + ea_out);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
