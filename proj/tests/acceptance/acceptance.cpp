// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Arguments select criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cdanet/harness/ablation.hpp"
#include "cdanet/harness/trainer.hpp"
#include "cdanet/metrics/metrics.hpp"
#include "cdanet/preprocess/edt.hpp"
#include "support/harness_fixtures.hpp"
#include "support/metric_oracles.hpp"
#include "support/model_gradcheck.hpp"

using namespace cdanet;
namespace ct = cdanet::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// 1 ----------------------------------------------------------------------------
Outcome edt_oracle() {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> dens(0.05, 0.95);
    const Grid3 g{12, 12, 12};
    double worst = 0;
    for (int t = 0; t < 50; ++t) {
        const Mask m = ct::random_mask(rng, g, dens(rng));
        ChannelMapStack s{Tensor<float>::stack(1, g), MapRole::OneHot};
        for (std::size_t i = 0; i < m.size(); ++i) s.values[i] = m[i] ? 1.f : 0.f;
        const auto fast = fdt_target(s);
        const auto slow = edt_bruteforce(m);
        for (std::size_t i = 0; i < m.size(); ++i) worst = std::max(worst, std::abs(double(fast.values[i]) - slow[i]));
    }
    return {worst <= 1e-6, "50 masks 12^3, max abs error " + fmt("%.3g", worst)};
}

// 2 ----------------------------------------------------------------------------
Outcome metric_oracles() {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> dens(0.02, 0.9);
    double worst = 0, identity = 0;
    bool defined_ok = true;
    for (int t = 0; t < 100; ++t) {
        const Mask x = ct::random_mask(rng, {8, 8, 8}, dens(rng));
        const Mask y = ct::random_mask(rng, {8, 8, 8}, dens(rng));
        const auto ref = ct::naive_metrics(x, y);
        auto cmp = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
        auto cmp_opt = [&](const std::optional<double>& a, const std::optional<double>& b) {
            if (a.has_value() != b.has_value()) defined_ok = false;
            else if (a) cmp(*a, *b);
        };
        const double d = dsc(x, y), j = jaccard(x, y);
        cmp(d, ref.dsc);
        cmp(j, ref.ji);
        cmp_opt(hd95(x, y), ref.hd95);
        cmp_opt(assd(x, y), ref.assd);
        const auto sp = sensitivity_precision(x, y);
        cmp_opt(sp.sensitivity, ref.sens);
        cmp_opt(sp.precision, ref.prec);
        identity = std::max(identity, std::abs(j - d / (2 - d)));
    }
    return {defined_ok && worst <= 1e-6 && identity <= 1e-12,
            "100 pairs 8^3, max deviation " + fmt("%.3g", worst) + ", JI identity residual " + fmt("%.3g", identity)};
}

// 3 ----------------------------------------------------------------------------
Outcome gradient_suite() {
    std::string detail;
    bool ok = true;
    const ct::LossTerm terms[] = {ct::LossTerm::Seg, ct::LossTerm::Contour, ct::LossTerm::Distance,
                                  ct::LossTerm::Penalty, ct::LossTerm::Total};
    std::uint64_t seed = 31;
    for (const auto term : terms) {
        ct::ToyProblem p(seed);
        const auto samples = ct::check_model_term(p, term, 12, seed + 100);
        double worst = 0;
        for (const auto& s : samples) worst = std::max(worst, s.rel_error());
        ok = ok && worst < 1e-3 && samples.size() == 12;
        detail += std::string(detail.empty() ? "" : ", ") + ct::term_name(term) + " " + fmt("%.2g", worst);
        ++seed;
    }
    return {ok, "max rel. error over 12 entries each: " + detail};
}

// 4 ----------------------------------------------------------------------------
Outcome penalty_zero() {
    std::mt19937_64 rng(5);
    const auto logits = ct::random_tensor({3, 8, 8, 8}, rng, -10, 10);
    const auto dt_high = ct::random_tensor({3, 8, 8, 8}, rng, 1, 5);
    const double e1 = losses::penalty_energy(constant(logits), constant(dt_high))->value[0];
    const Tensor<double> cold(logits.shape(), -20.0);
    const auto dt_any = ct::random_tensor({3, 8, 8, 8}, rng, -2, 3);
    const double e2 = losses::penalty_energy(constant(cold), constant(dt_any))->value[0];
    return {e1 == 0.0 && e2 <= 1e-6, "E_p(dt>=1) = " + fmt("%.3g", e1) + ", E_p(logits=-20) = " + fmt("%.3g", e2)};
}

// 5 ----------------------------------------------------------------------------
Outcome attention_contract() {
    bool range_ok = true, product_ok = true;
    {
        ParameterRegistry<float> reg(5);
        ShapeAwareAttention<float> att(reg, "att", 4, 3, 3);
        std::mt19937_64 rng(11);
        const auto fi = constant(ct::random_tensor({4, 8, 8, 8}, rng).cast<float>());
        const auto fc = constant(ct::random_tensor({3, 8, 8, 8}, rng, 0, 1).cast<float>());
        const auto fdt = constant(ct::random_tensor({3, 8, 8, 8}, rng, 0, 3).cast<float>());
        const auto r = att.forward(fi, fc, fdt);
        const std::size_t n = 512;
        for (std::size_t i = 0; i < n; ++i) {
            const float a = r.attention->value[i];
            range_ok = range_ok && a > 0.f && a < 1.f;
            for (int c = 0; c < 4; ++c) product_ok = product_ok && r.output->value[c * n + i] == fi->value[c * n + i] * a;
        }
    }
    double off = 0, on = 0;
    {
        ParameterRegistry<double> reg(4);
        ShapeAwareAttention<double> att(reg, "att", 3, 2, 2);
        std::mt19937_64 rng(10);
        const auto fi = constant(ct::random_tensor({3, 6, 6, 6}, rng));
        const auto fc = constant(ct::random_tensor({2, 6, 6, 6}, rng, 0, 1));
        const auto fdt = constant(ct::random_tensor({2, 6, 6, 6}, rng, 0, 3));
        att.score.weight->value.fill(0);
        att.score.bias->value.fill(-20);
        auto r = att.forward(fi, fc, fdt);
        for (double v : r.output->value.values()) off = std::max(off, std::abs(v));
        att.score.bias->value.fill(20);
        r = att.forward(fi, fc, fdt);
        for (double a : r.attention->value.values()) range_ok = range_ok && a > 0 && a < 1;
        for (std::size_t i = 0; i < fi->value.size(); ++i) on = std::max(on, std::abs(r.output->value[i] - fi->value[i]));
    }
    return {range_ok && product_ok && off <= 1e-8 && on <= 1e-8,
            std::string("A in (0,1): ") + (range_ok ? "yes" : "no") + ", f_o == f_i*A exactly: " +
                (product_ok ? "yes" : "no") + ", |f_o| at A->0: " + fmt("%.2g", off) + ", |f_o-f_i| at A->1: " +
                fmt("%.2g", on)};
}

// 6 ----------------------------------------------------------------------------
Outcome overfit() {
    ct::TempDir dir("accept_overfit");
    ct::write_phantom_set(dir.sub("data"), 1, {32, 32, 32}, 3);
    auto cfg = ct::small_config(dir.sub("data"), dir.sub("out"), 32, 3, Variant::BaseCtnDttnPenalty, 8, 3);
    cfg.epochs = 500;
    cfg.max_steps = 500;
    cfg.eval_every = 25;
    const auto data = load_data(cfg, {});
    const auto cases = data.select(data.ids());
    CdaNet<float> model(cfg.model);
    Adam<float> opt(model.parameters(), cfg.optimizer);
    const auto r = train_model(model, opt, cfg, cases, cases, data.map);
    std::optional<std::int64_t> reached;
    for (const auto& v : r.validations)
        if (!reached && v.wh_dsc && *v.wh_dsc > 0.90) reached = v.step;
    const double final_dsc = evaluate_cases(model, cases, data.map).wh_dsc().value_or(0);

    // Attention on the contour shell against background far from any structure.
    const auto& pc = data.cases[0];
    const auto a = attention_map(model, pc).values;
    const std::size_t n = a.grid().numel();
    Mask fg = Mask::volume(a.grid());
    for (std::size_t i = 0; i < n; ++i) fg[i] = pc.targets.onehot[i] < 0.5f;
    const auto d2 = squared_distance_to_sites(fg);
    double shell = 0, far = 0;
    int ns = 0, nf = 0;
    for (std::size_t i = 0; i < n; ++i) {
        bool contour = false;
        for (int c = 0; c < pc.targets.contour.channels(); ++c) contour = contour || pc.targets.contour[c * n + i] > 0.5f;
        if (contour) {
            shell += a[i];
            ++ns;
        } else if (pc.targets.onehot[i] > 0.5f && d2[i] > 16) {
            far += a[i];
            ++nf;
        }
    }
    shell /= std::max(ns, 1);
    far /= std::max(nf, 1);
    return {reached.has_value(),
            "training WH DSC > 0.90 " + (reached ? "at step " + std::to_string(*reached) : std::string("not reached")) +
                ", after 500 steps " + fmt("%.4f", final_dsc) + "; mean A contour shell " + fmt("%.3f", shell) +
                " vs far background " + fmt("%.3f", far)};
}

// 7 ----------------------------------------------------------------------------
constexpr int kAblationGrid = 24;
constexpr int kAblationEpochs = 100;

Outcome ablation_order() {
    ct::TempDir dir("accept_ablation");
    ct::write_phantom_set(dir.sub("data"), 10, {kAblationGrid, kAblationGrid, kAblationGrid}, 3, 100);
    auto cfg = ct::small_config(dir.sub("data"), dir.sub("out"), kAblationGrid, 3, Variant::Base, 8, 2);
    cfg.n_folds = 5;
    cfg.epochs = kAblationEpochs;
    cfg.augment = true;
    const auto data = load_data(cfg, {});
    const auto table =
        run_ablation(cfg, {Variant::Base, Variant::BaseCtnDttn, Variant::BaseCtnDttnPenalty}, data, {dir.sub("out"), {}});
    auto get = [&](Variant v, const char* s, const char* m) { return table.value(table.row(v), s, m).value_or(-1); };
    const double base = get(Variant::Base, kWholeHeart, "dsc");
    const double full = get(Variant::BaseCtnDttnPenalty, kWholeHeart, "dsc");
    const double prec_full = get(Variant::BaseCtnDttnPenalty, kWholeHeart, "precision");
    const double prec_ctn = get(Variant::BaseCtnDttn, kWholeHeart, "precision");
    std::printf("%s", table.to_csv().c_str());
    return {full >= base && prec_full >= prec_ctn - 0.02,
            "WH DSC penalty " + fmt("%.4f", full) + " vs base " + fmt("%.4f", base) + "; WH precision penalty " +
                fmt("%.4f", prec_full) + " vs CTN+DTTN " + fmt("%.4f", prec_ctn)};
}

// 8 ----------------------------------------------------------------------------
Outcome dice_range() {
    std::mt19937_64 rng(8);
    double lo = 1e9, hi = -1e9;
    for (int t = 0; t < 1000; ++t) {
        const int C = std::uniform_int_distribution<int>(2, 5)(rng);
        const Grid3 g{std::uniform_int_distribution<int>(1, 5)(rng), std::uniform_int_distribution<int>(1, 5)(rng),
                      std::uniform_int_distribution<int>(1, 5)(rng)};
        const std::size_t n = g.numel();
        Tensor<double> r = Tensor<double>::stack(C, g), p = ct::random_tensor({C, g.d, g.h, g.w}, rng, 0, 1);
        for (std::size_t i = 0; i < n; ++i) {
            r[std::size_t(std::uniform_int_distribution<int>(0, C - 1)(rng)) * n + i] = 1;
            double s = 0;
            for (int c = 0; c < C; ++c) s += p[c * n + i];
            for (int c = 0; c < C; ++c) p[c * n + i] /= s;
        }
        const double v = losses::generalized_dice(constant(p), r)->value[0];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const Grid3 g{4, 4, 4};
    const std::size_t n = g.numel();
    Tensor<double> r = Tensor<double>::stack(3, g), q = Tensor<double>::stack(3, g);
    for (std::size_t i = 0; i < n; ++i) {
        r[(i % 3) * n + i] = 1;
        q[((i + 1) % 3) * n + i] = 1;
    }
    const double perfect = losses::generalized_dice(constant(r), r)->value[0];
    const double compl_ = losses::generalized_dice(constant(q), r)->value[0];
    return {lo >= 0 && hi <= 1 && perfect == 0 && std::abs(compl_ - 1) <= 1e-12,
            "range [" + fmt("%.4f", lo) + ", " + fmt("%.4f", hi) + "] on 1000 inputs, perfect " + fmt("%.3g", perfect) +
                ", complementary " + fmt("%.12g", compl_)};
}

// 9 ----------------------------------------------------------------------------
Outcome determinism() {
    std::vector<std::string> ids;
    for (int i = 0; i < 20; ++i) ids.push_back(ct::phantom_id(i));
    const auto f1 = split_folds(ids, 5, 42), f2 = split_folds(ids, 5, 42);
    bool folds_ok = true;
    for (std::size_t k = 0; k < f1.size(); ++k) folds_ok = folds_ok && f1[k].val_ids == f2[k].val_ids;

    ct::TempDir a("accept_det_a"), b("accept_det_b");
    ct::write_phantom_set(a.str(), 3, {16, 16, 16}, 3);
    ct::write_phantom_set(b.str(), 3, {16, 16, 16}, 3);
    auto bytes = [](const std::string& p) { return nifti::detail::read_all(p); };
    bool phantom_ok = true;
    for (int i = 0; i < 3; ++i)
        for (const char* suffix : {"_image.nii.gz", "_label.nii.gz"}) {
            const std::string name = ct::phantom_id(i) + suffix;
            phantom_ok = phantom_ok && bytes(a.sub(name)) == bytes(b.sub(name));
        }

    auto run = [&](const std::string& root) {
        auto cfg = ct::small_config(root, root + "/out", 16, 3, Variant::BaseCtnDttnPenalty);
        cfg.augment = true;
        cfg.max_steps = 10;
        cfg.epochs = 10;
        const auto data = load_data(cfg, {});
        CdaNet<float> model(cfg.model);
        Adam<float> opt(model.parameters(), cfg.optimizer);
        std::vector<double> losses;
        for (const auto& s : train_model(model, opt, cfg, data.select(data.ids()), {}, data.map).steps)
            losses.push_back(s.loss.total);
        return losses;
    };
    const auto l1 = run(a.str()), l2 = run(b.str());
    const bool loss_ok = l1.size() == 10 && l1 == l2;
    return {folds_ok && phantom_ok && loss_ok, std::string("folds ") + (folds_ok ? "identical" : "differ") +
                                                   ", phantom bytes " + (phantom_ok ? "identical" : "differ") +
                                                   ", first 10 losses " + (loss_ok ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
        double max_seconds;  // 0: unbounded
    };
    const std::vector<Criterion> all{
        {1, "EDT oracle", edt_oracle, 60},
        {2, "metric oracles", metric_oracles, 0},
        {3, "gradient suite", gradient_suite, 600},
        {4, "penalty zero-properties", penalty_zero, 0},
        {5, "attention contract", attention_contract, 0},
        {6, "phantom overfit", overfit, 1800},
        {7, "ablation ordering", ablation_order, 14400},
        {8, "generalized Dice range", dice_range, 0},
        {9, "determinism", determinism, 0},
    };
    std::set<int> pick;
    for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!pick.empty() && !pick.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.max_seconds > 0 && secs > c.max_seconds) {
            o.pass = false;
            o.detail += "; exceeded the " + fmt("%.0f", c.max_seconds) + " s budget";
        }
        std::printf("criterion %d %-24s %s  %s [%.1f s]\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                    secs);
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
