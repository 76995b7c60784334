#include <gtest/gtest.h>

#include <random>

#include "cdanet/metrics/report.hpp"
#include "cdanet/volume_io/phantom.hpp"
#include "support/metric_oracles.hpp"

using namespace cdanet;
using cdanet::testing::naive_metrics;
using cdanet::testing::random_mask;

namespace {

Mask box(Grid3 g, std::array<int, 3> lo, std::array<int, 3> hi) {
    Mask m = Mask::volume(g);
    for (int d = lo[0]; d < hi[0]; ++d)
        for (int h = lo[1]; h < hi[1]; ++h)
            for (int w = lo[2]; w < hi[2]; ++w) m.at(d, h, w) = 1;
    return m;
}

}  // namespace

TEST(Overlap, Examples) {
    const Grid3 g{4, 4, 4};
    const Mask a = box(g, {0, 0, 0}, {2, 2, 2});
    EXPECT_EQ(dsc(a, a), 1.0);
    EXPECT_EQ(jaccard(a, a), 1.0);
    const Mask b = box(g, {2, 2, 2}, {4, 4, 4});
    EXPECT_EQ(dsc(a, b), 0.0);
    EXPECT_EQ(jaccard(a, b), 0.0);
    Mask x = Mask::volume(g), y = Mask::volume(g);
    x[0] = x[1] = 1;
    y[1] = y[2] = 1;
    EXPECT_DOUBLE_EQ(dsc(x, y), 0.5);
    EXPECT_DOUBLE_EQ(jaccard(x, y), 1.0 / 3.0);
    EXPECT_EQ(dsc(Mask::volume(g), Mask::volume(g)), 1.0);
    EXPECT_THROW(dsc(a, Mask::volume({4, 4, 5})), std::invalid_argument);
}

TEST(Overlap, JaccardDiceIdentityAndOrdering) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 100; ++t) {
        const Mask x = random_mask(rng, {8, 8, 8}, 0.3), y = random_mask(rng, {8, 8, 8}, 0.5);
        const double d = dsc(x, y), j = jaccard(x, y);
        EXPECT_NEAR(j, d / (2 - d), 1e-12);
        EXPECT_LE(0.0, j);
        EXPECT_LE(j, d);
        EXPECT_LE(d, 1.0);
    }
}

TEST(Surface, SingleVoxelAndCube) {
    Mask one = Mask::volume({5, 5, 5});
    one.at(2, 3, 1) = 1;
    const auto s = extract_surface(one);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s.voxels[0], (std::array<int, 3>{2, 3, 1}));

    const Mask cube = box({6, 6, 6}, {1, 1, 1}, {5, 5, 5});
    const auto cs = extract_surface(cube);
    EXPECT_EQ(cs.size(), 56u);
    for (const auto& v : cs.voxels) {
        const bool interior = v[0] >= 2 && v[0] <= 3 && v[1] >= 2 && v[1] <= 3 && v[2] >= 2 && v[2] <= 3;
        EXPECT_FALSE(interior);
    }
    EXPECT_TRUE(extract_surface(Mask::volume({3, 3, 3})).empty());
    // foreground touching the volume border counts as surface
    EXPECT_EQ(extract_surface(Mask::volume({3, 3, 3}, 1)).size(), 26u);
}

TEST(Surface, NoSurfaceVoxelIsFullySurrounded) {
    std::mt19937_64 rng(2);
    const Mask m = random_mask(rng, {8, 8, 8}, 0.8);
    for (const auto& v : extract_surface(m).voxels) {
        int fg = 0, inside = 0;
        const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
        for (const auto& o : off) {
            const int d = v[0] + o[0], h = v[1] + o[1], w = v[2] + o[2];
            if (d < 0 || h < 0 || w < 0 || d >= 8 || h >= 8 || w >= 8) continue;
            ++inside;
            fg += m.at(d, h, w);
        }
        EXPECT_FALSE(inside == 6 && fg == 6);
    }
}

TEST(SurfaceDistance, IdenticalMasksGiveZero) {
    const Mask a = box({8, 8, 8}, {1, 2, 3}, {6, 7, 7});
    EXPECT_EQ(*hd95(a, a), 0.0);
    EXPECT_EQ(*assd(a, a), 0.0);
}

TEST(SurfaceDistance, PlatesOffsetByOne) {
    const Mask a = box({8, 8, 8}, {3, 0, 0}, {4, 8, 8});
    const Mask b = box({8, 8, 8}, {4, 0, 0}, {5, 8, 8});
    EXPECT_DOUBLE_EQ(*hd95(a, b), 1.0);
    EXPECT_DOUBLE_EQ(*assd(a, b), 1.0);
}

TEST(SurfaceDistance, EmptyMaskIsUndefined) {
    const Mask a = box({6, 6, 6}, {1, 1, 1}, {3, 3, 3});
    EXPECT_FALSE(hd95(a, Mask::volume({6, 6, 6})).has_value());
    EXPECT_FALSE(assd(Mask::volume({6, 6, 6}), a).has_value());
}

TEST(Percentile, LinearInterpolation) {
    EXPECT_DOUBLE_EQ(percentile({0, 10}, 95), 9.5);
    EXPECT_DOUBLE_EQ(percentile({3}, 95), 3.0);
    EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2, 0}, 50), 2.0);
    EXPECT_THROW(percentile({}, 95), std::invalid_argument);
}

TEST(Detection, Examples) {
    const Grid3 g{4, 4, 4};
    const Mask gt = box(g, {0, 0, 0}, {2, 2, 2});
    auto sp = sensitivity_precision(gt, gt);
    EXPECT_EQ(*sp.sensitivity, 1.0);
    EXPECT_EQ(*sp.precision, 1.0);
    sp = sensitivity_precision(box(g, {0, 0, 0}, {3, 3, 3}), gt);
    EXPECT_EQ(*sp.sensitivity, 1.0);
    EXPECT_LT(*sp.precision, 1.0);

    Mask p = Mask::volume(g), t = Mask::volume(g);
    for (int i : {0, 1, 2}) p[i] = t[i] = 1;  // TP = 3
    p[10] = 1;                                // FP = 1
    t[20] = t[21] = 1;                        // FN = 2
    sp = sensitivity_precision(p, t);
    EXPECT_DOUBLE_EQ(*sp.sensitivity, 0.6);
    EXPECT_DOUBLE_EQ(*sp.precision, 0.75);

    sp = sensitivity_precision(Mask::volume(g), Mask::volume(g));
    EXPECT_FALSE(sp.sensitivity);
    EXPECT_FALSE(sp.precision);
}

TEST(Oracle, RandomMaskPairsMatchBruteForce) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> dens(0.02, 0.9);
    for (int t = 0; t < 100; ++t) {
        const Mask x = random_mask(rng, {8, 8, 8}, dens(rng));
        const Mask y = random_mask(rng, {8, 8, 8}, dens(rng));
        const auto ref = naive_metrics(x, y);
        ASSERT_NEAR(dsc(x, y), ref.dsc, 1e-6);
        ASSERT_NEAR(jaccard(x, y), ref.ji, 1e-6);
        const auto h = hd95(x, y), a = assd(x, y);
        ASSERT_EQ(h.has_value(), ref.hd95.has_value());
        if (h) {
            ASSERT_NEAR(*h, *ref.hd95, 1e-6);
            ASSERT_NEAR(*a, *ref.assd, 1e-6);
            ASSERT_NEAR(*hd95(y, x), *h, 1e-12);
            ASSERT_NEAR(*assd(y, x), *a, 1e-12);
        }
        const auto sp = sensitivity_precision(x, y), rev = sensitivity_precision(y, x);
        ASSERT_NEAR(*sp.sensitivity, *ref.sens, 1e-6);
        ASSERT_NEAR(*sp.precision, *ref.prec, 1e-6);
        ASSERT_EQ(*sp.sensitivity, *rev.precision);
    }
}

TEST(Report, PerfectPredictionOfPhantom) {
    const auto ph = generate_phantom(0, {24, 24, 24}, 4);
    const auto rep = evaluate_case(ph.labels, ph.labels, "p0");
    ASSERT_EQ(rep.rows.size(), 5u);
    EXPECT_EQ(rep.rows.back().structure, "WH");
    for (const auto& r : rep.rows) {
        EXPECT_EQ(*r.dsc, 1.0);
        EXPECT_EQ(*r.ji, 1.0);
        EXPECT_EQ(*r.sensitivity, 1.0);
        EXPECT_EQ(*r.precision, 1.0);
        EXPECT_EQ(*r.hd95, 0.0);
        EXPECT_EQ(*r.assd, 0.0);
    }
}

TEST(Report, BackgroundPredictionMarksSurfaceMetricsUndefined) {
    const auto ph = generate_phantom(1, {16, 16, 16}, 3);
    LabelVolume empty{Tensor<std::int32_t>::volume({16, 16, 16}), ph.labels.label_map, {}};
    const auto rep = evaluate_case(empty, ph.labels);
    ASSERT_EQ(rep.rows.size(), 4u);
    for (const auto& r : rep.rows) {
        EXPECT_EQ(*r.dsc, 0.0);
        EXPECT_FALSE(r.hd95);
        EXPECT_FALSE(r.assd);
        EXPECT_FALSE(r.precision);
        EXPECT_EQ(*r.sensitivity, 0.0);
    }
    const auto csv = rep.to_csv();
    EXPECT_NE(csv.find("case_id,structure,dsc,ji,hd95,assd,sensitivity,precision"), std::string::npos);
    EXPECT_NE(csv.find("NA"), std::string::npos);
    EXPECT_TRUE(rep.to_json()[0]["hd95"].is_null());
}

TEST(Report, MisalignedShapesRejected) {
    const auto a = generate_phantom(1, {16, 16, 16}, 3);
    const auto b = generate_phantom(1, {16, 16, 20}, 3);
    EXPECT_THROW(evaluate_case(a.labels, b.labels), std::invalid_argument);
}

TEST(Report, AggregateSkipsUndefinedAndCounts) {
    MetricsReport rep;
    rep.rows.push_back({"a", "LV", 0.5, 0.4, 2.0, 1.0, 0.6, 0.7});
    rep.rows.push_back({"b", "LV", 0.7, 0.6, std::nullopt, std::nullopt, 0.8, std::nullopt});
    std::map<std::string, std::map<std::string, int>> undef;
    const auto agg = aggregate(rep, "mean", &undef);
    ASSERT_EQ(agg.rows.size(), 1u);
    EXPECT_DOUBLE_EQ(*agg.rows[0].dsc, 0.6);
    EXPECT_DOUBLE_EQ(*agg.rows[0].hd95, 2.0);
    EXPECT_DOUBLE_EQ(*agg.rows[0].precision, 0.7);
    EXPECT_EQ(undef["LV"]["hd95"], 1);
    EXPECT_EQ(undef["LV"]["dsc"], 0);
}
