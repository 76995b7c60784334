#include <gtest/gtest.h>

#include <random>

#include "cdanet/core/ops.hpp"
#include "support/gradcheck.hpp"

using namespace cdanet;
using cdanet::testing::check_leaves;
using cdanet::testing::max_rel_error;
using cdanet::testing::random_tensor;

namespace {

// <y, r> for a fixed random probe r, so every output entry feeds the scalar.
Var<double> probe(const Var<double>& y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto r = random_tensor(y->value.shape(), rng);
    double acc = 0;
    for (std::size_t i = 0; i < r.size(); ++i) acc += r[i] * y->value[i];
    return make_result<double>(Tensor<double>({1}, acc), {y}, [y, r](Node<double>& out) {
        Tensor<double>& g = y->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += r[i] * out.grad[0];
    });
}

// Direct-definition convolution used as an oracle for the im2col/GEMM path.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b, int groups) {
    const int cin = x.dim(0), cout = w.dim(0), k = w.dim(2), p = k / 2;
    const Grid3 g = x.grid();
    const int cin_g = cin / groups, cout_g = cout / groups;
    Tensor<double> y = Tensor<double>::stack(cout, g);
    for (int co = 0; co < cout; ++co) {
        const int grp = co / cout_g;
        for (int d = 0; d < g.d; ++d)
            for (int h = 0; h < g.h; ++h)
                for (int ww = 0; ww < g.w; ++ww) {
                    double acc = b ? (*b)[co] : 0.0;
                    for (int ci = 0; ci < cin_g; ++ci)
                        for (int a = 0; a < k; ++a)
                            for (int bb = 0; bb < k; ++bb)
                                for (int c = 0; c < k; ++c) {
                                    const int sd = d + a - p, sh = h + bb - p, sw = ww + c - p;
                                    if (sd < 0 || sh < 0 || sw < 0 || sd >= g.d || sh >= g.h || sw >= g.w) continue;
                                    acc += w[(((std::size_t(co) * cin_g + ci) * k + a) * k + bb) * k + c] *
                                           x.at(grp * cin_g + ci, sd, sh, sw);
                                }
                    y.at(co, d, h, ww) = acc;
                }
    }
    return y;
}

struct ConvCase {
    int cin, cout, k, groups;
};

}  // namespace

class ConvTest : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvTest, MatchesDirectDefinitionAndFiniteDifferences) {
    const auto c = GetParam();
    std::mt19937_64 rng(7);
    auto x = parameter(random_tensor({c.cin, 4, 5, 6}, rng));
    auto w = parameter(random_tensor({c.cout, c.cin / c.groups, c.k, c.k, c.k}, rng));
    auto b = parameter(random_tensor({c.cout}, rng));
    auto y = ops::conv3d(x, w, b, c.groups);
    EXPECT_LT(max_abs_diff(y->value, naive_conv(x->value, w->value, &b->value, c.groups)), 1e-12);

    auto loss = [&] { return probe(ops::conv3d(x, w, b, c.groups), 11); };
    EXPECT_LT(max_rel_error(check_leaves(loss, {x, w, b}, 12, 3)), 1e-6);
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvTest,
                         ::testing::Values(ConvCase{3, 4, 3, 1}, ConvCase{4, 6, 3, 2}, ConvCase{4, 4, 3, 4},
                                           ConvCase{3, 5, 1, 1}, ConvCase{4, 2, 1, 2}, ConvCase{2, 1, 5, 1}));

TEST(Ops, ConvRejectsIndivisibleGroups) {
    auto x = constant(Tensor<double>::stack(3, {2, 2, 2}));
    auto w = constant(Tensor<double>({4, 1, 3, 3, 3}));
    EXPECT_THROW(ops::conv3d(x, w, Var<double>{}, 2), std::invalid_argument);
}

TEST(Ops, ElementwiseAndPoolingGradients) {
    std::mt19937_64 rng(5);
    auto x = parameter(random_tensor({3, 4, 4, 6}, rng));
    auto a = parameter(random_tensor({1, 4, 4, 6}, rng));
    auto s = parameter(random_tensor({3, 1, 1, 1}, rng));
    auto gamma = parameter(random_tensor({3}, rng, 0.5, 1.5));
    auto beta = parameter(random_tensor({3}, rng));

    const std::vector<std::pair<const char*, std::function<Var<double>()>>> cases{
        {"max_pool2", [&] { return probe(ops::max_pool2(x), 1); }},
        {"resize up", [&] { return probe(ops::resize(x, Grid3{7, 8, 9}), 2); }},
        {"resize down", [&] { return probe(ops::resize(x, Grid3{2, 3, 3}), 3); }},
        {"instance_norm", [&] { return probe(ops::instance_norm(x, gamma, beta), 4); }},
        {"sigmoid", [&] { return probe(ops::sigmoid(x), 5); }},
        {"relu", [&] { return probe(ops::relu(x), 6); }},
        {"concat", [&] { return probe(ops::concat<double>({x, a, x}), 7); }},
        {"mul_broadcast", [&] { return probe(ops::mul_broadcast(x, a), 8); }},
        {"scale_channels", [&] { return probe(ops::scale_channels(x, s), 9); }},
        {"global pools", [&] { return probe(ops::add(ops::global_avg_pool(x), ops::global_max_pool(x)), 10); }},
        {"channel pools", [&] { return probe(ops::add(ops::channel_mean(x), ops::channel_max(x)), 11); }},
        {"softmax", [&] { return probe(ops::softmax_channels(x), 12); }},
    };
    for (const auto& [name, f] : cases) {
        SCOPED_TRACE(name);
        EXPECT_LT(max_rel_error(check_leaves(f, {x, a, s, gamma, beta}, 6, 17)), 1e-6);
    }
}

TEST(Ops, ResizeOfConstantIsConstant) {
    Tensor<float> t = Tensor<float>::stack(2, {4, 6, 8}, 3.25f);
    auto r = resize_trilinear(t, {9, 3, 17});
    for (float v : r.values()) EXPECT_FLOAT_EQ(v, 3.25f);
}

TEST(Ops, NoGradGuardSkipsGraph) {
    auto x = parameter(Tensor<double>({1, 2, 2, 2}, 1.0));
    NoGradGuard guard;
    auto y = ops::sigmoid(x);
    EXPECT_FALSE(y->requires_grad);
    EXPECT_TRUE(y->parents.empty());
}
