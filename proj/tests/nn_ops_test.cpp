#include <support/checks.hpp>
#include <support/gradcheck.hpp>

#include <gtest/gtest.h>

namespace {

using namespace cardiodg;
using nn::Graph;
using nn::Shape;
using nn::Tensor;

Tensor<double> row(std::vector<double> v)
{
    const Shape s{1, 1, v.size()};
    return Tensor<double>(s, std::move(v));
}

TEST(Conv1d, HandCrossCorrelation)
{
    Graph<double> g;
    auto y = nn::conv1d(g, g.input(row({1, 2, 3, 4})), g.input(row({1, 0, -1})), std::nullopt, 1, 0);
    EXPECT_EQ(g.value(y).storage(), (std::vector<double>{-2, -2}));
}

TEST(Conv1d, IdentityKernelWithPadding)
{
    Graph<double> g;
    auto y = nn::conv1d(g, g.input(row({5, -1, 2, 7, 3})), g.input(row({0, 1, 0})), std::nullopt, 1, 1);
    EXPECT_EQ(g.value(y).storage(), (std::vector<double>{5, -1, 2, 7, 3}));
}

TEST(Conv1d, OutputLengthAndShapeErrors)
{
    EXPECT_EQ(nn::conv_out_len(9, 3, 2, 1), 5u);
    EXPECT_EQ(nn::conv_out_len(10, 3, 2, 1), 5u);
    Graph<double> g;
    EXPECT_THROW(nn::conv1d(g, g.input(Tensor<double>(Shape{1, 2, 5})), g.input(Tensor<double>(Shape{1, 3, 3})),
                            std::nullopt, 1, 1),
                 ShapeError);
}

TEST(BatchNorm, TwoValueChannelNormalizesToPlusMinusOne)
{
    Tensor<double> mean(Shape{1, 1, 1}, 0.0), var(Shape{1, 1, 1}, 1.0);
    Graph<double> g;
    auto y = nn::batch_norm(g, g.input(row({1, 3})), g.input(Tensor<double>(Shape{1, 1, 1}, 1.0)),
                            g.input(Tensor<double>(Shape{1, 1, 1}, 0.0)), nn::BatchNormState<double>{&mean, &var, 0.1, 0.0},
                            true);
    EXPECT_NEAR(g.value(y)[0], -1.0, 1e-12);
    EXPECT_NEAR(g.value(y)[1], 1.0, 1e-12);
    // Running stats move by momentum toward the batch mean and unbiased variance.
    EXPECT_NEAR(mean[0], 0.2, 1e-12);
    EXPECT_NEAR(var[0], 0.9 + 0.1 * 2.0, 1e-12);
}

TEST(BatchNorm, AffineOnStandardizedInputAndTrainStats)
{
    std::mt19937_64 rng(3);
    Tensor<double> x = cardiodg::testing::random_tensor(Shape{4, 3, 50}, rng, 5.0);
    Tensor<double> mean(Shape{3, 1, 1}, 0.0), var(Shape{3, 1, 1}, 1.0);
    Graph<double> g;
    auto y = nn::batch_norm(g, g.input(x), g.input(Tensor<double>(Shape{3, 1, 1}, 1.0)),
                            g.input(Tensor<double>(Shape{3, 1, 1}, 0.0)), nn::BatchNormState<double>{&mean, &var}, true);
    const auto &v = g.value(y);
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 0, s2 = 0;
        for (std::size_t b = 0; b < 4; ++b)
            for (double e : v.row(b, c)) {
                s += e;
                s2 += e * e;
            }
        const double mu = s / 200, sd = std::sqrt(s2 / 200 - mu * mu);
        EXPECT_NEAR(mu, 0.0, 1e-5);
        EXPECT_NEAR(sd, 1.0, 1e-4);
    }
    // Eval mode with initial stats (mean 0, var 1) is the affine map 2x + 5 up to eps.
    Tensor<double> m0(Shape{3, 1, 1}, 0.0), v0(Shape{3, 1, 1}, 1.0);
    Graph<double> h;
    auto z = nn::batch_norm(h, h.input(x), h.input(Tensor<double>(Shape{3, 1, 1}, 2.0)),
                            h.input(Tensor<double>(Shape{3, 1, 1}, 5.0)), nn::BatchNormState<double>{&m0, &v0, 0.1, 0.0},
                            false);
    for (std::size_t i = 0; i < x.size(); ++i)
        EXPECT_DOUBLE_EQ(h.value(z)[i], 2 * x[i] + 5);
}

TEST(Elementwise, ReluSigmoidSoftmax)
{
    Graph<double> g;
    EXPECT_EQ(g.value(nn::relu(g, g.input(row({-1, 0, 2})))).storage(), (std::vector<double>{0, 0, 2}));
    EXPECT_EQ(g.value(nn::sigmoid(g, g.input(row({0})))).storage()[0], 0.5);
    auto p = nn::softmax(g, g.input(Tensor<double>(Shape{2, 7, 1}, 0.0)));
    for (double v : g.value(p).values())
        EXPECT_NEAR(v, 1.0 / 7.0, 1e-15);
    auto q = nn::softmax(g, g.input(Tensor<double>(Shape{1, 3, 1}, std::vector<double>{1000, -1000, 999})));
    double s = 0;
    for (double v : g.value(q).values()) {
        EXPECT_TRUE(std::isfinite(v));
        s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-7);
}

TEST(Pooling, GlobalAveragePoolValuesAndGradient)
{
    Graph<double> g;
    auto x = g.input(Tensor<double>(Shape{1, 2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6}), true);
    auto y = nn::global_avg_pool(g, x);
    EXPECT_EQ(g.value(y).storage(), (std::vector<double>{2, 5}));
    g.backward(y, Tensor<double>(Shape{1, 2, 1}, std::vector<double>{3, 6}));
    EXPECT_EQ(g.grad(x).storage(), (std::vector<double>{1, 1, 1, 2, 2, 2}));
}

TEST(Dropout, IdentityCasesAndInvertedScaling)
{
    std::mt19937_64 rng(1);
    Tensor<double> x = cardiodg::testing::random_tensor(Shape{4, 8, 64}, rng);
    Graph<double> g;
    auto in = g.input(x);
    EXPECT_EQ(g.value(nn::dropout(g, in, 0.0, true, rng)).storage(), x.storage());
    EXPECT_EQ(g.value(nn::dropout(g, in, 0.7, false, rng)).storage(), x.storage());
    const auto &y = g.value(nn::dropout(g, in, 0.25, true, rng));
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (y[i] == 0)
            ++zeros;
        else
            EXPECT_NEAR(y[i], x[i] / 0.75, 1e-12);
    }
    EXPECT_NEAR(double(zeros) / double(x.size()), 0.25, 0.05);
}

TEST(Linear, IdentityWeightsAndConcatOrder)
{
    Graph<double> g;
    Tensor<double> eye(Shape{3, 3, 1});
    for (std::size_t i = 0; i < 3; ++i)
        eye.at(i, i, 0) = 1;
    Tensor<double> x(Shape{2, 3, 1}, std::vector<double>{1, 2, 3, 4, 5, 6});
    EXPECT_EQ(g.value(nn::linear(g, g.input(x), g.input(eye), std::nullopt)).storage(), x.storage());
    auto a = g.input(Tensor<double>(Shape{1, 1, 2}, std::vector<double>{1, 2}));
    auto b = g.input(Tensor<double>(Shape{1, 2, 2}, std::vector<double>{3, 4, 5, 6}));
    EXPECT_EQ(g.value(nn::concat_channels(g, {a, b})).storage(), (std::vector<double>{1, 2, 3, 4, 5, 6}));
}

TEST(Backward, SumGradientAndAccumulation)
{
    Graph<double> g;
    auto x = g.input(Tensor<double>(Shape{1, 2, 2}, std::vector<double>{1, -2, 3, 4}), true);
    auto loss = nn::sum(g, x);
    g.backward(loss);
    EXPECT_EQ(g.grad(x).storage(), (std::vector<double>{1, 1, 1, 1}));
    g.backward(loss);
    EXPECT_EQ(g.grad(x).storage(), (std::vector<double>{2, 2, 2, 2}));
}

TEST(Backward, RejectsForeignAndUntrackedNodes)
{
    Graph<double> g, other;
    auto x = other.input(Tensor<double>(Shape{1, 1, 1}, 1.0), true);
    EXPECT_THROW(g.backward(x), ShapeError);
    auto c = g.input(Tensor<double>(Shape{1, 1, 1}, 1.0));
    EXPECT_THROW(g.backward(nn::sum(g, c)), ShapeError);
}

TEST(MixStyle, IdentitiesAndClosedFormStatistics)
{
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto r = cardiodg::testing::check_mixstyle(seed);
        EXPECT_TRUE(r.eval_bit_exact);
        EXPECT_LE(r.lambda_one_max_diff, 1e-6);
        EXPECT_LE(r.mixed_mean_max_err, 1e-4);
        EXPECT_LE(r.mixed_std_max_err, 1e-4);
    }
}

TEST(MixStyle, UnitPartnerExampleAndBatchOfOne)
{
    // Instance 0 has mean 0 / std 1, instance 1 mean 2 / std 3 -> lambda 0.5 gives mean 1, std 2.
    const std::size_t T = 1000;
    Tensor<double> x(Shape{2, 1, T});
    for (std::size_t t = 0; t < T; ++t) {
        const double s = (t % 2 ? 1.0 : -1.0);
        x.at(0, 0, t) = s;
        x.at(1, 0, t) = 2 + 3 * s;
    }
    Graph<double> g;
    auto y = nn::mix_style(g, g.input(x), 0.5, {1, 0});
    const auto [mu, sd] = cardiodg::testing::time_moments(g.value(y).row(0, 0));
    EXPECT_NEAR(mu, 1.0, 1e-5);
    EXPECT_NEAR(sd, 2.0, 1e-4);

    std::mt19937_64 rng(0);
    Tensor<double> single(Shape{1, 3, 10}, 1.5);
    Graph<double> h;
    auto in = h.input(single);
    MixStyleConfig cfg;
    cfg.p = 1;
    EXPECT_EQ(mixstyle(h, in, cfg, rng, true).id, in.id);
}

TEST(Loss, SmoothedCrossEntropyIdentities)
{
    const auto r = cardiodg::testing::check_loss_identities(11);
    EXPECT_LE(r.eps0_vs_plain_max_diff, 1e-12);
    EXPECT_LE(r.uniform_vs_ln7_max_diff, 1e-9);
}

TEST(Loss, StableForLargeLogits)
{
    Tensor<double> z(Shape{2, 7, 1});
    for (std::size_t k = 0; k < 7; ++k) {
        z.at(0, k, 0) = k == 2 ? 100.0 : -100.0;
        z.at(1, k, 0) = k == 5 ? -100.0 : 100.0;
    }
    Graph<double> g;
    auto zin = g.input(z, true);
    auto loss = nn::smoothed_cross_entropy(g, zin, {2, 5}, 0.05);
    g.backward(loss);
    EXPECT_TRUE(std::isfinite(g.value(loss)[0]));
    EXPECT_TRUE(g.grad(zin).all_finite());
}

} // namespace
