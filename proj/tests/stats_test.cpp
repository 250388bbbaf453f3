#include <support/checks.hpp>

#include <gtest/gtest.h>

namespace {

using namespace cardiodg;

TEST(Bootstrap, DeterministicAndDegenerateForPerfect)
{
    const auto r = cardiodg::testing::check_stats(3);
    EXPECT_TRUE(r.bootstrap_deterministic);
    EXPECT_TRUE(r.bootstrap_point_for_perfect);
    const auto one = eval::bootstrap_ci(std::vector<int>{2}, std::vector<int>{4}, 7, 1000, 0.95, 1);
    EXPECT_EQ(one.lo, one.hi);
    EXPECT_THROW(eval::bootstrap_ci(std::vector<int>{}, std::vector<int>{}, 7), Error);
}

TEST(Bootstrap, IntervalCoversPointEstimate)
{
    std::mt19937_64 rng(17);
    int covered = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        std::vector<int> y(80), p(80);
        for (std::size_t i = 0; i < y.size(); ++i) {
            y[i] = int(rng() % 4);
            p[i] = rng() % 3 ? y[i] : int(rng() % 4);
        }
        const double point = eval::macro_f1(y, p, 4);
        const auto ci = eval::bootstrap_ci(y, p, 4, 500, 0.95, rng());
        covered += ci.lo <= point && point <= ci.hi;
    }
    EXPECT_GE(double(covered) / trials, 0.99);
}

TEST(Wilcoxon, SixPositiveDifferencesExact)
{
    EXPECT_DOUBLE_EQ(cardiodg::testing::check_stats(1).wilcoxon_six_positive_p, 0.03125);
    const std::vector<double> d{1, 2, 3, 4, 5, 6}, z(6, 0.0);
    const auto r = eval::wilcoxon_signed_rank(d, z);
    EXPECT_EQ(r.statistic, 0.0);
    EXPECT_EQ(r.w_plus, 21.0);
    EXPECT_TRUE(r.exact);
}

TEST(Wilcoxon, SymmetricDifferencesNotSignificant)
{
    const std::vector<double> d{1, -1, 2, -2, 3, -3}, z(6, 0.0);
    EXPECT_GT(eval::wilcoxon_signed_rank(d, z).p_value, 0.05);
}

TEST(Wilcoxon, ReferenceValuesExactAndApproximate)
{
    // Reference p-values from an established statistics library.
    const std::vector<double> small{0.4, -1.2, 2.5, 3.1, 0.9, -0.3, 1.7, 2.2}, z8(8, 0.0);
    const auto e = eval::wilcoxon_signed_rank(small, z8);
    EXPECT_EQ(e.statistic, 5.0);
    EXPECT_NEAR(e.p_value, 0.078125, 1e-12);
    std::vector<double> big;
    for (int i = 0; i < 25; ++i)
        big.push_back(double((i * 37) % 23 - 9) * 0.5);
    const std::vector<double> z25(25, 0.0);
    const auto a = eval::wilcoxon_signed_rank(big, z25);
    EXPECT_FALSE(a.exact);
    EXPECT_EQ(a.n_used, 24u);
    EXPECT_EQ(a.statistic, 109.5);
    EXPECT_NEAR(a.p_value, 0.2527344730100154, 1e-9);
}

TEST(Wilcoxon, InsufficientPairs)
{
    const std::vector<double> a{0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    try {
        eval::wilcoxon_signed_rank(a, a);
        FAIL();
    } catch (const Error &e) {
        EXPECT_NE(std::string(e.what()).find("insufficient pairs"), std::string::npos);
    }
}

TEST(Aggregate, MeanAndSampleSd)
{
    const auto s = eval::mean_sd(std::vector<double>{0.6, 0.7, 0.8, 0.9, 1.0});
    EXPECT_DOUBLE_EQ(s.mean, 0.8);
    EXPECT_NEAR(s.sd, std::sqrt(0.025), 1e-12);
    EXPECT_EQ(eval::mean_sd(std::vector<double>{0.4}).sd, 0.0);
}

} // namespace
