#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "pipetune/synthetic.hpp"

namespace pt = pipetune;

TEST(SampleInputTest, ZeroNoiseContextEqualsBits) {
    pt::Rng rng(21);
    const auto state = pt::sample_input({4, 0.0}, rng);
    for (int i = 0; i < 4; ++i)
        EXPECT_DOUBLE_EQ(state.noisy_context[i], static_cast<double>(state.true_bits[i]));
    EXPECT_EQ(state.accumulated_latency, 0);
    EXPECT_FALSE(state.error_flag);
}

TEST(SampleInputTest, NoiseStaysInBand) {
    pt::Rng rng(22);
    for (int t = 0; t < 2000; ++t) {
        const auto state = pt::sample_input({4, 0.3}, rng);
        for (int i = 0; i < 4; ++i) {
            EXPECT_GE(state.noisy_context[i], -0.3);
            EXPECT_LE(state.noisy_context[i], 1.3);
            EXPECT_LE(std::abs(state.noisy_context[i] - state.true_bits[i]), 0.3);
        }
    }
}

TEST(SampleInputTest, BitsAreFairCoins) {
    pt::Rng rng(23);
    double mean[4] = {0, 0, 0, 0};
    const int n = 100000;
    for (int t = 0; t < n; ++t) {
        const auto state = pt::sample_input({4, 0.3}, rng);
        for (int i = 0; i < 4; ++i) mean[i] += state.true_bits[i];
    }
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(mean[i] / n, 0.5, 0.01);
}

namespace {
pt::SyntheticEpisodeState state_with_bits(std::vector<std::uint8_t> bits) {
    pt::SyntheticEpisodeState s;
    s.true_bits = std::move(bits);
    s.noisy_context.assign(s.true_bits.begin(), s.true_bits.end());
    return s;
}
}  // namespace

TEST(StepModuleTest, CheapOnZeroBitIsFree) {
    auto s = state_with_bits({0, 1});
    pt::step_module(s, 1, 0);
    EXPECT_EQ(s.accumulated_latency, 0);
    EXPECT_FALSE(s.error_flag);
}

TEST(StepModuleTest, CheapOnSetBitPoisonsPermanently) {
    auto s = state_with_bits({1, 0, 1});
    pt::step_module(s, 1, 0);
    EXPECT_TRUE(s.error_flag);
    pt::step_module(s, 2, 1);
    pt::step_module(s, 3, 1);
    EXPECT_TRUE(s.error_flag);  // sticky
}

TEST(StepModuleTest, ExpensiveIsAlwaysAccurate) {
    auto s = state_with_bits({1});
    pt::step_module(s, 1, 1);
    EXPECT_EQ(s.accumulated_latency, 1);
    EXPECT_FALSE(s.error_flag);
}

TEST(StepModuleTest, OutOfOrderCallThrows) {
    auto s = state_with_bits({0, 0, 0});
    EXPECT_THROW(pt::step_module(s, 2, 0), std::logic_error);
    pt::step_module(s, 1, 0);
    EXPECT_THROW(pt::step_module(s, 1, 0), std::logic_error);
}

TEST(StepModuleTest, LatencyCountsExpensiveActions) {
    pt::Rng rng(31);
    for (int t = 0; t < 200; ++t) {
        auto s = pt::sample_input({6, 0.3}, rng);
        int expensive = 0;
        for (int j = 1; j <= 6; ++j) {
            const int a = rng.bernoulli(0.5) ? 1 : 0;
            expensive += a;
            pt::step_module(s, j, a);
            ASSERT_EQ(s.accumulated_latency, expensive);
        }
    }
}

TEST(SyntheticLossTest, WorkedExamples) {
    EXPECT_DOUBLE_EQ(pt::synthetic_loss(2, false, 4), 0.0);
    EXPECT_DOUBLE_EQ(pt::synthetic_loss(4, false, 4), 1.0);
    EXPECT_DOUBLE_EQ(pt::synthetic_loss(0, true, 8), 2.0);
}

TEST(ModuleContextTest, FirstModulePadsActionsAndLatency) {
    auto s = state_with_bits({0, 1});
    s.noisy_context = {0.1, 0.9};
    const std::vector<double> want{0.1, 0.9, 0.0, 0.0, 0.0};
    EXPECT_EQ(pt::module_context(s, 1), want);
}

TEST(ModuleContextTest, UpstreamActionAndLatencyAppear) {
    auto s = state_with_bits({0, 1});
    s.noisy_context = {0.1, 0.9};
    pt::step_module(s, 1, 1);
    const std::vector<double> want{0.1, 0.9, 1.0, 0.0, 1.0};
    EXPECT_EQ(pt::module_context(s, 2), want);
}

TEST(ModuleContextTest, WidthIsTwoNPlusOne) {
    pt::Rng rng(33);
    auto s = pt::sample_input({4, 0.3}, rng);
    pt::step_module(s, 1, 0);
    pt::step_module(s, 2, 1);
    const auto ctx = pt::module_context(s, 3);
    ASSERT_EQ(ctx.size(), 9u);
    EXPECT_DOUBLE_EQ(ctx.back(), 1.0);  // one expensive action so far
    EXPECT_THROW(pt::module_context(s, 5), std::logic_error);
}

TEST(ExactExpectedLossTest, ClosedFormValues) {
    EXPECT_DOUBLE_EQ(pt::exact_expected_loss({1, 1, 1, 1}, 4), 1.0);
    EXPECT_DOUBLE_EQ(pt::exact_expected_loss({0, 1, 1, 1}, 4), 0.75);
    EXPECT_DOUBLE_EQ(pt::exact_expected_loss({0, 0, 0, 0}, 4), 1.9375);
}

TEST(BruteForceTest, NFourOptimumIsThreeQuarters) {
    const auto [assignment, loss] = pt::brute_force_best_constant(4);
    EXPECT_DOUBLE_EQ(loss, 0.75);
    int cheap = 0;
    for (int a : assignment) cheap += (a == 0);
    EXPECT_EQ(cheap, 1);  // tie at k in {1,2} broken toward smaller k
    EXPECT_EQ(assignment, (std::vector<int>{0, 1, 1, 1}));  // then lexicographic
}

TEST(BruteForceTest, NOneFavorsAllExpensive) {
    const auto [assignment, loss] = pt::brute_force_best_constant(1);
    EXPECT_EQ(assignment, std::vector<int>{1});
    EXPECT_DOUBLE_EQ(loss, 1.0);
}

TEST(BruteForceTest, MatchesClosedFormMinimumOverK) {
    for (int n : {2, 5, 8, 11}) {
        double best_k = 1e9;
        for (int k = 0; k <= n; ++k) {
            std::vector<int> a(static_cast<std::size_t>(n), 1);
            for (int i = 0; i < k; ++i) a[static_cast<std::size_t>(i)] = 0;
            best_k = std::min(best_k, pt::exact_expected_loss(a, n));
        }
        EXPECT_DOUBLE_EQ(pt::brute_force_best_constant(n).second, best_k) << "n=" << n;
    }
    EXPECT_THROW(pt::brute_force_best_constant(21), std::invalid_argument);
}

namespace {
// Monte-Carlo mean and standard error of a constant assignment's loss.
std::pair<double, double> mc_constant_loss(int n, const std::vector<int>& assignment,
                                           int episodes, std::uint64_t seed) {
    pt::Rng rng(seed);
    double sum = 0.0, sumsq = 0.0;
    for (int t = 0; t < episodes; ++t) {
        auto s = pt::sample_input({n, 0.3}, rng);
        for (int j = 1; j <= n; ++j) pt::step_module(s, j, assignment[static_cast<std::size_t>(j - 1)]);
        const double loss = pt::synthetic_loss(s.accumulated_latency, s.error_flag, n);
        sum += loss;
        sumsq += loss * loss;
    }
    const double mean = sum / episodes;
    const double var = (sumsq - episodes * mean * mean) / (episodes - 1);
    return {mean, std::sqrt(var / episodes)};
}
}  // namespace

TEST(MonteCarloTest, ConstantAssignmentsMatchOracleWithin3SE) {
    pt::Rng pick(41);
    for (int n : {4, 8}) {
        for (int rep = 0; rep < 3; ++rep) {
            std::vector<int> assignment(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) assignment[static_cast<std::size_t>(i)] = pick.bernoulli(0.5);
            const auto [mean, se] = mc_constant_loss(n, assignment, 100000, 1000 + rep * 7 + n);
            const double exact = pt::exact_expected_loss(assignment, n);
            EXPECT_NEAR(mean, exact, 3.0 * se + 1e-12) << "n=" << n << " rep=" << rep;
        }
    }
}

TEST(MonteCarloTest, BestConstantAveragesCloseToOracleOver10k) {
    const auto [assignment, exact] = pt::brute_force_best_constant(4);
    const auto [mean, se] = mc_constant_loss(4, assignment, 10000, 77);
    (void)se;
    EXPECT_NEAR(mean, exact, 0.02);
}

TEST(MonteCarloTest, PerfectRoutingLossIsOneOverN) {
    for (int n : {4, 8}) {
        pt::Rng rng(55 + n);
        const int episodes = 100000;
        double sum = 0.0, sumsq = 0.0;
        for (int t = 0; t < episodes; ++t) {
            auto s = pt::sample_input({n, 0.3}, rng);
            for (int j = 1; j <= n; ++j) pt::step_module(s, j, s.true_bits[static_cast<std::size_t>(j - 1)]);
            EXPECT_FALSE(s.error_flag);
            const double loss = pt::synthetic_loss(s.accumulated_latency, s.error_flag, n);
            sum += loss;
            sumsq += loss * loss;
        }
        const double mean = sum / episodes;
        const double se = std::sqrt((sumsq / episodes - mean * mean) / episodes);
        EXPECT_NEAR(mean, 1.0 / n, 3.0 * se) << "n=" << n;
    }
}

TEST(SyntheticEnvTest, OracleTableHasAllAssignments) {
    std::ostringstream os;
    pt::write_oracle_table_csv(3, os);
    const std::string text = os.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 8);
}

TEST(SyntheticEnvTest, InitialContextIsNoisyBitsOnly) {
    pt::SyntheticEnv env({4, 0.3});
    pt::Rng rng(61);
    env.begin_episode(rng);
    EXPECT_EQ(env.initial_context().size(), 4u);
    EXPECT_EQ(env.context(1).size(), 9u);
    EXPECT_TRUE(pt::validate_spec(env.spec()).ok());
}
