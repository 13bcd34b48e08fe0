#include <gtest/gtest.h>

#include <cmath>

#include "pipetune/rng.hpp"

using pipetune::Rng;

TEST(RngTest, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(RngTest, UniformInUnitInterval) {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(RngTest, UniformIntBounds) {
    Rng rng(3);
    int seen[5] = {0, 0, 0, 0, 0};
    for (int i = 0; i < 5000; ++i) {
        const int v = rng.uniform_int(5);
        ASSERT_GE(v, 0);
        ASSERT_LT(v, 5);
        seen[v]++;
    }
    for (int c : seen) EXPECT_GT(c, 800);  // roughly uniform
    EXPECT_THROW(rng.uniform_int(0), std::invalid_argument);
}

TEST(RngTest, SerializeRoundTripResumesStream) {
    Rng rng(99);
    for (int i = 0; i < 17; ++i) rng.next_u64();
    const std::string state = rng.serialize();

    Rng copy;
    copy.deserialize(state);
    for (int i = 0; i < 100; ++i) ASSERT_EQ(rng.next_u64(), copy.next_u64());
}

TEST(RngTest, DeserializeRejectsGarbage) {
    Rng rng;
    EXPECT_THROW(rng.deserialize("not a state"), std::runtime_error);
}

TEST(RngTest, NormalMomentsRoughlyStandard) {
    Rng rng(11);
    double sum = 0.0, sumsq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sumsq += x * x;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.01);
    EXPECT_NEAR(sumsq / n, 1.0, 0.02);
}

TEST(RngTest, BinomialAndPoissonMeans) {
    Rng rng(13);
    double bsum = 0.0, psum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        bsum += rng.binomial(10, 0.3);
        psum += rng.poisson(0.25);
    }
    EXPECT_NEAR(bsum / n, 3.0, 0.03);
    EXPECT_NEAR(psum / n, 0.25, 0.01);
    EXPECT_EQ(rng.poisson(0.0), 0);
}

TEST(RngTest, MixSeedSeparatesStreams) {
    EXPECT_NE(pipetune::mix_seed(1, 0), pipetune::mix_seed(1, 1));
    EXPECT_NE(pipetune::mix_seed(1, 0), pipetune::mix_seed(2, 0));
    EXPECT_EQ(pipetune::mix_seed(5, 3), pipetune::mix_seed(5, 3));
}
