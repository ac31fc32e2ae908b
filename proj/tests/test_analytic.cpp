#include <gtest/gtest.h>

#include <cmath>

#include "csgeim/analytic.hpp"

using namespace csgeim;

TEST(Analytic, PointValues)
{
    EXPECT_NEAR(eval_g({0.5, 0.5}, {-1.0, -1.0}), 0.47140452079103168, 1e-15);
    EXPECT_NEAR(eval_g({0.0, 0.0}, {-0.01, -0.01}), 70.710678118654755, 1e-11);
    EXPECT_DOUBLE_EQ(eval_g({0.3, 0.7}, {-0.2, -0.5}), eval_g({0.7, 0.3}, {-0.5, -0.2}));
}

TEST(Analytic, DefaultSets)
{
    AnalyticManifoldSpec spec;
    const SnapshotSet train = generate_analytic_snapshots(spec);
    EXPECT_EQ(train.size(), 400u);
    EXPECT_EQ(train.domain.grid().nx, 64);
    EXPECT_FALSE(train.has_companions());
    EXPECT_DOUBLE_EQ(train.items.front().mu[0], -1.0);
    EXPECT_NEAR(train.items.back().mu[1], -0.01, 1e-15);
    // mu_x runs fastest.
    EXPECT_DOUBLE_EQ(train.items[1].mu[1], -1.0);
    EXPECT_GT(train.items[1].mu[0], -1.0);

    spec.midpoints = true;
    const SnapshotSet test = generate_analytic_snapshots(spec, SetRole::Test);
    EXPECT_EQ(test.size(), 361u);
    EXPECT_NEAR(test.items.front().mu[0], -1.0 + 0.5 * 0.99 / 19, 1e-15);
}

TEST(Analytic, PositiveAndBoundedByNearestCorner)
{
    AnalyticManifoldSpec spec;
    spec.nodes_x = spec.nodes_y = 17;
    spec.mu_count_x = spec.mu_count_y = 7;
    const SnapshotSet set = generate_analytic_snapshots(spec);
    // Brute-force bound: max of g over the whole closed parameter box on a fine grid.
    double bound = 0.0;
    for (int a = 0; a <= 200; ++a) {
        for (int b = 0; b <= 200; ++b) {
            const double mx = -1.0 + 0.99 * a / 200.0, my = -1.0 + 0.99 * b / 200.0;
            bound = std::max(bound, eval_g({0.0, 0.0}, {mx, my}));
        }
    }
    for (const Snapshot& s : set.items) {
        EXPECT_GT(s.phi2.values.minCoeff(), 0.0);
        EXPECT_LE(s.phi2.values.maxCoeff(), bound * (1.0 + 1e-14));
    }
}

TEST(Analytic, InvalidSpec)
{
    AnalyticManifoldSpec spec;
    spec.mu_max = 0.0;
    EXPECT_THROW(generate_analytic_snapshots(spec), ConfigError);
    spec = {};
    spec.nodes_x = 1;
    EXPECT_THROW(generate_analytic_snapshots(spec), ConfigError);
    spec = {};
    spec.mu_min = -0.01;
    spec.mu_max = -0.5;
    EXPECT_THROW(generate_analytic_snapshots(spec), ConfigError);
}
