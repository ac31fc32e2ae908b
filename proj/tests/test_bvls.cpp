#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "csgeim/bvls.hpp"

using namespace csgeim;

namespace {

struct Rng {
    std::mt19937_64 gen;
    explicit Rng(unsigned seed) : gen(seed) {}
    double normal() { return std::normal_distribution<double>()(gen); }
    double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen); }
};

BvlsProblem random_problem(Rng& rng, int m, int n)
{
    BvlsProblem p;
    p.a.resize(m, n);
    p.target.resize(m);
    p.lower.resize(n);
    p.upper.resize(n);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) p.a(i, j) = rng.normal();
        p.target[i] = 3.0 * rng.normal();
    }
    for (int j = 0; j < n; ++j) {
        const double w = rng.uniform(0.2, 2.0);
        const double c = rng.uniform(-1.0, 1.0);
        p.lower[j] = c - w;
        p.upper[j] = c + w;
    }
    return p;
}

double objective(const BvlsProblem& p, const Eigen::VectorXd& x) { return (p.a * x - p.target).squaredNorm(); }

// Exhaustive oracle: every point of a regular grid in the box, then a local
// refinement around the best grid point.
double grid_oracle(const BvlsProblem& p, int steps)
{
    const int n = static_cast<int>(p.a.cols());
    Eigen::VectorXd x(n), best_x(n);
    double best = INFINITY;
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    for (;;) {
        for (int j = 0; j < n; ++j) x[j] = p.lower[j] + (p.upper[j] - p.lower[j]) * idx[static_cast<std::size_t>(j)] / steps;
        const double f = objective(p, x);
        if (f < best) {
            best = f;
            best_x = x;
        }
        int j = 0;
        while (j < n && ++idx[static_cast<std::size_t>(j)] > steps) idx[static_cast<std::size_t>(j++)] = 0;
        if (j == n) break;
    }
    // Shrinking pattern search from the best grid point.
    Eigen::VectorXd h = (p.upper - p.lower) / steps;
    while (h.maxCoeff() > 1e-12) {
        bool moved = false;
        for (int j = 0; j < n; ++j) {
            for (double s : {-1.0, 1.0}) {
                Eigen::VectorXd y = best_x;
                y[j] = std::clamp(y[j] + s * h[j], p.lower[j], p.upper[j]);
                const double f = objective(p, y);
                if (f < best) {
                    best = f;
                    best_x = y;
                    moved = true;
                }
            }
        }
        if (!moved) h *= 0.5;
    }
    return best;
}

} // namespace

TEST(Bvls, UnconstrainedEqualsLeastSquares)
{
    Rng rng(1);
    BvlsProblem p = random_problem(rng, 12, 4);
    p.lower.setConstant(-1e9);
    p.upper.setConstant(1e9);
    const BvlsResult r = bvls_solve(p);
    const Eigen::VectorXd ls = p.a.colPivHouseholderQr().solve(p.target);
    EXPECT_LT((r.x - ls).norm(), 1e-10 * ls.norm());
    for (BoundState s : r.state) EXPECT_EQ(s, BoundState::Free);
}

TEST(Bvls, IdentityClamps)
{
    BvlsProblem p;
    p.a = Eigen::Matrix2d::Identity();
    p.target = Eigen::Vector2d(3.0, -3.0);
    p.lower = Eigen::Vector2d(-1.0, -1.0);
    p.upper = Eigen::Vector2d(1.0, 1.0);
    const BvlsResult r = bvls_solve(p);
    EXPECT_DOUBLE_EQ(r.x[0], 1.0);
    EXPECT_DOUBLE_EQ(r.x[1], -1.0);
    EXPECT_EQ(r.state[0], BoundState::AtUpper);
    EXPECT_EQ(r.state[1], BoundState::AtLower);
    EXPECT_NEAR(r.objective, 8.0, 1e-14);
}

TEST(Bvls, RandomProblemsMatchGridOracle)
{
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const BvlsProblem p = random_problem(rng, 5, 3);
        const BvlsResult r = bvls_solve(p);
        const double oracle = grid_oracle(p, 20);
        EXPECT_LE(r.objective, oracle + 1e-9 * (1.0 + oracle)) << "trial " << trial;
        EXPECT_LE(r.kkt_residual, 1e-8) << "trial " << trial;
        for (int j = 0; j < 3; ++j) {
            EXPECT_GE(r.x[j], p.lower[j]);
            EXPECT_LE(r.x[j], p.upper[j]);
        }
    }
}

TEST(Bvls, NoFeasiblePerturbationImproves)
{
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const BvlsProblem p = random_problem(rng, 8, 4);
        const BvlsResult r = bvls_solve(p);
        for (int k = 0; k < 100; ++k) {
            Eigen::VectorXd y = r.x;
            for (int j = 0; j < 4; ++j) y[j] = std::clamp(y[j] + 1e-3 * rng.normal(), p.lower[j], p.upper[j]);
            EXPECT_GE(objective(p, y), r.objective - 1e-12);
        }
    }
}

TEST(Bvls, ObjectiveGradientConsistent)
{
    Rng rng(3);
    const BvlsProblem p = random_problem(rng, 10, 5);
    const BvlsResult r = bvls_solve(p);
    EXPECT_NEAR(r.objective, objective(p, r.x), 1e-12);
    const Eigen::VectorXd g = 2.0 * p.a.transpose() * (p.a * r.x - p.target);
    EXPECT_LT((g - r.gradient).norm(), 1e-12 * (1.0 + g.norm()));
}

TEST(Bvls, MoreRowsNeverLowerObjective)
{
    // Appending rows can only add nonnegative terms to the objective.
    Rng rng(4);
    BvlsProblem full = random_problem(rng, 20, 3);
    double prev = -1.0;
    for (int m = 3; m <= 20; ++m) {
        BvlsProblem p = full;
        p.a = full.a.topRows(m);
        p.target = full.target.head(m);
        const double f = bvls_solve(p).objective;
        EXPECT_GE(f, prev - 1e-12);
        prev = f;
    }
}

TEST(Bvls, FixedVariable)
{
    Rng rng(5);
    BvlsProblem p = random_problem(rng, 6, 3);
    p.lower[1] = p.upper[1] = 0.25;
    const BvlsResult r = bvls_solve(p);
    EXPECT_DOUBLE_EQ(r.x[1], 0.25);
    EXPECT_EQ(r.state[1], BoundState::Fixed);
    EXPECT_LE(r.kkt_residual, 1e-8);
}

TEST(Bvls, InvalidInput)
{
    BvlsProblem p;
    p.a = Eigen::MatrixXd::Identity(2, 2);
    p.target = Eigen::VectorXd::Zero(3);
    p.lower = Eigen::VectorXd::Zero(2);
    p.upper = Eigen::VectorXd::Ones(2);
    EXPECT_THROW(bvls_solve(p), ConfigError);
    p.target = Eigen::VectorXd::Zero(2);
    p.lower[0] = 2.0;
    EXPECT_THROW(bvls_solve(p), ConfigError);
    p.lower[0] = 0.0;
    p.a(0, 0) = std::nan("");
    EXPECT_THROW(bvls_solve(p), ConfigError);
}

TEST(Bvls, RankDeficientDesignReported)
{
    BvlsProblem p;
    p.a.resize(3, 2);
    p.a << 1, 2, 2, 4, 3, 6;
    p.target = Eigen::Vector3d(1, 2, 3);
    p.lower = Eigen::Vector2d(-10, -10);
    p.upper = Eigen::Vector2d(10, 10);
    // Either a clean failure or a valid minimiser; never a silent wrong answer.
    try {
        const BvlsResult r = bvls_solve(p);
        EXPECT_NEAR(r.objective, 0.0, 1e-10);
    } catch (const NumericalError&) {
        SUCCEED();
    }
}
