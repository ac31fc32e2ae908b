#include <gtest/gtest.h>

#include <cmath>

#include "csgeim/analytic.hpp"
#include "csgeim/csgeim.hpp"

using namespace csgeim;

namespace {

const SnapshotSet& training()
{
    static const SnapshotSet set = [] {
        AnalyticManifoldSpec spec;
        spec.nodes_x = spec.nodes_y = 17;
        spec.mu_count_x = spec.mu_count_y = 6;
        return generate_analytic_snapshots(spec);
    }();
    return set;
}

const GeimModel& model()
{
    static const GeimModel m = [] {
        GreedyOptions o;
        o.n_max = 8;
        o.m_max = 32;
        return greedy_build(training(), restrict_mask(training().domain, SensorRegion::All), o);
    }();
    return m;
}

} // namespace

TEST(Design, SquareDesignIsInterpolationMatrix)
{
    const GeimModel& m = model();
    for (int n = 1; n <= m.size(); ++n) {
        const BvlsProblem d = build_design(m, n, n);
        EXPECT_EQ(d.a, m.interpolation_matrix(n));
    }
    EXPECT_THROW(build_design(m, 4, 3), ConfigError);
    EXPECT_THROW(build_design(m, 4, 33), ConfigError);
}

TEST(Cone, FromModel)
{
    const GeimModel& m = model();
    const CoefficientCone cone = CoefficientCone::from_model(m, 5, 2.0);
    ASSERT_EQ(cone.size(), 5);
    for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(cone.bounds[i], 2.0 * m.bounds[static_cast<std::size_t>(i)]);
    EXPECT_THROW(CoefficientCone::from_model(m, 5, 1.0), ConfigError);
    EXPECT_THROW(CoefficientCone::from_model(m, 9, 2.0), ConfigError);
}

// c_i is the residual of J_{i-1} at x_i, so in the max norm |c_i| <= eps_{i-1} <= r_i.
// In L2 this needs |f|_inf <= |f|_L2, false on the unit square at i = 1.
TEST(Cone, TrainingCoefficientsInsideUnitConeLinf)
{
    GreedyOptions o;
    o.n_max = 8;
    o.norm = NormKind::Linf;
    const GeimModel m = greedy_build(training(), restrict_mask(training().domain, SensorRegion::All), o);
    const CoefficientCone cone = CoefficientCone::from_model(m, m.size(), 1.0 + 1e-12);
    for (const Snapshot& s : training().items) {
        const Eigen::VectorXd c = interpolate(m, measure_all(m.field_scale * s.phi2.values, m.sensors, m.size()));
        EXPECT_TRUE(cone.contains(c));
    }
}

TEST(Reconstruct, NoiselessSquareMatchesInterpolation)
{
    const GeimModel& m = model();
    const Snapshot& s = training().items[7];
    const Field2D f = m.field_scale * s.phi2;
    for (int n = 1; n <= m.size(); ++n) {
        const MeasurementVector y = exact_measurements(m, f, n);
        const CsReconstruction r = cs_reconstruct(m, y, n, CoefficientCone::from_model(m, n), {Component::Phi2});
        const Eigen::VectorXd c = interpolate(m, y.values);
        EXPECT_LT((r.coefficients - c).norm(), 1e-10 * (1.0 + c.norm())) << n;
    }
}

TEST(Reconstruct, NoiselessOverdeterminedIsAccurate)
{
    const GeimModel& m = model();
    const Snapshot& s = training().items[20];
    const Field2D f = m.field_scale * s.phi2;
    const int n = 6;
    const MeasurementVector y = exact_measurements(m, f, 24);
    const CsReconstruction r = cs_reconstruct(m, y, n, CoefficientCone::from_model(m, n), {Component::Phi2});
    const double err = m.domain.distance(r.fields[0].second, f, NormKind::L2);
    const Field2D geim = reconstruct(m, interpolate(m, y.values.head(n)), Component::Phi2);
    EXPECT_LT(err, 10.0 * m.domain.distance(geim, f, NormKind::L2) + 1e-12);
    EXPECT_LE(r.solve.kkt_residual, 1e-8);
}

TEST(Reconstruct, HugeNoiseStaysInCone)
{
    const GeimModel& m = model();
    const int n = 5;
    const CoefficientCone cone = CoefficientCone::from_model(m, n);
    const BvlsProblem d = build_design(m, n, 20);
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(20, 1e6);
    const BvlsResult r = cs_coefficients(d.a, cone, eta);
    EXPECT_TRUE(cone.contains(r.x));
    EXPECT_LE(r.kkt_residual, 1e-8 * (1.0 + r.gradient.norm()));
}

TEST(Reconstruct, MismatchedSizes)
{
    const GeimModel& m = model();
    const CoefficientCone cone = CoefficientCone::from_model(m, 4);
    const BvlsProblem d = build_design(m, 5, 10);
    EXPECT_THROW(cs_coefficients(d.a, cone, Eigen::VectorXd::Zero(10)), ConfigError);
    const BvlsProblem d4 = build_design(m, 4, 10);
    EXPECT_THROW(cs_coefficients(d4.a, cone, Eigen::VectorXd::Zero(9)), ConfigError);
}
