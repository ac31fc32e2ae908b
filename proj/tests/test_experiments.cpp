#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "csgeim/analytic.hpp"
#include "csgeim/experiments.hpp"

using namespace csgeim;

namespace {

struct Fixture {
    SnapshotSet train, test;
    GeimModel model;
};

const Fixture& fixture()
{
    static const Fixture f = [] {
        Fixture x;
        AnalyticManifoldSpec spec;
        spec.nodes_x = spec.nodes_y = 17;
        spec.mu_count_x = spec.mu_count_y = 6;
        x.train = generate_analytic_snapshots(spec);
        spec.midpoints = true;
        x.test = generate_analytic_snapshots(spec, SetRole::Test);
        GreedyOptions o;
        o.n_max = 8;
        o.m_max = 40;
        x.model = greedy_build(x.train, restrict_mask(x.train.domain, SensorRegion::All), o);
        return x;
    }();
    return f;
}

} // namespace

TEST(Noise, ZeroSigmaIsExact)
{
    const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(10, 0.0, 1.0);
    const MeasurementVector m = perturb(y, NoiseSpec{0.0, 1, 1}, 0);
    EXPECT_EQ(m.values, y);
}

TEST(Noise, LawOfLargeNumbers)
{
    const int draws = 100000;
    const double sigma = 0.3;
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < draws; ++r) {
        const double v = perturb(Eigen::VectorXd::Constant(1, 2.0), NoiseSpec{sigma, 77, 1}, r).values[0];
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / draws;
    const double var = sum2 / draws - mean * mean;
    EXPECT_LE(std::abs(mean - 2.0), 4.0 * sigma / std::sqrt(double(draws)));
    EXPECT_NEAR(std::sqrt(var), sigma, 0.01 * sigma);
}

TEST(Noise, DeterministicAndIndependentStreams)
{
    const Eigen::VectorXd y = Eigen::VectorXd::Zero(5);
    const NoiseSpec spec{1.0, 42, 3};
    EXPECT_EQ(perturb(y, spec, 2, 7).values, perturb(y, spec, 2, 7).values);
    EXPECT_NE(perturb(y, spec, 2, 7).values, perturb(y, spec, 2, 8).values);
    EXPECT_NE(perturb(y, spec, 1, 7).values, perturb(y, spec, 2, 7).values);
    // Reading k does not depend on how many sensors are read.
    const Eigen::VectorXd longer = perturb(Eigen::VectorXd::Zero(9), spec, 2, 7).values;
    EXPECT_EQ(longer.head(5), perturb(y, spec, 2, 7).values);
    EXPECT_THROW(perturb(y, NoiseSpec{-1.0, 0, 1}, 0), ConfigError);
}

TEST(Csv, HeaderRoundTripAndEmpty)
{
    ErrorTable t;
    EXPECT_EQ(to_csv(t), std::string(kCsvHeader) + "\n");
    t.rows.push_back({3, 6, 1e-2, "csgeim/phi2", "l2", 0.1234567890123456789, 1e-17, 50});
    t.rows.push_back({30, 30, 0.0, "geim/power", "h1", 2.0 / 3.0, 0.0, 1});
    std::istringstream in(to_csv(t));
    const ErrorTable back = parse_csv(in);
    EXPECT_EQ(back, t);
    std::istringstream bad("n,m\n1,2\n");
    EXPECT_THROW(parse_csv(bad), ConfigError);
}

TEST(Fit, ExactPowerLaw)
{
    std::vector<std::pair<double, double>> pts;
    for (int f : {1, 2, 4, 8, 16}) pts.emplace_back(5.0 * f, 0.3 / std::sqrt(5.0 * f));
    const LogLogFit fit = fit_loglog_slope(pts);
    EXPECT_NEAR(fit.slope, -0.5, 1e-12);
    EXPECT_NEAR(fit.residual, 0.0, 1e-12);
}

TEST(Fit, ConstantData)
{
    const LogLogFit fit = fit_loglog_slope({{1, 2}, {2, 2}, {4, 2}});
    EXPECT_NEAR(fit.slope, 0.0, 1e-14);
    EXPECT_THROW(fit_loglog_slope({{1, 2}, {2, 2}}), ConfigError);
    EXPECT_THROW(fit_loglog_slope({{1, 2}, {2, 0}, {3, 1}}), ConfigError);
}

TEST(Study, NoiselessRowsReproduceErrorCurves)
{
    const Fixture& fx = fixture();
    for (NormKind norm : {NormKind::L2, NormKind::Linf, NormKind::H1Semi}) {
        NoiseStudyOptions o;
        o.n_values = {1, 2, 3, 4, 5, 6, 7, 8};
        o.sigmas = {0.0};
        o.repetitions = 2;
        o.norm = norm;
        o.m_rule = MRule::Fixed;
        o.m_fixed = 8;
        o.constrained = false;
        const StudyTables t = run_noise_study(fx.model, fx.test, o);
        const auto curve = error_curves(fx.model, fx.test, norm, {Component::Phi2}, true);
        for (int n = 1; n <= 8; ++n) {
            const ErrorRow* r = t.max_of_means.find(n, 0.0, "geim/phi2");
            ASSERT_NE(r, nullptr);
            EXPECT_NEAR(r->mean_error, curve[0].values[static_cast<std::size_t>(n)],
                        1e-9 * curve[0].values[static_cast<std::size_t>(n)] + 1e-13)
                << to_string(norm) << " n=" << n;
            EXPECT_EQ(r->std_error, 0.0);
        }
    }
}

TEST(Study, CoefficientSpaceErrorMatchesDirectField)
{
    const Fixture& fx = fixture();
    NoiseStudyOptions o;
    o.n_values = {4};
    o.sigmas = {1e-2};
    o.repetitions = 3;
    o.m_ratio = 3.0;
    const StudyTables t = run_noise_study(fx.model, fx.test, o);

    // Direct: reconstruct every field, compute the error with the domain norm.
    const GeimModel& m = fx.model;
    double worst_plain = 0.0, worst_cs = 0.0;
    const CoefficientCone cone = CoefficientCone::from_model(m, 4, 2.0);
    const BvlsProblem design = build_design(m, 4, 12);
    for (std::size_t p = 0; p < fx.test.size(); ++p) {
        const Field2D f = m.field_scale * fx.test.items[p].phi2;
        const double nf = m.domain.norm(f, NormKind::L2);
        const Eigen::VectorXd y = measure_all(f.values, m.sensors, 12);
        double sp = 0.0, sc = 0.0;
        for (int rep = 0; rep < 3; ++rep) {
            const MeasurementVector eta = perturb(y, NoiseSpec{1e-2, o.seed, 3}, rep, p);
            const Field2D plain = reconstruct(m, interpolate(m, eta.values.head(4)), Component::Phi2);
            sp += m.domain.distance(plain, f, NormKind::L2) / nf;
            const Eigen::VectorXd c = cs_coefficients(design.a, cone, eta.values).x;
            sc += m.domain.distance(reconstruct(m, c, Component::Phi2), f, NormKind::L2) / nf;
        }
        worst_plain = std::max(worst_plain, sp / 3);
        worst_cs = std::max(worst_cs, sc / 3);
    }
    EXPECT_NEAR(t.max_of_means.find(4, 1e-2, "geim/phi2")->mean_error, worst_plain, 1e-9 * worst_plain);
    EXPECT_NEAR(t.max_of_means.find(4, 1e-2, "csgeim/phi2")->mean_error, worst_cs, 1e-9 * worst_cs);
    EXPECT_EQ(t.max_of_means.find(4, 1e-2, "csgeim/phi2")->m, 12);
    // Aggregates are ordered: test mean <= max of means <= mean of max.
    for (std::size_t k = 0; k < t.max_of_means.rows.size(); ++k) {
        EXPECT_LE(t.test_mean.rows[k].mean_error, t.max_of_means.rows[k].mean_error * (1 + 1e-12));
        EXPECT_LE(t.max_of_means.rows[k].mean_error, t.mean_of_max.rows[k].mean_error * (1 + 1e-12));
    }
}

TEST(Study, RepetitionPrefixStable)
{
    // Repetition 0 draws the same noise whatever the repetition count.
    const Fixture& fx = fixture();
    NoiseStudyOptions o;
    o.n_values = {3};
    o.sigmas = {1e-3};
    const SnapshotSet single{fx.test.domain, SetRole::Test, {fx.test.items[0]}};
    o.repetitions = 1;
    const double e0 = run_noise_study(fx.model, single, o).max_of_means.rows[0].mean_error;
    o.repetitions = 2;
    const ErrorRow two = run_noise_study(fx.model, single, o).max_of_means.rows[0];
    // mean = (e0 + e1) / 2 and std = |e0 - e1| / sqrt 2 pin e0 down.
    const double e1 = 2.0 * two.mean_error - e0;
    EXPECT_NEAR(std::abs(e0 - e1) / std::sqrt(2.0), two.std_error, 1e-12 + 1e-9 * two.std_error);
}

TEST(Study, DoublingRepetitionsIsStatisticallyStable)
{
    const Fixture& fx = fixture();
    NoiseStudyOptions o;
    o.n_values = {4};
    o.sigmas = {1e-2};
    o.repetitions = 20;
    const ErrorTable a = run_noise_study(fx.model, fx.test, o).test_mean;
    o.repetitions = 40;
    const ErrorTable b = run_noise_study(fx.model, fx.test, o).test_mean;
    const double n_a = 20.0 * fx.test.size(), n_b = 40.0 * fx.test.size();
    for (std::size_t k = 0; k < a.rows.size(); ++k) {
        const double se = std::sqrt(std::pow(a.rows[k].std_error, 2) / n_a + std::pow(b.rows[k].std_error, 2) / n_b);
        EXPECT_LE(std::abs(a.rows[k].mean_error - b.rows[k].mean_error), 3.0 * se);
    }
}

TEST(Study, RatioSweep)
{
    const Fixture& fx = fixture();
    RatioStudyOptions o;
    o.n = 2;
    o.repetitions = 4;
    o.sigma = 0.0;
    const RatioStudyResult r = run_ratio_study(fx.model, fx.test, o);
    ASSERT_EQ(r.tables.max_of_means.rows.size(), 5u);
    EXPECT_EQ(r.tables.max_of_means.rows.back().m, 32);
    o.factors = {1, 2};
    EXPECT_THROW(run_ratio_study(fx.model, fx.test, o), ConfigError);
}

TEST(Study, InvalidOptions)
{
    const Fixture& fx = fixture();
    NoiseStudyOptions o;
    o.n_values = {9};
    EXPECT_THROW(run_noise_study(fx.model, fx.test, o), ConfigError);
    o.n_values = {4};
    o.m_rule = MRule::Fixed;
    o.m_fixed = 100;
    EXPECT_THROW(run_noise_study(fx.model, fx.test, o), ConfigError);
    o.m_fixed = 3;
    EXPECT_THROW(run_noise_study(fx.model, fx.test, o), ConfigError);
}

TEST(Config, ParseKeyValue)
{
    std::istringstream in("# comment\ncase = II\nnorm = h1\nn = 1-4, 6\nsigma = 1e-2, 1e-4\nrepetitions = 7\n"
                          "test = test_set\ntraining = train_set\nm_rule = fixed\nm_fixed = 12\n");
    const KeyValueConfig kv = KeyValueConfig::parse(in);
    const StudyConfig c = StudyConfig::from(kv, "/base");
    EXPECT_EQ(c.region, SensorRegion::Core);
    EXPECT_EQ(c.norm, NormKind::H1Semi);
    EXPECT_EQ(c.n_values, (std::vector<int>{1, 2, 3, 4, 6}));
    EXPECT_EQ(c.sigmas, (std::vector<double>{1e-2, 1e-4}));
    EXPECT_EQ(c.noise.repetitions, 7);
    EXPECT_EQ(c.test, fs::path("/base/test_set"));
    EXPECT_EQ(c.m_max(), 12);
    EXPECT_EQ(c.noise_options().m_for(3), 12);
}

TEST(Config, Errors)
{
    std::istringstream no_eq("case II\n");
    EXPECT_THROW(KeyValueConfig::parse(no_eq), ConfigError);
    std::istringstream missing("case = I\n");
    EXPECT_THROW(StudyConfig::from(KeyValueConfig::parse(missing)), ConfigError);
    std::istringstream bad_norm("norm = l3\ntest = a\ntraining = b\n");
    EXPECT_THROW(StudyConfig::from(KeyValueConfig::parse(bad_norm)), ConfigError);
    EXPECT_THROW(parse_int_list("5-2"), ConfigError);
    EXPECT_EQ(parse_int_list("2-10:4"), (std::vector<int>{2, 6, 10}));
}

TEST(Output, RootFromEnvironment)
{
    ::setenv("CSGEIM_OUTPUT_ROOT", "/tmp/root", 1);
    EXPECT_EQ(resolve_output("out"), fs::path("/tmp/root/out"));
    EXPECT_EQ(resolve_output("/abs"), fs::path("/abs"));
    ::unsetenv("CSGEIM_OUTPUT_ROOT");
    EXPECT_EQ(resolve_output("out"), fs::path("out"));
    EXPECT_EQ(study_stem("noise", SensorRegion::Core, NormKind::L2), "noise_caseII_l2");
}
