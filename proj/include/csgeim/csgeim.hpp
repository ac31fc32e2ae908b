#pragma once

/**
 * @file csgeim.hpp
 * @brief Constrained stabilized reconstruction: box-constrained least squares
 *        on the coefficient cone |c_i| <= alpha * r_i using m >= n sensors.
 */

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "csgeim/bvls.hpp"
#include "csgeim/errors.hpp"
#include "csgeim/geim.hpp"

namespace csgeim {

struct CoefficientCone {
    double alpha = 2.0;
    Eigen::VectorXd bounds; ///< alpha * r_i

    static CoefficientCone from_model(const GeimModel& model, int n, double alpha = 2.0)
    {
        detail::require(alpha > 1.0, "cone factor alpha must be > 1");
        detail::require(n >= 1 && n <= model.size(), "cone dimension out of range");
        CoefficientCone cone;
        cone.alpha = alpha;
        cone.bounds.resize(n);
        for (int i = 0; i < n; ++i) {
            const double r = model.bounds[static_cast<std::size_t>(i)];
            if (!(r > 0.0) || !std::isfinite(r)) throw NumericalError("coefficient bound r_" + std::to_string(i + 1) + " is not positive");
            cone.bounds[i] = alpha * r;
        }
        return cone;
    }

    int size() const { return static_cast<int>(bounds.size()); }

    bool contains(const Eigen::Ref<const Eigen::VectorXd>& c) const
    {
        if (c.size() > bounds.size()) return false;
        for (Eigen::Index i = 0; i < c.size(); ++i) {
            if (!(std::abs(c[i]) <= bounds[i])) return false;
        }
        return true;
    }
};

/// Readings of the first m model sensors, in greedy order.
struct MeasurementVector {
    Eigen::VectorXd values;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    int repetition = 0;

    int m() const { return static_cast<int>(values.size()); }
};

inline MeasurementVector exact_measurements(const GeimModel& model, const Field2D& f, int m)
{
    detail::require(f.grid == model.domain.grid(), "grid mismatch");
    return MeasurementVector{measure_all(f.values, model.sensors, m), 0.0, 0, 0};
}

/// m x n design with A(k, i) = q_i^phi2(x_k); the box and target are left empty.
inline BvlsProblem build_design(const GeimModel& model, int n, int m)
{
    detail::require(n >= 1 && n <= model.size(), "basis dimension out of range");
    if (m > model.sensor_count()) {
        throw ConfigError("m = " + std::to_string(m) + " exceeds the " + std::to_string(model.sensor_count()) +
                          " stored sensors");
    }
    detail::require(m >= n, "CS reconstruction needs m >= n");
    BvlsProblem p;
    p.a.resize(m, n);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < m; ++k) p.a(k, i) = measure(model.q2.col(i), model.sensors[static_cast<std::size_t>(k)]);
    }
    return p;
}

/// Coefficients of the constrained least-squares fit at dimension n.
/// The design block A is taken as given so repeated solves can share it.
inline BvlsResult cs_coefficients(const Eigen::Ref<const Eigen::MatrixXd>& design, const CoefficientCone& cone,
                                  const Eigen::Ref<const Eigen::VectorXd>& eta, const BvlsOptions& opt = {})
{
    detail::require(design.cols() == cone.size(), "cone and design disagree on n");
    detail::require(eta.size() == design.rows(), "measurement count does not match the design");
    BvlsProblem p{design, eta, -cone.bounds, cone.bounds};
    BvlsResult r = bvls_solve(p, opt);
    if (!cone.contains(r.x)) throw NumericalError("constrained coefficients left the cone");
    return r;
}

struct CsReconstruction {
    Eigen::VectorXd coefficients;
    std::vector<std::pair<Component, Field2D>> fields;
    BvlsResult solve;
};

inline CsReconstruction cs_reconstruct(const GeimModel& model, const MeasurementVector& meas, int n,
                                       const CoefficientCone& cone, const std::vector<Component>& components,
                                       const BvlsOptions& opt = {})
{
    const int m = meas.m();
    detail::require(m >= n, "CS reconstruction needs m >= n measurements");
    detail::require(cone.size() == n, "cone dimension must equal n");
    const BvlsProblem design = build_design(model, n, m);
    CsReconstruction out;
    out.solve = cs_coefficients(design.a, cone, meas.values, opt);
    out.coefficients = out.solve.x;
    for (Component c : components) out.fields.emplace_back(c, reconstruct(model, out.coefficients, c));
    return out;
}

} // namespace csgeim
