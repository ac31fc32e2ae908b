#pragma once

/**
 * @file bvls.hpp
 * @brief Bounded-variable least squares: min |A c - eta|^2 s.t. lower <= c <= upper.
 *
 * Primal active-set method. Each variable is free or held at one of its
 * bounds. The free variables are solved for by QR; a step toward that
 * solution is cut at the first bound it crosses, and that variable joins
 * the active set. At a subspace minimum the active variable whose gradient
 * points most strongly into the box is released. A must have full column
 * rank, which makes every subproblem strictly convex and the method finite.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "csgeim/errors.hpp"

namespace csgeim {

struct BvlsProblem {
    Eigen::MatrixXd a;
    Eigen::VectorXd target;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    void validate() const
    {
        const Eigen::Index n = a.cols();
        detail::require(n >= 1, "BVLS problem has no unknowns");
        detail::require(a.rows() >= 1 && target.size() == a.rows(), "BVLS target length does not match A");
        detail::require(lower.size() == n && upper.size() == n, "BVLS bound length does not match A");
        detail::require(a.allFinite() && target.allFinite(), "BVLS data must be finite");
        for (Eigen::Index i = 0; i < n; ++i) {
            detail::require(!(lower[i] > upper[i]), "BVLS lower bound exceeds upper bound");
        }
    }
};

enum class BoundState : signed char { AtLower = -1, Free = 0, AtUpper = 1, Fixed = 2 };

struct BvlsResult {
    Eigen::VectorXd x;
    double objective = 0.0;  ///< |A x - target|^2
    Eigen::VectorXd gradient; ///< 2 A^T (A x - target)
    std::vector<BoundState> state;
    int pivots = 0;
    double kkt_residual = 0.0;
};

struct BvlsOptions {
    double tol = 1e-10;  ///< KKT tolerance on gradient components
    long max_pivots = 0; ///< 0 selects 10 * n * m
};

/// Largest KKT violation: |g_i| for free variables, the inward-pointing part
/// of g_i for variables at a bound.
inline double bvls_kkt_residual(const Eigen::VectorXd& g, const std::vector<BoundState>& state)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < state.size(); ++i) {
        const double gi = g[static_cast<Eigen::Index>(i)];
        switch (state[i]) {
        case BoundState::Free: worst = std::max(worst, std::abs(gi)); break;
        case BoundState::AtLower: worst = std::max(worst, -gi); break;
        case BoundState::AtUpper: worst = std::max(worst, gi); break;
        case BoundState::Fixed: break;
        }
    }
    return worst;
}

inline BvlsResult bvls_solve(const BvlsProblem& p, const BvlsOptions& opt = {})
{
    p.validate();
    detail::require(opt.tol > 0.0, "BVLS tolerance must be > 0");
    const Eigen::Index n = p.a.cols();
    const Eigen::Index m = p.a.rows();
    const long cap = opt.max_pivots > 0 ? opt.max_pivots : 10 * static_cast<long>(n) * static_cast<long>(m);

    BvlsResult res;
    res.x = Eigen::VectorXd::Zero(n);
    res.state.assign(static_cast<std::size_t>(n), BoundState::Free);
    for (Eigen::Index i = 0; i < n; ++i) {
        // Start from the point of the box closest to the origin.
        const double v = std::clamp(0.0, p.lower[i], p.upper[i]);
        res.x[i] = v;
        auto& s = res.state[static_cast<std::size_t>(i)];
        if (p.lower[i] == p.upper[i]) s = BoundState::Fixed;
        else if (v == p.lower[i]) s = BoundState::AtLower;
        else if (v == p.upper[i]) s = BoundState::AtUpper;
    }

    std::vector<Eigen::Index> free;
    Eigen::MatrixXd af;
    auto gradient = [&] { return Eigen::VectorXd(2.0 * (p.a.transpose() * (p.a * res.x - p.target))); };

    for (;;) {
        free.clear();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (res.state[static_cast<std::size_t>(i)] == BoundState::Free) free.push_back(i);
        }
        const auto nf = static_cast<Eigen::Index>(free.size());
        if (nf > 0) {
            af.resize(m, nf);
            Eigen::VectorXd rhs = p.target;
            for (Eigen::Index i = 0, k = 0; i < n; ++i) {
                if (res.state[static_cast<std::size_t>(i)] == BoundState::Free) {
                    af.col(k++) = p.a.col(i);
                } else {
                    rhs.noalias() -= res.x[i] * p.a.col(i);
                }
            }
            const Eigen::VectorXd z = af.householderQr().solve(rhs);
            if (!z.allFinite()) throw NumericalError("BVLS subproblem is singular (A lacks full column rank)");

            // Longest feasible step from x_F toward z.
            double t = 1.0;
            Eigen::Index blocking = -1;
            for (Eigen::Index k = 0; k < nf; ++k) {
                const Eigen::Index i = free[static_cast<std::size_t>(k)];
                const double d = z[k] - res.x[i];
                double ti = std::numeric_limits<double>::infinity();
                if (d < 0.0) ti = (p.lower[i] - res.x[i]) / d;
                else if (d > 0.0) ti = (p.upper[i] - res.x[i]) / d;
                if (ti < t) {
                    t = std::max(ti, 0.0);
                    blocking = k;
                }
            }
            for (Eigen::Index k = 0; k < nf; ++k) {
                const Eigen::Index i = free[static_cast<std::size_t>(k)];
                res.x[i] = blocking < 0 ? z[k] : std::clamp(res.x[i] + t * (z[k] - res.x[i]), p.lower[i], p.upper[i]);
            }
            if (blocking >= 0) {
                const Eigen::Index i = free[static_cast<std::size_t>(blocking)];
                const bool low = z[blocking] < res.x[i] || res.x[i] <= p.lower[i];
                res.x[i] = low ? p.lower[i] : p.upper[i];
                res.state[static_cast<std::size_t>(i)] = low ? BoundState::AtLower : BoundState::AtUpper;
                if (++res.pivots > cap) break;
                continue;
            }
        }

        // Subspace minimum: release the most violated bound, if any.
        const Eigen::VectorXd g = gradient();
        Eigen::Index release = -1;
        double worst = opt.tol;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto s = res.state[static_cast<std::size_t>(i)];
            const double v = s == BoundState::AtLower ? -g[i] : s == BoundState::AtUpper ? g[i] : 0.0;
            if (v > worst) {
                worst = v;
                release = i;
            }
        }
        if (release < 0) break;
        res.state[static_cast<std::size_t>(release)] = BoundState::Free;
        if (++res.pivots > cap) break;
    }
    if (res.pivots > cap) {
        std::ostringstream ss;
        ss << "BVLS exceeded " << cap << " pivots (n = " << n << ", m = " << m
           << ", kkt residual = " << bvls_kkt_residual(gradient(), res.state) << ")";
        throw NumericalError(ss.str());
    }
    res.gradient = gradient();
    res.objective = (p.a * res.x - p.target).squaredNorm();
    res.kkt_residual = bvls_kkt_residual(res.gradient, res.state);
    return res;
}

} // namespace csgeim
