#pragma once

/**
 * @file geim.hpp
 * @brief Greedy GEIM basis and sensor selection with pointwise sensors.
 *
 * Every basis triple (q^phi2, q^phi1, q^P) comes from one selected training
 * snapshot. Only phi2 is measured; the companions are divided by the same
 * scalar as q^phi2 so that one coefficient vector reconstructs all three.
 * All fields inside a model are multiplied by model.field_scale, chosen so
 * that the largest phi2 value at an admissible sensor over the training set
 * is 1.
 */

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "csgeim/archive.hpp"
#include "csgeim/diffusion.hpp"
#include "csgeim/errors.hpp"
#include "csgeim/mesh_field.hpp"

namespace csgeim {

enum class Component { Phi1, Phi2, Power };

inline std::string to_string(Component c)
{
    switch (c) {
    case Component::Phi1: return "phi1";
    case Component::Phi2: return "phi2";
    case Component::Power: return "power";
    }
    return "?";
}

inline Component parse_component(std::string_view text)
{
    if (text == "phi1") return Component::Phi1;
    if (text == "phi2") return Component::Phi2;
    if (text == "power" || text == "P") return Component::Power;
    throw ConfigError("unknown component '" + std::string(text) + "' (expected phi1, phi2 or power)");
}

/// Pointwise sensor on phi2.
struct Sensor {
    int node = -1;
};

enum class SensorFill { Greedy, Random };

inline SensorFill parse_sensor_fill(std::string_view text)
{
    if (text == "greedy") return SensorFill::Greedy;
    if (text == "random") return SensorFill::Random;
    throw ConfigError("unknown sensor strategy '" + std::string(text) + "' (expected greedy or random)");
}

struct GeimModel {
    Domain domain;
    NormKind norm = NormKind::L2;
    SensorRegion region = SensorRegion::All;
    double field_scale = 1.0;

    std::vector<std::vector<double>> mu; ///< selected parameters, greedy order
    std::vector<int> selected;           ///< training index of each selected snapshot
    std::vector<Sensor> sensors;         ///< m_max >= n sensors; the first n are the magic points
    std::vector<std::string> sensor_origin; ///< "greedy" or "fill" per sensor
    Eigen::MatrixXd q2, q1, qp;          ///< nodes x n basis; q1, qp empty for scalar manifolds
    Eigen::MatrixXd design;              ///< m_max x n, design(k, i) = q_i^phi2(x_k)

    std::vector<double> eps;      ///< eps[0..n]: max training error after n steps (eps[0] = max norm)
    std::vector<double> lebesgue; ///< lebesgue[0..n] in the model norm, lebesgue[0] = 0
    std::vector<double> bounds;   ///< bounds[i-1] = r_i, i = 1..n

    int size() const { return static_cast<int>(q2.cols()); }
    int sensor_count() const { return static_cast<int>(sensors.size()); }
    bool has_companions() const { return q1.cols() == q2.cols() && qp.cols() == q2.cols() && q1.cols() > 0; }

    const Eigen::MatrixXd& basis(Component c) const
    {
        switch (c) {
        case Component::Phi2: return q2;
        case Component::Phi1:
            if (!has_companions()) throw ConfigError("model has no phi1 basis");
            return q1;
        case Component::Power:
            if (!has_companions()) throw ConfigError("model has no power basis");
            return qp;
        }
        throw ConfigError("unknown component");
    }

    /// Interpolation matrix B: the leading n x n block of the design matrix.
    Eigen::MatrixXd interpolation_matrix(int n) const { return design.topLeftCorner(n, n); }
};

// ---------------------------------------------------------------------------
// Measurement

inline double measure(const Eigen::Ref<const Eigen::VectorXd>& values, const Sensor& s)
{
    if (s.node < 0 || s.node >= values.size()) {
        throw ConfigError("sensor node " + std::to_string(s.node) + " outside the grid");
    }
    return values[s.node];
}

inline double measure(const Field2D& f, const Sensor& s) { return measure(f.values, s); }

/// Readings of the first count sensors.
inline Eigen::VectorXd measure_all(const Eigen::Ref<const Eigen::VectorXd>& values, const std::vector<Sensor>& sensors,
                                   int count)
{
    detail::require(count >= 0 && count <= static_cast<int>(sensors.size()), "not enough sensors");
    Eigen::VectorXd y(count);
    for (int k = 0; k < count; ++k) y[k] = measure(values, sensors[static_cast<std::size_t>(k)]);
    return y;
}

namespace detail {

/// Solves L c = y for lower triangular L.
inline Eigen::VectorXd forward_substitute(const Eigen::Ref<const Eigen::MatrixXd>& L,
                                          const Eigen::Ref<const Eigen::VectorXd>& y)
{
    const Eigen::Index n = y.size();
    require(L.rows() >= n && L.cols() >= n, "interpolation matrix too small");
    Eigen::VectorXd c(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = y[i];
        for (Eigen::Index j = 0; j < i; ++j) s -= L(i, j) * c[j];
        c[i] = s / L(i, i);
    }
    return c;
}

/// Central/one-sided difference matrices matching Domain::gradient.
inline std::pair<Eigen::SparseMatrix<double>, Eigen::SparseMatrix<double>> gradient_matrices(const Domain& domain)
{
    const Grid2D& g = domain.grid();
    const auto n = static_cast<Eigen::Index>(g.size());
    std::vector<Eigen::Triplet<double>> tx, ty;
    auto add = [&](std::vector<Eigen::Triplet<double>>& t, int p, int lo, int hi, double h) {
        const bool has_lo = lo >= 0 && domain.in_closure(lo);
        const bool has_hi = hi >= 0 && domain.in_closure(hi);
        if (has_lo && has_hi) {
            t.emplace_back(p, hi, 1.0 / (2.0 * h));
            t.emplace_back(p, lo, -1.0 / (2.0 * h));
        } else if (has_hi) {
            t.emplace_back(p, hi, 1.0 / h);
            t.emplace_back(p, p, -1.0 / h);
        } else if (has_lo) {
            t.emplace_back(p, p, 1.0 / h);
            t.emplace_back(p, lo, -1.0 / h);
        }
    };
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const int p = g.node(i, j);
            if (!domain.in_closure(p)) continue;
            add(tx, p, i > 0 ? p - 1 : -1, i + 1 < g.nx ? p + 1 : -1, g.hx);
            add(ty, p, j > 0 ? p - g.nx : -1, j + 1 < g.ny ? p + g.nx : -1, g.hy);
        }
    }
    Eigen::SparseMatrix<double> dx(n, n), dy(n, n);
    dx.setFromTriplets(tx.begin(), tx.end());
    dy.setFromTriplets(ty.begin(), ty.end());
    return {dx, dy};
}

/// Symmetric matrix M with f^T M g equal to Domain::inner(f, g, kind).
inline Eigen::SparseMatrix<double> inner_product_matrix(const Domain& domain, NormKind kind)
{
    const auto n = static_cast<Eigen::Index>(domain.grid().size());
    Eigen::SparseMatrix<double> w(n, n);
    std::vector<Eigen::Triplet<double>> t;
    for (Eigen::Index k = 0; k < n; ++k) {
        if (domain.weights()[k] > 0.0) t.emplace_back(k, k, domain.weights()[k]);
    }
    w.setFromTriplets(t.begin(), t.end());
    if (kind == NormKind::L2) return w;
    if (kind == NormKind::H1Semi) {
        const auto [dx, dy] = gradient_matrices(domain);
        Eigen::SparseMatrix<double> m = Eigen::SparseMatrix<double>(dx.transpose()) * w * dx;
        m += Eigen::SparseMatrix<double>(dy.transpose()) * w * dy;
        return m;
    }
    throw ConfigError("the Linf norm has no inner product");
}

/// Bilinear (Q1) finite-element stiffness matrix on the interior cells.
inline Eigen::SparseMatrix<double> q1_stiffness(const Domain& domain)
{
    const Grid2D& g = domain.grid();
    const auto n = static_cast<Eigen::Index>(g.size());
    const double ax = g.hy / (6.0 * g.hx);
    const double ay = g.hx / (6.0 * g.hy);
    // Corner order (0,0), (1,0), (0,1), (1,1).
    const double kx[4][4] = {{2, -2, 1, -1}, {-2, 2, -1, 1}, {1, -1, 2, -2}, {-1, 1, -2, 2}};
    const double ky[4][4] = {{2, 1, -2, -1}, {1, 2, -1, -2}, {-2, -1, 2, 1}, {-1, -2, 1, 2}};
    std::vector<Eigen::Triplet<double>> t;
    for (int cj = 0; cj < g.cells_y(); ++cj) {
        for (int ci = 0; ci < g.cells_x(); ++ci) {
            if (domain.regions().at(ci, cj) == kExterior) continue;
            const int c[4] = {g.node(ci, cj), g.node(ci + 1, cj), g.node(ci, cj + 1), g.node(ci + 1, cj + 1)};
            for (int a = 0; a < 4; ++a) {
                for (int b = 0; b < 4; ++b) t.emplace_back(c[a], c[b], ax * kx[a][b] + ay * ky[a][b]);
            }
        }
    }
    Eigen::SparseMatrix<double> k(n, n);
    k.setFromTriplets(t.begin(), t.end());
    return k;
}

/// Columns K^+ e_s for the given nodes; K^+ is the pseudo-inverse of the Q1
/// stiffness on the closure nodes (kernel: constants).
inline Eigen::MatrixXd stiffness_pinv_columns(const Domain& domain, const std::vector<int>& nodes)
{
    const auto n = static_cast<Eigen::Index>(domain.grid().size());
    std::vector<int> closure;
    std::vector<int> pos(static_cast<std::size_t>(n), -1);
    for (Eigen::Index k = 0; k < n; ++k) {
        if (domain.in_closure(static_cast<int>(k))) {
            pos[static_cast<std::size_t>(k)] = static_cast<int>(closure.size());
            closure.push_back(static_cast<int>(k));
        }
    }
    const auto nc = static_cast<Eigen::Index>(closure.size());
    require(nc >= 2, "domain too small for the H1 seminorm");
    const Eigen::SparseMatrix<double> k = q1_stiffness(domain);
    // Pin the first closure node; the reduced matrix is SPD for a connected domain.
    std::vector<Eigen::Triplet<double>> t;
    for (int col = 0; col < k.outerSize(); ++col) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(k, col); it; ++it) {
            const int r = pos[static_cast<std::size_t>(it.row())];
            const int c = pos[static_cast<std::size_t>(it.col())];
            if (r > 0 && c > 0) t.emplace_back(r - 1, c - 1, it.value());
        }
    }
    Eigen::SparseMatrix<double> reduced(nc - 1, nc - 1);
    reduced.setFromTriplets(t.begin(), t.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(reduced);
    if (ldlt.info() != Eigen::Success) throw NumericalError("stiffness factorization failed");

    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t s = 0; s < nodes.size(); ++s) {
        const int p = pos[static_cast<std::size_t>(nodes[s])];
        require(p >= 0, "sensor outside the domain");
        Eigen::VectorXd rhs = Eigen::VectorXd::Constant(nc, -1.0 / static_cast<double>(nc));
        rhs[p] += 1.0;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(nc);
        x.tail(nc - 1) = ldlt.solve(rhs.tail(nc - 1));
        x.array() -= x.mean();
        for (Eigen::Index k2 = 0; k2 < nc; ++k2) out(closure[static_cast<std::size_t>(k2)], static_cast<Eigen::Index>(s)) = x[k2];
    }
    return out;
}

inline double column_norm(const Domain& domain, const Eigen::SparseMatrix<double>* m,
                          const Eigen::Ref<const Eigen::VectorXd>& v, NormKind kind)
{
    if (kind == NormKind::Linf) {
        double mx = 0.0;
        for (Eigen::Index k = 0; k < v.size(); ++k) {
            if (domain.weights()[k] > 0.0) mx = std::max(mx, std::abs(v[k]));
        }
        return mx;
    }
    return std::sqrt(std::max(0.0, v.dot(*m * v)));
}

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Snapshot component as a nodes x N matrix, multiplied by scale.
inline Eigen::MatrixXd stack(const SnapshotSet& set, Component c, double scale)
{
    detail::require(!set.empty(), "empty snapshot set");
    const auto n = static_cast<Eigen::Index>(set.domain.grid().size());
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(set.size()));
    for (std::size_t k = 0; k < set.size(); ++k) {
        const Snapshot& s = set.items[k];
        const Field2D* f = &s.phi2;
        if (c == Component::Phi1) {
            if (!s.phi1) throw ConfigError("snapshot set has no phi1 component");
            f = &*s.phi1;
        } else if (c == Component::Power) {
            if (!s.power) throw ConfigError("snapshot set has no power component");
            f = &*s.power;
        }
        detail::require(f->grid == set.domain.grid(), "grid mismatch");
        x.col(static_cast<Eigen::Index>(k)) = scale * f->values;
    }
    return x;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Interpolation and reconstruction

/// Coefficients of the interpolant from n readings (forward substitution on B).
inline Eigen::VectorXd interpolate(const GeimModel& model, const Eigen::Ref<const Eigen::VectorXd>& y)
{
    if (y.size() > model.size()) {
        throw ConfigError("measurement count " + std::to_string(y.size()) + " does not fit a model of size " +
                          std::to_string(model.size()));
    }
    return detail::forward_substitute(model.design.topLeftCorner(y.size(), y.size()), y);
}

inline Field2D reconstruct(const GeimModel& model, const Eigen::Ref<const Eigen::VectorXd>& c, Component component)
{
    detail::require(c.size() <= model.size(), "more coefficients than basis functions");
    const Eigen::MatrixXd& q = model.basis(component);
    return Field2D(model.domain.grid(), q.leftCols(c.size()) * c);
}

// ---------------------------------------------------------------------------
// Lebesgue constants and coefficient bounds

/// Lambda_n for n = 0..n_max (entry 0 is 0) of the interpolation operator in the given norm.
/// L2 and Linf use the discrete operator norm on nodal fields. For H1 the
/// bilinear finite-element seminorm is used in numerator and denominator,
/// with fields restricted to zero mean.
inline std::vector<double> lebesgue_table(const GeimModel& model, NormKind kind, int n_max)
{
    detail::require(n_max >= 0 && n_max <= model.size(), "basis size out of range");
    std::vector<double> table(static_cast<std::size_t>(n_max) + 1, 0.0);
    if (n_max == 0) return table;
    const Domain& dom = model.domain;
    const Eigen::MatrixXd q = model.q2.leftCols(n_max);

    if (kind == NormKind::Linf) {
        std::vector<Eigen::Index> closure;
        for (Eigen::Index k = 0; k < q.rows(); ++k) {
            if (dom.weights()[k] > 0.0) closure.push_back(k);
        }
        Eigen::MatrixXd qt(n_max, static_cast<Eigen::Index>(closure.size()));
        for (std::size_t k = 0; k < closure.size(); ++k) qt.col(static_cast<Eigen::Index>(k)) = q.row(closure[k]).transpose();
        for (int n = 1; n <= n_max; ++n) {
            // Cardinal functions: Psi^T = B^-T Q^T.
            const Eigen::MatrixXd b = model.interpolation_matrix(n);
            const Eigen::MatrixXd psi_t =
                b.transpose().triangularView<Eigen::Upper>().solve(qt.topRows(n));
            table[static_cast<std::size_t>(n)] = psi_t.cwiseAbs().colwise().sum().maxCoeff();
        }
        return table;
    }

    Eigen::MatrixXd gram;
    Eigen::MatrixXd h;
    std::vector<int> nodes;
    for (int k = 0; k < n_max; ++k) nodes.push_back(model.sensors[static_cast<std::size_t>(k)].node);
    if (kind == NormKind::L2) {
        const Eigen::SparseMatrix<double> m = detail::inner_product_matrix(dom, NormKind::L2);
        gram = q.transpose() * (m * q);
    } else {
        const Eigen::SparseMatrix<double> k = detail::q1_stiffness(dom);
        gram = q.transpose() * (k * q);
        const Eigen::MatrixXd cols = detail::stiffness_pinv_columns(dom, nodes);
        h.resize(n_max, n_max);
        for (int a = 0; a < n_max; ++a) {
            for (int b = 0; b < n_max; ++b) h(a, b) = cols(nodes[static_cast<std::size_t>(a)], b);
        }
        h = 0.5 * (h + h.transpose()).eval();
    }
    for (int n = 1; n <= n_max; ++n) {
        const Eigen::MatrixXd b = model.interpolation_matrix(n);
        // Psi = Q B^-1, so Psi^T M Psi = B^-T G B^-1.
        Eigen::MatrixXd scale(n, n);
        if (kind == NormKind::L2) {
            scale.setZero();
            for (int i = 0; i < n; ++i) scale(i, i) = 1.0 / std::sqrt(dom.weights()[nodes[static_cast<std::size_t>(i)]]);
        } else {
            Eigen::LLT<Eigen::MatrixXd> llt(h.topLeftCorner(n, n));
            if (llt.info() != Eigen::Success) throw NumericalError("sensor Gram matrix is not positive definite");
            scale = llt.matrixL();
        }
        const Eigen::MatrixXd t = b.triangularView<Eigen::Lower>().solve(scale);
        Eigen::MatrixXd c = t.transpose() * gram.topLeftCorner(n, n) * t;
        c = 0.5 * (c + c.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c, Eigen::EigenvaluesOnly);
        table[static_cast<std::size_t>(n)] = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
    }
    return table;
}

inline double lebesgue_constant(const GeimModel& model, int n, NormKind kind)
{
    if (n < 1 || n > model.size()) {
        throw ConfigError("Lebesgue constant requested for n = " + std::to_string(n) + " outside 1.." +
                          std::to_string(model.size()));
    }
    return lebesgue_table(model, kind, n)[static_cast<std::size_t>(n)];
}

/// r_i = (1 + Lambda_{i-1}) eps_{i-1}, i = 1..n.
inline std::vector<double> coefficient_bounds(const GeimModel& model)
{
    const auto n = static_cast<std::size_t>(model.size());
    detail::require(model.eps.size() >= n + 1 && model.lebesgue.size() >= n, "model tables are not populated");
    std::vector<double> r(n);
    for (std::size_t i = 1; i <= n; ++i) r[i - 1] = (1.0 + model.lebesgue[i - 1]) * model.eps[i - 1];
    return r;
}

// ---------------------------------------------------------------------------
// Greedy construction

struct GreedyOptions {
    int n_max = 30;
    int m_max = 0; ///< total sensors (>= n_max); 0 means n_max
    NormKind norm = NormKind::L2;
    SensorFill fill = SensorFill::Greedy;
    std::uint64_t fill_seed = 0;
    /// Multiplier applied to all fields. 0 selects 1 / max phi2 over the mask and training set.
    double field_scale = 0.0;
    double exhaustion_tol = 1e-13; ///< greedy stops once the largest residual norm drops below this
};

namespace detail {

/// Remaining sensors after the greedy ran out of residual: the mask node
/// farthest from all chosen sensors, lowest index on ties.
inline void farthest_point_fill(const Grid2D& g, const std::vector<int>& mask, std::vector<Sensor>& sensors,
                                std::vector<std::string>& origin, int m_max)
{
    std::vector<double> dist(mask.size(), std::numeric_limits<double>::infinity());
    auto update = [&](int node) {
        const double xi = g.x(g.node_i(node));
        const double yi = g.y(g.node_j(node));
        for (std::size_t k = 0; k < mask.size(); ++k) {
            const double dx = g.x(g.node_i(mask[k])) - xi;
            const double dy = g.y(g.node_j(mask[k])) - yi;
            dist[k] = std::min(dist[k], dx * dx + dy * dy);
        }
    };
    for (const Sensor& s : sensors) update(s.node);
    while (static_cast<int>(sensors.size()) < m_max) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < mask.size(); ++k) {
            if (dist[k] > dist[best]) best = k;
        }
        if (!(dist[best] > 0.0)) throw ConfigError("mask has fewer nodes than requested sensors");
        sensors.push_back({mask[best]});
        origin.emplace_back("fill");
        update(mask[best]);
    }
}

inline void random_fill(const std::vector<int>& mask, std::vector<Sensor>& sensors, std::vector<std::string>& origin,
                        int m_max, std::uint64_t seed)
{
    std::vector<int> pool;
    for (int node : mask) {
        if (std::none_of(sensors.begin(), sensors.end(), [&](const Sensor& s) { return s.node == node; })) {
            pool.push_back(node);
        }
    }
    if (static_cast<int>(pool.size() + sensors.size()) < m_max) {
        throw ConfigError("mask has fewer nodes than requested sensors");
    }
    std::uint64_t state = splitmix64(seed);
    for (std::size_t k = pool.size(); k > 1; --k) {
        state = splitmix64(state);
        std::swap(pool[k - 1], pool[static_cast<std::size_t>(state % k)]);
    }
    for (std::size_t k = 0; static_cast<int>(sensors.size()) < m_max; ++k) {
        sensors.push_back({pool[k]});
        origin.emplace_back("random");
    }
}

} // namespace detail

inline double training_field_scale(const SnapshotSet& training, const std::vector<int>& mask)
{
    double mx = 0.0;
    for (const Snapshot& s : training.items) {
        for (int node : mask) mx = std::max(mx, std::abs(s.phi2.values[node]));
    }
    if (!(mx > 0.0)) throw ConfigError("training phi2 vanishes on every admissible sensor");
    return 1.0 / mx;
}

/// Fills design, lebesgue and bounds from basis, sensors and eps.
inline void finalize_model(GeimModel& model)
{
    const int n = model.size();
    const int m = model.sensor_count();
    model.design.resize(m, n);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < m; ++k) model.design(k, i) = measure(model.q2.col(i), model.sensors[static_cast<std::size_t>(k)]);
    }
    model.lebesgue = lebesgue_table(model, model.norm, n);
    model.bounds = coefficient_bounds(model);
}

inline GeimModel greedy_build(const SnapshotSet& training, const std::vector<int>& mask, const GreedyOptions& opt,
                              SensorRegion region = SensorRegion::All)
{
    detail::require(!training.empty(), "training set is empty");
    detail::require(!mask.empty(), "no admissible sensors");
    detail::require(opt.n_max >= 1, "n_max must be >= 1");
    detail::require(opt.n_max <= static_cast<int>(training.size()), "n_max exceeds the training set size");
    const int m_max = std::max(opt.n_max, opt.m_max);
    detail::require(m_max <= static_cast<int>(mask.size()), "more sensors requested than admissible nodes");
    const Domain& dom = training.domain;
    for (int node : mask) {
        detail::require(node >= 0 && node < static_cast<int>(dom.grid().size()), "mask node outside the grid");
    }

    GeimModel model;
    model.domain = dom;
    model.norm = opt.norm;
    model.region = region;
    model.field_scale = opt.field_scale > 0.0 ? opt.field_scale : training_field_scale(training, mask);
    const bool companions = training.has_companions();

    Eigen::MatrixXd r2 = detail::stack(training, Component::Phi2, model.field_scale);
    Eigen::MatrixXd r1, rp;
    if (companions) {
        r1 = detail::stack(training, Component::Phi1, model.field_scale);
        rp = detail::stack(training, Component::Power, model.field_scale);
    }
    std::optional<Eigen::SparseMatrix<double>> m;
    if (opt.norm != NormKind::Linf) m = detail::inner_product_matrix(dom, opt.norm);
    const Eigen::Index count = r2.cols();
    Eigen::VectorXd errors(count);
    auto refresh = [&] {
        for (Eigen::Index k = 0; k < count; ++k) {
            errors[k] = detail::column_norm(dom, m ? &*m : nullptr, r2.col(k), opt.norm);
        }
    };
    refresh();
    model.eps.push_back(errors.maxCoeff());
    const double tol = opt.exhaustion_tol;

    std::vector<Eigen::VectorXd> basis2, basis1, basisp;
    for (int step = 0; step < m_max; ++step) {
        Eigen::Index pick = 0;
        for (Eigen::Index k = 1; k < count; ++k) {
            if (errors[k] > errors[pick]) pick = k;
        }
        if (!(errors[pick] > tol)) break; // manifold exhausted
        const Eigen::VectorXd res = r2.col(pick);
        int x = mask.front();
        for (int node : mask) {
            if (std::abs(res[node]) > std::abs(res[x])) x = node;
        }
        const double pivot = res[x];
        if (pivot == 0.0) throw NumericalError("mask cannot resolve residual");
        const Eigen::VectorXd q = res / pivot;
        Eigen::VectorXd qa, qb;
        if (companions) {
            qa = r1.col(pick) / pivot;
            qb = rp.col(pick) / pivot;
        }
        const Eigen::RowVectorXd coef = r2.row(x);
        r2.noalias() -= q * coef;
        if (companions) {
            r1.noalias() -= qa * coef;
            rp.noalias() -= qb * coef;
        }
        model.sensors.push_back({x});
        model.sensor_origin.emplace_back("greedy");
        refresh();
        if (step < opt.n_max) {
            basis2.push_back(q);
            if (companions) {
                basis1.push_back(std::move(qa));
                basisp.push_back(std::move(qb));
            }
            model.selected.push_back(static_cast<int>(pick));
            model.mu.push_back(training.items[static_cast<std::size_t>(pick)].mu);
            model.eps.push_back(errors.maxCoeff());
        }
    }
    if (model.sensors.size() < static_cast<std::size_t>(m_max)) {
        if (opt.fill == SensorFill::Random) {
            detail::random_fill(mask, model.sensors, model.sensor_origin, m_max, opt.fill_seed);
        } else {
            detail::farthest_point_fill(dom.grid(), mask, model.sensors, model.sensor_origin, m_max);
        }
    }
    if (basis2.empty()) throw NumericalError("training set has no resolvable content");

    const auto nodes = static_cast<Eigen::Index>(dom.grid().size());
    auto to_matrix = [&](const std::vector<Eigen::VectorXd>& cols) {
        Eigen::MatrixXd out(nodes, static_cast<Eigen::Index>(cols.size()));
        for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = cols[i];
        return out;
    };
    model.q2 = to_matrix(basis2);
    if (companions) {
        model.q1 = to_matrix(basis1);
        model.qp = to_matrix(basisp);
    }
    finalize_model(model);
    return model;
}

inline GeimModel greedy_build(const SnapshotSet& training, const std::vector<int>& mask, int n_max, NormKind norm)
{
    GreedyOptions opt;
    opt.n_max = n_max;
    opt.norm = norm;
    return greedy_build(training, mask, opt);
}

// ---------------------------------------------------------------------------
// Baselines and error curves

/// Singular values of the snapshot matrix in the discrete L2 geometry, descending.
inline Eigen::VectorXd svd_baseline(const SnapshotSet& set, Component component = Component::Phi2, double scale = 1.0)
{
    detail::require(!set.empty(), "empty snapshot set");
    Eigen::MatrixXd x = detail::stack(set, component, scale);
    const Eigen::VectorXd sw = set.domain.weights().cwiseSqrt();
    x = sw.asDiagonal() * x;
    // Column-pivoted QR first keeps the small singular values accurate down to roundoff.
    Eigen::JacobiSVD<Eigen::MatrixXd, Eigen::ColPivHouseholderQRPreconditioner> svd(x);
    return svd.singularValues();
}

struct ErrorCurve {
    NormKind norm = NormKind::L2;
    SetRole set = SetRole::Training;
    Component component = Component::Phi2;
    std::vector<double> values; ///< values[n], n = 0..N: max over the set of the error with n basis functions
};

/// Noiseless reconstruction errors. With relative = true every error is
/// divided by the norm of the snapshot it belongs to.
inline std::vector<ErrorCurve> error_curves(const GeimModel& model, const SnapshotSet& eval, NormKind norm,
                                            const std::vector<Component>& components, bool relative = false,
                                            int n_max = -1)
{
    detail::require(eval.domain.grid() == model.domain.grid(), "grid mismatch");
    const int n_top = n_max < 0 ? model.size() : std::min(n_max, model.size());
    std::optional<Eigen::SparseMatrix<double>> m;
    if (norm != NormKind::Linf) m = detail::inner_product_matrix(model.domain, norm);
    std::vector<ErrorCurve> out;
    const Eigen::MatrixXd x2 = detail::stack(eval, Component::Phi2, model.field_scale);
    for (Component comp : components) {
        ErrorCurve curve{norm, eval.role, comp, std::vector<double>(static_cast<std::size_t>(n_top) + 1, 0.0)};
        const Eigen::MatrixXd& q = model.basis(comp);
        const Eigen::MatrixXd xc = comp == Component::Phi2 ? x2 : detail::stack(eval, comp, model.field_scale);
        for (Eigen::Index k = 0; k < xc.cols(); ++k) {
            const Eigen::VectorXd c = interpolate(model, measure_all(x2.col(k), model.sensors, n_top));
            Eigen::VectorXd r = xc.col(k);
            const double base = detail::column_norm(model.domain, m ? &*m : nullptr, r, norm);
            const double denom = relative ? base : 1.0;
            if (relative && !(base > 0.0)) throw NumericalError("relative error of a zero snapshot");
            curve.values[0] = std::max(curve.values[0], base / denom);
            for (int n = 1; n <= n_top; ++n) {
                r.noalias() -= c[n - 1] * q.col(n - 1);
                const double e = detail::column_norm(model.domain, m ? &*m : nullptr, r, norm) / denom;
                curve.values[static_cast<std::size_t>(n)] = std::max(curve.values[static_cast<std::size_t>(n)], e);
            }
        }
        out.push_back(std::move(curve));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model archive: manifest.txt, tables.csv, regions.txt, basis.f64 (q2 columns,
// then q1, then power, each column one nx*ny block)

inline void write_model(const GeimModel& model, const fs::path& dir)
{
    detail::ensure_directory(dir);
    std::ostringstream m;
    m << "csgeim-model 1\n";
    m << "norm " << to_string(model.norm) << '\n';
    m << "case " << case_tag(model.region) << '\n';
    m << "field_scale " << detail::format_double(model.field_scale) << '\n';
    detail::write_domain(dir, model.domain, m);
    m << "basis " << model.size() << '\n';
    m << "components " << (model.has_companions() ? "phi1 phi2 power" : "phi2") << '\n';
    m << "mu_dim " << (model.mu.empty() ? 0 : model.mu.front().size()) << '\n';
    for (int i = 0; i < model.size(); ++i) {
        m << "selected " << i << ' ' << model.selected[static_cast<std::size_t>(i)];
        for (double v : model.mu[static_cast<std::size_t>(i)]) m << ' ' << detail::format_double(v);
        m << '\n';
    }
    m << "sensors " << model.sensor_count() << '\n';
    for (int k = 0; k < model.sensor_count(); ++k) {
        const int node = model.sensors[static_cast<std::size_t>(k)].node;
        const Grid2D& g = model.domain.grid();
        m << "sensor " << k << ' ' << node << ' ' << detail::format_double(g.x(g.node_i(node))) << ' '
          << detail::format_double(g.y(g.node_j(node))) << ' ' << model.sensor_origin[static_cast<std::size_t>(k)]
          << '\n';
    }

    std::ostringstream t;
    t << "n,eps,lebesgue,bound\n";
    for (int n = 0; n <= model.size(); ++n) {
        t << n << ',' << detail::format_double(model.eps[static_cast<std::size_t>(n)]) << ','
          << detail::format_double(model.lebesgue[static_cast<std::size_t>(n)]) << ','
          << (n == 0 ? std::string("") : detail::format_double(model.bounds[static_cast<std::size_t>(n - 1)])) << '\n';
    }
    detail::write_file_atomic(dir / "tables.csv", t.str());

    std::ostringstream blob;
    for (const Eigen::MatrixXd* q : {&model.q2, &model.q1, &model.qp}) {
        for (Eigen::Index i = 0; i < q->cols(); ++i) detail::write_f64_block(blob, q->col(i));
    }
    detail::write_file_atomic(dir / "basis.f64", blob.str());
    detail::write_file_atomic(dir / "manifest.txt", m.str());
}

inline GeimModel read_model(const fs::path& dir)
{
    const std::string where = (dir / "manifest.txt").string();
    std::istringstream in(detail::read_text(dir / "manifest.txt"));
    GeimModel model;
    std::string line;
    std::vector<std::string> grid_line, symmetry_line;
    int basis = -1;
    int sensors = -1;
    bool companions = false;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto w = detail::split_words(line);
        if (w.empty()) continue;
        if (w[0] == "csgeim-model") header = true;
        else if (w[0] == "norm" && w.size() == 2) model.norm = parse_norm(w[1]);
        else if (w[0] == "case" && w.size() == 2) model.region = parse_case(w[1]);
        else if (w[0] == "field_scale" && w.size() == 2) model.field_scale = detail::parse_double(w[1], where);
        else if (w[0] == "grid") grid_line = w;
        else if (w[0] == "symmetry") symmetry_line = w;
        else if (w[0] == "basis" && w.size() == 2) basis = static_cast<int>(detail::parse_int(w[1], where));
        else if (w[0] == "components") companions = w.size() == 4;
        else if (w[0] == "mu_dim") continue;
        else if (w[0] == "selected" && w.size() >= 3) {
            model.selected.push_back(static_cast<int>(detail::parse_int(w[2], where)));
            std::vector<double> mu;
            for (std::size_t k = 3; k < w.size(); ++k) mu.push_back(detail::parse_double(w[k], where));
            model.mu.push_back(std::move(mu));
        } else if (w[0] == "sensors" && w.size() == 2) sensors = static_cast<int>(detail::parse_int(w[1], where));
        else if (w[0] == "sensor" && w.size() == 6) {
            model.sensors.push_back({static_cast<int>(detail::parse_int(w[2], where))});
            model.sensor_origin.push_back(w[5]);
        } else throw ConfigError(where + ": unexpected line '" + line + "'");
    }
    if (!header) throw ConfigError(where + ": not a model archive");
    if (basis < 1 || static_cast<int>(model.selected.size()) != basis) throw ConfigError(where + ": basis count mismatch");
    if (sensors < basis || static_cast<int>(model.sensors.size()) != sensors) {
        throw ConfigError(where + ": sensor count mismatch");
    }
    model.domain = detail::read_domain(dir, grid_line, symmetry_line);
    const auto nodes = static_cast<Eigen::Index>(model.domain.grid().size());
    for (const Sensor& s : model.sensors) {
        if (s.node < 0 || s.node >= nodes) throw ConfigError(where + ": sensor node outside the grid");
    }

    const fs::path blob_path = dir / "basis.f64";
    std::ifstream blob(blob_path, std::ios::binary);
    if (!blob) throw ConfigError("cannot open " + blob_path.string());
    auto read_basis = [&](Eigen::MatrixXd& q) {
        q.resize(nodes, basis);
        for (int i = 0; i < basis; ++i) q.col(i) = detail::read_f64_block(blob, nodes, blob_path.string());
    };
    read_basis(model.q2);
    if (companions) {
        read_basis(model.q1);
        read_basis(model.qp);
    }

    std::istringstream tables(detail::read_text(dir / "tables.csv"));
    std::getline(tables, line);
    while (std::getline(tables, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() < 3) throw ConfigError((dir / "tables.csv").string() + ": malformed row");
        model.eps.push_back(detail::parse_double(cells[1], "tables.csv"));
    }
    if (static_cast<int>(model.eps.size()) != basis + 1) throw ConfigError("tables.csv: row count mismatch");
    finalize_model(model);
    return model;
}

} // namespace csgeim
