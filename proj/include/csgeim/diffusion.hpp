#pragma once

/**
 * @file diffusion.hpp
 * @brief Two-group neutron diffusion k-eigenvalue solver on a structured grid.
 *
 * Vertex-centered finite volumes: every node owns the dual cell made of the
 * four quarter cells around it. Material data are constant per cell, so the
 * flux through a dual-cell face is the sum of two half-faces, each carrying
 * the diffusion coefficient of the cell it crosses. Reaction terms are lumped
 * on the nodes. The axial buckling term D_g * Bz2 is added to the removal.
 */

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "csgeim/errors.hpp"
#include "csgeim/mesh_field.hpp"

namespace csgeim {

struct MaterialXS {
    double d1 = 1.0;
    double d2 = 1.0;
    double sigma_a1 = 0.0;
    double sigma_a2 = 0.0;
    double sigma_s12 = 0.0;
    double nu_sigma_f1 = 0.0;
    double nu_sigma_f2 = 0.0;
    double chi1 = 1.0;
    double chi2 = 0.0;
    double bz2 = 0.0;

    void validate(int region) const
    {
        const std::string where = " (region " + std::to_string(region) + ")";
        if (!(d1 > 0.0) || !(d2 > 0.0)) {
            throw ConfigError("non-positive diffusion coefficient" + where);
        }
        for (double v : {sigma_a1, sigma_a2, sigma_s12, nu_sigma_f1, nu_sigma_f2, chi1, chi2, bz2}) {
            detail::require(v >= 0.0 && std::isfinite(v), "cross sections must be finite and >= 0" + where);
        }
        detail::require(std::abs(chi1 + chi2 - 1.0) < 1e-12, "fission spectrum must sum to 1" + where);
    }
};

/// Material data for region ids 1..4.
struct CrossSections {
    std::array<MaterialXS, 4> region{};

    const MaterialXS& at(int id) const { return region.at(static_cast<std::size_t>(id - 1)); }
    MaterialXS& at(int id) { return region.at(static_cast<std::size_t>(id - 1)); }

    /// Benchmark data: fuel 1, fuel 2, fuel 2 + rod, reflector. Bz2 = 0.8e-4 everywhere.
    static CrossSections iaea2d(double reflector_d1 = 2.0)
    {
        constexpr double bz2 = 0.8e-4;
        CrossSections xs;
        xs.region[0] = {1.5, 0.4, 0.01, 0.080, 0.02, 0.0, 0.135, 1.0, 0.0, bz2};
        xs.region[1] = {1.5, 0.4, 0.01, 0.085, 0.02, 0.0, 0.135, 1.0, 0.0, bz2};
        xs.region[2] = {1.5, 0.4, 0.01, 0.130, 0.02, 0.0, 0.135, 1.0, 0.0, bz2};
        xs.region[3] = {reflector_d1, 0.3, 0.0, 0.010, 0.04, 0.0, 0.0, 1.0, 0.0, bz2};
        return xs;
    }
};

enum class BoundaryKind { Dirichlet, ZeroIncomingCurrent, Reflective };

inline BoundaryKind parse_boundary(std::string_view text)
{
    if (text == "dirichlet" || text == "zero-flux") return BoundaryKind::Dirichlet;
    if (text == "robin" || text == "marshak" || text == "vacuum") return BoundaryKind::ZeroIncomingCurrent;
    if (text == "reflective" || text == "neumann") return BoundaryKind::Reflective;
    throw ConfigError("unknown boundary condition '" + std::string(text) + "'");
}

inline std::string to_string(BoundaryKind kind)
{
    switch (kind) {
    case BoundaryKind::Dirichlet: return "dirichlet";
    case BoundaryKind::ZeroIncomingCurrent: return "robin";
    case BoundaryKind::Reflective: return "reflective";
    }
    return "?";
}

/// The parameter is the fast diffusion coefficient of the reflector (region 4).
struct DiffusionProblem {
    Domain domain;
    CrossSections xs;
    BoundaryKind boundary = BoundaryKind::Dirichlet;

    double mu() const { return xs.at(kReflectorRegion).d1; }

    DiffusionProblem with_mu(double mu) const
    {
        DiffusionProblem p = *this;
        p.xs.at(kReflectorRegion).d1 = mu;
        return p;
    }

    /// Quarter-core benchmark on a mesh of size h with mirror conditions on x = 0 and y = 0.
    static DiffusionProblem iaea2d(const RegionLayout& layout, double h, double mu = 2.0,
                                   BoundaryKind boundary = BoundaryKind::Dirichlet)
    {
        auto [grid, map] = refine_layout(layout, h);
        return DiffusionProblem{Domain(grid, std::move(map), Symmetry{true, true}), CrossSections::iaea2d(mu),
                                boundary};
    }
};

struct DiffusionOperators {
    std::vector<int> unknowns;      ///< node index of every unknown
    std::vector<int> index_of_node; ///< unknown index per node, -1 when fixed or outside
    std::array<Eigen::SparseMatrix<double>, 2> loss; ///< leakage + removal per group
    Eigen::VectorXd scatter;                         ///< group 1 -> 2 transfer
    std::array<std::array<Eigen::VectorXd, 2>, 2> fission; ///< [to][from]: chi_to * nuSigf_from
    std::array<Eigen::VectorXd, 2> production;              ///< nuSigf_g
    Eigen::VectorXd core_volume;                            ///< dual volume inside core cells

    Eigen::Index size() const { return static_cast<Eigen::Index>(unknowns.size()); }
};

namespace detail {

inline bool is_outer_cell(const Domain& domain, int ci, int cj)
{
    // Cells across mirror edges are images of interior cells, not boundary.
    return domain.region_mirrored(ci, cj) == kExterior;
}

} // namespace detail

inline DiffusionOperators assemble(const DiffusionProblem& problem)
{
    const Domain& dom = problem.domain;
    const Grid2D& g = dom.grid();
    const RegionMap& map = dom.regions();
    for (int id = 1; id <= 4; ++id) {
        problem.xs.at(id).validate(id);
    }

    DiffusionOperators ops;
    const auto n_nodes = static_cast<int>(g.size());
    ops.index_of_node.assign(static_cast<std::size_t>(n_nodes), -1);
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const int p = g.node(i, j);
            if (!dom.in_closure(p)) continue;
            if (problem.boundary == BoundaryKind::Dirichlet && !dom.is_interior(i, j)) continue;
            ops.index_of_node[static_cast<std::size_t>(p)] = static_cast<int>(ops.unknowns.size());
            ops.unknowns.push_back(p);
        }
    }
    const Eigen::Index n = ops.size();
    if (n == 0) throw ConfigError("diffusion problem has no unknowns");

    ops.scatter = Eigen::VectorXd::Zero(n);
    ops.core_volume = Eigen::VectorXd::Zero(n);
    for (auto& row : ops.fission) {
        for (auto& v : row) v = Eigen::VectorXd::Zero(n);
    }
    for (auto& v : ops.production) v = Eigen::VectorXd::Zero(n);
    std::array<std::vector<Eigen::Triplet<double>>, 2> trip;
    for (auto& t : trip) t.reserve(static_cast<std::size_t>(n) * 5);

    const double quarter = 0.25 * g.cell_area();
    auto idx = [&](int i, int j) { return ops.index_of_node[static_cast<std::size_t>(g.node(i, j))]; };
    auto couple = [&](int grp, int a, int b, double coef) {
        if (a >= 0) trip[grp].emplace_back(a, a, coef);
        if (b >= 0) trip[grp].emplace_back(b, b, coef);
        if (a >= 0 && b >= 0) {
            trip[grp].emplace_back(a, b, -coef);
            trip[grp].emplace_back(b, a, -coef);
        }
    };

    for (int cj = 0; cj < g.cells_y(); ++cj) {
        for (int ci = 0; ci < g.cells_x(); ++ci) {
            const int id = map.at(ci, cj);
            if (id == kExterior) continue;
            const MaterialXS& m = problem.xs.at(id);
            const std::array<int, 4> corner{idx(ci, cj), idx(ci + 1, cj), idx(ci, cj + 1), idx(ci + 1, cj + 1)};
            const std::array<double, 2> d{m.d1, m.d2};
            const std::array<double, 2> removal{m.sigma_a1 + m.sigma_s12 + m.d1 * m.bz2,
                                                m.sigma_a2 + m.d2 * m.bz2};
            for (int c : corner) {
                if (c < 0) continue;
                for (int grp = 0; grp < 2; ++grp) trip[grp].emplace_back(c, c, removal[grp] * quarter);
                ops.scatter[c] += m.sigma_s12 * quarter;
                ops.production[0][c] += m.nu_sigma_f1 * quarter;
                ops.production[1][c] += m.nu_sigma_f2 * quarter;
                ops.fission[0][0][c] += m.chi1 * m.nu_sigma_f1 * quarter;
                ops.fission[0][1][c] += m.chi1 * m.nu_sigma_f2 * quarter;
                ops.fission[1][0][c] += m.chi2 * m.nu_sigma_f1 * quarter;
                ops.fission[1][1][c] += m.chi2 * m.nu_sigma_f2 * quarter;
                if (id <= 3) ops.core_volume[c] += quarter;
            }
            for (int grp = 0; grp < 2; ++grp) {
                const double ax = d[grp] * 0.5 * g.hy / g.hx; // half-face normal to x
                const double ay = d[grp] * 0.5 * g.hx / g.hy; // half-face normal to y
                couple(grp, corner[0], corner[1], ax);
                couple(grp, corner[2], corner[3], ax);
                couple(grp, corner[0], corner[2], ay);
                couple(grp, corner[1], corner[3], ay);
            }
            if (problem.boundary == BoundaryKind::ZeroIncomingCurrent) {
                // Outgoing partial current phi/2 on every outer edge, split between its endpoints.
                auto edge = [&](bool outer, int a, int b, double length) {
                    if (!outer) return;
                    for (int grp = 0; grp < 2; ++grp) {
                        if (a >= 0) trip[grp].emplace_back(a, a, 0.25 * length);
                        if (b >= 0) trip[grp].emplace_back(b, b, 0.25 * length);
                    }
                };
                edge(detail::is_outer_cell(dom, ci, cj - 1), corner[0], corner[1], g.hx);
                edge(detail::is_outer_cell(dom, ci, cj + 1), corner[2], corner[3], g.hx);
                edge(detail::is_outer_cell(dom, ci - 1, cj), corner[0], corner[2], g.hy);
                edge(detail::is_outer_cell(dom, ci + 1, cj), corner[1], corner[3], g.hy);
            }
        }
    }
    for (int grp = 0; grp < 2; ++grp) {
        ops.loss[grp].resize(n, n);
        ops.loss[grp].setFromTriplets(trip[grp].begin(), trip[grp].end());
        ops.loss[grp].makeCompressed();
    }
    return ops;
}

// ---------------------------------------------------------------------------

/// One member of a parametric family. phi1 and power are absent for scalar manifolds.
struct Snapshot {
    std::vector<double> mu;
    std::optional<Field2D> phi1;
    Field2D phi2;
    std::optional<Field2D> power;
    std::optional<double> keff;
};

enum class SetRole { Training, Test };

inline std::string to_string(SetRole role) { return role == SetRole::Training ? "training" : "test"; }

struct SnapshotSet {
    Domain domain;
    SetRole role = SetRole::Training;
    std::vector<Snapshot> items;

    std::size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }
    bool has_companions() const { return !items.empty() && items.front().phi1 && items.front().power; }
};

/// Node-averaged nuSigf over the interior cells around every node.
inline Field2D compute_power(const Field2D& phi1, const Field2D& phi2, const CrossSections& xs, const Domain& domain)
{
    detail::require_same_grid(phi1, phi2);
    const Grid2D& g = phi1.grid;
    detail::require(g == domain.grid(), "grid mismatch");
    Field2D power(g);
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            double f1 = 0.0;
            double f2 = 0.0;
            int cells = 0;
            for (int cj = j - 1; cj <= j; ++cj) {
                for (int ci = i - 1; ci <= i; ++ci) {
                    const int id = domain.regions().at(ci, cj);
                    if (id == kExterior) continue;
                    f1 += xs.at(id).nu_sigma_f1;
                    f2 += xs.at(id).nu_sigma_f2;
                    ++cells;
                }
            }
            if (cells == 0) continue;
            const int p = g.node(i, j);
            power.values[p] = (f1 * phi1.values[p] + f2 * phi2.values[p]) / cells;
        }
    }
    return power;
}

enum class EigenAcceleration { None, Arnoldi };

struct SolverOptions {
    double tol_k = 1e-8;
    double tol_flux = 1e-7;
    double tol_residual = 1e-8; ///< eigen-residual required on top of the two stopping tests
    int max_iter = 5000;        ///< cap on operator applications (power steps + Krylov steps)
    EigenAcceleration acceleration = EigenAcceleration::Arnoldi;
    int krylov_dim = 24;
};

struct SolveReport {
    int iterations = 0;
    double residual = 0.0;
};

namespace detail {

class GroupSweep {
public:
    explicit GroupSweep(const DiffusionOperators& ops) : ops_(ops)
    {
        for (int grp = 0; grp < 2; ++grp) {
            solver_[grp].compute(ops.loss[grp]);
            if (solver_[grp].info() != Eigen::Success) {
                throw NumericalError("loss operator factorization failed for group " + std::to_string(grp + 1));
            }
        }
    }

    /// Solves A phi = b where A = [[M1, 0], [-S, M2]].
    void solve(const Eigen::VectorXd& b1, const Eigen::VectorXd& b2, Eigen::VectorXd& phi1,
               Eigen::VectorXd& phi2) const
    {
        phi1 = solver_[0].solve(b1);
        phi2 = solver_[1].solve(b2 + ops_.scatter.cwiseProduct(phi1));
    }

private:
    const DiffusionOperators& ops_;
    std::array<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>, 2> solver_;
};

inline void fission_source(const DiffusionOperators& ops, const Eigen::VectorXd& phi1, const Eigen::VectorXd& phi2,
                           Eigen::VectorXd& s1, Eigen::VectorXd& s2)
{
    s1 = ops.fission[0][0].cwiseProduct(phi1) + ops.fission[0][1].cwiseProduct(phi2);
    s2 = ops.fission[1][0].cwiseProduct(phi1) + ops.fission[1][1].cwiseProduct(phi2);
}

inline double eigen_residual(const DiffusionOperators& ops, const Eigen::VectorXd& phi1, const Eigen::VectorXd& phi2,
                             double keff)
{
    Eigen::VectorXd s1, s2;
    fission_source(ops, phi1, phi2, s1, s2);
    const Eigen::VectorXd r1 = ops.loss[0] * phi1 - s1 / keff;
    const Eigen::VectorXd r2 = ops.loss[1] * phi2 - ops.scatter.cwiseProduct(phi1) - s2 / keff;
    const double denom = std::sqrt(s1.squaredNorm() + s2.squaredNorm());
    return std::sqrt(r1.squaredNorm() + r2.squaredNorm()) / denom;
}

inline Field2D scatter_to_nodes(const Grid2D& g, const DiffusionOperators& ops, const Eigen::VectorXd& v)
{
    Field2D f(g);
    for (Eigen::Index k = 0; k < v.size(); ++k) f.values[ops.unknowns[static_cast<std::size_t>(k)]] = v[k];
    return f;
}

/// Restarted Arnoldi on T = A^-1 F, the operator of the power iteration.
/// Leaves the dominant Ritz pair in (phi1, phi2, keff) and returns the number
/// of operator applications spent.
inline int arnoldi_warm_start(const DiffusionOperators& ops, const GroupSweep& sweep, const SolverOptions& opt,
                              Eigen::VectorXd& phi1, Eigen::VectorXd& phi2, double& keff)
{
    const Eigen::Index n = ops.size();
    const int m = std::max(4, opt.krylov_dim);
    Eigen::MatrixXd basis(2 * n, m + 1);
    Eigen::VectorXd x(2 * n);
    x << phi1, phi2;
    Eigen::VectorXd s1, s2, y1, y2, w(2 * n);
    int applications = 0;
    const double target = 0.1 * opt.tol_residual;
    while (applications + m <= opt.max_iter / 2) {
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(m + 1, m);
        basis.col(0) = x / x.norm();
        int dim = m;
        for (int j = 0; j < m; ++j) {
            fission_source(ops, basis.col(j).head(n), basis.col(j).tail(n), s1, s2);
            sweep.solve(s1, s2, y1, y2);
            ++applications;
            w << y1, y2;
            for (int pass = 0; pass < 2; ++pass) { // classical Gram-Schmidt, twice
                const Eigen::VectorXd h = basis.leftCols(j + 1).transpose() * w;
                w.noalias() -= basis.leftCols(j + 1) * h;
                hess.col(j).head(j + 1) += h;
            }
            hess(j + 1, j) = w.norm();
            if (hess(j + 1, j) <= 1e-14 * hess.col(j).head(j + 1).norm()) {
                dim = j + 1;
                break;
            }
            basis.col(j + 1) = w / hess(j + 1, j);
        }
        Eigen::EigenSolver<Eigen::MatrixXd> es(hess.topLeftCorner(dim, dim));
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < es.eigenvalues().size(); ++k) {
            if (std::abs(es.eigenvalues()[k]) > std::abs(es.eigenvalues()[best])) best = k;
        }
        const double theta = es.eigenvalues()[best].real();
        Eigen::VectorXd coef = es.eigenvectors().col(best).real();
        x = basis.leftCols(dim) * coef;
        if (x.sum() < 0.0) {
            x = -x;
            coef = -coef;
        }
        const double estimate =
            dim < m ? 0.0 : std::abs(hess(dim, dim - 1) * coef[dim - 1]) / (std::abs(theta) * coef.norm());
        keff = theta;
        if (estimate <= target) break;
    }
    phi1 = x.head(n);
    phi2 = x.tail(n);
    return applications;
}

} // namespace detail

/// Fundamental mode of A phi = (1/k) F phi by power iteration with exact
/// group sweeps (sparse Cholesky per group). The flux is normalized so that
/// the mean power over the core is 1.
inline Snapshot solve_keff(const DiffusionProblem& problem, const SolverOptions& opt = {},
                           SolveReport* report = nullptr, const Snapshot* guess = nullptr)
{
    detail::require(opt.tol_k > 0.0 && opt.tol_flux > 0.0 && opt.tol_residual > 0.0, "tolerances must be > 0");
    detail::require(opt.max_iter > 0, "max_iter must be > 0");
    const DiffusionOperators ops = assemble(problem);
    const detail::GroupSweep sweep(ops);
    const Eigen::Index n = ops.size();

    Eigen::VectorXd phi1 = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd phi2 = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd s1, s2, psi_old, psi;
    double keff = 1.0;
    if (guess && guess->phi1 && guess->phi1->grid == problem.domain.grid()) {
        for (Eigen::Index k = 0; k < n; ++k) {
            const int node = ops.unknowns[static_cast<std::size_t>(k)];
            phi1[k] = guess->phi1->values[node];
            phi2[k] = guess->phi2.values[node];
        }
        keff = guess->keff.value_or(1.0);
    }
    auto production = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return ops.production[0].cwiseProduct(a) + ops.production[1].cwiseProduct(b);
    };
    if (!(production(phi1, phi2).sum() > 0.0)) throw NumericalError("no fissile material in the domain");

    int it = 0;
    if (opt.acceleration == EigenAcceleration::Arnoldi) {
        it = detail::arnoldi_warm_start(ops, sweep, opt, phi1, phi2, keff);
    }

    psi_old = production(phi1, phi2);
    double total_old = psi_old.sum();
    double residual = 0.0;
    bool converged = false;
    for (; it < opt.max_iter && !converged; ++it) {
        detail::fission_source(ops, phi1, phi2, s1, s2);
        sweep.solve(s1 / keff, s2 / keff, phi1, phi2);
        psi = production(phi1, phi2);
        const double total = psi.sum();
        const double k_new = keff * total / total_old;
        const double dk = std::abs(k_new - keff);
        const double dpsi = (psi / total - psi_old / total_old).norm() / (psi / total).norm();
        keff = k_new;
        // Rescale to keep magnitudes bounded.
        phi1 /= total;
        phi2 /= total;
        psi_old = psi / total;
        total_old = 1.0;
        if (dk <= opt.tol_k && dpsi <= opt.tol_flux) {
            residual = detail::eigen_residual(ops, phi1, phi2, keff);
            converged = residual <= opt.tol_residual;
        }
    }
    if (!converged) {
        throw NumericalError("k-eigenvalue iteration did not converge after " + std::to_string(opt.max_iter) +
                             " iterations (mu = " + std::to_string(problem.mu()) + ")");
    }

    const Grid2D& g = problem.domain.grid();
    Snapshot snap;
    snap.mu = {problem.mu()};
    snap.keff = keff;
    Field2D f1 = detail::scatter_to_nodes(g, ops, phi1);
    Field2D f2 = detail::scatter_to_nodes(g, ops, phi2);
    Field2D p = compute_power(f1, f2, problem.xs, problem.domain);

    // Mean power over the core region, trapezoidal on core cells with each
    // cell's own cross sections (the nodal power field averages across interfaces).
    double integral = 0.0;
    double area = 0.0;
    for (int cj = 0; cj < g.cells_y(); ++cj) {
        for (int ci = 0; ci < g.cells_x(); ++ci) {
            const int id = problem.domain.regions().at(ci, cj);
            if (id < 1 || id > 3) continue;
            const MaterialXS& m = problem.xs.at(id);
            area += g.cell_area();
            for (const int node : {g.node(ci, cj), g.node(ci + 1, cj), g.node(ci, cj + 1), g.node(ci + 1, cj + 1)}) {
                integral += 0.25 * g.cell_area() * (m.nu_sigma_f1 * f1.values[node] + m.nu_sigma_f2 * f2.values[node]);
            }
        }
    }
    if (!(integral > 0.0)) throw NumericalError("zero core power");
    const double scale = area / integral;
    f1.values *= scale;
    f2.values *= scale;
    p.values *= scale;
    for (Eigen::Index k = 0; k < n; ++k) {
        const int node = ops.unknowns[static_cast<std::size_t>(k)];
        const int i = g.node_i(node);
        const int j = g.node_j(node);
        if (problem.domain.is_interior(i, j) && (!(f1.values[node] > 0.0) || !(f2.values[node] > 0.0))) {
            throw NumericalError("negative flux after convergence (mu = " + std::to_string(problem.mu()) + ")");
        }
    }
    snap.phi1 = std::move(f1);
    snap.phi2 = std::move(f2);
    snap.power = std::move(p);
    if (report) {
        report->iterations = it;
        report->residual = residual;
    }
    return snap;
}

/// One converged snapshot per parameter, in the given order.
inline SnapshotSet generate_snapshots(const DiffusionProblem& base, const std::vector<double>& mus,
                                      const SolverOptions& opt = {}, SetRole role = SetRole::Training,
                                      double mu_min = 1.0, double mu_max = 3.0)
{
    detail::require(!mus.empty(), "parameter list is empty");
    std::set<double> seen;
    for (double mu : mus) {
        if (!seen.insert(mu).second) throw ConfigError("parameters pairwise distinct");
        if (!(mu >= mu_min && mu <= mu_max)) {
            throw ConfigError("parameter " + std::to_string(mu) + " outside the admissible range");
        }
    }
    SnapshotSet set{base.domain, role, {}};
    set.items.reserve(mus.size());
    for (double mu : mus) {
        try {
            set.items.push_back(solve_keff(base.with_mu(mu), opt));
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " [while generating mu = " + std::to_string(mu) + "]");
        }
    }
    return set;
}

} // namespace csgeim
