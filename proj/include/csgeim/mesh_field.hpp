#pragma once

/**
 * @file mesh_field.hpp
 * @brief Structured grids, cell region maps, node-centered scalar fields and
 *        the three norms (L2, Linf, H1 seminorm) used for error measurement.
 *
 * Fields live on grid nodes; materials live on cells. A node belongs to the
 * closure of the domain when it touches at least one interior cell. All
 * integrals use the trapezoidal rule on interior cells, so the weight of a
 * node is a quarter of the area of every interior cell touching it.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "csgeim/errors.hpp"

namespace csgeim {

struct Grid2D {
    int nx = 0;
    int ny = 0;
    double hx = 0.0;
    double hy = 0.0;
    double x0 = 0.0;
    double y0 = 0.0;

    static Grid2D make(int nx, int ny, double hx, double hy, double x0 = 0.0, double y0 = 0.0)
    {
        detail::require(nx >= 2 && ny >= 2, "grid needs at least 2 nodes per axis");
        detail::require(hx > 0.0 && hy > 0.0, "grid spacing must be positive");
        return Grid2D{nx, ny, hx, hy, x0, y0};
    }

    std::size_t size() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
    int node(int i, int j) const { return j * nx + i; }
    int node_i(int node) const { return node % nx; }
    int node_j(int node) const { return node / nx; }
    double x(int i) const { return x0 + i * hx; }
    double y(int j) const { return y0 + j * hy; }
    int cells_x() const { return nx - 1; }
    int cells_y() const { return ny - 1; }
    double cell_area() const { return hx * hy; }

    friend bool operator==(const Grid2D&, const Grid2D&) = default;
};

inline constexpr int kExterior = 0;
inline constexpr int kReflectorRegion = 4;

/// Region id per grid cell: 1..3 core materials, 4 reflector, 0 exterior.
class RegionMap {
public:
    RegionMap() = default;

    RegionMap(int cells_x, int cells_y, std::vector<int> ids)
        : cells_x_(cells_x), cells_y_(cells_y), ids_(std::move(ids))
    {
        detail::require(cells_x > 0 && cells_y > 0, "region map must have at least one cell");
        detail::require(ids_.size() == static_cast<std::size_t>(cells_x) * cells_y,
                        "region map size does not match its header");
        for (int id : ids_) {
            detail::require(id >= kExterior && id <= kReflectorRegion,
                            "region id out of range {0..4}: " + std::to_string(id));
        }
    }

    static RegionMap uniform(int cells_x, int cells_y, int id)
    {
        return RegionMap(cells_x, cells_y,
                         std::vector<int>(static_cast<std::size_t>(cells_x) * cells_y, id));
    }

    int cells_x() const { return cells_x_; }
    int cells_y() const { return cells_y_; }
    const std::vector<int>& ids() const { return ids_; }

    /// Cells outside the map are exterior.
    int at(int ci, int cj) const
    {
        if (ci < 0 || cj < 0 || ci >= cells_x_ || cj >= cells_y_) {
            return kExterior;
        }
        return ids_[static_cast<std::size_t>(cj) * cells_x_ + ci];
    }

    /// Subdivide every cell into factor x factor cells.
    RegionMap refined(int factor) const
    {
        detail::require(factor >= 1, "refinement factor must be >= 1");
        const int cx = cells_x_ * factor;
        const int cy = cells_y_ * factor;
        std::vector<int> ids(static_cast<std::size_t>(cx) * cy);
        for (int cj = 0; cj < cy; ++cj) {
            for (int ci = 0; ci < cx; ++ci) {
                ids[static_cast<std::size_t>(cj) * cx + ci] = at(ci / factor, cj / factor);
            }
        }
        return RegionMap(cx, cy, std::move(ids));
    }

    friend bool operator==(const RegionMap&, const RegionMap&) = default;

private:
    int cells_x_ = 0;
    int cells_y_ = 0;
    std::vector<int> ids_;
};

/// Grid edges through the origin that are mirror planes (quarter-core models).
struct Symmetry {
    bool left = false;
    bool bottom = false;

    friend bool operator==(const Symmetry&, const Symmetry&) = default;
};

struct Field2D {
    Grid2D grid;
    Eigen::VectorXd values;

    Field2D() = default;
    explicit Field2D(const Grid2D& g) : grid(g), values(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()))) {}
    Field2D(const Grid2D& g, Eigen::VectorXd v) : grid(g), values(std::move(v))
    {
        detail::require(values.size() == static_cast<Eigen::Index>(g.size()),
                        "field value count must equal nx*ny");
        detail::require(values.allFinite(), "field values must be finite");
    }

    double operator()(int i, int j) const { return values[grid.node(i, j)]; }
    double& operator()(int i, int j) { return values[grid.node(i, j)]; }
};

namespace detail {

inline void require_same_grid(const Field2D& f, const Field2D& g)
{
    if (!(f.grid == g.grid)) {
        throw ConfigError("grid mismatch");
    }
}

} // namespace detail

inline Field2D operator-(const Field2D& f, const Field2D& g)
{
    detail::require_same_grid(f, g);
    return Field2D(f.grid, f.values - g.values);
}

inline Field2D operator+(const Field2D& f, const Field2D& g)
{
    detail::require_same_grid(f, g);
    return Field2D(f.grid, f.values + g.values);
}

inline Field2D operator*(double s, const Field2D& f) { return Field2D(f.grid, s * f.values); }

enum class NormKind { L2, Linf, H1Semi };

inline std::string to_string(NormKind kind)
{
    switch (kind) {
    case NormKind::L2: return "l2";
    case NormKind::Linf: return "linf";
    case NormKind::H1Semi: return "h1";
    }
    return "?";
}

inline NormKind parse_norm(std::string_view text)
{
    if (text == "l2" || text == "L2") return NormKind::L2;
    if (text == "linf" || text == "Linf" || text == "LINF") return NormKind::Linf;
    if (text == "h1" || text == "H1" || text == "h1semi") return NormKind::H1Semi;
    throw ConfigError("unknown norm '" + std::string(text) + "' (expected l2, linf or h1)");
}

enum class SensorRegion { All, Core };

/// Quadrature and topology of a region map laid on a grid.
class Domain {
public:
    Domain() = default;

    Domain(const Grid2D& grid, RegionMap regions, Symmetry symmetry = {})
        : grid_(grid), regions_(std::move(regions)), symmetry_(symmetry)
    {
        detail::require(regions_.cells_x() == grid.cells_x() && regions_.cells_y() == grid.cells_y(),
                        "region map does not match grid");
        const auto n = static_cast<Eigen::Index>(grid.size());
        weights_ = Eigen::VectorXd::Zero(n);
        const double quarter = 0.25 * grid.cell_area();
        for (int cj = 0; cj < grid.cells_y(); ++cj) {
            for (int ci = 0; ci < grid.cells_x(); ++ci) {
                if (regions_.at(ci, cj) == kExterior) continue;
                area_ += grid.cell_area();
                weights_[grid.node(ci, cj)] += quarter;
                weights_[grid.node(ci + 1, cj)] += quarter;
                weights_[grid.node(ci, cj + 1)] += quarter;
                weights_[grid.node(ci + 1, cj + 1)] += quarter;
            }
        }
        if (area_ <= 0.0) {
            throw ConfigError("empty domain");
        }
    }

    const Grid2D& grid() const { return grid_; }
    const RegionMap& regions() const { return regions_; }
    const Symmetry& symmetry() const { return symmetry_; }
    const Eigen::VectorXd& weights() const { return weights_; }
    double area() const { return area_; }

    bool in_closure(int node) const { return weights_[node] > 0.0; }

    /// Region of a cell; cells across a mirror edge take their reflected id.
    int region_mirrored(int ci, int cj) const
    {
        if (ci < 0 && symmetry_.left) ci = -ci - 1;
        if (cj < 0 && symmetry_.bottom) cj = -cj - 1;
        return regions_.at(ci, cj);
    }

    /// Node strictly inside the domain: every touching cell (mirrored) is interior.
    bool is_interior(int i, int j) const { return all_touching(i, j, [](int id) { return id != kExterior; }); }

    bool is_core_interior(int i, int j) const
    {
        return all_touching(i, j, [](int id) { return id >= 1 && id <= 3; });
    }

    double norm(const Field2D& f, NormKind kind) const
    {
        check_grid(f);
        switch (kind) {
        case NormKind::L2: return std::sqrt(std::max(0.0, weights_.dot(f.values.cwiseAbs2())));
        case NormKind::Linf: {
            double m = 0.0;
            for (Eigen::Index k = 0; k < f.values.size(); ++k) {
                if (weights_[k] > 0.0) m = std::max(m, std::abs(f.values[k]));
            }
            return m;
        }
        case NormKind::H1Semi: return std::sqrt(std::max(0.0, inner(f.values, f.values, kind)));
        }
        return 0.0;
    }

    double norm(const Eigen::VectorXd& v, NormKind kind) const { return norm(Field2D(grid_, v), kind); }

    /// Inner product inducing the L2 norm or the H1 seminorm. Undefined for Linf.
    double inner(const Eigen::VectorXd& f, const Eigen::VectorXd& g, NormKind kind) const
    {
        if (kind == NormKind::L2) {
            return (weights_.array() * f.array() * g.array()).sum();
        }
        if (kind == NormKind::H1Semi) {
            const auto [fx, fy] = gradient(f);
            if (&f == &g) {
                return (weights_.array() * (fx.array().square() + fy.array().square())).sum();
            }
            const auto [gx, gy] = gradient(g);
            return (weights_.array() * (fx.array() * gx.array() + fy.array() * gy.array())).sum();
        }
        throw ConfigError("the Linf norm has no inner product");
    }

    double distance(const Field2D& f, const Field2D& g, NormKind kind) const { return norm(f - g, kind); }
    double l2_distance(const Field2D& f, const Field2D& g) const { return distance(f, g, NormKind::L2); }
    double linf_distance(const Field2D& f, const Field2D& g) const { return distance(f, g, NormKind::Linf); }

    /// Nodal gradient: central differences where both neighbours lie in the
    /// closure of the domain, one-sided where only one does.
    std::pair<Eigen::VectorXd, Eigen::VectorXd> gradient(const Eigen::VectorXd& f) const
    {
        const auto n = static_cast<Eigen::Index>(grid_.size());
        Eigen::VectorXd gx = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd gy = Eigen::VectorXd::Zero(n);
        for (int j = 0; j < grid_.ny; ++j) {
            for (int i = 0; i < grid_.nx; ++i) {
                const int p = grid_.node(i, j);
                if (!in_closure(p)) continue;
                gx[p] = derivative(f, p, i > 0 ? p - 1 : -1, i + 1 < grid_.nx ? p + 1 : -1, grid_.hx);
                gy[p] = derivative(f, p, j > 0 ? p - grid_.nx : -1,
                                   j + 1 < grid_.ny ? p + grid_.nx : -1, grid_.hy);
            }
        }
        return {gx, gy};
    }

private:
    template <class Pred>
    bool all_touching(int i, int j, Pred pred) const
    {
        if (!in_closure(grid_.node(i, j))) return false;
        for (int dj = -1; dj <= 0; ++dj) {
            for (int di = -1; di <= 0; ++di) {
                const int ci = i + di;
                const int cj = j + dj;
                if (!pred(region_mirrored(ci, cj))) return false;
            }
        }
        return true;
    }

    double derivative(const Eigen::VectorXd& f, int p, int lo, int hi, double h) const
    {
        const bool has_lo = lo >= 0 && in_closure(lo);
        const bool has_hi = hi >= 0 && in_closure(hi);
        if (has_lo && has_hi) return (f[hi] - f[lo]) / (2.0 * h);
        if (has_hi) return (f[hi] - f[p]) / h;
        if (has_lo) return (f[p] - f[lo]) / h;
        return 0.0;
    }

    void check_grid(const Field2D& f) const
    {
        if (!(f.grid == grid_)) throw ConfigError("grid mismatch");
    }

    Grid2D grid_;
    RegionMap regions_;
    Symmetry symmetry_;
    Eigen::VectorXd weights_;
    double area_ = 0.0;
};

inline double norm(const Domain& domain, const Field2D& f, NormKind kind) { return domain.norm(f, kind); }

/// Admissible sensor nodes: every interior node, or only nodes surrounded by core cells.
inline std::vector<int> restrict_mask(const Domain& domain, SensorRegion which)
{
    const Grid2D& g = domain.grid();
    std::vector<int> nodes;
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const bool ok = which == SensorRegion::All ? domain.is_interior(i, j) : domain.is_core_interior(i, j);
            if (ok) nodes.push_back(g.node(i, j));
        }
    }
    if (nodes.empty()) {
        throw ConfigError("no admissible sensors");
    }
    return nodes;
}

inline SensorRegion parse_case(std::string_view text)
{
    if (text == "I" || text == "i" || text == "1" || text == "all") return SensorRegion::All;
    if (text == "II" || text == "ii" || text == "2" || text == "core") return SensorRegion::Core;
    throw ConfigError("unknown case '" + std::string(text) + "' (expected I or II)");
}

inline std::string case_tag(SensorRegion which) { return which == SensorRegion::All ? "I" : "II"; }

// ---------------------------------------------------------------------------
// Geometry files: "nx ny hx hy" (cell counts and cell sizes) followed by
// nx*ny region ids, row-major, first row at y = 0. '#' starts a comment.

struct RegionLayout {
    RegionMap map;
    double hx = 0.0;
    double hy = 0.0;
};

inline RegionLayout parse_region_layout(std::istream& in, const std::string& origin = "<stream>")
{
    std::string token;
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        while (ls >> token) tokens.push_back(token);
    }
    if (tokens.size() < 4) throw ConfigError(origin + ": truncated geometry header");
    RegionLayout layout;
    int cx = 0;
    int cy = 0;
    try {
        cx = std::stoi(tokens[0]);
        cy = std::stoi(tokens[1]);
        layout.hx = std::stod(tokens[2]);
        layout.hy = std::stod(tokens[3]);
    } catch (const std::exception&) {
        throw ConfigError(origin + ": malformed geometry header");
    }
    if (cx <= 0 || cy <= 0 || !(layout.hx > 0.0) || !(layout.hy > 0.0)) {
        throw ConfigError(origin + ": invalid geometry header");
    }
    const std::size_t expected = static_cast<std::size_t>(cx) * cy;
    if (tokens.size() - 4 != expected) {
        throw ConfigError(origin + ": expected " + std::to_string(expected) + " region ids, found " +
                          std::to_string(tokens.size() - 4));
    }
    std::vector<int> ids(expected);
    for (std::size_t k = 0; k < expected; ++k) {
        try {
            ids[k] = std::stoi(tokens[4 + k]);
        } catch (const std::exception&) {
            throw ConfigError(origin + ": bad region id '" + tokens[4 + k] + "'");
        }
    }
    layout.map = RegionMap(cx, cy, std::move(ids));
    return layout;
}

inline RegionLayout read_region_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open geometry file " + path);
    return parse_region_layout(in, path);
}

inline void write_region_layout(std::ostream& out, const RegionLayout& layout)
{
    const RegionMap& m = layout.map;
    out << m.cells_x() << ' ' << m.cells_y() << ' ' << std::setprecision(17) << layout.hx << ' ' << layout.hy
        << '\n';
    for (int cj = 0; cj < m.cells_y(); ++cj) {
        for (int ci = 0; ci < m.cells_x(); ++ci) {
            out << m.at(ci, cj) << (ci + 1 < m.cells_x() ? ' ' : '\n');
        }
    }
}

/// Lay a coarse region layout on a node grid of spacing h (h must divide the cell size).
inline std::pair<Grid2D, RegionMap> refine_layout(const RegionLayout& layout, double h)
{
    detail::require(h > 0.0, "mesh size must be positive");
    const double rx = layout.hx / h;
    const double ry = layout.hy / h;
    const int fx = static_cast<int>(std::lround(rx));
    const int fy = static_cast<int>(std::lround(ry));
    detail::require(fx >= 1 && fy >= 1 && std::abs(rx - fx) < 1e-9 && std::abs(ry - fy) < 1e-9 && fx == fy,
                    "mesh size must divide the geometry cell size");
    RegionMap fine = layout.map.refined(fx);
    Grid2D grid = Grid2D::make(fine.cells_x() + 1, fine.cells_y() + 1, layout.hx / fx, layout.hy / fy);
    return {grid, std::move(fine)};
}

} // namespace csgeim
