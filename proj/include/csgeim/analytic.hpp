#pragma once

// Scalar parametric family g(x, mu) = |x - mu|^-1 on the unit square, with the
// parameter box strictly outside the closed square so g stays smooth on it.

#include <array>
#include <cmath>
#include <vector>

#include "csgeim/diffusion.hpp"
#include "csgeim/mesh_field.hpp"

namespace csgeim {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

inline double eval_g(Point2 x, Point2 mu)
{
    const double dx = x.x - mu.x;
    const double dy = x.y - mu.y;
    return 1.0 / std::sqrt(dx * dx + dy * dy);
}

struct AnalyticManifoldSpec {
    int nodes_x = 64;
    int nodes_y = 64;
    double mu_min = -1.0;
    double mu_max = -0.01;
    int mu_count_x = 20;
    int mu_count_y = 20;
    /// Cell-centred parameter samples (midpoints of the uniform training grid) instead of endpoints.
    bool midpoints = false;

    void validate() const
    {
        detail::require(nodes_x >= 2 && nodes_y >= 2, "analytic grid needs at least 2 nodes per axis");
        detail::require(mu_count_x >= 1 && mu_count_y >= 1, "parameter grid must be non-empty");
        detail::require(mu_min <= mu_max, "parameter box is empty");
        detail::require(mu_max < 0.0, "parameter box must lie strictly below the unit square");
        if (midpoints) {
            detail::require(mu_count_x >= 2 && mu_count_y >= 2, "midpoint sampling needs at least 2 points per axis");
        }
    }

    Grid2D grid() const { return Grid2D::make(nodes_x, nodes_y, 1.0 / (nodes_x - 1), 1.0 / (nodes_y - 1)); }

    Domain domain() const
    {
        const Grid2D g = grid();
        return Domain(g, RegionMap::uniform(g.cells_x(), g.cells_y(), 1));
    }

    std::vector<double> axis(int count) const
    {
        std::vector<double> v;
        if (midpoints) {
            const double step = (mu_max - mu_min) / (count - 1);
            for (int k = 0; k + 1 < count; ++k) v.push_back(mu_min + (k + 0.5) * step);
        } else if (count == 1) {
            v.push_back(mu_min);
        } else {
            for (int k = 0; k < count; ++k) v.push_back(mu_min + (mu_max - mu_min) * k / (count - 1));
        }
        return v;
    }
};

/// One snapshot per parameter pair, mu_x varying fastest. Only the phi2 slot is filled.
inline SnapshotSet generate_analytic_snapshots(const AnalyticManifoldSpec& spec, SetRole role = SetRole::Training)
{
    spec.validate();
    const Domain domain = spec.domain();
    const Grid2D& g = domain.grid();
    SnapshotSet set{domain, role, {}};
    const auto mx = spec.axis(spec.mu_count_x);
    const auto my = spec.axis(spec.mu_count_y);
    set.items.reserve(mx.size() * my.size());
    for (double muy : my) {
        for (double mux : mx) {
            Field2D f(g);
            for (int j = 0; j < g.ny; ++j) {
                for (int i = 0; i < g.nx; ++i) {
                    f(i, j) = eval_g({g.x(i), g.y(j)}, {mux, muy});
                }
            }
            Snapshot s;
            s.mu = {mux, muy};
            s.phi2 = std::move(f);
            set.items.push_back(std::move(s));
        }
    }
    return set;
}

} // namespace csgeim
