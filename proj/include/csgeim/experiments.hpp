#pragma once

/**
 * @file experiments.hpp
 * @brief Measurement noise, repeated reconstruction studies and their CSV output.
 *
 * Errors are relative: |f - f_hat| / |f| in the norm of the study, with f the
 * scaled test snapshot. For every (n, sigma, method, component) the table
 * reports the maximum over the test set of the per-parameter mean over
 * repetitions. Companion tables hold the mean over repetitions of the
 * maximum over the test set, and the plain mean over test set and repetitions.
 *
 * L2 and H1 errors are evaluated in coefficient space. With r the noiseless
 * GEIM residual at dimension n and d = c - c_GEIM,
 *   |r - Q d|^2 = |r|^2 - 2 d^T Q^T M r + d^T (Q^T M Q) d,
 * where |r| comes from the field itself so noiseless rows are exact.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "csgeim/archive.hpp"
#include "csgeim/csgeim.hpp"
#include "csgeim/errors.hpp"
#include "csgeim/geim.hpp"

namespace csgeim {

inline constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Noise

struct NoiseSpec {
    double sigma = 0.0;
    std::uint64_t seed = 0;
    int repetitions = 50;

    void validate() const
    {
        detail::require(sigma >= 0.0 && std::isfinite(sigma), "noise sigma must be finite and >= 0");
        detail::require(repetitions >= 1, "repetitions must be >= 1");
    }
};

/// Standard normal draw that depends only on (seed, stream, repetition, sensor).
inline double gaussian_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t repetition, std::uint64_t sensor)
{
    using detail::splitmix64;
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ stream);
    h = splitmix64(h ^ repetition);
    h = splitmix64(h ^ sensor);
    const std::uint64_t h2 = splitmix64(h);
    const double u1 = static_cast<double>((h >> 11) + 1) * 0x1.0p-53; // (0, 1]
    const double u2 = static_cast<double>(h2 >> 11) * 0x1.0p-53;      // [0, 1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Adds i.i.d. N(0, sigma^2) noise to exact readings. stream separates
/// independent measurement campaigns (the studies use the test-parameter index).
inline MeasurementVector perturb(const Eigen::Ref<const Eigen::VectorXd>& exact, const NoiseSpec& spec, int repetition,
                                 std::uint64_t stream = 0)
{
    spec.validate();
    MeasurementVector out{exact, spec.sigma, spec.seed, repetition};
    if (spec.sigma == 0.0) return out;
    for (Eigen::Index k = 0; k < exact.size(); ++k) {
        out.values[k] += spec.sigma * gaussian_draw(spec.seed, stream, static_cast<std::uint64_t>(repetition),
                                                    static_cast<std::uint64_t>(k));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tables

struct ErrorRow {
    int n = 0;
    int m = 0;
    double sigma = 0.0;
    std::string component; ///< "<method>/<field>", e.g. "csgeim/phi2"
    std::string norm;
    double mean_error = 0.0;
    double std_error = 0.0;
    int repetitions = 0;

    friend bool operator==(const ErrorRow&, const ErrorRow&) = default;
};

struct ErrorTable {
    std::vector<ErrorRow> rows;

    friend bool operator==(const ErrorTable&, const ErrorTable&) = default;

    const ErrorRow* find(int n, double sigma, const std::string& component) const
    {
        for (const ErrorRow& r : rows) {
            if (r.n == n && r.sigma == sigma && r.component == component) return &r;
        }
        return nullptr;
    }
};

inline constexpr const char* kCsvHeader = "n,m,sigma,component,norm,mean_error,std_error,repetitions";

inline std::string to_csv(const ErrorTable& table)
{
    std::ostringstream out;
    out << kCsvHeader << '\n';
    for (const ErrorRow& r : table.rows) {
        out << r.n << ',' << r.m << ',' << detail::format_double(r.sigma) << ',' << r.component << ',' << r.norm << ','
            << detail::format_double(r.mean_error) << ',' << detail::format_double(r.std_error) << ',' << r.repetitions
            << '\n';
    }
    return out.str();
}

inline ErrorTable parse_csv(std::istream& in, const std::string& origin = "<stream>")
{
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw ConfigError(origin + ": unexpected CSV header");
    ErrorTable table;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8) throw ConfigError(origin + ": expected 8 columns in '" + line + "'");
        ErrorRow r;
        r.n = static_cast<int>(detail::parse_int(cells[0], origin));
        r.m = static_cast<int>(detail::parse_int(cells[1], origin));
        r.sigma = detail::parse_double(cells[2], origin);
        r.component = cells[3];
        r.norm = cells[4];
        r.mean_error = detail::parse_double(cells[5], origin);
        r.std_error = detail::parse_double(cells[6], origin);
        r.repetitions = static_cast<int>(detail::parse_int(cells[7], origin));
        table.rows.push_back(std::move(r));
    }
    return table;
}

inline void write_csv(const ErrorTable& table, const fs::path& path)
{
    if (path.has_parent_path()) detail::ensure_directory(path.parent_path());
    detail::write_file_atomic(path, to_csv(table));
}

inline ErrorTable read_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    return parse_csv(in, path.string());
}

// ---------------------------------------------------------------------------
// Log-log fit

struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0; ///< root-mean-square residual in log space
};

inline LogLogFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points)
{
    if (points.size() < 3) throw ConfigError("log-log fit needs at least 3 points");
    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd a(n, 2);
    Eigen::VectorXd b(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto [x, y] = points[static_cast<std::size_t>(k)];
        if (!(x > 0.0) || !(y > 0.0)) throw ConfigError("log-log fit needs positive values");
        a(k, 0) = std::log(x);
        a(k, 1) = 1.0;
        b[k] = std::log(y);
    }
    const Eigen::Vector2d coef = a.colPivHouseholderQr().solve(b);
    LogLogFit fit{coef[0], coef[1], 0.0};
    fit.residual = std::sqrt((a * coef - b).squaredNorm() / static_cast<double>(n));
    return fit;
}

// ---------------------------------------------------------------------------
// Studies

enum class MRule { Ratio, Fixed };

struct NoiseStudyOptions {
    std::vector<int> n_values;         ///< basis dimensions to evaluate
    MRule m_rule = MRule::Ratio;
    double m_ratio = 2.0;              ///< m = ceil(m_ratio * n)
    int m_fixed = 0;                   ///< m for every n when m_rule == Fixed
    std::vector<double> sigmas{1e-2};
    std::uint64_t seed = 12345;
    int repetitions = 50;
    double alpha = 2.0;
    double bvls_tol = 1e-10;
    NormKind norm = NormKind::L2;
    std::vector<Component> components{Component::Phi2};
    bool plain_geim = true;            ///< also report unconstrained interpolation with m = n
    bool constrained = true;           ///< report the constrained fit

    int m_for(int n) const
    {
        if (m_rule == MRule::Fixed) return m_fixed;
        return static_cast<int>(std::ceil(m_ratio * n - 1e-9));
    }
};

struct StudyTables {
    ErrorTable max_of_means; ///< primary table
    ErrorTable mean_of_max;
    ErrorTable test_mean; ///< mean over test set and repetitions
};

namespace detail {

struct SnapshotCache {
    double norm = 0.0;           ///< |f|
    std::vector<double> r_norm2; ///< |r_n|^2, n = 0..N (L2/H1)
    Eigen::MatrixXd g;           ///< column n-1 holds Q_n^T M r_n in its first n entries
    Eigen::MatrixXd residual;    ///< residual fields for Linf (nodes x (N+1)), closure rows only
};

struct Accumulator {
    std::vector<double> values; ///< [param * reps + rep]
};

inline double mean_of(const std::vector<double>& v, std::size_t begin, std::size_t count)
{
    double s = 0.0;
    for (std::size_t k = 0; k < count; ++k) s += v[begin + k];
    return s / static_cast<double>(count);
}

inline double std_of(const std::vector<double>& v, std::size_t begin, std::size_t count, double mean)
{
    if (count < 2) return 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < count; ++k) s += (v[begin + k] - mean) * (v[begin + k] - mean);
    return std::sqrt(s / static_cast<double>(count - 1));
}

} // namespace detail

/// Repeated noisy reconstruction of every test snapshot.
inline StudyTables run_noise_study(const GeimModel& model, const SnapshotSet& test, const NoiseStudyOptions& opt)
{
    detail::require(!test.empty(), "test set is empty");
    detail::require(test.domain.grid() == model.domain.grid(), "test set and model grids differ");
    detail::require(!opt.n_values.empty(), "no basis dimensions requested");
    detail::require(opt.repetitions >= 1, "repetitions must be >= 1");
    detail::require(!opt.components.empty(), "no components requested");
    detail::require(opt.plain_geim || opt.constrained, "no method selected");
    for (double s : opt.sigmas) detail::require(s >= 0.0 && std::isfinite(s), "noise sigma must be finite and >= 0");
    int n_top = 0;
    int m_top = 0;
    for (int n : opt.n_values) {
        detail::require(n >= 1 && n <= model.size(), "basis dimension " + std::to_string(n) + " outside the model");
        const int m = opt.m_for(n);
        if (opt.constrained) {
            detail::require(m >= n, "m rule gives m < n at n = " + std::to_string(n));
            if (m > model.sensor_count()) {
                throw ConfigError("m = " + std::to_string(m) + " exceeds the " + std::to_string(model.sensor_count()) +
                                  " stored sensors");
            }
            m_top = std::max(m_top, m);
        }
        n_top = std::max(n_top, n);
    }
    m_top = std::max(m_top, n_top);

    const Domain& dom = model.domain;
    const bool linf = opt.norm == NormKind::Linf;
    std::optional<Eigen::SparseMatrix<double>> mnorm;
    if (!linf) mnorm = detail::inner_product_matrix(dom, opt.norm);
    std::vector<Eigen::Index> closure;
    for (Eigen::Index k = 0; k < dom.weights().size(); ++k) {
        if (dom.weights()[k] > 0.0) closure.push_back(k);
    }

    const std::size_t P = test.size();
    const auto R = static_cast<std::size_t>(opt.repetitions);
    const std::size_t C = opt.components.size();
    const Eigen::MatrixXd x2 = detail::stack(test, Component::Phi2, model.field_scale);
    const Eigen::MatrixXd design = model.design.topLeftCorner(m_top, n_top);

    // Per component: Gram matrix, basis rows on the closure (Linf), per-snapshot caches.
    std::vector<Eigen::MatrixXd> gram(C), mq(C), q_closure(C);
    std::vector<std::vector<detail::SnapshotCache>> cache(C, std::vector<detail::SnapshotCache>(P));
    Eigen::MatrixXd cstar(n_top, static_cast<Eigen::Index>(P));
    Eigen::MatrixXd y(m_top, static_cast<Eigen::Index>(P));
    for (std::size_t p = 0; p < P; ++p) {
        y.col(static_cast<Eigen::Index>(p)) = measure_all(x2.col(static_cast<Eigen::Index>(p)), model.sensors, m_top);
        cstar.col(static_cast<Eigen::Index>(p)) = interpolate(model, y.col(static_cast<Eigen::Index>(p)).head(n_top));
    }
    for (std::size_t ci = 0; ci < C; ++ci) {
        const Component comp = opt.components[ci];
        const Eigen::MatrixXd q = model.basis(comp).leftCols(n_top);
        const Eigen::MatrixXd xc = comp == Component::Phi2 ? x2 : detail::stack(test, comp, model.field_scale);
        if (!linf) {
            mq[ci] = *mnorm * q;
            gram[ci] = q.transpose() * mq[ci];
        } else {
            q_closure[ci].resize(static_cast<Eigen::Index>(closure.size()), n_top);
            for (std::size_t k = 0; k < closure.size(); ++k) q_closure[ci].row(static_cast<Eigen::Index>(k)) = q.row(closure[k]);
        }
        for (std::size_t p = 0; p < P; ++p) {
            detail::SnapshotCache& sc = cache[ci][p];
            Eigen::VectorXd r = xc.col(static_cast<Eigen::Index>(p));
            sc.norm = detail::column_norm(dom, mnorm ? &*mnorm : nullptr, r, opt.norm);
            if (!(sc.norm > 0.0)) throw NumericalError("relative error of a zero test snapshot");
            if (linf) sc.residual.resize(static_cast<Eigen::Index>(closure.size()), n_top + 1);
            else {
                sc.r_norm2.assign(static_cast<std::size_t>(n_top) + 1, 0.0);
                sc.g.setZero(n_top, n_top);
            }
            for (int n = 0; n <= n_top; ++n) {
                if (n > 0) r.noalias() -= cstar(n - 1, static_cast<Eigen::Index>(p)) * q.col(n - 1);
                if (linf) {
                    for (std::size_t k = 0; k < closure.size(); ++k) sc.residual(static_cast<Eigen::Index>(k), n) = r[closure[k]];
                } else {
                    const double e = detail::column_norm(dom, &*mnorm, r, opt.norm);
                    sc.r_norm2[static_cast<std::size_t>(n)] = e * e;
                    if (n > 0) sc.g.col(n - 1).head(n) = mq[ci].leftCols(n).transpose() * r;
                }
            }
        }
    }

    auto error_of = [&](std::size_t ci, std::size_t p, int n, const Eigen::VectorXd& d) {
        const detail::SnapshotCache& sc = cache[ci][p];
        double e = 0.0;
        if (linf) {
            if (d.size() == 0) e = sc.residual.col(n).cwiseAbs().maxCoeff();
            else e = (sc.residual.col(n) - q_closure[ci].leftCols(n) * d).cwiseAbs().maxCoeff();
        } else {
            double e2 = sc.r_norm2[static_cast<std::size_t>(n)];
            if (d.size() > 0) {
                e2 += -2.0 * d.dot(sc.g.col(n - 1).head(n)) + d.dot(gram[ci].topLeftCorner(n, n) * d);
            }
            e = std::sqrt(std::max(0.0, e2));
        }
        return e / sc.norm;
    };

    StudyTables out;
    const std::string norm_tag = to_string(opt.norm);
    for (double sigma : opt.sigmas) {
        NoiseSpec spec{sigma, opt.seed, opt.repetitions};
        // errors[method][component][n index] -> P * R values
        const std::size_t NV = opt.n_values.size();
        std::vector<std::vector<std::vector<std::vector<double>>>> errors(
            2, std::vector<std::vector<std::vector<double>>>(C, std::vector<std::vector<double>>(NV, std::vector<double>(P * R))));
        std::vector<CoefficientCone> cones;
        for (int n : opt.n_values) cones.push_back(CoefficientCone::from_model(model, n, opt.alpha));
        BvlsOptions bopt;
        bopt.tol = opt.bvls_tol;

        for (std::size_t p = 0; p < P; ++p) {
            const Eigen::VectorXd yp = y.col(static_cast<Eigen::Index>(p));
            const Eigen::VectorXd cp = cstar.col(static_cast<Eigen::Index>(p));
            for (std::size_t rep = 0; rep < R; ++rep) {
                const MeasurementVector eta = perturb(yp, spec, static_cast<int>(rep), p);
                const Eigen::VectorXd noise = eta.values - yp;
                // Plain interpolation is prefix-stable: one substitution serves every n.
                const Eigen::VectorXd d_plain =
                    sigma == 0.0 ? Eigen::VectorXd::Zero(n_top)
                                 : detail::forward_substitute(design.topLeftCorner(n_top, n_top), noise.head(n_top));
                for (std::size_t nv = 0; nv < NV; ++nv) {
                    const int n = opt.n_values[nv];
                    const std::size_t slot = p * R + rep;
                    if (opt.plain_geim) {
                        const Eigen::VectorXd d = sigma == 0.0 ? Eigen::VectorXd() : Eigen::VectorXd(d_plain.head(n));
                        for (std::size_t ci = 0; ci < C; ++ci) errors[0][ci][nv][slot] = error_of(ci, p, n, d);
                    }
                    if (opt.constrained) {
                        const int m = opt.m_for(n);
                        const BvlsResult fit =
                            cs_coefficients(design.topLeftCorner(m, n), cones[nv], eta.values.head(m), bopt);
                        const Eigen::VectorXd d = fit.x - cp.head(n);
                        for (std::size_t ci = 0; ci < C; ++ci) errors[1][ci][nv][slot] = error_of(ci, p, n, d);
                    }
                }
            }
        }

        for (std::size_t nv = 0; nv < NV; ++nv) {
            const int n = opt.n_values[nv];
            for (int method = 0; method < 2; ++method) {
                if ((method == 0 && !opt.plain_geim) || (method == 1 && !opt.constrained)) continue;
                const int m = method == 0 ? n : opt.m_for(n);
                for (std::size_t ci = 0; ci < C; ++ci) {
                    const std::vector<double>& v = errors[static_cast<std::size_t>(method)][ci][nv];
                    const std::string tag = std::string(method == 0 ? "geim/" : "csgeim/") + to_string(opt.components[ci]);
                    double best_mean = -1.0;
                    double best_std = 0.0;
                    for (std::size_t p = 0; p < P; ++p) {
                        const double mean = detail::mean_of(v, p * R, R);
                        if (mean > best_mean) {
                            best_mean = mean;
                            best_std = detail::std_of(v, p * R, R, mean);
                        }
                    }
                    out.max_of_means.rows.push_back({n, m, sigma, tag, norm_tag, best_mean, best_std, opt.repetitions});
                    std::vector<double> maxima(R, 0.0);
                    for (std::size_t rep = 0; rep < R; ++rep) {
                        for (std::size_t p = 0; p < P; ++p) maxima[rep] = std::max(maxima[rep], v[p * R + rep]);
                    }
                    const double mm = detail::mean_of(maxima, 0, R);
                    out.mean_of_max.rows.push_back(
                        {n, m, sigma, tag, norm_tag, mm, detail::std_of(maxima, 0, R, mm), opt.repetitions});
                    const double all = detail::mean_of(v, 0, P * R);
                    out.test_mean.rows.push_back(
                        {n, m, sigma, tag, norm_tag, all, detail::std_of(v, 0, P * R, all), opt.repetitions});
                }
            }
        }
    }
    return out;
}

struct RatioStudyOptions {
    int n = 5;
    std::vector<int> factors{1, 2, 4, 8, 16};
    double sigma = 1e-2;
    std::uint64_t seed = 12345;
    int repetitions = 50;
    double alpha = 2.0;
    double bvls_tol = 1e-10;
    NormKind norm = NormKind::L2;
};

struct RatioStudyResult {
    StudyTables tables;
    LogLogFit fit;           ///< on the max-of-means table
    LogLogFit test_mean_fit; ///< on the test-set mean, for comparison
};

/// Constrained reconstruction at fixed n for m = factor * n, with a log-log fit of error against m.
inline RatioStudyResult run_ratio_study(const GeimModel& model, const SnapshotSet& test, const RatioStudyOptions& opt)
{
    if (opt.factors.size() < 3) throw ConfigError("ratio sweep needs at least 3 points");
    RatioStudyResult res;
    for (int f : opt.factors) {
        detail::require(f >= 1, "ratio factors must be >= 1");
        NoiseStudyOptions o;
        o.n_values = {opt.n};
        o.m_rule = MRule::Fixed;
        o.m_fixed = f * opt.n;
        o.sigmas = {opt.sigma};
        o.seed = opt.seed;
        o.repetitions = opt.repetitions;
        o.alpha = opt.alpha;
        o.bvls_tol = opt.bvls_tol;
        o.norm = opt.norm;
        o.plain_geim = false;
        const StudyTables t = run_noise_study(model, test, o);
        for (const ErrorRow& r : t.max_of_means.rows) res.tables.max_of_means.rows.push_back(r);
        for (const ErrorRow& r : t.mean_of_max.rows) res.tables.mean_of_max.rows.push_back(r);
        for (const ErrorRow& r : t.test_mean.rows) res.tables.test_mean.rows.push_back(r);
    }
    auto fit = [](const ErrorTable& t) {
        std::vector<std::pair<double, double>> pts;
        for (const ErrorRow& r : t.rows) pts.emplace_back(r.m, r.mean_error);
        return fit_loglog_slope(pts);
    };
    res.fit = fit(res.tables.max_of_means);
    res.test_mean_fit = fit(res.tables.test_mean);
    return res;
}

// ---------------------------------------------------------------------------
// Key-value configuration

/// "key = value" lines; '#' starts a comment. Later keys override earlier ones.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::istream& in, const std::string& origin = "<config>")
    {
        KeyValueConfig cfg;
        cfg.origin_ = origin;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
            }
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return cfg;
    }

    static KeyValueConfig load(const fs::path& path)
    {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config " + path.string());
        return parse(in, path.string());
    }

    void set(const std::string& key, const std::string& value)
    {
        if (key.empty()) throw ConfigError(origin_ + ": empty key");
        if (!values_.count(key)) order_.push_back(key);
        values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get(const std::string& key, const std::string& fallback) const
    {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require(const std::string& key) const
    {
        auto it = values_.find(key);
        if (it == values_.end() || it->second.empty()) throw ConfigError(origin_ + ": missing key '" + key + "'");
        return it->second;
    }

    double get_double(const std::string& key, double fallback) const
    {
        return has(key) ? detail::parse_double(require(key), origin_ + " [" + key + "]") : fallback;
    }

    long long get_int(const std::string& key, long long fallback) const
    {
        return has(key) ? detail::parse_int(require(key), origin_ + " [" + key + "]") : fallback;
    }

    std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const
    {
        if (!has(key)) return fallback;
        std::vector<std::string> out;
        std::stringstream ss(require(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    /// Canonical dump in insertion order, used for run manifests.
    std::string dump() const
    {
        std::ostringstream out;
        for (const std::string& k : order_) out << k << " = " << values_.at(k) << '\n';
        return out.str();
    }

private:
    static std::string trim(const std::string& s)
    {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::string origin_ = "<config>";
    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
};

/// Integer ranges and lists: "1-30", "1,2,5", "2-20:2".
inline std::vector<int> parse_int_list(const std::string& text)
{
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.find_first_not_of(" \t") == std::string::npos) continue;
        const auto dash = item.find('-', 1);
        if (dash == std::string::npos) {
            out.push_back(static_cast<int>(detail::parse_int(item.substr(item.find_first_not_of(" \t")), "integer list")));
            continue;
        }
        int step = 1;
        std::string hi = item.substr(dash + 1);
        if (const auto colon = hi.find(':'); colon != std::string::npos) {
            step = static_cast<int>(detail::parse_int(hi.substr(colon + 1), "integer list"));
            hi = hi.substr(0, colon);
        }
        std::string lo = item.substr(0, dash);
        lo.erase(0, lo.find_first_not_of(" \t"));
        hi.erase(hi.find_last_not_of(" \t") + 1);
        const int a = static_cast<int>(detail::parse_int(lo, "integer list"));
        const int b = static_cast<int>(detail::parse_int(hi, "integer list"));
        if (step < 1 || b < a) throw ConfigError("bad integer range '" + item + "'");
        for (int v = a; v <= b; v += step) out.push_back(v);
    }
    if (out.empty()) throw ConfigError("empty integer list");
    return out;
}

/// Study configuration read from a key-value file.
struct StudyConfig {
    SensorRegion region = SensorRegion::All;
    NormKind norm = NormKind::L2;
    std::vector<int> n_values;
    MRule m_rule = MRule::Ratio;
    double m_ratio = 2.0;
    int m_fixed = 0;
    std::vector<int> m_factors{1, 2, 4, 8, 16}; ///< ratio study sweep
    int ratio_n = 5;                            ///< ratio study basis dimension
    std::vector<double> sigmas{1e-2};
    NoiseSpec noise;
    double alpha = 2.0;
    double bvls_tol = 1e-10;
    SensorFill fill = SensorFill::Greedy;
    std::vector<Component> components{Component::Phi2};
    fs::path training;
    fs::path test;
    fs::path model; ///< optional trained model; otherwise trained from `training`
    fs::path output;
    KeyValueConfig raw;

    static StudyConfig from(const KeyValueConfig& kv, const fs::path& base_dir = {})
    {
        StudyConfig c;
        c.raw = kv;
        c.region = parse_case(kv.get("case", "I"));
        c.norm = parse_norm(kv.get("norm", "l2"));
        c.n_values = parse_int_list(kv.get("n", "1-30"));
        const std::string rule = kv.get("m_rule", "ratio");
        if (rule == "ratio") c.m_rule = MRule::Ratio;
        else if (rule == "fixed") c.m_rule = MRule::Fixed;
        else throw ConfigError("m_rule must be 'ratio' or 'fixed'");
        c.m_ratio = kv.get_double("m_ratio", 2.0);
        c.m_fixed = static_cast<int>(kv.get_int("m_fixed", 0));
        c.m_factors = parse_int_list(kv.get("m_factors", "1,2,4,8,16"));
        c.ratio_n = static_cast<int>(kv.get_int("ratio_n", 5));
        c.sigmas.clear();
        for (const std::string& s : kv.get_list("sigma", {"1e-2"})) c.sigmas.push_back(detail::parse_double(s, "sigma"));
        c.noise.seed = static_cast<std::uint64_t>(kv.get_int("seed", 12345));
        c.noise.repetitions = static_cast<int>(kv.get_int("repetitions", 50));
        c.alpha = kv.get_double("alpha", 2.0);
        c.bvls_tol = kv.get_double("bvls_tol", 1e-10);
        c.fill = parse_sensor_fill(kv.get("sensor_strategy", "greedy"));
        c.components.clear();
        for (const std::string& s : kv.get_list("components", {"phi2"})) c.components.push_back(parse_component(s));
        auto path = [&](const std::string& key) -> fs::path {
            if (!kv.has(key)) return {};
            fs::path p = kv.require(key);
            return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
        };
        c.training = path("training");
        c.test = path("test");
        c.model = path("model");
        c.output = kv.get("output", "results");
        c.validate();
        return c;
    }

    void validate() const
    {
        detail::require(!n_values.empty(), "n list is empty");
        detail::require(m_ratio >= 1.0, "m_ratio must be >= 1");
        detail::require(m_rule != MRule::Fixed || m_fixed >= 1, "m_fixed must be >= 1");
        detail::require(alpha > 1.0, "alpha must be > 1");
        detail::require(bvls_tol > 0.0, "bvls_tol must be > 0");
        detail::require(!sigmas.empty(), "sigma list is empty");
        noise.validate();
        detail::require(!test.empty(), "config needs a 'test' snapshot archive");
        detail::require(!model.empty() || !training.empty(), "config needs 'model' or 'training'");
    }

    int n_max() const { return *std::max_element(n_values.begin(), n_values.end()); }

    int m_max() const
    {
        int m = n_max();
        for (int n : n_values) m = std::max(m, m_rule == MRule::Fixed ? m_fixed : static_cast<int>(std::ceil(m_ratio * n - 1e-9)));
        return m;
    }

    NoiseStudyOptions noise_options() const
    {
        NoiseStudyOptions o;
        o.n_values = n_values;
        o.m_rule = m_rule;
        o.m_ratio = m_ratio;
        o.m_fixed = m_fixed;
        o.sigmas = sigmas;
        o.seed = noise.seed;
        o.repetitions = noise.repetitions;
        o.alpha = alpha;
        o.bvls_tol = bvls_tol;
        o.norm = norm;
        o.components = components;
        return o;
    }

    RatioStudyOptions ratio_options() const
    {
        RatioStudyOptions o;
        o.n = ratio_n;
        o.factors = m_factors;
        o.sigma = sigmas.front();
        o.seed = noise.seed;
        o.repetitions = noise.repetitions;
        o.alpha = alpha;
        o.bvls_tol = bvls_tol;
        o.norm = norm;
        return o;
    }
};

/// Output directory, resolved against $CSGEIM_OUTPUT_ROOT when relative.
inline fs::path resolve_output(const fs::path& p)
{
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("CSGEIM_OUTPUT_ROOT"); root && *root) return fs::path(root) / p;
    return p;
}

inline std::string study_stem(const std::string& kind, SensorRegion region, NormKind norm)
{
    return kind + "_case" + case_tag(region) + "_" + to_string(norm);
}

/// Writes <stem>.csv, <stem>_mean_of_max.csv, <stem>_test_mean.csv and <stem>_manifest.txt.
inline void emit(const StudyTables& tables, const fs::path& dir, const std::string& stem, const std::string& manifest)
{
    detail::ensure_directory(dir);
    write_csv(tables.max_of_means, dir / (stem + ".csv"));
    write_csv(tables.mean_of_max, dir / (stem + "_mean_of_max.csv"));
    write_csv(tables.test_mean, dir / (stem + "_test_mean.csv"));
    std::ostringstream m;
    m << "tool csgeim " << kVersion << '\n';
    m << "eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION << '\n';
    m << manifest;
    detail::write_file_atomic(dir / (stem + "_manifest.txt"), m.str());
}

/// Model for a study: loaded from cfg.model or trained on cfg.training.
inline GeimModel study_model(const StudyConfig& cfg, int n_max, int m_max)
{
    if (!cfg.model.empty()) {
        GeimModel model = read_model(cfg.model);
        detail::require(model.size() >= n_max, "model has fewer basis functions than the study needs");
        detail::require(model.sensor_count() >= m_max, "model has fewer sensors than the study needs");
        return model;
    }
    const SnapshotSet training = read_snapshot_archive(cfg.training);
    GreedyOptions g;
    g.n_max = n_max;
    g.m_max = m_max;
    g.norm = cfg.norm;
    g.fill = cfg.fill;
    g.fill_seed = cfg.noise.seed;
    return greedy_build(training, restrict_mask(training.domain, cfg.region), g, cfg.region);
}

} // namespace csgeim
