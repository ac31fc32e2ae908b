#pragma once

/**
 * @file archive.hpp
 * @brief On-disk snapshot sets.
 *
 * An archive is a directory holding
 *   manifest.txt    grid header, symmetry, component list, one line per snapshot
 *                   (parameters, k_eff, phi2 norms)
 *   regions.txt     the cell region map on the snapshot grid
 *   NNNNN.f64       raw little-endian doubles, one nx*ny block per component,
 *                   in the order phi1, phi2, power (absent components skipped)
 */

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "csgeim/diffusion.hpp"
#include "csgeim/errors.hpp"
#include "csgeim/mesh_field.hpp"

namespace csgeim {

namespace fs = std::filesystem;

namespace detail {

inline std::uint64_t byteswap64(std::uint64_t v)
{
    v = ((v & 0x00FF00FF00FF00FFull) << 8) | ((v >> 8) & 0x00FF00FF00FF00FFull);
    v = ((v & 0x0000FFFF0000FFFFull) << 16) | ((v >> 16) & 0x0000FFFF0000FFFFull);
    return (v << 32) | (v >> 32);
}

inline void write_f64_block(std::ostream& out, const Eigen::VectorXd& v)
{
    std::vector<std::uint64_t> raw(static_cast<std::size_t>(v.size()));
    std::memcpy(raw.data(), v.data(), raw.size() * sizeof(double));
    if constexpr (std::endian::native == std::endian::big) {
        for (auto& w : raw) w = byteswap64(w);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 8));
}

inline Eigen::VectorXd read_f64_block(std::istream& in, Eigen::Index n, const std::string& path)
{
    std::vector<std::uint64_t> raw(static_cast<std::size_t>(n));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 8));
    if (in.gcount() != static_cast<std::streamsize>(raw.size() * 8)) {
        throw ConfigError(path + ": truncated field block");
    }
    if constexpr (std::endian::native == std::endian::big) {
        for (auto& w : raw) w = byteswap64(w);
    }
    Eigen::VectorXd v(n);
    std::memcpy(v.data(), raw.data(), raw.size() * sizeof(double));
    return v;
}

inline std::string read_text(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes to a temporary sibling and renames, so readers never see half a file.
inline void write_file_atomic(const fs::path& path, const std::string& content)
{
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + tmp.string());
        out << content;
        if (!out) throw ConfigError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline void ensure_directory(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create directory " + dir.string());
}

inline std::string snapshot_file_name(std::size_t k)
{
    std::ostringstream ss;
    ss << std::setw(5) << std::setfill('0') << k << ".f64";
    return ss.str();
}

inline std::vector<std::string> split_words(const std::string& line)
{
    std::istringstream ls(line);
    std::vector<std::string> words;
    std::string w;
    while (ls >> w) words.push_back(w);
    return words;
}

inline double parse_double(const std::string& s, const std::string& where)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(where + ": not a number '" + s + "'");
    }
}

inline long long parse_int(const std::string& s, const std::string& where)
{
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(where + ": not an integer '" + s + "'");
    }
}

inline std::string format_double(double v)
{
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

inline void write_domain(const fs::path& dir, const Domain& domain, std::ostream& manifest)
{
    const Grid2D& g = domain.grid();
    manifest << "grid " << g.nx << ' ' << g.ny << ' ' << format_double(g.hx) << ' ' << format_double(g.hy) << ' '
             << format_double(g.x0) << ' ' << format_double(g.y0) << '\n';
    manifest << "symmetry " << int(domain.symmetry().left) << ' ' << int(domain.symmetry().bottom) << '\n';
    std::ostringstream regions;
    write_region_layout(regions, RegionLayout{domain.regions(), g.hx, g.hy});
    write_file_atomic(dir / "regions.txt", regions.str());
}

inline Domain read_domain(const fs::path& dir, const std::vector<std::string>& grid_line,
                          const std::vector<std::string>& symmetry_line)
{
    const std::string where = (dir / "manifest.txt").string();
    if (grid_line.size() != 7 || symmetry_line.size() != 3) throw ConfigError(where + ": malformed grid header");
    const Grid2D g = Grid2D::make(static_cast<int>(parse_int(grid_line[1], where)),
                                  static_cast<int>(parse_int(grid_line[2], where)), parse_double(grid_line[3], where),
                                  parse_double(grid_line[4], where), parse_double(grid_line[5], where),
                                  parse_double(grid_line[6], where));
    RegionLayout layout = read_region_file((dir / "regions.txt").string());
    return Domain(g, std::move(layout.map),
                  Symmetry{parse_int(symmetry_line[1], where) != 0, parse_int(symmetry_line[2], where) != 0});
}

} // namespace detail

/// Writes a snapshot set. Existing files of a previous archive in the same directory are overwritten.
inline void write_snapshot_archive(const SnapshotSet& set, const fs::path& dir)
{
    detail::require(!set.empty(), "cannot archive an empty snapshot set");
    detail::ensure_directory(dir);
    const Domain& dom = set.domain;
    const bool companions = set.has_companions();
    const std::size_t mu_dim = set.items.front().mu.size();

    std::ostringstream m;
    m << "csgeim-snapshots 1\n";
    m << "role " << to_string(set.role) << '\n';
    detail::write_domain(dir, dom, m);
    m << "components " << (companions ? "phi1 phi2 power" : "phi2") << '\n';
    m << "mu_dim " << mu_dim << '\n';
    m << "count " << set.size() << '\n';
    m << "# index mu... keff |phi2|_l2 |phi2|_linf |phi2|_h1\n";
    for (std::size_t k = 0; k < set.size(); ++k) {
        const Snapshot& s = set.items[k];
        detail::require(s.mu.size() == mu_dim, "snapshots disagree on parameter dimension");
        detail::require(s.phi2.grid == dom.grid(), "grid mismatch");
        detail::require(companions == (s.phi1.has_value() && s.power.has_value()), "snapshots disagree on components");
        m << "snapshot " << k;
        for (double v : s.mu) m << ' ' << detail::format_double(v);
        m << ' ' << (s.keff ? detail::format_double(*s.keff) : std::string("nan"));
        for (NormKind kind : {NormKind::L2, NormKind::Linf, NormKind::H1Semi}) {
            m << ' ' << detail::format_double(dom.norm(s.phi2, kind));
        }
        m << '\n';

        std::ostringstream blob;
        if (companions) detail::write_f64_block(blob, s.phi1->values);
        detail::write_f64_block(blob, s.phi2.values);
        if (companions) detail::write_f64_block(blob, s.power->values);
        detail::write_file_atomic(dir / detail::snapshot_file_name(k), blob.str());
    }
    // Manifest last: its presence marks a complete archive.
    detail::write_file_atomic(dir / "manifest.txt", m.str());
}

inline bool snapshot_archive_exists(const fs::path& dir) { return fs::exists(dir / "manifest.txt"); }

inline SnapshotSet read_snapshot_archive(const fs::path& dir)
{
    const fs::path manifest_path = dir / "manifest.txt";
    const std::string where = manifest_path.string();
    std::istringstream in(detail::read_text(manifest_path));
    std::string line;
    std::vector<std::string> grid_line, symmetry_line;
    bool companions = false;
    std::size_t mu_dim = 0;
    long long count = -1;
    SetRole role = SetRole::Training;
    std::vector<std::vector<std::string>> rows;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto w = detail::split_words(line);
        if (w.empty()) continue;
        if (w[0] == "csgeim-snapshots") {
            header = true;
        } else if (w[0] == "role" && w.size() == 2) {
            role = w[1] == "test" ? SetRole::Test : SetRole::Training;
        } else if (w[0] == "grid") {
            grid_line = w;
        } else if (w[0] == "symmetry") {
            symmetry_line = w;
        } else if (w[0] == "components") {
            companions = w.size() == 4;
        } else if (w[0] == "mu_dim" && w.size() == 2) {
            mu_dim = static_cast<std::size_t>(detail::parse_int(w[1], where));
        } else if (w[0] == "count" && w.size() == 2) {
            count = detail::parse_int(w[1], where);
        } else if (w[0] == "snapshot") {
            rows.push_back(std::move(w));
        } else {
            throw ConfigError(where + ": unexpected line '" + line + "'");
        }
    }
    if (!header) throw ConfigError(where + ": not a snapshot archive");
    if (count < 1 || static_cast<long long>(rows.size()) != count) throw ConfigError(where + ": snapshot count mismatch");
    if (mu_dim < 1) throw ConfigError(where + ": missing mu_dim");

    SnapshotSet set{detail::read_domain(dir, grid_line, symmetry_line), role, {}};
    const Grid2D& g = set.domain.grid();
    const auto n = static_cast<Eigen::Index>(g.size());
    set.items.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& w = rows[k];
        if (w.size() != 2 + mu_dim + 1 + 3) throw ConfigError(where + ": malformed snapshot line " + std::to_string(k));
        Snapshot s;
        for (std::size_t d = 0; d < mu_dim; ++d) s.mu.push_back(detail::parse_double(w[2 + d], where));
        if (w[2 + mu_dim] != "nan") s.keff = detail::parse_double(w[2 + mu_dim], where);
        const fs::path blob_path = dir / detail::snapshot_file_name(k);
        std::ifstream blob(blob_path, std::ios::binary);
        if (!blob) throw ConfigError("cannot open " + blob_path.string());
        if (companions) s.phi1 = Field2D(g, detail::read_f64_block(blob, n, blob_path.string()));
        s.phi2 = Field2D(g, detail::read_f64_block(blob, n, blob_path.string()));
        if (companions) s.power = Field2D(g, detail::read_f64_block(blob, n, blob_path.string()));
        set.items.push_back(std::move(s));
    }
    return set;
}

} // namespace csgeim
