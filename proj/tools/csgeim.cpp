// csgeim command line: snapshot generation, training, reconstruction and the studies.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "csgeim/analytic.hpp"
#include "csgeim/archive.hpp"
#include "csgeim/csgeim.hpp"
#include "csgeim/diffusion.hpp"
#include "csgeim/experiments.hpp"
#include "csgeim/geim.hpp"

using namespace csgeim;

namespace {

std::vector<double> parse_double_list(const std::string& text)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.find_first_not_of(" \t") == std::string::npos) continue;
        out.push_back(detail::parse_double(item.substr(item.find_first_not_of(" \t")), "--mus"));
    }
    if (out.empty()) throw ConfigError("empty parameter list");
    return out;
}

// Training: count points spanning [1, 3]. Test: the count interval midpoints of [1, 3].
std::vector<double> iaea_parameters(SetRole role, int count)
{
    if (count < 2) throw ConfigError("--count must be >= 2");
    std::vector<double> mus;
    for (int i = 0; i < count; ++i) {
        mus.push_back(role == SetRole::Training ? 1.0 + 2.0 * i / (count - 1) : 1.0 + (2.0 * i + 1.0) / count);
    }
    return mus;
}

SetRole parse_role(const std::string& s)
{
    if (s == "training" || s == "train") return SetRole::Training;
    if (s == "test") return SetRole::Test;
    throw ConfigError("unknown role '" + s + "'");
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); }
};

void print_table(const ErrorTable& t)
{
    std::printf("%4s %5s %10s %-14s %12s %12s\n", "n", "m", "sigma", "component", "mean", "std");
    for (const ErrorRow& r : t.rows) {
        std::printf("%4d %5d %10.3g %-14s %12.5e %12.5e\n", r.n, r.m, r.sigma, r.component.c_str(), r.mean_error,
                    r.std_error);
    }
}

StudyConfig load_study(const std::string& path)
{
    const fs::path p(path);
    return StudyConfig::from(KeyValueConfig::load(p), p.parent_path());
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"GEIM and constrained-stabilized GEIM field reconstruction"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Solve the two-group benchmark or sample the analytic manifold");
    std::string gen_config, gen_kind = "iaea", gen_regions = "data/iaea2d.regions", gen_role = "training";
    std::string gen_mus, gen_out, gen_bc = "dirichlet";
    double gen_h = 1.0;
    int gen_count = 300;
    gen->add_option("--config", gen_config, "key-value file; command-line options take precedence");
    gen->add_option("--kind", gen_kind, "iaea or analytic")->check(CLI::IsMember({"iaea", "analytic"}));
    gen->add_option("--regions", gen_regions, "region map file (iaea)");
    gen->add_option("--spacing", gen_h, "mesh spacing h in cm (iaea)");
    gen->add_option("--bc", gen_bc, "dirichlet, vacuum or reflective (iaea)");
    gen->add_option("--role", gen_role, "training or test");
    gen->add_option("--count", gen_count, "number of reflector parameters when --mus is absent (iaea)");
    gen->add_option("--mus", gen_mus, "explicit comma separated reflector D1 values (iaea)");
    gen->add_option("--out", gen_out, "archive directory");

    // train
    auto* train = app.add_subcommand("train", "Build a GEIM model from a snapshot archive");
    std::string tr_snap, tr_case = "I", tr_norm = "l2", tr_out, tr_fill = "greedy";
    int tr_n = 30, tr_m = 60;
    std::uint64_t tr_seed = 12345;
    train->add_option("--snapshots", tr_snap, "training archive")->required();
    train->add_option("--case", tr_case, "I (whole domain) or II (core only)");
    train->add_option("--norm", tr_norm, "l2, linf or h1");
    train->add_option("--n", tr_n, "basis dimension");
    train->add_option("--m", tr_m, "stored sensors (>= n)");
    train->add_option("--sensor-strategy", tr_fill, "greedy or random fill once the greedy is exhausted");
    train->add_option("--seed", tr_seed, "seed for the random fill");
    train->add_option("--out", tr_out, "model directory")->required();

    // reconstruct
    auto* rec = app.add_subcommand("reconstruct", "Reconstruct one snapshot from (noisy) sensor readings");
    std::string rc_model, rc_snap, rc_out;
    int rc_index = 0, rc_n = 5, rc_m = 0, rc_rep = 0;
    double rc_sigma = 0.0, rc_alpha = 2.0;
    std::uint64_t rc_seed = 12345;
    rec->add_option("--model", rc_model, "model directory")->required();
    rec->add_option("--snapshots", rc_snap, "archive holding the field to reconstruct")->required();
    rec->add_option("--index", rc_index, "snapshot index in the archive");
    rec->add_option("--n", rc_n, "basis dimension");
    rec->add_option("--m", rc_m, "sensors used; m = n gives plain GEIM, 0 selects 2n");
    rec->add_option("--sigma", rc_sigma, "noise standard deviation");
    rec->add_option("--seed", rc_seed, "noise seed");
    rec->add_option("--repetition", rc_rep, "noise repetition index");
    rec->add_option("--alpha", rc_alpha, "cone factor");
    rec->add_option("--out", rc_out, "write the reconstructed fields as a snapshot archive");

    // studies
    auto* noise = app.add_subcommand("study-noise", "Noise study over n and sigma");
    std::string sn_config;
    noise->add_option("--config", sn_config, "study configuration")->required();
    auto* ratio = app.add_subcommand("study-ratio", "Error against m at fixed n");
    std::string sr_config;
    ratio->add_option("--config", sr_config, "study configuration")->required();

    // baseline
    auto* svd = app.add_subcommand("baseline-svd", "Singular values of the snapshot set next to the greedy error");
    std::string sv_snap, sv_model, sv_out;
    svd->add_option("--snapshots", sv_snap, "training archive")->required();
    svd->add_option("--model", sv_model, "model whose training error is listed alongside");
    svd->add_option("--out", sv_out, "CSV file (stdout when absent)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        Timer timer;
        if (*gen) {
            if (!gen_config.empty()) {
                const KeyValueConfig kv = KeyValueConfig::load(gen_config);
                const fs::path base = fs::path(gen_config).parent_path();
                auto pick = [&](const char* opt, const char* key, std::string& v) {
                    if (gen->count(opt) == 0 && kv.has(key)) v = kv.require(key);
                };
                pick("--kind", "kind", gen_kind);
                pick("--regions", "regions", gen_regions);
                pick("--bc", "boundary", gen_bc);
                pick("--role", "role", gen_role);
                pick("--mus", "mus", gen_mus);
                pick("--out", "out", gen_out);
                if (gen->count("--regions") == 0 && kv.has("regions") && fs::path(gen_regions).is_relative()) {
                    gen_regions = (base / gen_regions).string();
                }
                if (gen->count("--spacing") == 0) gen_h = kv.get_double("h", gen_h);
                if (gen->count("--count") == 0) gen_count = static_cast<int>(kv.get_int("count", gen_count));
            }
            if (gen_out.empty()) throw ConfigError("generate needs --out");
            const SetRole role = parse_role(gen_role);
            SnapshotSet set;
            if (gen_kind == "analytic") {
                AnalyticManifoldSpec spec;
                spec.midpoints = role == SetRole::Test;
                set = generate_analytic_snapshots(spec, role);
            } else {
                const DiffusionProblem base =
                    DiffusionProblem::iaea2d(read_region_file(gen_regions), gen_h, 2.0, parse_boundary(gen_bc));
                const std::vector<double> mus = gen_mus.empty() ? iaea_parameters(role, gen_count) : parse_double_list(gen_mus);
                set = generate_snapshots(base, mus, {}, role);
            }
            const fs::path out = resolve_output(gen_out);
            write_snapshot_archive(set, out);
            std::printf("wrote %zu snapshots to %s (%.1f s)\n", set.size(), out.string().c_str(), timer.seconds());
        } else if (*train) {
            const SnapshotSet training = read_snapshot_archive(tr_snap);
            const SensorRegion region = parse_case(tr_case);
            GreedyOptions g;
            g.n_max = tr_n;
            g.m_max = tr_m;
            g.norm = parse_norm(tr_norm);
            g.fill = parse_sensor_fill(tr_fill);
            g.fill_seed = tr_seed;
            const GeimModel model = greedy_build(training, restrict_mask(training.domain, region), g, region);
            const fs::path out = resolve_output(tr_out);
            write_model(model, out);
            std::printf("model: n = %d, sensors = %d, field scale = %.6g (%.1f s)\n", model.size(), model.sensor_count(),
                        model.field_scale, timer.seconds());
            std::printf("%4s %12s %12s %12s\n", "n", "eps", "lebesgue", "bound");
            for (int n = 1; n <= model.size(); ++n) {
                const auto k = static_cast<std::size_t>(n);
                std::printf("%4d %12.5e %12.5e %12.5e\n", n, model.eps[k], model.lebesgue[k], model.bounds[k - 1]);
            }
        } else if (*rec) {
            const GeimModel model = read_model(rc_model);
            const SnapshotSet set = read_snapshot_archive(rc_snap);
            if (rc_index < 0 || rc_index >= static_cast<int>(set.size())) throw ConfigError("--index out of range");
            const int m = rc_m == 0 ? 2 * rc_n : rc_m;
            const Snapshot& s = set.items[static_cast<std::size_t>(rc_index)];
            const Field2D f = model.field_scale * s.phi2;
            const MeasurementVector exact = exact_measurements(model, f, m);
            const MeasurementVector eta = perturb(exact.values, NoiseSpec{rc_sigma, rc_seed, rc_rep + 1}, rc_rep);
            Eigen::VectorXd c;
            if (m == rc_n) {
                c = interpolate(model, eta.values);
            } else {
                c = cs_coefficients(build_design(model, rc_n, m).a, CoefficientCone::from_model(model, rc_n, rc_alpha),
                                    eta.values)
                        .x;
            }
            std::vector<Component> comps{Component::Phi2};
            if (model.has_companions() && set.has_companions()) comps = {Component::Phi1, Component::Phi2, Component::Power};
            SnapshotSet out_set{set.domain, set.role, {}};
            Snapshot r;
            r.mu = s.mu;
            for (Component comp : comps) {
                const Field2D fr = reconstruct(model, c, comp);
                const Field2D truth = comp == Component::Phi2   ? f
                                      : comp == Component::Phi1 ? model.field_scale * *s.phi1
                                                                : model.field_scale * *s.power;
                const double err = model.domain.distance(truth, fr, model.norm) / model.domain.norm(truth, model.norm);
                std::printf("%s relative %s error %.6e\n", to_string(comp).c_str(), to_string(model.norm).c_str(), err);
                const Field2D unscaled = (1.0 / model.field_scale) * fr;
                if (comp == Component::Phi1) r.phi1 = unscaled;
                else if (comp == Component::Phi2) r.phi2 = unscaled;
                else r.power = unscaled;
            }
            std::printf("coefficients");
            for (Eigen::Index i = 0; i < c.size(); ++i) std::printf(" %.10g", c[i]);
            std::printf("\n");
            if (!rc_out.empty()) {
                out_set.items.push_back(std::move(r));
                write_snapshot_archive(out_set, resolve_output(rc_out));
            }
        } else if (*noise) {
            const StudyConfig cfg = load_study(sn_config);
            const GeimModel model = study_model(cfg, cfg.n_max(), cfg.m_max());
            const SnapshotSet test = read_snapshot_archive(cfg.test);
            const StudyTables tables = run_noise_study(model, test, cfg.noise_options());
            const fs::path dir = resolve_output(cfg.output);
            const std::string stem = study_stem("noise", cfg.region, cfg.norm);
            emit(tables, dir, stem, cfg.raw.dump());
            print_table(tables.max_of_means);
            std::printf("wrote %s (%.1f s)\n", (dir / (stem + ".csv")).string().c_str(), timer.seconds());
        } else if (*ratio) {
            const StudyConfig cfg = load_study(sr_config);
            const RatioStudyOptions ro = cfg.ratio_options();
            const int f_max = *std::max_element(ro.factors.begin(), ro.factors.end());
            const GeimModel model = study_model(cfg, ro.n, ro.n * f_max);
            const SnapshotSet test = read_snapshot_archive(cfg.test);
            const RatioStudyResult res = run_ratio_study(model, test, ro);
            const fs::path dir = resolve_output(cfg.output);
            const std::string stem = study_stem("ratio", cfg.region, cfg.norm);
            std::ostringstream manifest;
            manifest << cfg.raw.dump() << "slope " << detail::format_double(res.fit.slope) << '\n'
                     << "intercept " << detail::format_double(res.fit.intercept) << '\n'
                     << "residual " << detail::format_double(res.fit.residual) << '\n'
                     << "test_mean_slope " << detail::format_double(res.test_mean_fit.slope) << '\n';
            emit(res.tables, dir, stem, manifest.str());
            print_table(res.tables.max_of_means);
            std::printf("slope %.4f (test-set mean: %.4f)\n", res.fit.slope, res.test_mean_fit.slope);
            std::printf("wrote %s (%.1f s)\n", (dir / (stem + ".csv")).string().c_str(), timer.seconds());
        } else if (*svd) {
            const SnapshotSet training = read_snapshot_archive(sv_snap);
            std::optional<GeimModel> model;
            if (!sv_model.empty()) model = read_model(sv_model);
            const double scale = model ? model->field_scale
                                       : training_field_scale(training, restrict_mask(training.domain, SensorRegion::All));
            const Eigen::VectorXd sv = svd_baseline(training, Component::Phi2, scale);
            std::ostringstream out;
            out << "n,sigma_n_plus_1" << (model ? ",greedy_error" : "") << '\n';
            for (Eigen::Index n = 0; n < sv.size(); ++n) {
                if (model && n > model->size()) break;
                out << n << ',' << detail::format_double(sv[n]);
                if (model) out << ',' << detail::format_double(model->eps[static_cast<std::size_t>(n)]);
                out << '\n';
            }
            if (sv_out.empty()) {
                std::cout << out.str();
            } else {
                const fs::path p = resolve_output(sv_out);
                if (p.has_parent_path()) detail::ensure_directory(p.parent_path());
                detail::write_file_atomic(p, out.str());
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
