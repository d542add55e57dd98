// scatlab -- experiment runners behind the CLI subcommands. Each runner
// executes deterministically from the config (fixed seeds and summation
// orders) and writes plot-ready CSV plus a JSON run manifest.
#pragma once

#include "scatlab/config.hpp"
#include "scatlab/csv.hpp"
#include "scatlab/flow.hpp"
#include "scatlab/jacobi.hpp"
#include "scatlab/riccati2d.hpp"
#include "scatlab/scattering.hpp"
#include "scatlab/volume.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <random>
#include <thread>

namespace scatlab::experiments {

using config::ConfigError;
using config::Experiment;
using json = nlohmann::json;

constexpr const char* kVersion = "scatlab 0.1.0";

enum ExitCode : int {
    ok = 0,
    checklist_failed = 1,
    config_error = 2,
    numeric_error = 3,
};

struct RunContext {
    std::filesystem::path out_dir;
    int threads = 1;
    bool verbose = false;
};

namespace detail {

// deterministic boundary grid: directions x log-spaced |eta|
struct BoundaryGrid {
    std::vector<std::pair<Vec, Vec>> points;  // (y, eta)
};

inline BoundaryGrid boundary_grid(int n, int n_dirs, int n_mag, double eta_min, double eta_max) {
    BoundaryGrid g;
    for (int d = 0; d < n_dirs; ++d) {
        Vec y = Vec::Zero(n);
        Vec u = Vec::Zero(n);
        if (n == 2) {
            const double th = 2.0 * kPi * d / n_dirs;
            y << std::cos(th), std::sin(th);
            u << -std::sin(th), std::cos(th);
        } else {
            const double z = 1.0 - 2.0 * (d + 0.5) / n_dirs;
            const double phi = d * 2.399963229728653;
            const double rr = std::sqrt(std::max(0.0, 1.0 - z * z));
            y << rr * std::cos(phi), rr * std::sin(phi), z;
            Vec a = std::abs(y(0)) < 0.9 ? Vec(Vec::Unit(n, 0)) : Vec(Vec::Unit(n, 1));
            u = a - a.dot(y) * y;
            u.normalize();
        }
        for (int k = 0; k < n_mag; ++k) {
            const double mag =
                (n_mag == 1) ? eta_min
                             : eta_min * std::pow(eta_max / eta_min, double(k) / double(n_mag - 1));
            g.points.emplace_back(y, Vec(mag * u));
        }
    }
    return g;
}

template <class F>
void parallel_for(size_t count, int threads, F&& body) {
    if (threads <= 1) {
        for (size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= count) break;
            body(i);
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

inline void write_manifest(const Experiment& e, const RunContext& ctx, double wall_ms) {
    json m;
    m["config_hash"] = fnv1a(e.raw.dump());
    m["version"] = kVersion;
    m["command"] = e.command;
    m["wall_ms"] = wall_ms;
    std::ofstream out(ctx.out_dir / "manifest.json");
    out << m.dump(2) << '\n';
}

}  // namespace detail

// scatter: sweep the scattering map over a boundary grid.
inline int run_scatter(const Experiment& e, const RunContext& ctx) {
    const auto& num = e.numeric;
    config::require_keys(num, "numeric",
                         {"seed", "directions", "magnitudes", "eta_min", "eta_max", "rel_tol",
                          "abs_tol"});
    const int n = e.metric.dim();
    auto grid = detail::boundary_grid(n, num.value("directions", 20), num.value("magnitudes", 10),
                                      num.value("eta_min", 0.5), num.value("eta_max", 50.0));
    ode::Options opts;
    opts.rel_tol = num.value("rel_tol", 1e-10);
    opts.abs_tol = num.value("abs_tol", 1e-12);

    std::vector<scattering::ScatteringSample> samples(grid.points.size());
    detail::parallel_for(grid.points.size(), ctx.threads, [&](size_t i) {
        samples[i] = scattering::scattering_map(e.metric, grid.points[i].first,
                                                grid.points[i].second, opts);
    });

    std::vector<std::string> cols;
    for (int i = 0; i < n; ++i) cols.push_back("y" + std::to_string(i));
    for (int i = 0; i < n; ++i) cols.push_back("eta" + std::to_string(i));
    for (int i = 0; i < n; ++i) cols.push_back("y_plus" + std::to_string(i));
    for (int i = 0; i < n; ++i) cols.push_back("eta_plus" + std::to_string(i));
    cols.push_back("tau_plus");
    cols.push_back("deviation");
    cols.push_back("extension_dependent");
    csv::Writer w((ctx.out_dir / (e.output_prefix + "_scatter.csv")).string(), cols);
    for (const auto& s : samples) {
        std::vector<double> row;
        for (int i = 0; i < n; ++i) row.push_back(s.in.y(i));
        for (int i = 0; i < n; ++i) row.push_back(s.in.eta(i));
        for (int i = 0; i < n; ++i) row.push_back(s.out.y(i));
        for (int i = 0; i < n; ++i) row.push_back(s.out.eta(i));
        row.push_back(s.tau_plus);
        row.push_back(s.deviation);
        row.push_back(s.extension_dependent ? 1.0 : 0.0);
        w.row(row);
    }
    return ok;
}

// conjugates: scan a family of geodesics for conjugate points.
inline int run_conjugates(const Experiment& e, const RunContext& ctx) {
    const auto& num = e.numeric;
    config::require_keys(num, "numeric",
                         {"seed", "geodesics", "impact_min", "impact_max", "t_span", "launch_radius"});
    const int n = e.metric.dim();
    if (n != 2) throw ConfigError("conjugates: dim 2 models");
    const int N = num.value("geodesics", 100);
    const double b0 = num.value("impact_min", 0.05);
    const double b1 = num.value("impact_max", 3.0);
    const double span = num.value("t_span", 60.0);
    const double r0 = num.value("launch_radius", 12.0);

    struct Row {
        double impact;
        std::vector<double> roots;
    };
    std::vector<Row> rows(static_cast<size_t>(N));
    detail::parallel_for(size_t(N), ctx.threads, [&](size_t i) {
        const double b = b0 + (b1 - b0) * double(i) / std::max(1, N - 1);
        Vec x(2), v(2);
        x << -r0, b;
        v << 1.0, 0.0;
        v /= std::sqrt(v.dot(e.metric.metric(x) * v));
        auto traj = flow::integrate_cartesian(e.metric, {x, v}, 0.0, span);
        rows[i] = {b, jacobi::conjugate_scan(e.metric, traj, 0.0, span)};
    });

    csv::Writer w((ctx.out_dir / (e.output_prefix + "_conjugates.csv")).string(),
                  {"impact", "count", "first_t"});
    size_t total = 0;
    for (const auto& r : rows) {
        w.row({r.impact, double(r.roots.size()), r.roots.empty() ? -1.0 : r.roots.front()});
        total += r.roots.size();
    }
    if (ctx.verbose) std::fprintf(stderr, "conjugates: %zu roots total\n", total);
    return ok;
}

// linearize: first-order scattering along a circle plus moment identities.
inline int run_linearize(const Experiment& e, const RunContext& ctx) {
    const auto& num = e.numeric;
    config::require_keys(num, "numeric", {"seed", "m", "circle_y", "circle_eta", "h_m"});
    const int n = e.metric.dim();
    const int m_order = num.value("m", 3);
    sphere::SymTensorField h_m =
        num.contains("h_m") ? config::parse_field(num.at("h_m"), n, "numeric.h_m")
        : (e.metric.kind() == metrics::Kind::normal_form_ae)
            ? sphere::scale(e.metric.perturbation().h_m, e.metric.perturbation().amplitude)
            : sphere::round_metric(n);

    Vec y = Vec::Unit(n, n - 1), eta = Vec::Unit(n, 0);
    if (num.contains("circle_y")) {
        auto vy = num.at("circle_y").get<std::vector<double>>();
        y = Eigen::Map<const Vec>(vy.data(), long(vy.size()));
    }
    if (num.contains("circle_eta")) {
        auto ve = num.at("circle_eta").get<std::vector<double>>();
        eta = Eigen::Map<const Vec>(ve.data(), long(ve.size()));
    }
    sphere::GreatCircle c(y, eta);
    auto lin = scattering::linearized_scattering(h_m, m_order, c);
    auto rep = scattering::moment_identities(h_m, m_order, c);

    json out;
    out["tau_m"] = lin.tau_m;
    out["rho_m_pi"] = lin.rho_m_pi;
    out["rho_component_residual"] = lin.rho_component_residual;
    out["mismatch_norm"] = lin.mismatch.norm();
    out["energyvar"] = rep.energyvar;
    out["eqcos"] = rep.eqcos;
    out["eqdirection"] = rep.eqdirection;
    out["parity_residual"] = rep.parity_residual;
    out["sine_moment_m"] = rep.sine_moment_m;
    out["sine_moment_m2"] = rep.sine_moment_m2;
    out["sine_moment_ratio"] = rep.sine_moment_m2 / rep.sine_moment_m;
    out["rhom_prediction"] = rep.rhom_prediction;
    {
        std::ofstream f(ctx.out_dir / (e.output_prefix + "_linearize.json"));
        f << out.dump(2) << '\n';
    }
    csv::Writer w((ctx.out_dir / (e.output_prefix + "_linearize.csv")).string(),
                  {"s", "rho_m", "xi_m", "cm_norm"});
    for (size_t i = 0; i < lin.s_grid.size(); ++i) {
        w.row({lin.s_grid[i], lin.c_m_grid[i](0), lin.c_m_grid[i](1), lin.c_m_grid[i].norm()});
    }
    return ok;
}

// volume: cylinder volume sweep over R.
inline int run_volume(const Experiment& e, const RunContext& ctx) {
    const auto& num = e.numeric;
    config::require_keys(num, "numeric",
                         {"seed", "R_list", "n_t", "n_radial", "n_inner", "n_angular", "T_start"});
    std::vector<double> Rs = num.value("R_list", std::vector<double>{10.0, 20.0, 40.0});
    csv::Writer w((ctx.out_dir / (e.output_prefix + "_volume.csv")).string(),
                  {"R", "vol_g", "vol_g0", "difference"});
    for (double R : Rs) {
        volume::CylinderSpec spec;
        spec.R = R;
        spec.n_t = num.value("n_t", 24);
        spec.n_radial = num.value("n_radial", 12);
        spec.n_inner = num.value("n_inner", 32);
        spec.n_angular = num.value("n_angular", 16);
        spec.family.T_start = num.value("T_start", 150.0);
        spec.threads = ctx.threads;
        auto v = volume::vol_g_cylinder(e.metric, spec);
        w.row({R, v.value, v.euclidean, v.difference});
        if (ctx.verbose)
            std::fprintf(stderr, "volume R=%g: %.10g (diff %.3e)\n", R, v.value, v.difference);
    }
    return ok;
}

// funk: weighted great-circle transforms of a tensor field over a circle grid.
inline int run_funk(const Experiment& e, const RunContext& ctx) {
    const auto& num = e.numeric;
    config::require_keys(num, "numeric",
                         {"seed", "field", "j", "k", "range", "quadrature_n", "circles"});
    const int n = e.metric.dim();
    sphere::SymTensorField f = num.contains("field")
                                   ? config::parse_field(num.at("field"), n, "numeric.field")
                                   : sphere::round_metric(n);
    const int jw = num.value("j", 0), kw = num.value("k", 0);
    const auto range = num.value("range", std::string("full")) == std::string("half")
                           ? sphere::XrayRange::half
                           : sphere::XrayRange::full;
    const int N = num.value("quadrature_n", 2048);
    const int n_circles = num.value("circles", 32);

    std::mt19937 rng(e.seed);
    std::normal_distribution<double> gauss;
    csv::Writer w((ctx.out_dir / (e.output_prefix + "_funk.csv")).string(),
                  {"circle", "value", "potential_residual"});
    auto Df = sphere::sym_derivative(f);
    for (int i = 0; i < n_circles; ++i) {
        Vec y(n), u(n);
        for (int d = 0; d < n; ++d) y(d) = gauss(rng);
        y.normalize();
        for (int d = 0; d < n; ++d) u(d) = gauss(rng);
        u -= u.dot(y) * y;
        u.normalize();
        sphere::GreatCircle c(y, u);
        const double value = sphere::weighted_xray(f, c, jw, kw, range, N);
        // closed-circle transform of the symmetrized derivative (vanishes)
        const double pot = sphere::weighted_xray(Df, c, 0, 0, sphere::XrayRange::full, N);
        w.row({double(i), value, pot});
    }
    return ok;
}

// rigidity2d: Gauss-Bonnet audit plus the hypothesis checklist.
inline int run_rigidity2d(const Experiment& e, const RunContext& ctx) {
    const auto& num = e.numeric;
    config::require_keys(num, "numeric", {"seed", "j_list", "probes"});
    if (e.metric.dim() != 2) throw ConfigError("rigidity2d: dim 2 models");
    std::vector<double> js = num.value("j_list", std::vector<double>{4.0, 8.0, 16.0});
    riccati2d::Surface2D surf(e.metric);
    auto rep = riccati2d::rigidity_checklist(surf, js, num.value("probes", 64));

    csv::Writer w((ctx.out_dir / (e.output_prefix + "_rigidity2d.csv")).string(),
                  {"j", "area_curvature", "length", "turning", "defect"});
    for (const auto& row : rep.rows)
        w.row({row.j, row.area_curvature, row.boundary_length, row.boundary_turning, row.defect});
    json out;
    out["convexity"] = rep.convexity;
    out["curvature_decay"] = rep.curvature_decay;
    out["boundary_structure"] = rep.boundary_structure;
    out["worst_reentry"] = rep.worst_reentry;
    out["j2_maxK"] = rep.j2_maxK;
    out["length_ratio"] = rep.length_ratio;
    out["turning_limit"] = rep.turning_limit;
    out["pass"] = rep.pass();
    {
        std::ofstream f(ctx.out_dir / (e.output_prefix + "_rigidity2d.json"));
        f << out.dump(2) << '\n';
    }
    return rep.pass() ? ok : checklist_failed;
}

inline int run(const Experiment& e, const RunContext& ctx) {
    std::filesystem::create_directories(ctx.out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    int code = ok;
    if (e.command == "scatter") code = run_scatter(e, ctx);
    else if (e.command == "conjugates") code = run_conjugates(e, ctx);
    else if (e.command == "linearize") code = run_linearize(e, ctx);
    else if (e.command == "volume") code = run_volume(e, ctx);
    else if (e.command == "funk") code = run_funk(e, ctx);
    else if (e.command == "rigidity2d") code = run_rigidity2d(e, ctx);
    else throw ConfigError("unknown command: " + e.command);
    const double wall =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    detail::write_manifest(e, ctx, wall);
    return code;
}

}  // namespace scatlab::experiments
