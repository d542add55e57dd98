// scatlab -- the 2D rigidity toolbox: Hopf's stable Riccati solution from
// boundary-value ladders, Gauss-Bonnet audits of the convex exhaustion
// B_j = {|x| <= j}, and the hypothesis checklist.
#pragma once

#include "scatlab/core.hpp"
#include "scatlab/flow.hpp"
#include "scatlab/jacobi.hpp"
#include "scatlab/metrics.hpp"

#include <functional>
#include <vector>

namespace scatlab::riccati2d {

using metrics::MetricModel;

struct Surface2D {
    MetricModel model;
    // optional synthetic curvature (desk-scale closed-form test profiles)
    std::function<double(const Vec&)> K_override;

    Surface2D(MetricModel m) : model(std::move(m)) {
        if (model.dim() != 2) throw std::invalid_argument("Surface2D: dim 2 required");
    }
    double K(const Vec& x) const { return K_override ? K_override(x) : model.gauss_curvature(x); }
};

// --- Hopf's stable Riccati solution ---

struct HopfResult {
    double u = 0.0;                  // ladder limit of ydot(0)/y(0)
    std::vector<double> ladder;      // u_T per rung
    double cauchy = 0.0;             // |u(T) - u(T/2)| at the top rung
    double riccati_residual = 0.0;   // max |w' + w^2 + K| along the geodesic
};

// Solve the scalar boundary problem y'' + K(gamma(t)) y = 0, y(0)=1, y(T)=0
// for each T in the ladder (backward integration from (0,-1) at T), and
// return u = ydot(0)/y(0) at the top rung. The same solution evaluated at
// interior times provides u along the flowed base points, so the Riccati
// residual is measured on it directly.
inline HopfResult hopf_u(const Surface2D& surf, const Vec& x, const Vec& v,
                         std::vector<double> T_ladder = {20.0, 40.0, 80.0, 160.0},
                         ode::Options opts = {}) {
    const auto& m = surf.model;
    Vec v0 = v;
    v0 /= std::sqrt(v0.dot(m.metric(x) * v0));
    const double T_max = T_ladder.back();
    auto traj = flow::integrate_cartesian(m, {x, v0}, 0.0, T_max, opts);

    // precondition: no conjugate points on [0, T_max]
    if (!jacobi::conjugate_scan(m, traj, 0.0, T_max, opts).empty())
        throw std::domain_error("hopf_u: conjugate point inside the window");

    auto K_at = [&](double t) {
        const Vec u = traj.single().sol.dense.eval(t);
        return surf.K(Vec(u.head(2)));
    };

    HopfResult out;
    ode::Result top;
    if (opts.h_max == 0.0) opts.h_max = 1.0;  // resolve localized K features
    for (double T : T_ladder) {
        ode::Rhs rhs = [&](double t, const Vec& y, Vec& d) {
            d.resize(2);
            d(0) = y(1);
            d(1) = -K_at(t) * y(0);
        };
        Vec y1(2);
        y1 << 0.0, -1.0;
        auto sol = ode::integrate(rhs, T, y1, 0.0, opts);
        out.ladder.push_back(sol.y_end(1) / sol.y_end(0));
        if (T == T_max) top = std::move(sol);
    }
    out.u = out.ladder.back();
    if (out.ladder.size() >= 2)
        out.cauchy = std::abs(out.ladder.back() - out.ladder[out.ladder.size() - 2]);

    // Riccati residual along the geodesic from the top-rung solution
    const double hs = 1e-4;
    for (double s = 0.1; s <= 0.5 * T_max; s += 0.05 * T_max) {
        auto w = [&](double t) {
            Vec y = top.dense.eval(t);
            return y(1) / y(0);
        };
        const double dw = (w(s + hs) - w(s - hs)) / (2 * hs);
        const double res = std::abs(dw + w(s) * w(s) + K_at(s));
        out.riccati_residual = std::max(out.riccati_residual, res);
    }
    return out;
}

// --- Gauss-Bonnet audit of B_j = {|x| <= j} ---

struct GaussBonnetRow {
    double j = 0.0;
    double area_curvature = 0.0;   // int_{B_j} K dv_g
    double boundary_length = 0.0;  // ell_j
    double boundary_turning = 0.0; // int k_j ds
    double defect = 0.0;           // int K + int k - 2 pi
};

inline GaussBonnetRow gauss_bonnet_audit(const Surface2D& surf, double j, int n_theta = 512,
                                         int n_radial = 48) {
    const auto& m = surf.model;
    GaussBonnetRow row;
    row.j = j;

    // area integral in polar panels; panel boundaries sit on the model's
    // structure radii (smoothing blends are C^2, so K has kinks there)
    const auto q = gauss_legendre(n_radial);
    std::vector<double> cuts = {0.0};
    for (double c : {0.25, 0.5, 1.0, 2.0, 4.0})
        if (c < j) cuts.push_back(c);
    cuts.push_back(j);
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double area = 0.0;
    for (int a = 0; a < n_theta; ++a) {
        const double th = 2.0 * kPi * a / n_theta;
        Vec dir(2);
        dir << std::cos(th), std::sin(th);
        double radial = 0.0;
        for (size_t c = 0; c + 1 < cuts.size(); ++c) {
            const double lo = cuts[c], hi = cuts[c + 1];
            for (size_t i = 0; i < q.nodes.size(); ++i) {
                const double r = 0.5 * (lo + hi) + 0.5 * (hi - lo) * q.nodes[i];
                const Vec x = r * dir;
                radial += 0.5 * (hi - lo) * q.weights[i] * surf.K(x) * m.sqrt_det(x) * r;
            }
        }
        area += radial * 2.0 * kPi / n_theta;
    }
    row.area_curvature = area;

    // boundary length and geodesic curvature
    double len = 0.0, turning = 0.0;
    for (int a = 0; a < n_theta; ++a) {
        const double th = 2.0 * kPi * a / n_theta;
        Vec x(2), dx(2), ddx(2);
        x << j * std::cos(th), j * std::sin(th);
        dx << -j * std::sin(th), j * std::cos(th);
        ddx << -j * std::cos(th), -j * std::sin(th);
        const Mat g = m.metric(x);
        const double speed = std::sqrt(dx.dot(g * dx));
        // covariant acceleration of the theta-parametrized boundary
        const auto gamma = m.christoffel(x);
        Vec acc = ddx;
        for (int k = 0; k < 2; ++k) acc(k) += dx.dot(gamma[size_t(k)] * dx);
        // outward unit normal
        Vec w = x / x.norm();
        Vec T = dx / speed;
        Vec nu = w - w.dot(g * T) * T;
        nu /= std::sqrt(nu.dot(g * nu));
        // signed curvature, oriented so the flat circle gives +1/r
        const double k_signed = -acc.dot(g * nu) / (speed * speed);
        len += speed * 2.0 * kPi / n_theta;
        turning += k_signed * speed * 2.0 * kPi / n_theta;
    }
    row.boundary_length = len;
    row.boundary_turning = turning;
    row.defect = row.area_curvature + row.boundary_turning - 2.0 * kPi;
    return row;
}

// --- hypothesis checklist ---

struct ChecklistReport {
    bool convexity = false;          // (i) boundary-tangent probes stay outside
    bool curvature_decay = false;    // (ii) j^2 max_{dB_j} |K| -> 0
    bool boundary_structure = false; // (iii) ell_j = O(j) and int k_j -> 2 pi
    double worst_reentry = 0.0;      // most negative (min |x| - j) over probes
    double j2_maxK = 0.0;            // at the largest j
    double length_ratio = 0.0;       // ell_j / j at the largest j
    double turning_limit = 0.0;      // int k_j at the largest j
    std::vector<GaussBonnetRow> rows;
    bool pass() const { return convexity && curvature_decay && boundary_structure; }
};

inline ChecklistReport rigidity_checklist(const Surface2D& surf, std::vector<double> js,
                                          int probes = 64, ode::Options opts = {}) {
    const auto& m = surf.model;
    ChecklistReport rep;
    for (double j : js) rep.rows.push_back(gauss_bonnet_audit(surf, j));

    // (i) convexity probe on the largest set
    const double j = js.back();
    double worst = 0.0;
    for (int a = 0; a < probes; ++a) {
        const double th = 2.0 * kPi * a / probes;
        Vec x(2), tang(2);
        x << j * std::cos(th), j * std::sin(th);
        tang << -std::sin(th), std::cos(th);
        for (double sgn : {1.0, -1.0}) {
            Vec v = sgn * tang;
            v /= std::sqrt(v.dot(m.metric(x) * v));
            auto traj = flow::integrate_cartesian(m, {x, v}, 0.0, 10.0 * j, opts);
            for (const auto& st : traj.single().sol.dense.steps)
                for (int s = 0; s <= 4; ++s) {
                    const double t = st.t0 + (st.t1 - st.t0) * s / 4.0;
                    worst = std::min(worst, st.eval(t).head(2).norm() - j);
                }
        }
    }
    rep.worst_reentry = worst;
    rep.convexity = worst > -1e-4 * j;

    // (ii) curvature decay on boundary circles
    {
        double maxK = 0.0;
        const double jl = js.back();
        for (int a = 0; a < 128; ++a) {
            const double th = 2.0 * kPi * a / 128;
            Vec x(2);
            x << jl * std::cos(th), jl * std::sin(th);
            maxK = std::max(maxK, std::abs(surf.K(x)));
        }
        rep.j2_maxK = jl * jl * maxK;
        rep.curvature_decay = rep.j2_maxK < 0.05;
    }

    // (iii) boundary length linear in j, turning integral -> 2 pi
    {
        const auto& last = rep.rows.back();
        rep.length_ratio = last.boundary_length / last.j;
        rep.turning_limit = last.boundary_turning;
        const bool len_ok = rep.length_ratio < 4.0 * kPi;
        const bool turn_ok = std::abs(rep.turning_limit - 2.0 * kPi) < 1e-3;
        rep.boundary_structure = len_ok && turn_ok;
    }
    return rep;
}

}  // namespace scatlab::riccati2d
