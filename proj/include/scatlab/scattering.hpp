// scatlab -- the scattering map and its perturbative expansion near infinity:
// the slow vector field in blown-up coordinates, the zeroth-order great
// circle solution, the linearized fundamental matrix R(s), the first-order
// correction c_m, and the weighted-moment identities it implies.
#pragma once

#include "scatlab/core.hpp"
#include "scatlab/flow.hpp"
#include "scatlab/metrics.hpp"
#include "scatlab/ode.hpp"
#include "scatlab/sphere_tensors.hpp"

#include <functional>
#include <vector>

namespace scatlab::scattering {

using flow::BoundaryData;
using metrics::MetricModel;
using sphere::GreatCircle;
using sphere::SymTensorField;

struct ScatteringSample {
    BoundaryData in;
    BoundaryData out;
    double tau_plus = 0.0;
    double deviation = 0.0;  // distance from the euclidean prediction (-y, -eta)
    bool extension_dependent = false;
};

inline ScatteringSample scattering_map(const MetricModel& m, const Vec& y, const Vec& eta,
                                       ode::Options opts = {}, flow::ChartPolicy policy = {}) {
    ScatteringSample s;
    s.in = BoundaryData{y, eta, -1};
    auto shot = flow::shoot_from_boundary(m, s.in, opts, policy);
    s.out = shot.exit;
    s.tau_plus = shot.tau_plus;
    s.extension_dependent = shot.traj.crossed_interior;
    const auto pred = flow::euclidean_scattering(s.in);
    s.deviation = std::sqrt((s.out.y - pred.y).squaredNorm() + (s.out.eta - pred.eta).squaredNorm());
    return s;
}

// --- the slow system ---
//
// State u = (rho~, xi~0, y, eta~) with (y, eta~) ambient as in the flow
// module. The slow field at parameter eps uses the boundary family at
// rho = eps * rho~; at eps = 0 it reduces to
// xi~0 d_rho~ - rho~ |eta~|^2 d_xi~0 + (round sphere Hamiltonian field).

inline Vec slow_field(const MetricModel& m, double eps, const Vec& u) {
    const int n = m.dim();
    const double rho_t = u(0);
    const double xi_t = u(1);
    Vec y = u.segment(2, n);
    const Vec eta = u.segment(2 + n, n);
    y /= y.norm();
    const double rho = eps * rho_t;
    const Mat K = m.boundary_dual(rho, y);
    const Mat Krho = m.boundary_dual_drho(rho, y);
    const double E = eta.dot(K * eta);
    const double Erho = eta.dot(Krho * eta);

    Vec du(2 + 2 * n);
    du(0) = xi_t;
    du(1) = -rho_t * (E + 0.5 * eps * rho_t * Erho);
    du.segment(2, n) = K * eta;
    Vec etadot = -E * y;
    if (m.kind() == metrics::Kind::normal_form_ae) {
        const Mat B = tangent_basis(y);
        for (int a = 0; a < n - 1; ++a) {
            const double dE = m.boundary_dual_energy_dy(rho, y, B.col(a), eta);
            etadot -= 0.5 * dE * B.col(a);
        }
    }
    du.segment(2 + n, n) = etadot;
    return du;
}

// Round-sphere slow field (eps = 0) given only the dimension.
inline Vec slow_field_round(const Vec& u, int n) {
    const double rho_t = u(0);
    const double xi_t = u(1);
    Vec y = u.segment(2, n);
    const Vec eta = u.segment(2 + n, n);
    const double yn2 = y.squaredNorm();
    const Vec Pe = eta - (eta.dot(y) / yn2) * y;
    const double E = Pe.squaredNorm();
    Vec du(2 + 2 * n);
    du(0) = xi_t;
    du(1) = -rho_t * E;
    du.segment(2, n) = Pe;
    du.segment(2 + n, n) = -E * y / yn2;
    return du;
}

// Zeroth-order solution at unit energy: (sin s, cos s, e^{s H0}(y0, eta0)).
inline Vec circle_solution(const GreatCircle& c, double s) {
    const int n = int(c.y.size());
    auto [y, t] = sphere::great_circle_point(c, s);
    Vec u(2 + 2 * n);
    u(0) = std::sin(s);
    u(1) = std::cos(s);
    u.segment(2, n) = y;
    u.segment(2 + n, n) = t;
    return u;
}

// First-order perturbing field X~_m for the leading normal-form tensor h_m:
// -(m/2+1) rho~^{m+1} h_m(eta,eta) d_xi0 + rho~^m H_m.
inline Vec perturbing_field(const SymTensorField& h_m, int m, const Vec& u) {
    const int n = int((u.size() - 2) / 2);
    const double rho_t = u(0);
    Vec y = u.segment(2, n);
    y /= y.norm();
    const Vec eta = u.segment(2 + n, n);
    const Mat M = h_m.ambient(y);
    const double hval = eta.dot(M * eta);

    Vec du = Vec::Zero(2 + 2 * n);
    du(1) = -(0.5 * m + 1.0) * std::pow(rho_t, m + 1) * hval;
    // Hamiltonian field of (1/2) h_m(eta, eta), ambient Dirac form
    Vec ydot = M * eta;
    const Mat B = tangent_basis(y);
    Vec etadot = -hval * y;
    for (int a = 0; a < n - 1; ++a) {
        const Mat dM = h_m.ambient_deriv(y, B.col(a));
        const double pvar = -2.0 * (eta.dot(B.col(a))) * double(y.dot(M * eta));
        etadot -= 0.5 * (eta.dot(dM * eta) + pvar) * B.col(a);
    }
    const double w = std::pow(rho_t, m);
    du.segment(2, n) = w * ydot;
    du.segment(2 + n, n) = w * etadot;
    return du;
}

// --- linearized scattering along a circle ---

struct LinearizedSolution {
    GreatCircle circle;
    int m = 3;
    Mat R_pi;            // fundamental matrix at s = pi
    Vec c_m_pi;          // first-order correction at s = pi
    double rho_m_pi = 0; // its rho~ component
    double tau_m = 0;    // first-order travel time shift (= rho_m_pi)
    Vec mismatch;        // c_m(pi) + rho_m(pi) X0(c0(pi)): the obstruction
    double rho_component_residual = 0;  // rho-part of the mismatch (== 0)
    // evaluators stored on a grid for diagnostics
    std::vector<double> s_grid;
    std::vector<Vec> c_m_grid;
    std::vector<Mat> R_grid;
};

namespace detail {

// FD Jacobian of the round slow field.
inline Mat round_jacobian(const Vec& u, int n) {
    const int N = int(u.size());
    Mat J(N, N);
    const double h = 1e-6;
    for (int j = 0; j < N; ++j) {
        Vec up = u, um = u;
        up(j) += h;
        um(j) -= h;
        J.col(j) = (slow_field_round(up, n) - slow_field_round(um, n)) / (2 * h);
    }
    return J;
}

}  // namespace detail

inline LinearizedSolution linearized_scattering(const SymTensorField& h_m, int m,
                                                const GreatCircle& circle,
                                                ode::Options opts = {}) {
    const int n = int(circle.y.size());
    const int N = 2 + 2 * n;
    LinearizedSolution out{circle, m};

    // joint system: R (N*N) columns and w(s) = int_0^s R^{-1} X_m(c0) dt
    Vec u0 = Vec::Zero(N * N + N);
    for (int i = 0; i < N; ++i) u0(i * N + i) = 1.0;

    ode::Rhs rhs = [&](double s, const Vec& u, Vec& du) {
        const Vec c0 = circle_solution(circle, s);
        const Mat J = detail::round_jacobian(c0, n);
        Mat R(N, N);
        for (int j = 0; j < N; ++j) R.col(j) = u.segment(j * N, N);
        const Mat dR = J * R;
        du.resize(N * N + N);
        for (int j = 0; j < N; ++j) du.segment(j * N, N) = dR.col(j);
        const Vec Xm = perturbing_field(h_m, m, c0);
        du.tail(N) = R.partialPivLu().solve(Xm);
    };

    ode::Options lopts = opts;
    if (lopts.rel_tol > 1e-11) lopts.rel_tol = 1e-11;
    auto sol = ode::integrate(rhs, 0.0, u0, kPi, lopts);
    if (sol.step_underflow) throw std::runtime_error("linearized_scattering: " + sol.diagnostic);

    auto unpackR = [N](const Vec& u) {
        Mat R(N, N);
        for (int j = 0; j < N; ++j) R.col(j) = u.segment(j * N, N);
        return R;
    };
    out.R_pi = unpackR(sol.y_end);
    Vec w_pi = sol.y_end.tail(N);
    out.c_m_pi = out.R_pi * w_pi;
    out.rho_m_pi = out.c_m_pi(0);
    out.tau_m = out.rho_m_pi;
    const Vec X0_pi = slow_field_round(circle_solution(circle, kPi), n);
    out.mismatch = out.c_m_pi + out.rho_m_pi * X0_pi;
    out.rho_component_residual = std::abs(out.mismatch(0));
    // diagnostics grid
    for (int i = 0; i <= 32; ++i) {
        const double s = kPi * i / 32.0;
        Vec us = sol.dense.eval(s);
        out.s_grid.push_back(s);
        const Mat R = unpackR(us);
        out.R_grid.push_back(R);
        out.c_m_grid.push_back(Vec(R * us.tail(N)));
    }
    return out;
}

// --- finite-difference scattering derivative in the slow parameter ---
//
// eps = 1/|eta|; boundary data (y0, eta0_hat / eps). The deviation of the
// exit data from the antipodal prediction, expressed in slow variables,
// expands as eps^m [c_m(pi) + rho_m(pi) X0(c0(pi))] + O(eps^{m+1}).

struct FdDerivative {
    std::vector<double> eps;
    std::vector<Vec> deviation;       // slow-frame exit deviation per eps
    std::vector<double> tau_shift;    // tau+ / eps - pi
    double order = 0.0;               // fitted convergence order
    Vec coefficient;                  // Richardson-extrapolated eps^m coefficient
    double tau_m_fd = 0.0;            // fitted travel-time shift coefficient
};

inline FdDerivative scattering_derivative_fd(const MetricModel& m, const Vec& y0,
                                             const Vec& eta0_hat, int order_m,
                                             std::vector<double> eps_ladder = {0.08, 0.04, 0.02},
                                             ode::Options opts = {}) {
    const int n = m.dim();
    FdDerivative out;
    ode::Options sopts = opts;
    if (sopts.rel_tol > 1e-12) sopts.rel_tol = 1e-12;
    if (sopts.abs_tol > 1e-13) sopts.abs_tol = 1e-13;
    for (double eps : eps_ladder) {
        auto s = scattering_map(m, y0, Vec(eta0_hat / eps), sopts);
        Vec dev(2 * n);
        dev.head(n) = s.out.y + y0;                  // y+ - (-y0)
        dev.tail(n) = eps * s.out.eta + eta0_hat;    // eta~+ - (-eta0_hat)
        out.eps.push_back(eps);
        out.deviation.push_back(dev);
        out.tau_shift.push_back(s.tau_plus / eps - kPi);
    }
    // order from successive ratios (assumes halving ladder)
    std::vector<double> orders;
    for (size_t i = 0; i + 1 < out.eps.size(); ++i) {
        const double r = out.deviation[i].norm() / out.deviation[i + 1].norm();
        orders.push_back(std::log(r) / std::log(out.eps[i] / out.eps[i + 1]));
    }
    out.order = orders.empty() ? 0.0 : orders.back();
    // Richardson: C(eps) = dev/eps^m = C + O(eps); extrapolate the last two
    const size_t k = out.eps.size() - 1;
    const Vec Ck = out.deviation[k] / std::pow(out.eps[k], order_m);
    const Vec Ck1 = out.deviation[k - 1] / std::pow(out.eps[k - 1], order_m);
    const double r = out.eps[k - 1] / out.eps[k];
    out.coefficient = (r * Ck - Ck1) / (r - 1.0);
    const double tk = out.tau_shift[k] / std::pow(out.eps[k], order_m);
    const double tk1 = out.tau_shift[k - 1] / std::pow(out.eps[k - 1], order_m);
    out.tau_m_fd = (r * tk - tk1) / (r - 1.0);
    return out;
}

// --- moment identities ---

// Scalar function on the unit cotangent bundle of the sphere.
using PhaseFunction = std::function<double(const Vec& y, const Vec& eta_hat)>;

// integral of sin^j cos^k F(e^{sH0}(y,eta)) over [0,pi] or [0,2pi].
inline double weighted_phase_integral(const PhaseFunction& F, const GreatCircle& c, int j, int k,
                                      sphere::XrayRange range, int N = 2048) {
    const double smax = (range == sphere::XrayRange::full) ? 2.0 * kPi : kPi;
    const double h = smax / N;
    double acc = 0.0;
    for (int i = 0; i <= N; ++i) {
        if (range == sphere::XrayRange::full && i == N) break;
        const double s = i * h;
        auto [y, t] = sphere::great_circle_point(c, s);
        double w = 1.0;
        for (int a = 0; a < j; ++a) w *= std::sin(s);
        for (int a = 0; a < k; ++a) w *= std::cos(s);
        double tw = (range == sphere::XrayRange::half && (i == 0 || i == N)) ? 0.5 : 1.0;
        acc += tw * w * F(y, t);
    }
    return acc * h;
}

struct MomentReport {
    double energyvar = 0.0;       // int sin^m H0 h_m
    double eqcos = 0.0;           // int cos sin^{m+1} h_m
    double eqdirection = 0.0;     // int (sin^m - (m/2+1) sin^{m+2}) h_m
    double parity_residual = 0.0; // H0 h_m at the antipodal phase point
    double sine_moment_m = 0.0;   // int_0^pi sin^m
    double sine_moment_m2 = 0.0;  // int_0^pi sin^{m+2}
    double rhom_prediction = 0.0; // -(m/2+1) h_m(y,eta) int sin^{m+2} (killing case)
    double cascade_identity = 0.0;   // by-parts identity residual
    double cascade_reduction = 0.0;  // int sin^{m-2} F after the cascade
};

inline MomentReport moment_identities(const SymTensorField& h_m, int m, const GreatCircle& c,
                                      int N = 2048) {
    MomentReport r;
    PhaseFunction h_val = [&](const Vec& y, const Vec& t) { return h_m.eval(y, {t, t}); };
    PhaseFunction H0h = [&](const Vec& y, const Vec& t) {
        return sphere::killing_energy_derivative(h_m, y, t);
    };
    r.energyvar = weighted_phase_integral(H0h, c, m, 0, sphere::XrayRange::half, N);
    r.eqcos = weighted_phase_integral(h_val, c, m + 1, 1, sphere::XrayRange::half, N);
    r.eqdirection = weighted_phase_integral(h_val, c, m, 0, sphere::XrayRange::half, N) -
                    (0.5 * m + 1.0) *
                        weighted_phase_integral(h_val, c, m + 2, 0, sphere::XrayRange::half, N);
    {
        auto [yp, tp] = sphere::great_circle_point(c, kPi);
        const double there = H0h(yp, tp);
        const double here = H0h(c.y, c.eta_hat);
        r.parity_residual = std::abs(there - ((m % 2 == 0) ? here : -here));
    }
    PhaseFunction one = [](const Vec&, const Vec&) { return 1.0; };
    r.sine_moment_m = weighted_phase_integral(one, c, m, 0, sphere::XrayRange::half, N);
    r.sine_moment_m2 = weighted_phase_integral(one, c, m + 2, 0, sphere::XrayRange::half, N);
    r.rhom_prediction = -(0.5 * m + 1.0) * h_val(c.y, c.eta_hat) * r.sine_moment_m2;
    return r;
}

// Integration-by-parts cascade for even m: given F on the phase space with
// int_0^pi sin^m F(e^{sH0}) = 0 on all circles, the reduction
// int sin^{m-2} F = 0 follows. Returns the by-parts identity residual
// (valid for any F) and the reduced integral for the given circle.
struct CascadeReport {
    double by_parts_residual = 0.0;
    double reduced_integral = 0.0;
    double hypothesis_integral = 0.0;
};

inline CascadeReport cascade_reduction(const PhaseFunction& F, const PhaseFunction& H0F, int m,
                                       const GreatCircle& c, int N = 2048) {
    CascadeReport rep;
    rep.hypothesis_integral = weighted_phase_integral(F, c, m, 0, sphere::XrayRange::half, N);
    // identity: int sin^m H0F = -m int sin^{m-1} cos F
    const double lhs = weighted_phase_integral(H0F, c, m, 0, sphere::XrayRange::half, N);
    const double rhs = -m * weighted_phase_integral(F, c, m - 1, 1, sphere::XrayRange::half, N);
    rep.by_parts_residual = std::abs(lhs - rhs);
    rep.reduced_integral = weighted_phase_integral(F, c, m - 2, 0, sphere::XrayRange::half, N);
    return rep;
}

}  // namespace scatlab::scattering
