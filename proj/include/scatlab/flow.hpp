// scatlab -- geodesic flow in two charts: Cartesian (x, v) in the interior
// and compactified projective coordinates (rho, xi0, y, eta) near the sphere
// at infinity, where the rescaled field is smooth up to the boundary and
// complete geodesics reach it in finite rescaled time tau. (y, eta) are kept
// as ambient vectors with |y| = 1, y.eta = 0; the sphere Hamiltonian part is
// realized with the constraint-preserving (Dirac) correction.
#pragma once

#include "scatlab/core.hpp"
#include "scatlab/metrics.hpp"
#include "scatlab/ode.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace scatlab::flow {

using metrics::MetricModel;

struct CartesianState {
    Vec x;
    Vec v;
};

struct CompactState {
    double rho = 0.0;
    double xi0 = 0.0;
    Vec y;
    Vec eta;
};

struct BoundaryData {
    Vec y;
    Vec eta;
    int side = -1;  // -1: incoming (t -> -inf), +1: outgoing
};

enum class Chart { cartesian, compact };

struct ChartPolicy {
    double rho_lo = 0.02;   // hand back to the compact chart below this
    double rho_hi = 0.2;    // hand off to the Cartesian chart above this
    double tau_budget = 50.0;
    double t_budget = 1e5;
};

// --- state packing ---

inline Vec pack_compact(const CompactState& s) {
    const int n = int(s.y.size());
    Vec u(2 + 2 * n);
    u(0) = s.rho;
    u(1) = s.xi0;
    u.segment(2, n) = s.y;
    u.segment(2 + n, n) = s.eta;
    return u;
}

inline CompactState unpack_compact(const Vec& u) {
    const int n = int((u.size() - 2) / 2);
    CompactState s;
    s.rho = u(0);
    s.xi0 = u(1);
    s.y = u.segment(2, n);
    s.eta = u.segment(2 + n, n);
    return s;
}

inline Vec pack_cartesian(const CartesianState& s) {
    const int n = int(s.x.size());
    Vec u(2 * n);
    u.head(n) = s.x;
    u.tail(n) = s.v;
    return u;
}

inline CartesianState unpack_cartesian(const Vec& u) {
    const int n = int(u.size() / 2);
    return {u.head(n), u.tail(n)};
}

// --- rescaled vector field ---

// Energy |eta|^2 in the dual boundary family at (rho, y).
inline double boundary_energy(const MetricModel& m, double rho, const Vec& y, const Vec& eta) {
    return eta.dot(m.boundary_dual(rho, y) * eta);
}

// Derivative of the compactified state. Valid in the region where rho = 1/|x|
// and the model is in normal form (rho below the chart ceiling).
inline Vec rescaled_vector_field(const MetricModel& m, const Vec& u) {
    const int n = m.dim();
    CompactState s = unpack_compact(u);
    const Vec y = s.y / s.y.norm();
    const Mat K = m.boundary_dual(s.rho, y);
    const Mat Krho = m.boundary_dual_drho(s.rho, y);
    const double E = s.eta.dot(K * s.eta);
    const double Erho = s.eta.dot(Krho * s.eta);

    Vec du(2 + 2 * n);
    du(0) = s.xi0;
    du(1) = -s.rho * (E + 0.5 * s.rho * Erho);
    du.segment(2, n) = K * s.eta;

    // eta' = -(1/2) grad_y (eta.K(rho,y).eta) - E y  (tangential gradient plus
    // the correction keeping y.eta = 0 invariant)
    Vec etadot = -E * y;
    if (m.kind() == metrics::Kind::normal_form_ae) {
        const Mat B = tangent_basis(y);
        for (int a = 0; a < n - 1; ++a) {
            const double dE = m.boundary_dual_energy_dy(s.rho, y, B.col(a), s.eta);
            etadot -= 0.5 * dE * B.col(a);
        }
    }
    du.segment(2 + n, n) = etadot;
    return du;
}

inline ode::Rhs compact_rhs(const MetricModel& m) {
    return [&m](double, const Vec& u, Vec& du) { du = rescaled_vector_field(m, u); };
}

// Re-impose |y| = 1, y.eta = 0 and the energy constraint
// xi0^2 + rho^2 |eta|^2 = 1 (by rescaling eta where well conditioned).
inline void project_compact(const MetricModel& m, Vec& u) {
    const int n = m.dim();
    Vec y = u.segment(2, n);
    y.normalize();
    Vec eta = u.segment(2 + n, n);
    eta -= eta.dot(y) * y;
    const double rho = u(0);
    const double xi0 = u(1);
    const double cur = rho * rho * boundary_energy(m, rho, y, eta);
    const double target = 1.0 - xi0 * xi0;
    if (cur > 1e-4 && target > 1e-4) {
        eta *= std::sqrt(target / cur);
    } else if (cur < 1.0) {
        // near the radial ends: absorb the residual into xi0
        u(1) = (xi0 >= 0 ? 1.0 : -1.0) * std::sqrt(std::max(0.0, 1.0 - cur));
    }
    u.segment(2, n) = y;
    u.segment(2 + n, n) = eta;
}

inline double constraint_residual(const MetricModel& m, const Vec& u) {
    CompactState s = unpack_compact(u);
    return std::abs(s.xi0 * s.xi0 + s.rho * s.rho * boundary_energy(m, s.rho, s.y, s.eta) - 1.0);
}

// --- chart conversions (exterior region, rho = 1/|x|) ---

inline CartesianState compact_to_cartesian(const MetricModel& m, const CompactState& s) {
    const Vec y = s.y / s.y.norm();
    const Vec x = y / s.rho;
    const Vec xi = -s.xi0 * y + s.rho * s.eta;  // Cartesian covector components
    const Vec v = m.metric_inverse(x) * xi;
    return {x, v};
}

inline CompactState cartesian_to_compact(const MetricModel& m, const CartesianState& c) {
    const double r = c.x.norm();
    CompactState s;
    s.rho = 1.0 / r;
    s.y = c.x / r;
    const Vec xi = m.metric(c.x) * c.v;
    s.xi0 = -xi.dot(s.y);
    s.eta = r * (xi - xi.dot(s.y) * s.y);
    return s;
}

// --- geodesic equation in the Cartesian chart ---

inline ode::Rhs cartesian_rhs(const MetricModel& m) {
    return [&m](double, const Vec& u, Vec& du) {
        const int n = m.dim();
        du.resize(2 * n);
        du.head(n) = u.tail(n);
        du.tail(n) = m.geodesic_acceleration(u.head(n), u.tail(n));
    };
}

struct Leg {
    Chart chart;
    ode::Result sol;         // native variable: t (cartesian) or tau (compact)
    double tau_offset = 0.0; // tau at the start of this leg
};

struct Trajectory {
    const MetricModel* model = nullptr;
    std::vector<Leg> legs;
    std::vector<std::string> events;
    bool crossed_interior = false;  // entered the region where rho is an extension

    const Leg& single() const {
        if (legs.size() != 1) throw std::logic_error("trajectory has multiple legs");
        return legs[0];
    }
};

// Integrate the Cartesian geodesic ODE over a t-interval.
inline Trajectory integrate_cartesian(const MetricModel& m, const CartesianState& s0, double t0,
                                      double t1, ode::Options opts = {}) {
    if (s0.v.dot(m.metric(s0.x) * s0.v) <= 0.0)
        throw std::invalid_argument("integrate_cartesian: zero velocity");
    // cap the step so localized curvature features cannot hide between the
    // stages of a single step taken across a flat stretch
    if (opts.h_max == 0.0) opts.h_max = 2.0;
    Trajectory traj;
    traj.model = &m;
    Leg leg;
    leg.chart = Chart::cartesian;
    leg.sol = ode::integrate(cartesian_rhs(m), t0, pack_cartesian(s0), t1, opts);
    if (leg.sol.step_underflow)
        throw std::runtime_error("integrate_cartesian: " + leg.sol.diagnostic);
    traj.legs.push_back(std::move(leg));
    return traj;
}

// g-norm drift of the velocity along a Cartesian trajectory (energy monitor).
inline double energy_drift(const MetricModel& m, const Trajectory& traj) {
    double lo = 1e300, hi = -1e300;
    for (const auto& leg : traj.legs) {
        if (leg.chart != Chart::cartesian) continue;
        for (const auto& st : leg.sol.dense.steps) {
            const auto s = unpack_cartesian(st.y1);
            const double e = std::sqrt(s.v.dot(m.metric(s.x) * s.v));
            lo = std::min(lo, e);
            hi = std::max(hi, e);
        }
    }
    return hi - lo;
}

// --- time maps: tau(t) = integral rho^2 dt and its inverse ---

// Adaptive Gauss-Legendre quadrature of f(t, y(t)) over one interval of a
// dense step: bisect panels until two estimates agree.
namespace detail {
template <class F>
double adaptive_panel(const ode::Step& st, double a, double b, F&& f, const Quadrature& q,
                      double tol, int depth) {
    auto g = [&](double s) { return f(s, st.eval(s)); };
    const double whole = gl_integrate(g, a, b, q);
    const double mid = 0.5 * (a + b);
    const double two = gl_integrate(g, a, mid, q) + gl_integrate(g, mid, b, q);
    if (depth > 24 || std::abs(two - whole) <= tol * std::max(1.0, std::abs(two)))
        return two;
    return adaptive_panel(st, a, mid, f, q, tol * 0.7, depth + 1) +
           adaptive_panel(st, mid, b, f, q, tol * 0.7, depth + 1);
}
}  // namespace detail

// Quadrature of a function over a dense solution, robust to large steps.
template <class F>
double quadrature_over_steps(const ode::DenseOutput& dense, double a, double b, F&& f,
                             const Quadrature& q, double tol = 1e-13) {
    const double lo_all = std::min(dense.steps.front().t0, dense.steps.back().t1);
    const double hi_all = std::max(dense.steps.front().t0, dense.steps.back().t1);
    const double pad = 1e-9 * (hi_all - lo_all);
    if (std::min(a, b) < lo_all - pad || std::max(a, b) > hi_all + pad)
        throw std::invalid_argument("quadrature_over_steps: range not covered by dense output");
    double total = 0.0;
    for (const auto& st : dense.steps) {
        double lo = std::min(st.t0, st.t1), hi = std::max(st.t0, st.t1);
        double s0 = std::max(lo, std::min(a, b));
        double s1 = std::min(hi, std::max(a, b));
        if (s1 <= s0) continue;
        total += detail::adaptive_panel(st, s0, s1, f, q, tol, 0);
    }
    return (b >= a) ? total : -total;
}

// tau-to-t map along a compact leg: t(tau) = s(tau) - sigma*, where
// s(tau) = int_{tau_ref} rho^{-2} and sigma* = lim_{tau->0} (s + 1/tau) is
// finite at the boundary. The resulting t is the unit-speed time of the
// geodesic normalized so that its incoming asymptote has foot
// parametrization. sigma* is best computed from an augmented integration
// (see anchored_entry); the constructor fallback regularizes the quadrature
// with an analytic tail below tau_floor.
class CompactTimeMap {
public:
    CompactTimeMap(const MetricModel& m, const ode::DenseOutput& dense, double tau_ref,
                   std::optional<double> sigma_star = std::nullopt)
        : dense_(&dense), tau_ref_(tau_ref), quad_(gauss_legendre(12)) {
        if (sigma_star) {
            sigma_ = *sigma_star;
            return;
        }
        // sigma* = 1/tau_ref + int_{tau_ref}^{0} (rho^{-2} - tau^{-2}) dtau.
        // The integrand tends to E0/3 at the boundary with an even expansion;
        // below tau_floor (where dense-output cancellation noise would bite)
        // extrapolate the tail with a fitted a + b tau^2 model.
        const Vec u0 = dense.eval(0.0);
        CompactState s0 = unpack_compact(Vec(u0.head(2 + 2 * m.dim())));
        const double E0 = boundary_energy(m, 0.0, s0.y / s0.y.norm(), s0.eta);
        const double tau_floor =
            std::min({1e-2, 0.1 * tau_ref, 0.25 / std::sqrt(std::max(E0, 1.0))});
        auto reg = [&](double tau, const Vec& u) {
            const double rho = u(0);
            return 1.0 / (rho * rho) - 1.0 / (tau * tau);
        };
        // fit reg ~ a + b tau^2 on [tau_floor, 4 tau_floor]
        const int ns = 16;
        double s1 = 0, sx = 0, sxx = 0, sy = 0, sxy = 0;
        for (int i = 0; i < ns; ++i) {
            const double tau = tau_floor * (1.0 + 3.0 * i / (ns - 1.0));
            if (tau >= tau_ref) break;
            const double v = reg(tau, dense.eval(tau));
            const double x = tau * tau;
            s1 += 1;
            sx += x;
            sxx += x * x;
            sy += v;
            sxy += x * v;
        }
        const double det = s1 * sxx - sx * sx;
        double a = E0 / 3.0, b = 0.0;
        if (s1 >= 3 && std::abs(det) > 1e-300) {
            b = (s1 * sxy - sx * sy) / det;
            a = (sy - b * sx) / s1;
        }
        sigma_ = 1.0 / tau_ref_ +
                 quadrature_over_steps(dense, tau_ref_, tau_floor, reg, quad_, 1e-12) -
                 (a * tau_floor + b * tau_floor * tau_floor * tau_floor / 3.0);
    }

    // t at a given tau (tau in (0, tau_ref])
    double t_of_tau(double tau) const {
        auto f = [&](double s, const Vec& u) {
            const double rho = u(0);
            return 1.0 / (rho * rho);
        };
        const double s = quadrature_over_steps(*dense_, tau_ref_, tau, f, quad_);
        return s - sigma_;
    }

    // invert t(tau) = t by bisection (t increasing in tau)
    double tau_of_t(double t, double tau_min, double tau_max) const {
        double a = tau_min, b = tau_max;
        double fa = t_of_tau(a) - t;
        for (int i = 0; i < 200 && (b - a) > 1e-15 * std::max(1.0, b); ++i) {
            const double mmid = 0.5 * (a + b);
            const double fm = t_of_tau(mmid) - t;
            if ((fa < 0) == (fm < 0)) {
                a = mmid;
                fa = fm;
            } else {
                b = mmid;
            }
        }
        return 0.5 * (a + b);
    }

    double sigma() const { return sigma_; }

private:
    const ode::DenseOutput* dense_;
    double tau_ref_;
    double sigma_;
    Quadrature quad_;
};

// --- boundary shooting ---

struct ShotResult {
    BoundaryData exit;
    double tau_plus = 0.0;
    Trajectory traj;
    bool extension_dependent = false;
};

namespace detail {

inline ode::Options compact_opts(const MetricModel& m, ode::Options base) {
    ode::Options o = base;
    o.postprocess = [&m](double, Vec& u) { project_compact(m, u); };
    return o;
}

}  // namespace detail

// Shoot the rescaled flow from incoming boundary data until the outgoing
// boundary event rho -> 0. Trajectories that climb above the chart ceiling
// are routed through the Cartesian chart and handed back near the boundary.
inline ShotResult shoot_from_boundary(const MetricModel& m, const BoundaryData& bd,
                                      ode::Options opts = {}, ChartPolicy policy = {}) {
    if (!m.has_boundary_family())
        throw std::invalid_argument("shoot_from_boundary: model has no exact boundary chart");
    if (bd.side != -1) throw std::invalid_argument("shoot_from_boundary: need incoming data");

    const int n = m.dim();
    ShotResult out;
    out.traj.model = &m;

    CompactState s0;
    s0.rho = 0.0;
    s0.xi0 = 1.0;  // d rho(X) = +1 at the incoming face
    s0.y = bd.y / bd.y.norm();
    s0.eta = bd.eta - bd.eta.dot(s0.y) * s0.y;

    Vec u = pack_compact(s0);
    double tau_acc = 0.0;
    Chart chart = Chart::compact;
    Vec cart_u;  // packed cartesian state when chart == cartesian
    const auto copts = detail::compact_opts(m, opts);
    const Quadrature quad = gauss_legendre(12);

    for (int hop = 0; hop < 64; ++hop) {
        if (chart == Chart::compact) {
            ode::EventSpec exit_ev;
            exit_ev.g = [](double, const Vec& uu) { return uu(0); };
            exit_ev.direction = -1;
            exit_ev.terminal = true;
            ode::EventSpec handoff_ev;
            handoff_ev.g = [&](double, const Vec& uu) { return uu(0) - policy.rho_hi; };
            handoff_ev.direction = +1;
            handoff_ev.terminal = true;

            Leg leg;
            leg.chart = Chart::compact;
            leg.tau_offset = tau_acc;
            leg.sol = ode::integrate(compact_rhs(m), 0.0, u, policy.tau_budget, copts,
                                     {exit_ev, handoff_ev});
            if (leg.sol.step_underflow)
                throw std::runtime_error("shoot_from_boundary: " + leg.sol.diagnostic);
            if (!leg.sol.event_terminated)
                throw std::runtime_error(
                    "shoot_from_boundary: tau budget exceeded (trapped or slow trajectory)");
            const bool exited = leg.sol.events.back().which == 0;
            tau_acc += leg.sol.t_end;
            const Vec uend = leg.sol.y_end;
            out.traj.legs.push_back(std::move(leg));
            if (exited) {
                CompactState se = unpack_compact(uend);
                out.exit.y = se.y / se.y.norm();
                out.exit.eta = se.eta - se.eta.dot(out.exit.y) * out.exit.y;
                out.exit.side = +1;
                out.tau_plus = tau_acc;
                out.traj.events.push_back("exit at tau=" + format_double(tau_acc));
                return out;
            }
            out.traj.events.push_back("handoff to cartesian at rho=" + format_double(uend(0)));
            cart_u = pack_cartesian(compact_to_cartesian(m, unpack_compact(uend)));
            chart = Chart::cartesian;
        } else {
            ode::EventSpec handback_ev;
            handback_ev.g = [&](double, const Vec& uu) {
                return boundary_rho(Vec(uu.head(n))) - policy.rho_lo;
            };
            handback_ev.direction = -1;
            handback_ev.terminal = true;

            Leg leg;
            leg.chart = Chart::cartesian;
            leg.tau_offset = tau_acc;
            leg.sol = ode::integrate(cartesian_rhs(m), 0.0, cart_u, policy.t_budget, opts,
                                     {handback_ev});
            if (leg.sol.step_underflow)
                throw std::runtime_error("shoot_from_boundary: " + leg.sol.diagnostic);
            if (!leg.sol.event_terminated)
                throw std::runtime_error("shoot_from_boundary: t budget exceeded in interior");
            // rescaled time spent on this leg: integral of rho^2 dt
            const double dtau = quadrature_over_steps(
                leg.sol.dense, 0.0, leg.sol.t_end,
                [&](double, const Vec& uu) {
                    const double rho = boundary_rho(Vec(uu.head(n)));
                    return rho * rho;
                },
                quad);
            // extension-dependent if the leg dips inside |x| < 1 (sample
            // within steps; steps can be long on nearly flat stretches)
            for (const auto& st : leg.sol.dense.steps)
                for (int k = 0; k <= 8; ++k) {
                    const double s = st.t0 + (st.t1 - st.t0) * k / 8.0;
                    if (st.eval(s).head(n).norm() < 1.0) out.traj.crossed_interior = true;
                }
            tau_acc += dtau;
            const Vec uend = leg.sol.y_end;
            out.traj.legs.push_back(std::move(leg));
            out.traj.events.push_back("handback to compact at t=" + format_double(uend(0)));
            Vec uu = pack_compact(cartesian_to_compact(m, unpack_cartesian(uend)));
            project_compact(m, uu);
            u = uu;
            chart = Chart::compact;
        }
    }
    throw std::runtime_error("shoot_from_boundary: too many chart alternations");
}

inline ShotResult shoot_from_boundary(const MetricModel& m, const Vec& y, const Vec& eta,
                                      ode::Options opts = {}, ChartPolicy policy = {}) {
    BoundaryData bd{y, eta, -1};
    return shoot_from_boundary(m, bd, opts, policy);
}

// Euclidean scattering reference: antipodal map with covector pushforward.
inline BoundaryData euclidean_scattering(const BoundaryData& bd) {
    return {Vec(-bd.y), Vec(-bd.eta), +1};
}

// Incoming boundary data of the Euclidean line x0 + t v (|v| = 1):
// y_- = -v and eta_- = the foot vector x0 - (x0.v) v.
inline BoundaryData euclidean_line_boundary_data(const Vec& x0, const Vec& v) {
    const Vec vn = v / v.norm();
    return {Vec(-vn), Vec(x0 - x0.dot(vn) * vn), -1};
}

// --- reparametrization ---

struct ReparamSample {
    double t;
    double tau;
};

// Build matched (t, tau) stamps along a Cartesian trajectory:
// tau(t) = tau0 + int rho^2 dt over the dense output.
inline std::vector<ReparamSample> reparametrize_cartesian(const MetricModel& m,
                                                          const Trajectory& traj,
                                                          double tau0 = 0.0) {
    const auto& leg = traj.single();
    if (leg.chart != Chart::cartesian)
        throw std::invalid_argument("reparametrize_cartesian: cartesian trajectory required");
    const int n = m.dim();
    const Quadrature quad = gauss_legendre(12);
    std::vector<ReparamSample> out;
    double tau = tau0;
    out.push_back({leg.sol.dense.steps.front().t0, tau});
    auto rho2 = [&](double, const Vec& u) {
        const double rho = boundary_rho(Vec(u.head(n)));
        return rho * rho;
    };
    for (const auto& st : leg.sol.dense.steps) {
        tau += detail::adaptive_panel(st, st.t0, st.t1, rho2, quad, 1e-13, 0);
        out.push_back({st.t1, tau});
    }
    return out;
}

// Inverse map on the sampled stamps: recover t at given tau values by local
// inversion (monotone since rho^2 > 0). Round-tripping is the identity up to
// quadrature error.
inline std::vector<ReparamSample> invert_reparam(const MetricModel& m, const Trajectory& traj,
                                                 const std::vector<double>& taus) {
    const auto& leg = traj.single();
    const int n = m.dim();
    auto stamps = reparametrize_cartesian(m, traj);
    std::vector<ReparamSample> out;
    const Quadrature quad = gauss_legendre(12);
    for (double tau : taus) {
        // locate bracketing stamps
        size_t i = 0;
        while (i + 1 < stamps.size() && stamps[i + 1].tau < tau) ++i;
        double a = stamps[i].t, b = (i + 1 < stamps.size()) ? stamps[i + 1].t : stamps[i].t;
        double base = stamps[i].tau;
        auto tau_at = [&](double t) {
            return base + quadrature_over_steps(
                              leg.sol.dense, a, t,
                              [&](double, const Vec& u) {
                                  const double rho = boundary_rho(Vec(u.head(n)));
                                  return rho * rho;
                              },
                              quad);
        };
        double lo = a, hi = b;
        for (int it = 0; it < 100 && (hi - lo) > 1e-14 * std::max(1.0, std::abs(hi)); ++it) {
            const double mid = 0.5 * (lo + hi);
            if (tau_at(mid) < tau) lo = mid;
            else hi = mid;
        }
        out.push_back({0.5 * (lo + hi), tau});
    }
    return out;
}

// --- boundary data extraction from interior trajectories ---

// Continue a Cartesian trajectory outward to the requested boundary face.
inline BoundaryData extract_boundary_data(const MetricModel& m, const CartesianState& s0,
                                          int side, ode::Options opts = {},
                                          ChartPolicy policy = {}) {
    if (!m.has_boundary_family())
        throw std::invalid_argument("extract_boundary_data: model has no exact boundary chart");
    const int n = m.dim();
    // integrate in the requested time direction until the handoff radius
    ode::EventSpec handoff;
    handoff.g = [&](double, const Vec& uu) {
        return boundary_rho(Vec(uu.head(n))) - policy.rho_lo;
    };
    handoff.direction = -1;
    handoff.terminal = true;
    const double t1 = (side > 0) ? policy.t_budget : -policy.t_budget;
    auto sol = ode::integrate(cartesian_rhs(m), 0.0, pack_cartesian(s0), t1, opts, {handoff});
    if (!sol.event_terminated)
        throw std::runtime_error("extract_boundary_data: handoff radius not reached in budget");
    CartesianState se = unpack_cartesian(sol.y_end);
    if (side < 0) se.v = -se.v;  // traverse reversed: the incoming face is the
                                 // outgoing face of the reversed geodesic
    Vec u = pack_compact(cartesian_to_compact(m, se));
    project_compact(m, u);

    ode::EventSpec exit_ev;
    exit_ev.g = [](double, const Vec& uu) { return uu(0); };
    exit_ev.direction = -1;
    exit_ev.terminal = true;
    auto csol = ode::integrate(compact_rhs(m), 0.0, u, policy.tau_budget,
                               detail::compact_opts(m, opts), {exit_ev});
    if (!csol.event_terminated)
        throw std::runtime_error("extract_boundary_data: boundary not reached in tau budget");
    CompactState sc = unpack_compact(csol.y_end);
    BoundaryData bd;
    bd.y = sc.y / sc.y.norm();
    bd.eta = sc.eta - sc.eta.dot(bd.y) * bd.y;
    bd.side = side;
    if (side < 0) bd.eta = -bd.eta;  // undo the reversal on the covector
    return bd;
}

// --- CSV export ---

// One row per dense node: (time, parametrization tag, state components,
// event marker). Cartesian legs carry (x, v) in the t-parametrization;
// compact legs carry (rho, y, xi0, eta) in tau.
inline void export_trajectory_csv(std::ostream& out, const MetricModel& m,
                                  const Trajectory& traj) {
    const int n = m.dim();
    out << "time,par";
    for (int i = 0; i < n; ++i) out << ",x_or_y" << i;
    out << ",rho_or_unused";
    for (int i = 0; i < n; ++i) out << ",v_or_eta" << i;
    out << ",xi0_or_unused,event\n";
    for (size_t li = 0; li < traj.legs.size(); ++li) {
        const auto& leg = traj.legs[li];
        auto row = [&](double t, const Vec& u, int event) {
            out << format_double(t) << ',' << (leg.chart == Chart::cartesian ? "t" : "tau");
            if (leg.chart == Chart::cartesian) {
                for (int i = 0; i < n; ++i) out << ',' << format_double(u(i));
                out << ',' << format_double(boundary_rho(Vec(u.head(n))));
                for (int i = 0; i < n; ++i) out << ',' << format_double(u(n + i));
                out << ",0";
            } else {
                CompactState s = unpack_compact(Vec(u.head(2 + 2 * n)));
                for (int i = 0; i < n; ++i) out << ',' << format_double(s.y(i));
                out << ',' << format_double(s.rho);
                for (int i = 0; i < n; ++i) out << ',' << format_double(s.eta(i));
                out << ',' << format_double(s.xi0);
            }
            out << ',' << event << '\n';
        };
        const auto& steps = leg.sol.dense.steps;
        for (size_t si = 0; si < steps.size(); ++si) {
            const bool last_node = (si + 1 == steps.size());
            row(steps[si].t0, steps[si].y0, 0);
            if (last_node) row(steps[si].t1, steps[si].y1, leg.sol.event_terminated ? 1 : 0);
        }
    }
}

// --- flow conjugacy with the Euclidean model ---

struct ConjugacyResult {
    CartesianState state;     // theta(x0, v0)
    BoundaryData incoming;    // shared boundary data
    double anchor_residual;   // stability of the time-anchor fit
};

namespace detail {

// Compact leg from incoming data, stopped either at the chart ceiling or at
// the rho maximum, integrated with two auxiliary states:
//   delta = tau - rho        (delta' = 1 - xi0, free of cancellation)
//   sig   = int_0^tau (rho^{-2} - tau^{-2})
// so that sigma* = 1/tau_ref - sig(tau_ref) comes out to solver accuracy.
// The compact state occupies the first 2+2n slots of the augmented vector.
struct AnchoredEntry {
    ode::Result sol;   // augmented system; compact state in the leading slots
    double tau_ref;
    double sigma;
};

inline ode::Rhs anchored_rhs(const MetricModel& m) {
    const int nc = 2 + 2 * m.dim();
    return [&m, nc](double tau, const Vec& u, Vec& du) {
        du.resize(nc + 2);
        const Vec uc = u.head(nc);
        du.head(nc) = rescaled_vector_field(m, uc);
        const double rho = u(0), xi0 = u(1), delta = u(nc);
        du(nc) = 1.0 - xi0;
        if (tau < 1e-8 || rho <= 0.0) {
            CompactState s = unpack_compact(uc);
            du(nc + 1) = boundary_energy(m, rho, s.y / s.y.norm(), s.eta) / 3.0;
        } else {
            // rho^{-2} - tau^{-2} = delta (tau + rho) / (rho^2 tau^2)
            du(nc + 1) = delta * (tau + rho) / (rho * rho * tau * tau);
        }
    };
}

inline AnchoredEntry anchored_entry(const MetricModel& m, const BoundaryData& bd,
                                    double rho_stop, ode::Options opts) {
    const int n = m.dim();
    const int nc = 2 + 2 * n;
    CompactState s0;
    s0.rho = 0.0;
    s0.xi0 = 1.0;
    s0.y = bd.y / bd.y.norm();
    s0.eta = bd.eta - bd.eta.dot(s0.y) * s0.y;
    Vec u0 = Vec::Zero(nc + 2);
    u0.head(nc) = pack_compact(s0);

    ode::EventSpec stop;
    stop.g = [&](double, const Vec& uu) { return uu(0) - rho_stop; };
    stop.direction = +1;
    stop.terminal = true;
    ode::EventSpec turning;  // rho maximum before reaching rho_stop
    turning.g = [](double, const Vec& uu) { return uu(1); };
    turning.direction = -1;
    turning.terminal = true;

    ode::Options aopts = opts;
    aopts.postprocess = [&m, nc](double, Vec& uu) {
        Vec uc = uu.head(nc);
        project_compact(m, uc);
        uu.head(nc) = uc;
    };

    AnchoredEntry out;
    out.sol = ode::integrate(anchored_rhs(m), 0.0, u0, 50.0, aopts, {stop, turning});
    if (!out.sol.event_terminated)
        throw std::runtime_error("anchored_entry: no chart event reached");
    out.tau_ref = out.sol.t_end;
    out.sigma = 1.0 / out.tau_ref - out.sol.y_end(nc + 1);
    return out;
}

// Strip the auxiliary slots: dense compact state at tau.
inline CompactState anchored_state(const AnchoredEntry& e, int dim, double tau) {
    return unpack_compact(Vec(e.sol.dense.eval(tau).head(2 + 2 * dim)));
}

}  // namespace detail

// theta maps the Euclidean line through (x0, v0) to the g-geodesic with the
// same incoming data, with unit-speed parametrization aligned so the two
// curves are asymptotic at both ends. The time anchor comes from the exact
// limit sigma* = lim (int rho^{-2} d tau + 1/tau) on the incoming tail.
inline ConjugacyResult conjugacy_theta(const MetricModel& m, const Vec& x0, const Vec& v0,
                                       ode::Options opts = {}, ChartPolicy policy = {}) {
    const Vec v = v0 / v0.norm();
    ConjugacyResult out;
    out.incoming = euclidean_line_boundary_data(x0, v);
    const double a = x0.dot(v);  // offset of (x0,v0) from the line's foot point

    const int n = m.dim();
    auto entry = detail::anchored_entry(m, out.incoming, policy.rho_hi, opts);
    CompactTimeMap map(m, entry.sol.dense, entry.tau_ref, entry.sigma);
    // anchor stability: the auxiliary sigma state at an interior tau must
    // reproduce the same limit
    {
        const int nc = 2 + 2 * n;
        const double tau_c = 0.5 * entry.tau_ref;
        const Vec uc = entry.sol.dense.eval(tau_c);
        // sigma* recomputed from tau_c: 1/tau_c - sig(tau_c) - (s-map shift)
        const double sig_c = 1.0 / tau_c - uc(nc + 1);
        CompactTimeMap alt(m, entry.sol.dense, tau_c, sig_c);
        out.anchor_residual =
            std::abs(alt.t_of_tau(0.4 * entry.tau_ref) - map.t_of_tau(0.4 * entry.tau_ref));
    }
    const double t_ref = map.t_of_tau(entry.tau_ref);

    // state at foot time t = a: if it lies before the chart event, evaluate on
    // the compact leg; otherwise continue in the Cartesian chart.
    if (a <= t_ref) {
        const double tau_lo = 0.2 / (std::abs(a) + 2.0 / entry.tau_ref);
        const double tau_a = map.tau_of_t(a, std::min(tau_lo, 0.5 * entry.tau_ref),
                                          entry.tau_ref);
        out.state = compact_to_cartesian(m, detail::anchored_state(entry, n, tau_a));
    } else {
        CartesianState handoff =
            compact_to_cartesian(m, unpack_compact(Vec(entry.sol.y_end.head(2 + 2 * n))));
        auto sol = ode::integrate(cartesian_rhs(m), t_ref, pack_cartesian(handoff), a, opts);
        out.state = unpack_cartesian(sol.y_end);
    }
    return out;
}

}  // namespace scatlab::flow
