// scatlab -- adaptive embedded Runge-Kutta integration with dense output and
// event location. The pair is Dormand-Prince RK5(4)7M (Hairer, Norsett,
// Wanner, "Solving Ordinary Differential Equations I"); interpolation between
// accepted steps is cubic Hermite on (y, f) endpoint data.
#pragma once

#include "scatlab/core.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace scatlab::ode {

using Rhs = std::function<void(double t, const Vec& y, Vec& dydt)>;

struct Options {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double h_init = 0.0;    // 0: choose automatically
    double h_max = 0.0;     // 0: |t1-t0|
    long max_steps = 2000000;
    // Applied to each accepted state before it is recorded (constraint
    // projection). Must be a small correction; the FSAL derivative is reused.
    std::function<void(double t, Vec& y)> postprocess;
};

struct Step {
    double t0 = 0, t1 = 0;
    Vec y0, y1, f0, f1;

    // Cubic Hermite evaluation at t in [t0, t1].
    Vec eval(double t) const {
        const double h = t1 - t0;
        const double s = (t - t0) / h;
        const double s2 = s * s, s3 = s2 * s;
        const double h00 = 2 * s3 - 3 * s2 + 1;
        const double h10 = s3 - 2 * s2 + s;
        const double h01 = -2 * s3 + 3 * s2;
        const double h11 = s3 - s2;
        return h00 * y0 + (h10 * h) * f0 + h01 * y1 + (h11 * h) * f1;
    }
    Vec eval_deriv(double t) const {
        const double h = t1 - t0;
        const double s = (t - t0) / h;
        const double s2 = s * s;
        const double d00 = (6 * s2 - 6 * s) / h;
        const double d10 = 3 * s2 - 4 * s + 1;
        const double d01 = (-6 * s2 + 6 * s) / h;
        const double d11 = 3 * s2 - 2 * s;
        return d00 * y0 + d10 * f0 + d01 * y1 + d11 * f1;
    }
};

class DenseOutput {
public:
    std::vector<Step> steps;

    bool empty() const { return steps.empty(); }
    double t_front() const { return steps.front().t0; }
    double t_back() const { return steps.back().t1; }

    const Step& segment_at(double t) const {
        // Steps are monotone in t (increasing or decreasing).
        const bool fwd = steps.back().t1 >= steps.front().t0;
        size_t lo = 0, hi = steps.size() - 1;
        while (lo < hi) {
            const size_t mid = (lo + hi) / 2;
            const bool left = fwd ? (t <= steps[mid].t1) : (t >= steps[mid].t1);
            if (left) hi = mid; else lo = mid + 1;
        }
        return steps[lo];
    }

    Vec eval(double t) const { return segment_at(t).eval(t); }
    Vec eval_deriv(double t) const { return segment_at(t).eval_deriv(t); }
};

// Event function g(t,y); a root is reported when g changes sign across an
// accepted step. direction > 0: only increasing crossings; < 0: decreasing;
// 0: both. Terminal events stop the integration at the located root.
struct EventSpec {
    std::function<double(double t, const Vec& y)> g;
    int direction = 0;
    bool terminal = false;
    double t_tol = 1e-12;
};

struct EventHit {
    int which = -1;
    double t = 0;
    Vec y;
};

struct Result {
    DenseOutput dense;
    std::vector<EventHit> events;
    bool event_terminated = false;
    bool step_underflow = false;
    long n_steps = 0;
    long n_rejected = 0;
    double t_end = 0;
    Vec y_end;
    std::string diagnostic;
};

namespace detail {
// Dormand-Prince RK5(4)7M tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// y1 - y1_hat coefficients (error estimate).
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
}  // namespace detail

class Integrator {
public:
    Integrator(Rhs rhs, Options opts = {}) : rhs_(std::move(rhs)), opts_(opts) {}

    Result integrate(double t0, const Vec& y0, double t1,
                     const std::vector<EventSpec>& events = {}) const {
        Result res;
        const int dir = (t1 >= t0) ? 1 : -1;
        const double span = std::abs(t1 - t0);
        if (span == 0.0) {
            res.t_end = t0;
            res.y_end = y0;
            return res;
        }
        const double h_max = (opts_.h_max > 0) ? opts_.h_max : span;

        Vec y = y0, f(y0.size());
        rhs_(t0, y, f);
        double t = t0;
        double h = (opts_.h_init > 0) ? opts_.h_init : initial_step(t0, y, f, dir);
        h = std::min(h, h_max);

        std::vector<double> gprev(events.size());
        for (size_t i = 0; i < events.size(); ++i) gprev[i] = events[i].g(t, y);

        Vec k2(y.size()), k3(y.size()), k4(y.size()), k5(y.size()), k6(y.size()),
            k7(y.size()), ytmp(y.size()), ynew(y.size()), err(y.size());

        while (dir * (t1 - t) > 0) {
            if (res.n_steps + res.n_rejected > opts_.max_steps) {
                res.diagnostic = "max step count exceeded";
                res.step_underflow = true;
                break;
            }
            h = std::min(h, std::abs(t1 - t));
            if (h < 1e-14 * std::max(1.0, std::abs(t))) {
                res.diagnostic = "step size underflow at t=" + format_double(t);
                res.step_underflow = true;
                break;
            }
            const double hs = dir * h;
            using namespace detail;
            ytmp = y + hs * (a21 * f);
            rhs_(t + c2 * hs, ytmp, k2);
            ytmp = y + hs * (a31 * f + a32 * k2);
            rhs_(t + c3 * hs, ytmp, k3);
            ytmp = y + hs * (a41 * f + a42 * k2 + a43 * k3);
            rhs_(t + c4 * hs, ytmp, k4);
            ytmp = y + hs * (a51 * f + a52 * k2 + a53 * k3 + a54 * k4);
            rhs_(t + c5 * hs, ytmp, k5);
            ytmp = y + hs * (a61 * f + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
            rhs_(t + hs, ytmp, k6);
            ynew = y + hs * (b1 * f + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            rhs_(t + hs, ynew, k7);  // FSAL
            err = hs * (e1 * f + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

            double enorm = 0.0;
            for (int i = 0; i < y.size(); ++i) {
                const double sc = opts_.abs_tol +
                                  opts_.rel_tol * std::max(std::abs(y(i)), std::abs(ynew(i)));
                const double q = err(i) / sc;
                enorm += q * q;
            }
            enorm = std::sqrt(enorm / double(y.size()));

            if (enorm <= 1.0) {
                if (opts_.postprocess) opts_.postprocess(t + hs, ynew);
                Step st;
                st.t0 = t;
                st.t1 = t + hs;
                st.y0 = y;
                st.y1 = ynew;
                st.f0 = f;
                st.f1 = k7;
                res.dense.steps.push_back(st);
                ++res.n_steps;

                bool stop = false;
                for (size_t i = 0; i < events.size(); ++i) {
                    const double gv = events[i].g(st.t1, ynew);
                    const bool crossed =
                        (gprev[i] < 0 && gv >= 0 && events[i].direction >= 0) ||
                        (gprev[i] > 0 && gv <= 0 && events[i].direction <= 0);
                    if (crossed && gprev[i] != 0.0) {
                        EventHit hit = locate(events[i], st, int(i));
                        if (events[i].terminal) {
                            // polish the root on exact sub-integrations from the
                            // step start; removes dense-output interpolation error
                            hit = polish(events[i], st, int(i), hit);
                            res.events.push_back(hit);
                            res.event_terminated = true;
                            res.dense.steps.back().t1 = hit.t;
                            res.dense.steps.back().y1 = hit.y;
                            res.t_end = hit.t;
                            res.y_end = hit.y;
                            stop = true;
                            break;
                        }
                        res.events.push_back(hit);
                    }
                    gprev[i] = gv;
                }
                if (stop) return res;

                t = st.t1;
                y.swap(ynew);
                f.swap(k7);

                double fac = 0.9 * std::pow(std::max(enorm, 1e-10), -0.2);
                fac = std::clamp(fac, 0.2, 5.0);
                h = std::min(h * fac, h_max);
            } else {
                ++res.n_rejected;
                double fac = 0.9 * std::pow(enorm, -0.2);
                h *= std::clamp(fac, 0.1, 0.9);
            }
        }
        res.t_end = t;
        res.y_end = y;
        return res;
    }

private:
    double initial_step(double t0, const Vec& y, const Vec& f, int dir) const {
        const double d0 = y.norm(), d1 = f.norm();
        double h = (d0 > 1e-10 && d1 > 1e-10) ? 0.01 * d0 / d1 : 1e-6;
        // One explicit Euler probe to refine the guess.
        Vec y1 = y + dir * h * f;
        Vec f1(y.size());
        rhs_(t0 + dir * h, y1, f1);
        const double d2 = (f1 - f).norm() / h;
        if (d2 > 1e-10) h = std::min(h, std::pow(0.01 / d2, 1.0 / 5.0));
        return std::max(h, 1e-10);
    }

    EventHit locate(const EventSpec& ev, const Step& st, int which) const {
        // Bisection on the dense interpolant.
        double a = st.t0, b = st.t1;
        double ga = ev.g(a, st.y0);
        EventHit hit;
        hit.which = which;
        for (int i = 0; i < 200 && std::abs(b - a) > ev.t_tol; ++i) {
            const double m = 0.5 * (a + b);
            const double gm = ev.g(m, st.eval(m));
            if ((ga < 0) == (gm < 0)) {
                a = m;
                ga = gm;
            } else {
                b = m;
            }
        }
        hit.t = 0.5 * (a + b);
        hit.y = st.eval(hit.t);
        return hit;
    }

    // Bisection on exact sub-integrations from the step start, bracketing
    // around the interpolant root.
    EventHit polish(const EventSpec& ev, const Step& st, int which, const EventHit& guess) const {
        const double h = st.t1 - st.t0;
        const double pad = 256.0 * std::max(ev.t_tol, 1e-12 * std::abs(h));
        double a = guess.t - pad * (h > 0 ? 1.0 : -1.0);
        double b = guess.t + pad * (h > 0 ? 1.0 : -1.0);
        // clamp into the step, keep t0 side outside the bracket
        auto inside = [&](double t) {
            return (h > 0) ? std::clamp(t, st.t0, st.t1) : std::clamp(t, st.t1, st.t0);
        };
        a = inside(a);
        b = inside(b);
        Options sub = opts_;
        sub.postprocess = nullptr;
        sub.h_init = 0.0;
        Integrator mini(rhs_, sub);
        auto exact = [&](double t) -> Vec {
            if (t == st.t0) return st.y0;
            return mini.integrate(st.t0, st.y0, t).y_end;
        };
        double ga = ev.g(a, exact(a));
        double gb = ev.g(b, exact(b));
        if ((ga < 0) == (gb < 0)) {
            // interpolant bracket failed to straddle; widen to the whole step
            a = st.t0;
            b = st.t1;
            ga = ev.g(a, st.y0);
        }
        Vec ymid = guess.y;
        double tm = guess.t;
        for (int i = 0; i < 80 && std::abs(b - a) > ev.t_tol; ++i) {
            tm = 0.5 * (a + b);
            ymid = exact(tm);
            const double gm = ev.g(tm, ymid);
            if ((ga < 0) == (gm < 0)) {
                a = tm;
                ga = gm;
            } else {
                b = tm;
            }
        }
        EventHit out;
        out.which = which;
        out.t = tm;
        out.y = ymid;
        return out;
    }

    Rhs rhs_;
    Options opts_;
};

// Convenience wrapper.
inline Result integrate(const Rhs& rhs, double t0, const Vec& y0, double t1,
                        const Options& opts = {}, const std::vector<EventSpec>& events = {}) {
    return Integrator(rhs, opts).integrate(t0, y0, t1, events);
}

}  // namespace scatlab::ode
