// scatlab -- parallel frames along geodesics, the matrix Jacobi equation
// A'' + R(t) A = 0 in such frames, asymptotically normalized stable (A) and
// linearly growing (B) families, limit rotations, and conjugate point scans.
#pragma once

#include "scatlab/core.hpp"
#include "scatlab/flow.hpp"
#include "scatlab/metrics.hpp"
#include "scatlab/ode.hpp"

#include <optional>
#include <ostream>
#include <vector>

namespace scatlab::jacobi {

using flow::CartesianState;
using flow::Trajectory;
using metrics::MetricModel;

// --- parallel frame ---

// Orthonormal frame (Y_1,...,Y_n) with Y_n = gamma-dot, parallel along a
// Cartesian trajectory. Columns are transported by f' = -Gamma(v) f; a
// g-Gram-Schmidt pass every `cadence` accepted steps re-enforces
// orthonormality and logs the largest drift seen.
class ParallelFrame {
public:
    ParallelFrame(const MetricModel& m, const Trajectory& traj, int cadence = 50,
                  ode::Options opts = {})
        : model_(&m), traj_(&traj) {
        const auto& leg = traj.single();
        const int n = m.dim();
        const double t0 = leg.sol.dense.steps.front().t0;
        const double t1 = leg.sol.dense.steps.back().t1;

        // initial frame: ambient axes Gram-Schmidt'ed against gamma-dot
        CartesianState s0 = flow::unpack_cartesian(leg.sol.dense.eval(t0));
        Mat F0 = initial_frame(m, s0);

        long counter = 0;
        ode::Options fopts = opts;
        fopts.postprocess = [this, n, cadence, &counter](double t, Vec& u) mutable {
            if (++counter % cadence != 0) return;
            const Vec xu = traj_->single().sol.dense.eval(t);
            const Mat g = model_->metric(Vec(xu.head(n)));
            Mat F = unflatten(u, n);
            drift_ = std::max(drift_, orthonormality_defect(g, F));
            gram_schmidt(g, F);
            u = flatten(F);
        };
        ode::Rhs rhs = [this, n](double t, const Vec& u, Vec& du) {
            const Vec xu = traj_->single().sol.dense.eval(t);
            const auto gamma = model_->christoffel(Vec(xu.head(n)));
            const Vec v = xu.tail(n);
            const Mat F = unflatten(u, n);
            // dF^k_j = -sum_{l,i} Gamma^k_{l i} v^l F^i_j
            Mat dF(n, n);
            for (int j = 0; j < n; ++j) {
                const Vec col = F.col(j);
                for (int k = 0; k < n; ++k) dF(k, j) = -v.dot(gamma[size_t(k)] * col);
            }
            du = flatten(dF);
        };
        sol_ = ode::integrate(rhs, t0, flatten(F0), t1, fopts);
        if (sol_.step_underflow)
            throw std::runtime_error("parallel_frame: " + sol_.diagnostic);
        // final defect check
        {
            const Vec xu = traj_->single().sol.dense.eval(t1);
            const Mat g = model_->metric(Vec(xu.head(n)));
            drift_ = std::max(drift_, orthonormality_defect(g, unflatten(sol_.y_end, n)));
        }
    }

    Mat frame_at(double t) const { return unflatten(sol_.dense.eval(t), model_->dim()); }
    double drift() const { return drift_; }
    double t_front() const { return sol_.dense.steps.front().t0; }
    double t_back() const { return sol_.dense.steps.back().t1; }

    static Mat initial_frame(const MetricModel& m, const CartesianState& s) {
        const int n = m.dim();
        const Mat g = m.metric(s.x);
        Mat F(n, n);
        F.col(n - 1) = s.v / std::sqrt(s.v.dot(g * s.v));
        int placed = 0;
        for (int j = 0; j < n && placed < n - 1; ++j) {
            Vec c = Vec::Unit(n, j);
            c -= c.dot(g * F.col(n - 1)) * F.col(n - 1);
            for (int i = 0; i < placed; ++i) c -= c.dot(g * F.col(i)) * F.col(i);
            const double nn = std::sqrt(c.dot(g * c));
            if (nn < 1e-8) continue;  // axis parallel to gamma-dot; skip
            F.col(placed++) = c / nn;
        }
        if (placed != n - 1) throw std::runtime_error("parallel_frame: degenerate start frame");
        return F;
    }

    static double orthonormality_defect(const Mat& g, const Mat& F) {
        const Mat gram = F.transpose() * g * F;
        return (gram - Mat::Identity(F.rows(), F.cols())).cwiseAbs().maxCoeff();
    }

    static void gram_schmidt(const Mat& g, Mat& F) {
        const int n = int(F.cols());
        // keep Y_n = normalized gamma-dot direction first, then the others
        F.col(n - 1) /= std::sqrt(F.col(n - 1).dot(g * F.col(n - 1)));
        for (int j = 0; j < n - 1; ++j) {
            Vec c = F.col(j);
            c -= c.dot(g * F.col(n - 1)) * F.col(n - 1);
            for (int i = 0; i < j; ++i) c -= c.dot(g * F.col(i)) * F.col(i);
            F.col(j) = c / std::sqrt(c.dot(g * c));
        }
    }

    static Vec flatten(const Mat& F) {
        Vec u(F.size());
        int idx = 0;
        for (int j = 0; j < F.cols(); ++j)
            for (int i = 0; i < F.rows(); ++i) u(idx++) = F(i, j);
        return u;
    }
    static Mat unflatten(const Vec& u, int n) {
        Mat F(n, n);
        int idx = 0;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) F(i, j) = u(idx++);
        return F;
    }

private:
    const MetricModel* model_;
    const Trajectory* traj_;
    ode::Result sol_;
    double drift_ = 0.0;
};

// --- curvature along the geodesic, in the transverse frame ---

// Samples of the symmetric (n-1)x(n-1) matrix R_ab = g(R(Y_b, v) v, Y_a),
// interpolated with 4-point Lagrange polynomials for the Jacobi ODE.
class CurvatureLine {
public:
    // directly from samples (synthetic curvature profiles, tests)
    CurvatureLine(std::vector<double> times, std::vector<Mat> values)
        : times_(std::move(times)), values_(std::move(values)) {
        if (times_.size() != values_.size() || times_.size() < 4)
            throw std::invalid_argument("CurvatureLine: need >= 4 samples");
    }

    CurvatureLine(const MetricModel& m, const Trajectory& traj, const ParallelFrame& frame) {
        const int n = m.dim();
        const auto& dense = traj.single().sol.dense;
        // sample nodes: step endpoints plus midpoints
        for (const auto& st : dense.steps) {
            push_sample(m, dense, frame, st.t0, n);
            push_sample(m, dense, frame, 0.5 * (st.t0 + st.t1), n);
        }
        push_sample(m, dense, frame, dense.steps.back().t1, n);
    }

    Mat at(double t) const {
        // 4-point Lagrange interpolation on the sample grid
        const int N = int(times_.size());
        int lo = 0, hi = N - 1;
        while (lo < hi) {
            const int mid = (lo + hi) / 2;
            if (times_[size_t(mid)] < t) lo = mid + 1;
            else hi = mid;
        }
        int i0 = std::clamp(lo - 2, 0, N - 4);
        Mat out = Mat::Zero(values_[0].rows(), values_[0].cols());
        for (int i = i0; i < i0 + 4; ++i) {
            double w = 1.0;
            for (int j = i0; j < i0 + 4; ++j)
                if (j != i) w *= (t - times_[size_t(j)]) / (times_[size_t(i)] - times_[size_t(j)]);
            out += w * values_[size_t(i)];
        }
        return out;
    }

    double max_asymmetry() const { return asym_; }
    const std::vector<double>& times() const { return times_; }
    const std::vector<Mat>& values() const { return values_; }

private:
    void push_sample(const MetricModel& m, const ode::DenseOutput& dense,
                     const ParallelFrame& frame, double t, int n) {
        if (!times_.empty() && t <= times_.back()) return;
        const Vec u = dense.eval(t);
        const Vec x = u.head(n);
        const Vec v = u.tail(n);
        const Mat F = frame.frame_at(t);
        const auto R = m.riemann(x);
        const Mat g = m.metric(x);
        Mat out(n - 1, n - 1);
        for (int a = 0; a < n - 1; ++a)
            for (int b = 0; b < n - 1; ++b) {
                // g( R(Y_b, v) v, Y_a )
                double s = 0.0;
                for (int l = 0; l < n; ++l) {
                    double rl = 0.0;
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < n; ++j)
                            for (int k = 0; k < n; ++k)
                                rl += R.up(l, i, j, k) * F(i, b) * v(j) * v(k);
                    s += (g.row(l) * F.col(a))(0) * rl;
                }
                out(a, b) = s;
            }
        asym_ = std::max(asym_, (out - out.transpose()).cwiseAbs().maxCoeff());
        out = 0.5 * (out + out.transpose());
        times_.push_back(t);
        values_.push_back(out);
    }

    std::vector<double> times_;
    std::vector<Mat> values_;
    double asym_ = 0.0;
};

// --- matrix Jacobi propagation ---

struct JacobiMatrixState {
    Mat A;
    Mat Adot;
    double t = 0.0;
};

// Wronskian-type invariant A^T Adot - Adot^T A (constant when R symmetric).
inline Mat wronskian(const JacobiMatrixState& s) {
    return Mat(s.A.transpose() * s.Adot - s.Adot.transpose() * s.A);
}

class JacobiSolution {
public:
    JacobiSolution(ode::Result sol, int k) : sol_(std::move(sol)), k_(k) {}

    JacobiMatrixState at(double t) const {
        const Vec u = sol_.dense.eval(t);
        JacobiMatrixState s;
        s.t = t;
        s.A = ParallelFrame::unflatten(Vec(u.head(k_ * k_)), k_);
        s.Adot = ParallelFrame::unflatten(Vec(u.tail(k_ * k_)), k_);
        return s;
    }
    double t_front() const { return sol_.dense.steps.front().t0; }
    double t_back() const { return sol_.dense.steps.back().t1; }
    const ode::Result& raw() const { return sol_; }

    // post-compose with a constant right factor: A(t) -> A(t) + C * G
    // handled by callers on the matrices directly.

private:
    ode::Result sol_;
    int k_;
};

// Solve A'' + R(t) A = 0 with A(t0) = A0, A'(t0) = Adot0 over [t0, t1].
inline JacobiSolution propagate_jacobi(const CurvatureLine& curv, const Mat& A0, const Mat& Adot0,
                                       double t0, double t1, ode::Options opts = {}) {
    if (opts.h_max == 0.0) opts.h_max = 1.0;  // see integrate_cartesian
    const int k = int(A0.rows());
    Vec u0(2 * k * k);
    u0.head(k * k) = ParallelFrame::flatten(A0);
    u0.tail(k * k) = ParallelFrame::flatten(Adot0);
    ode::Rhs rhs = [&curv, k](double t, const Vec& u, Vec& du) {
        const Mat A = ParallelFrame::unflatten(Vec(u.head(k * k)), k);
        const Mat R = curv.at(t);
        du.resize(2 * k * k);
        du.head(k * k) = u.tail(k * k);
        du.tail(k * k) = ParallelFrame::flatten(Mat(-R * A));
    };
    auto sol = ode::integrate(rhs, t0, u0, t1, opts);
    if (sol.step_underflow) throw std::runtime_error("propagate_jacobi: " + sol.diagnostic);
    return JacobiSolution(std::move(sol), k);
}

// --- stable / unstable families along boundary-data geodesics ---

struct FamilyParams {
    double T_start = 300.0;   // asymptotic initial conditions truncated here
    double T_end = 300.0;
    int frame_cadence = 50;
    bool build_diagnostics = false;  // also build the staged frame/curvature
    ode::Options opts;
};

struct StableFamily {
    // geodesic pipeline
    Trajectory traj;                        // Cartesian leg on [-T_start, T_end]
    std::shared_ptr<ParallelFrame> frame;
    std::shared_ptr<CurvatureLine> curvature;
    std::shared_ptr<JacobiSolution> A;      // A -> Id at -infinity
    std::shared_ptr<JacobiSolution> Braw;   // B ~ t Id at -infinity (before G-subtraction)
    Mat G;                                  // fitted tail offset
    Mat H;                                  // limit rotation at +infinity
    double frame_drift = 0.0;
    double wronskian_drift = 0.0;

    Mat A_at(double t) const { return A->at(t).A; }
    // normalized unstable family B(t) = Braw(t) - G A(t)
    Mat B_at(double t) const { return Mat(Braw->at(t).A - G * A->at(t).A); }
};

// Build the Cartesian trajectory with boundary data (p_-, eta), in the
// foot-anchored unit-speed parametrization, over [-T_start, T_end].
inline Trajectory boundary_geodesic(const MetricModel& m, const Vec& p_minus, const Vec& eta,
                                    const FamilyParams& par) {
    flow::BoundaryData bd{p_minus, eta, -1};
    const double rho_stop = 0.05;
    auto entry = flow::detail::anchored_entry(m, bd, rho_stop, par.opts);
    flow::CompactTimeMap map(m, entry.sol.dense, entry.tau_ref, entry.sigma);
    const double t_ref = map.t_of_tau(entry.tau_ref);
    // the anchor time -T_start must lie inside the entry leg (t increases
    // with tau, so this only fails if the leg ended before reaching it)
    if (t_ref < -par.T_start)
        throw std::runtime_error("boundary_geodesic: entry leg ends before -T_start");
    const double tau_lo = 0.2 / (par.T_start + 2.0 / entry.tau_ref);
    const double tau_star = map.tau_of_t(-par.T_start, tau_lo, entry.tau_ref);
    CartesianState cs =
        flow::compact_to_cartesian(m, flow::detail::anchored_state(entry, m.dim(), tau_star));
    return flow::integrate_cartesian(m, cs, -par.T_start, par.T_end, par.opts);
}

namespace detail {

// Fused integration of trajectory, frame, and both Jacobi families as one
// system; avoids compounding dense-output interpolation error across the
// staged pipeline. State: [x, v, F, A, A', B, B'].
struct FusedResult {
    ode::Result sol;
    int n;
    int offset_F, offset_A, offset_Ad, offset_B, offset_Bd;
};

inline FusedResult fused_family(const MetricModel& m, const CartesianState& cs, double t0,
                                double t1, ode::Options opts) {
    const int n = m.dim();
    const int k = n - 1;
    FusedResult r;
    r.n = n;
    r.offset_F = 2 * n;
    r.offset_A = 2 * n + n * n;
    r.offset_Ad = r.offset_A + k * k;
    r.offset_B = r.offset_Ad + k * k;
    r.offset_Bd = r.offset_B + k * k;
    const int total = r.offset_Bd + k * k;

    Vec u0 = Vec::Zero(total);
    u0.head(n) = cs.x;
    u0.segment(n, n) = cs.v;
    u0.segment(r.offset_F, n * n) = ParallelFrame::flatten(ParallelFrame::initial_frame(m, cs));
    u0.segment(r.offset_A, k * k) = ParallelFrame::flatten(Mat::Identity(k, k));
    u0.segment(r.offset_B, k * k) = ParallelFrame::flatten(Mat(t0 * Mat::Identity(k, k)));
    u0.segment(r.offset_Bd, k * k) = ParallelFrame::flatten(Mat::Identity(k, k));

    ode::Rhs rhs = [&m, r, n, k](double, const Vec& u, Vec& du) {
        du.resize(u.size());
        const Vec x = u.head(n);
        const Vec v = u.segment(n, n);
        const auto gamma = m.christoffel(x);
        du.head(n) = v;
        for (int i = 0; i < n; ++i) du(n + i) = -v.dot(gamma[size_t(i)] * v);
        const Mat F = ParallelFrame::unflatten(Vec(u.segment(r.offset_F, n * n)), n);
        Mat dF(n, n);
        for (int j = 0; j < n; ++j) {
            const Vec col = F.col(j);
            for (int kk = 0; kk < n; ++kk) dF(kk, j) = -v.dot(gamma[size_t(kk)] * col);
        }
        du.segment(r.offset_F, n * n) = ParallelFrame::flatten(dF);
        // transverse curvature matrix in the frame
        const auto R = m.riemann(x);
        const Mat g = m.metric(x);
        Mat curv(k, k);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) {
                double s = 0.0;
                for (int l = 0; l < n; ++l) {
                    double rl = 0.0;
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < n; ++j)
                            for (int kk = 0; kk < n; ++kk)
                                rl += R.up(l, i, j, kk) * F(i, b) * v(j) * v(kk);
                    s += (g.row(l) * F.col(a))(0) * rl;
                }
                curv(a, b) = s;
            }
        curv = 0.5 * (curv + curv.transpose());
        const Mat A = ParallelFrame::unflatten(Vec(u.segment(r.offset_A, k * k)), k);
        const Mat B = ParallelFrame::unflatten(Vec(u.segment(r.offset_B, k * k)), k);
        du.segment(r.offset_A, k * k) = u.segment(r.offset_Ad, k * k);
        du.segment(r.offset_Ad, k * k) = ParallelFrame::flatten(Mat(-curv * A));
        du.segment(r.offset_B, k * k) = u.segment(r.offset_Bd, k * k);
        du.segment(r.offset_Bd, k * k) = ParallelFrame::flatten(Mat(-curv * B));
    };
    r.sol = ode::integrate(rhs, t0, u0, t1, opts);
    if (r.sol.step_underflow) throw std::runtime_error("fused_family: " + r.sol.diagnostic);
    return r;
}

}  // namespace detail

inline StableFamily stable_family(const MetricModel& m, const Vec& p_minus, const Vec& eta,
                                  FamilyParams par = {}, bool fused = true) {
    const int n = m.dim();
    const int k = n - 1;
    StableFamily out;
    out.traj = boundary_geodesic(m, p_minus, eta, par);
    if (fused) {
        CartesianState cs =
            flow::unpack_cartesian(out.traj.single().sol.dense.eval(-par.T_start));
        auto fr = std::make_shared<detail::FusedResult>(
            detail::fused_family(m, cs, -par.T_start, par.T_end, par.opts));
        // expose A and B through the JacobiSolution interface via sub-views
        auto slice = [fr, k](int off, int doff) {
            ode::Result res;
            res.dense.steps.reserve(fr->sol.dense.steps.size());
            for (const auto& st : fr->sol.dense.steps) {
                ode::Step s;
                s.t0 = st.t0;
                s.t1 = st.t1;
                s.y0 = Vec(2 * k * k);
                s.y1 = Vec(2 * k * k);
                s.f0 = Vec(2 * k * k);
                s.f1 = Vec(2 * k * k);
                s.y0.head(k * k) = st.y0.segment(off, k * k);
                s.y0.tail(k * k) = st.y0.segment(doff, k * k);
                s.y1.head(k * k) = st.y1.segment(off, k * k);
                s.y1.tail(k * k) = st.y1.segment(doff, k * k);
                s.f0.head(k * k) = st.f0.segment(off, k * k);
                s.f0.tail(k * k) = st.f0.segment(doff, k * k);
                s.f1.head(k * k) = st.f1.segment(off, k * k);
                s.f1.tail(k * k) = st.f1.segment(doff, k * k);
                res.dense.steps.push_back(std::move(s));
            }
            res.t_end = fr->sol.t_end;
            return res;
        };
        out.A = std::make_shared<JacobiSolution>(slice(fr->offset_A, fr->offset_Ad), k);
        out.Braw = std::make_shared<JacobiSolution>(slice(fr->offset_B, fr->offset_Bd), k);
        // frame drift diagnostic at the endpoint
        {
            const Vec uend = fr->sol.y_end;
            const Mat F = ParallelFrame::unflatten(Vec(uend.segment(fr->offset_F, n * n)), n);
            const Mat g = m.metric(Vec(uend.head(n)));
            out.frame_drift = ParallelFrame::orthonormality_defect(g, F);
        }
        if (par.build_diagnostics) {
            out.frame = std::make_shared<ParallelFrame>(m, out.traj, par.frame_cadence, par.opts);
            out.curvature = std::make_shared<CurvatureLine>(m, out.traj, *out.frame);
        }
    } else {
        out.frame = std::make_shared<ParallelFrame>(m, out.traj, par.frame_cadence, par.opts);
        out.frame_drift = out.frame->drift();
        out.curvature = std::make_shared<CurvatureLine>(m, out.traj, *out.frame);
        out.A = std::make_shared<JacobiSolution>(
            propagate_jacobi(*out.curvature, Mat::Identity(k, k), Mat::Zero(k, k),
                             -par.T_start, par.T_end, par.opts));
        out.Braw = std::make_shared<JacobiSolution>(
            propagate_jacobi(*out.curvature, Mat(-par.T_start * Mat::Identity(k, k)),
                             Mat::Identity(k, k), -par.T_start, par.T_end, par.opts));
    }

    // G fitted on the incoming tail so that B - t Id -> 0 at -infinity
    {
        Mat acc = Mat::Zero(k, k);
        int cnt = 0;
        for (double f : {1.0, 0.95, 0.9, 0.85, 0.8}) {
            const double t = -par.T_start * f;
            acc += out.Braw->at(t).A - t * Mat::Identity(k, k);
            ++cnt;
        }
        out.G = acc / double(cnt);
    }

    // H: average of A over the final 10% of the window
    {
        Mat acc = Mat::Zero(k, k);
        int cnt = 0;
        for (int i = 0; i <= 8; ++i) {
            const double t = par.T_end * (0.9 + 0.0125 * i);
            acc += out.A->at(t).A;
            ++cnt;
        }
        out.H = acc / double(cnt);
    }

    // wronskian conservation check
    {
        const Mat w0 = wronskian(out.A->at(-par.T_start));
        const Mat w1 = wronskian(out.A->at(par.T_end));
        out.wronskian_drift = (w1 - w0).cwiseAbs().maxCoeff();
    }
    return out;
}

struct TailFits {
    SlopeFit A_minus;      // ||A - Id|| ~ |t|^{-m} at -infinity
    SlopeFit A_plus;       // ||A - H|| ~ t^{-m} at +infinity
    SlopeFit B_minus;      // ||B - t Id|| ~ |t|^{-(m-1)}
    SlopeFit B_plus;       // ||B - t H|| ~ t^{-(m-1)}
};

// Log-log fits of the four tail residuals over T in [T_fit_lo, T_fit_hi].
// `shift` regresses against (T + shift) instead of T; the curvature envelope
// decays in |t| + <eta>, so shifting by |eta| removes the window bias for
// moderate T.
inline TailFits tail_fits(const StableFamily& fam, double T_fit_lo, double T_fit_hi,
                          double shift = 0.0, int samples = 12) {
    TailFits out;
    const int k = int(fam.H.rows());
    std::vector<double> ts, am, ap, bm, bp;
    for (int i = 0; i < samples; ++i) {
        const double T =
            T_fit_lo * std::pow(T_fit_hi / T_fit_lo, double(i) / double(samples - 1));
        ts.push_back(T + shift);
        am.push_back((fam.A_at(-T) - Mat::Identity(k, k)).norm());
        ap.push_back((fam.A_at(T) - fam.H).norm());
        bm.push_back((fam.B_at(-T) + T * Mat::Identity(k, k)).norm());
        bp.push_back((fam.B_at(T) - T * fam.H).norm());
    }
    out.A_minus = loglog_slope(ts, am, 1e-13);
    out.A_plus = loglog_slope(ts, ap, 1e-13);
    out.B_minus = loglog_slope(ts, bm, 1e-12);
    out.B_plus = loglog_slope(ts, bp, 1e-12);
    return out;
}

// CSV export of a family: rows (t, vec(A), det A, sigma_min(A), vec(B)).
inline void export_family_csv(std::ostream& out, const StableFamily& fam, double t_lo,
                              double t_hi, int samples = 200) {
    const int k = int(fam.H.rows());
    out << "t";
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) out << ",A" << i << j;
    out << ",detA,sigma_min";
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) out << ",B" << i << j;
    out << '\n';
    for (int s = 0; s <= samples; ++s) {
        const double t = t_lo + (t_hi - t_lo) * s / samples;
        const Mat A = fam.A_at(t);
        const Mat B = fam.B_at(t);
        out << format_double(t);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) out << ',' << format_double(A(i, j));
        Eigen::JacobiSVD<Mat> svd(A);
        out << ',' << format_double(A.determinant()) << ','
            << format_double(svd.singularValues().minCoeff());
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) out << ',' << format_double(B(i, j));
        out << '\n';
    }
}

// --- conjugate point detection ---

// Zeros of det A for the Jacobi matrix with A = 0, A' = Id at window start;
// refined by root location on the dense output.
inline std::vector<double> conjugate_scan(const MetricModel& m, const Trajectory& traj,
                                          double t_lo, double t_hi, ode::Options opts = {},
                                          int frame_cadence = 50) {
    const int n = m.dim();
    const int k = n - 1;
    ParallelFrame frame(m, traj, frame_cadence, opts);
    CurvatureLine curv(m, traj, frame);
    auto jac = propagate_jacobi(curv, Mat::Zero(k, k), Mat::Identity(k, k), t_lo, t_hi, opts);
    // scan det A on a fine grid; bisect sign changes
    std::vector<double> roots;
    auto detA = [&](double t) { return jac.at(t).A.determinant(); };
    const int N = 4000;
    double prev_t = t_lo + (t_hi - t_lo) * 1e-4;
    double prev = detA(prev_t);
    for (int i = 1; i <= N; ++i) {
        const double t = prev_t + (t_hi - prev_t) * double(i) / N;
        const double d = detA(t);
        if ((prev < 0) != (d < 0)) {
            double a = t - (t_hi - prev_t) / N, b = t;
            for (int it = 0; it < 100 && (b - a) > 1e-12 * std::max(1.0, std::abs(b)); ++it) {
                const double mid = 0.5 * (a + b);
                if ((detA(mid) < 0) == (prev < 0)) a = mid;
                else b = mid;
            }
            roots.push_back(0.5 * (a + b));
        }
        prev = d;
    }
    return roots;
}

// Smallest singular value of A(t), for diagnostics.
inline double sigma_min(const Mat& A) {
    Eigen::JacobiSVD<Mat> svd(A);
    return svd.singularValues().minCoeff();
}

}  // namespace scatlab::jacobi
