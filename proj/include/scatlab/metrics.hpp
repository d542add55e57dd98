// scatlab -- metric models on R^n: Euclidean, smoothed 2D cones, normal-form
// asymptotically-flat perturbations, and Cartesian-coefficient perturbations.
// Models supply the metric and analytic first derivatives; curvature uses
// central differences of the Christoffel symbols.
#pragma once

#include "scatlab/core.hpp"
#include "scatlab/sphere_tensors.hpp"

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace scatlab::metrics {

using sphere::Poly;
using sphere::SymTensorField;

enum class Kind { euclidean, cone2d, normal_form_ae, cartesian_ae };

// Leading normal-form perturbation: h_rho^{-1} = h_0^{-1} + chi(rho) *
// amplitude * rho^m * h_m, with h_m a rank-2 field on the sphere. The taper
// chi vanishes for |x| <= inner_radius, so the metric is exactly Euclidean on
// a compact set, and equals 1 for |x| >= full_radius.
struct PerturbationSpec {
    int m = 3;
    SymTensorField h_m;
    double amplitude = 0.0;
    double inner_radius = 2.0;
    double full_radius = 4.0;

    double taper(double rho) const {
        // chi as a function of rho = 1/r: 1 for rho <= 1/full, 0 for rho >= 1/inner
        return 1.0 - smooth_ramp(rho, 1.0 / full_radius, 1.0 / inner_radius);
    }
    double taper_drho(double rho) const {
        return -smooth_ramp_deriv(rho, 1.0 / full_radius, 1.0 / inner_radius);
    }
    // s(rho) = amplitude * chi(rho) * rho^m and its rho-derivative
    double scale(double rho) const {
        const double chi = taper(rho);
        if (chi == 0.0 || amplitude == 0.0) return 0.0;
        return amplitude * chi * std::pow(rho, m);
    }
    double scale_drho(double rho) const {
        const double chi = taper(rho), dchi = taper_drho(rho);
        if ((chi == 0.0 && dchi == 0.0) || amplitude == 0.0) return 0.0;
        return amplitude * (dchi * std::pow(rho, m) + chi * m * std::pow(rho, m - 1));
    }
};

// One additive term of a cartesian_ae deviation g - g_0.
struct CartesianTerm {
    enum class Profile { power, gaussian, conformal_gaussian };
    Profile profile = Profile::power;
    Mat coef;      // constant symmetric matrix C
    Poly poly;     // angular weight p(y)
    int upower = 0;        // power: extra factor (1/r)^upower on top of r^{-m}
    double center = 0.0;   // gaussian: radial center
    double width = 1.0;    // gaussian: radial width
    double bump_amp = 0.0; // conformal: phi amplitude
};

// Smoothed cone dr^2 + phi(r)^2 dtheta^2 with phi'(r) = 1 + (c-1) S(r/r0)
// (S the quintic smoothstep). The slope blend keeps the Gauss curvature
// K = -phi''/phi single-signed in the cap (negative for c > 1, positive for
// c < 1), and the exterior r >= r0 is the exact cone of total angle 2 pi c
// around a radially offset apex: phi(r) = c (r - offset),
// offset = (c-1) r0 / (2c).
struct Cone2dParams {
    double slope = 1.0;            // c
    double smoothing_radius = 1.0; // r0
    double exclusion_radius = 0.0; // optional hard tip exclusion zone

    double apex_offset() const { return (slope - 1.0) * smoothing_radius / (2.0 * slope); }
};

struct DecayFit {
    SlopeFit metric_deviation;   // expect ~ -m
    SlopeFit christoffel;        // expect ~ -(m+1)
    SlopeFit curvature;          // expect ~ -(m+2)
    SlopeFit bdf_normalization;  // rho0^{-2}|d rho0|_g - 1, expect <= -2
    bool pass = false;
    std::string note;
};

class MetricModel {
public:
    static MetricModel euclidean(int n) {
        MetricModel m;
        m.kind_ = Kind::euclidean;
        m.n_ = n;
        return m;
    }

    static MetricModel cone2d(Cone2dParams p) {
        if (p.slope <= 0.0) throw std::invalid_argument("cone2d: slope must be positive");
        MetricModel m;
        m.kind_ = Kind::cone2d;
        m.n_ = 2;
        m.cone_ = p;
        return m;
    }

    static MetricModel normal_form_ae(int n, PerturbationSpec spec) {
        if (spec.inner_radius < 1.0)
            throw std::invalid_argument("normal_form_ae: taper inner radius must be >= 1");
        MetricModel m;
        m.kind_ = Kind::normal_form_ae;
        m.n_ = n;
        m.decay_order_ = spec.m;
        m.pert_ = std::make_shared<PerturbationSpec>(std::move(spec));
        return m;
    }

    static MetricModel cartesian_ae(int n, int m_order, std::vector<CartesianTerm> terms,
                                    double cutoff_radius = 1.0) {
        MetricModel m;
        m.kind_ = Kind::cartesian_ae;
        m.n_ = n;
        m.decay_order_ = m_order;
        m.terms_ = std::make_shared<std::vector<CartesianTerm>>(std::move(terms));
        m.cutoff_ = cutoff_radius;
        return m;
    }

    Kind kind() const { return kind_; }
    int dim() const { return n_; }
    int decay_order() const { return decay_order_; }
    const PerturbationSpec& perturbation() const { return *pert_; }
    const Cone2dParams& cone_params() const { return *cone_; }
    bool is_ae() const { return kind_ != Kind::cone2d; }

    // g_ij(x) in Cartesian components.
    Mat metric(const Vec& x) const {
        switch (kind_) {
            case Kind::euclidean:
                return Mat::Identity(n_, n_);
            case Kind::cone2d:
                return cone_metric(x);
            case Kind::normal_form_ae:
                return nf_metric(x);
            case Kind::cartesian_ae:
                return Mat::Identity(n_, n_) + cart_deviation(x);
        }
        throw std::logic_error("unreachable");
    }

    // Analytic partial derivative d g / d x_k.
    Mat metric_deriv(const Vec& x, int k) const {
        switch (kind_) {
            case Kind::euclidean:
                return Mat::Zero(n_, n_);
            case Kind::cone2d:
                return cone_metric_deriv(x, k);
            case Kind::normal_form_ae:
                return nf_metric_deriv(x, k);
            case Kind::cartesian_ae:
                return cart_deviation_deriv(x, k);
        }
        throw std::logic_error("unreachable");
    }

    Mat metric_inverse(const Vec& x) const {
        const Mat g = metric(x);
        Eigen::LDLT<Mat> ldlt(g);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            throw std::runtime_error("metric not positive definite at sample point (cond ~ " +
                                     format_double(condition_estimate(g)) + ")");
        }
        return ldlt.solve(Mat::Identity(n_, n_));
    }

    double sqrt_det(const Vec& x) const { return std::sqrt(metric(x).determinant()); }

    // Christoffel symbols Gamma^k_{ij}; returned as vector over k of matrices (ij).
    std::vector<Mat> christoffel(const Vec& x) const {
        std::vector<Mat> dg(static_cast<size_t>(n_));
        for (int k = 0; k < n_; ++k) dg[size_t(k)] = metric_deriv(x, k);
        const Mat ginv = metric_inverse(x);
        std::vector<Mat> gamma(size_t(n_), Mat::Zero(n_, n_));
        for (int k = 0; k < n_; ++k)
            for (int i = 0; i < n_; ++i)
                for (int j = i; j < n_; ++j) {
                    double s = 0.0;
                    for (int l = 0; l < n_; ++l)
                        s += ginv(k, l) * (dg[size_t(i)](j, l) + dg[size_t(j)](i, l) -
                                           dg[size_t(l)](i, j));
                    gamma[size_t(k)](i, j) = 0.5 * s;
                    gamma[size_t(k)](j, i) = 0.5 * s;
                }
        return gamma;
    }

    // Gamma contracted twice with a velocity: (Gamma(v,v))^k.
    Vec geodesic_acceleration(const Vec& x, const Vec& v) const {
        const auto gamma = christoffel(x);
        Vec a(n_);
        for (int k = 0; k < n_; ++k) a(k) = -v.dot(gamma[size_t(k)] * v);
        return a;
    }

    // Riemann tensor R^l_{ijk} = d_i Gamma^l_{jk} - d_j Gamma^l_{ik}
    // + Gamma^l_{im} Gamma^m_{jk} - Gamma^l_{jm} Gamma^m_{ik}.
    // Index order: riemann(x)[l](i, j*n + k) flattened; use the accessor.
    struct Riemann {
        int n;
        std::vector<double> comp;  // R^l_{ijk}
        double up(int l, int i, int j, int k) const {
            return comp[size_t(((l * n + i) * n + j) * n + k)];
        }
    };

    Riemann riemann(const Vec& x) const {
        if (kind_ == Kind::euclidean)
            return Riemann{n_, std::vector<double>(size_t(n_ * n_ * n_ * n_), 0.0)};
        const double h = fd_step(x);
        std::vector<std::vector<Mat>> dgamma(static_cast<size_t>(n_));
        for (int i = 0; i < n_; ++i) {
            Vec xp = x, xm = x;
            xp(i) += h;
            xm(i) -= h;
            const auto gp = christoffel(xp);
            const auto gm = christoffel(xm);
            dgamma[size_t(i)].resize(size_t(n_));
            for (int l = 0; l < n_; ++l)
                dgamma[size_t(i)][size_t(l)] = (gp[size_t(l)] - gm[size_t(l)]) / (2.0 * h);
        }
        const auto gamma = christoffel(x);
        Riemann R{n_, std::vector<double>(size_t(n_ * n_ * n_ * n_), 0.0)};
        for (int l = 0; l < n_; ++l)
            for (int i = 0; i < n_; ++i)
                for (int j = 0; j < n_; ++j)
                    for (int k = 0; k < n_; ++k) {
                        double v = dgamma[size_t(i)][size_t(l)](j, k) -
                                   dgamma[size_t(j)][size_t(l)](i, k);
                        for (int m = 0; m < n_; ++m)
                            v += gamma[size_t(l)](i, m) * gamma[size_t(m)](j, k) -
                                 gamma[size_t(l)](j, m) * gamma[size_t(m)](i, k);
                        R.comp[size_t(((l * n_ + i) * n_ + j) * n_ + k)] = v;
                    }
        return R;
    }

    // Fully lowered R_{lijk} = g_{lm} R^m_{ijk}.
    double riemann_lowered(const Riemann& R, const Mat& g, int l, int i, int j, int k) const {
        double s = 0.0;
        for (int m = 0; m < n_; ++m) s += g(l, m) * R.up(m, i, j, k);
        return s;
    }

    // Sectional curvature of the plane spanned by orthonormal (u,v) in g.
    double sectional_curvature(const Vec& x, const Vec& u, const Vec& v) const {
        const auto R = riemann(x);
        const Mat g = metric(x);
        // K = <R(u,v)v, u> / (|u|^2|v|^2 - <u,v>^2)
        double num = 0.0;
        for (int l = 0; l < n_; ++l)
            for (int i = 0; i < n_; ++i)
                for (int j = 0; j < n_; ++j)
                    for (int k = 0; k < n_; ++k)
                        num += riemann_lowered(R, g, l, i, j, k) * u(l) * u(i) * v(j) * v(k);
        // R_{lijk} u^l u^i v^j v^k = <R(u, v) v, u> in this index convention:
        // (R(X,Y)Z)^l = R^l_{ijk} X^i Y^j Z^k requires contracting
        // num = g_{lm} R^m_{ijk} u^l u^i v^j v^k; see tests for orientation.
        const double uu = u.dot(g * u), vv = v.dot(g * v), uv = u.dot(g * v);
        return num / (uu * vv - uv * uv);
    }

    // Gauss curvature of a 2D model.
    double gauss_curvature(const Vec& x) const {
        if (n_ != 2) throw std::invalid_argument("gauss_curvature: dim 2 only");
        if (kind_ == Kind::cartesian_ae && terms_->size() == 1 &&
            (*terms_)[0].profile == CartesianTerm::Profile::conformal_gaussian) {
            // analytic: K = -e^{-2 phi} Laplace(phi) for g = e^{2 phi} delta
            const auto& t = (*terms_)[0];
            const double r = x.norm();
            const double z = (r - t.center) / t.width;
            const double phi = t.bump_amp * std::exp(-z * z);
            const double dphi = t.bump_amp * std::exp(-z * z) * (-2.0 * z / t.width);
            const double d2phi =
                t.bump_amp * std::exp(-z * z) * (4.0 * z * z - 2.0) / (t.width * t.width);
            const double lap = d2phi + (r > 1e-12 ? dphi / r : d2phi);
            return -std::exp(-2.0 * phi) * lap;
        }
        Vec e1(2), e2(2);
        e1 << 1, 0;
        e2 << 0, 1;
        // orthonormalize in g
        const Mat g = metric(x);
        Vec u = e1 / std::sqrt(e1.dot(g * e1));
        Vec w = e2 - (e2.dot(g * u)) * u;
        w /= std::sqrt(w.dot(g * w));
        return sectional_curvature(x, u, w);
    }

    // Normal-form dual family K(rho, y) = h_rho^{-1} as an ambient tangential
    // matrix, with analytic rho- and y-derivatives. Defined for models whose
    // boundary chart is exact (euclidean, cone2d, normal_form_ae).
    bool has_boundary_family() const { return kind_ != Kind::cartesian_ae || euclidean_tail(); }

    Mat boundary_dual(double rho, const Vec& y) const {
        const Mat P = sphere::tangent_projector(y);
        switch (kind_) {
            case Kind::euclidean:
                return P;
            case Kind::cartesian_ae:
                if (euclidean_tail()) return P;
                throw std::runtime_error("cartesian_ae model has no exact boundary chart");
            case Kind::cone2d: {
                // h_rho = c^2 (1 - offset rho)^2 dtheta^2
                const double w = cone_->slope * (1.0 - cone_->apex_offset() * rho);
                return Mat(P / (w * w));
            }
            case Kind::normal_form_ae: {
                const double s = pert_->scale(rho);
                if (s == 0.0) return P;
                return Mat(P + s * (P * pert_->h_m.ambient(y) * P));
            }
        }
        throw std::logic_error("unreachable");
    }

    Mat boundary_dual_drho(double rho, const Vec& y) const {
        if (kind_ == Kind::cone2d) {
            const double off = cone_->apex_offset();
            const double w = cone_->slope * (1.0 - off * rho);
            const Mat P = sphere::tangent_projector(y);
            return Mat(2.0 * cone_->slope * off / (w * w * w) * P);
        }
        if (kind_ != Kind::normal_form_ae) return Mat::Zero(n_, n_);
        const double ds = pert_->scale_drho(rho);
        if (ds == 0.0) return Mat::Zero(n_, n_);
        const Mat P = sphere::tangent_projector(y);
        return Mat(ds * (P * pert_->h_m.ambient(y) * P));
    }

    // Directional derivative along tangent u of y -> eta^T K(rho,y) eta.
    double boundary_dual_energy_dy(double rho, const Vec& y, const Vec& u, const Vec& eta) const {
        if (kind_ != Kind::normal_form_ae) return 0.0;
        const double s = pert_->scale(rho);
        if (s == 0.0) return 0.0;
        const Mat dM = pert_->h_m.ambient_deriv(y, u);
        const Mat M = pert_->h_m.ambient(y);
        // projector variation: eta tangential, so only -2(eta.u)(y^T M eta)
        const double pvar = -2.0 * (eta.dot(u)) * double(y.dot(M * eta));
        return s * (double(eta.dot(dM * eta)) + pvar);
    }

    // Largest amplitude keeping h_rho positive definite, estimated on a
    // sample grid (normal_form_ae only).
    double positivity_threshold(int samples = 200) const {
        if (kind_ != Kind::normal_form_ae) return std::numeric_limits<double>::infinity();
        double worst = 0.0;  // most negative s/amplitude * lambda_min(M) over grid
        for (int i = 0; i < samples; ++i) {
            const Vec y = fibonacci_direction(i, samples);
            const Mat B = tangent_basis(y);
            Mat Mt(n_ - 1, n_ - 1);
            const Mat M = pert_->h_m.ambient(y);
            for (int a = 0; a < n_ - 1; ++a)
                for (int b = 0; b < n_ - 1; ++b) Mt(a, b) = B.col(a).dot(M * B.col(b));
            const double lmin = Eigen::SelfAdjointEigenSolver<Mat>(Mt).eigenvalues().minCoeff();
            for (double rho : {0.05, 0.1, 0.2, 0.3, 0.5, 1.0}) {
                const double su = pert_->taper(rho) * std::pow(rho, pert_->m);
                worst = std::min(worst, su * lmin);
            }
        }
        if (worst >= 0.0) return std::numeric_limits<double>::infinity();
        return -1.0 / worst;
    }

    // Sampled verification of the decay orders.
    DecayFit validate_decay(double r0 = 5.0, int n_radii = 9, int n_dirs = 16) const {
        if (!is_ae()) throw std::invalid_argument("validate_decay: AE models only");
        DecayFit out;
        if (kind_ == Kind::euclidean) {
            out.pass = true;
            out.note = "euclidean: deviations identically zero";
            return out;
        }
        const int m = decay_order_;
        std::vector<double> rs, dev, gam, curv, bdf;
        for (int i = 0; i < n_radii; ++i) {
            const double r = r0 * std::pow(100.0, double(i) / double(n_radii - 1));
            double dmax = 0.0, gmax = 0.0, cmax = 0.0, bmax = 0.0;
            for (int d = 0; d < n_dirs; ++d) {
                const Vec y = fibonacci_direction(d, n_dirs);
                const Vec x = r * y;
                const Mat g = metric(x);
                dmax = std::max(dmax, (g - Mat::Identity(n_, n_)).norm());
                const auto gamma = christoffel(x);
                for (const auto& gk : gamma) gmax = std::max(gmax, gk.cwiseAbs().maxCoeff());
                const auto R = riemann(x);
                double cm = 0.0;
                for (double v : R.comp) cm = std::max(cm, std::abs(v));
                cmax = std::max(cmax, cm);
                const Mat gi = metric_inverse(x);
                bmax = std::max(bmax, std::abs(std::sqrt(double(y.dot(gi * y))) - 1.0));
            }
            rs.push_back(r);
            dev.push_back(dmax);
            gam.push_back(gmax);
            curv.push_back(cmax);
            bdf.push_back(bmax);
        }
        out.metric_deviation = loglog_slope(rs, dev, 1e-300);
        out.christoffel = loglog_slope(rs, gam, 1e-300);
        out.curvature = loglog_slope(rs, curv, 1e-14);
        out.bdf_normalization = loglog_slope(rs, bdf, 1e-300);
        const double tol = 0.3;
        bool ok = true;
        if (out.metric_deviation.used >= 2) ok = ok && out.metric_deviation.slope <= -m + tol;
        if (out.christoffel.used >= 2) ok = ok && out.christoffel.slope <= -(m + 1) + tol;
        if (out.curvature.used >= 3) ok = ok && out.curvature.slope <= -(m + 2) + tol;
        // rho0^{-2}|d rho0|_g = 1 + O(rho0^2); binding only when m == 1
        if (m == 1 && out.bdf_normalization.used >= 2)
            ok = ok && out.bdf_normalization.slope <= -2 + tol;
        out.pass = ok;
        return out;
    }

    double fd_step(const Vec& x) const { return 1e-5 * std::max(1.0, x.norm()); }

    // cone tip exclusion test
    void check_domain(const Vec& x) const {
        if (kind_ == Kind::cone2d) {
            const double r = x.norm();
            if (r <= cone_->exclusion_radius)
                throw std::domain_error("point inside cone tip exclusion zone (r=" +
                                        format_double(r) + ")");
        }
    }

private:
    static double condition_estimate(const Mat& g) {
        Eigen::SelfAdjointEigenSolver<Mat> es(g);
        const auto& ev = es.eigenvalues();
        return std::abs(ev.maxCoeff()) / std::max(1e-300, std::abs(ev.minCoeff()));
    }

    Vec fibonacci_direction(int i, int total) const {
        Vec y = Vec::Zero(n_);
        if (n_ == 2) {
            const double th = 2.0 * kPi * i / total;
            y << std::cos(th), std::sin(th);
        } else if (n_ == 3) {
            const double z = 1.0 - 2.0 * (i + 0.5) / total;
            const double phi = i * 2.399963229728653;  // golden angle
            const double rr = std::sqrt(std::max(0.0, 1.0 - z * z));
            y << rr * std::cos(phi), rr * std::sin(phi), z;
        } else {
            // deterministic low-discrepancy-ish directions for n >= 4
            for (int k = 0; k < n_; ++k)
                y(k) = std::cos((i + 1.0) * (k + 1.0) * 0.7390851332151607);
            y.normalize();
        }
        return y;
    }

    // -- cone --
    // phi(r)/r and its r-derivative; w := phi/r plays the role of the local
    // angular stretch, so g = P_rad + w^2 P_ang in Cartesian components.
    double cone_phi(double r) const {
        const double r0 = cone_->smoothing_radius;
        const double c1 = cone_->slope - 1.0;
        const double u = r / r0;
        if (u >= 1.0) return r + c1 * (r - 0.5 * r0);
        if (u <= 0.0) return r;
        // integral of the quintic smoothstep: u^4 (2.5 - 3 u + u^2)
        const double Q = u * u * u * u * (2.5 - 3.0 * u + u * u);
        return r + c1 * r0 * Q;
    }
    double cone_phi_dr(double r) const {
        return 1.0 + (cone_->slope - 1.0) * smoothstep5(r / cone_->smoothing_radius);
    }

    Mat cone_metric(const Vec& x) const {
        check_domain(x);
        const double r = x.norm();
        if (r < 1e-14) return Mat::Identity(2, 2);
        const double w = cone_phi(r) / r;
        Vec perp(2);
        perp << -x(1), x(0);
        return Mat((x * x.transpose() + w * w * (perp * perp.transpose())) / (r * r));
    }

    Mat cone_metric_deriv(const Vec& x, int k) const {
        check_domain(x);
        const double r = x.norm();
        if (r < 1e-14) return Mat::Zero(2, 2);
        const double phi = cone_phi(r), dphi = cone_phi_dr(r);
        const double w = phi / r;
        const double dw = (dphi * r - phi) / (r * r);
        Vec perp(2), ek = Vec::Zero(2), ekp(2);
        perp << -x(1), x(0);
        ek(k) = 1.0;
        ekp << -ek(1), ek(0);
        const double drdk = x(k) / r;
        Mat d = (ek * x.transpose() + x * ek.transpose() +
                 w * w * (ekp * perp.transpose() + perp * ekp.transpose()) +
                 2.0 * w * dw * drdk * (perp * perp.transpose())) /
                (r * r);
        d -= 2.0 * drdk / (r * r * r) *
             (x * x.transpose() + w * w * (perp * perp.transpose()));
        return d;
    }

    // -- normal form: g(x) = (I + s(rho) P M(y) P)^{-1}, rho = 1/|x| --
    Mat nf_inner(const Vec& x, Mat* dinner_dk = nullptr, int k = -1) const {
        const double r = x.norm();
        const double rho = 1.0 / r;
        const Vec y = x / r;
        const Mat P = sphere::tangent_projector(y);
        const double s = pert_->scale(rho);
        Mat inner = Mat::Identity(n_, n_);
        Mat M;
        if (s != 0.0) {
            M = pert_->h_m.ambient(y);
            inner += s * (P * M * P);
        }
        if (dinner_dk) {
            *dinner_dk = Mat::Zero(n_, n_);
            if (s != 0.0 || pert_->scale_drho(rho) != 0.0) {
                if (s == 0.0) M = pert_->h_m.ambient(y);
                const double drho_dk = -x(k) / (r * r * r);
                const double ds = pert_->scale_drho(rho) * drho_dk;
                const Vec dy = (Vec::Unit(n_, k) - y * y(k)) / r;
                const Mat dP = -(dy * y.transpose() + y * dy.transpose());
                const Mat dM = pert_->h_m.ambient_deriv(y, dy);
                *dinner_dk = ds * (P * M * P) +
                             s * (dP * M * P + P * dM * P + P * M * dP);
            }
        }
        return inner;
    }

    Mat nf_metric(const Vec& x) const {
        // The taper guarantees the perturbation vanishes for |x| <= inner
        // radius (>= 1), so rho = 1/|x| is exact wherever the metric differs
        // from Euclidean.
        const double r = x.norm();
        if (r < 1e-12) return Mat::Identity(n_, n_);
        const Mat inner = nf_inner(x);
        return inner.ldlt().solve(Mat::Identity(n_, n_));
    }

    Mat nf_metric_deriv(const Vec& x, int k) const {
        const double r = x.norm();
        if (r < 1e-12) return Mat::Zero(n_, n_);
        Mat dinner;
        const Mat inner = nf_inner(x, &dinner, k);
        const Mat g = inner.ldlt().solve(Mat::Identity(n_, n_));
        return Mat(-g * dinner * g);
    }

    // -- cartesian terms --
    double cart_cutoff(double r) const { return smooth_ramp(r, cutoff_, 2.0 * cutoff_); }
    double cart_cutoff_dr(double r) const { return smooth_ramp_deriv(r, cutoff_, 2.0 * cutoff_); }

    Mat cart_deviation(const Vec& x) const {
        const double r = x.norm();
        Mat d = Mat::Zero(n_, n_);
        if (r < 1e-12) return d;
        const Vec y = x / r;
        for (const auto& t : *terms_) {
            switch (t.profile) {
                case CartesianTerm::Profile::power: {
                    const double f = cart_cutoff(r) * std::pow(r, -double(decay_order_ + t.upower)) *
                                     t.poly.eval(y);
                    d += f * t.coef;
                    break;
                }
                case CartesianTerm::Profile::gaussian: {
                    const double z = (r - t.center) / t.width;
                    d += std::exp(-z * z) * t.poly.eval(y) * t.coef;
                    break;
                }
                case CartesianTerm::Profile::conformal_gaussian: {
                    const double z = (r - t.center) / t.width;
                    const double phi = t.bump_amp * std::exp(-z * z);
                    d += (std::exp(2.0 * phi) - 1.0) * Mat::Identity(n_, n_);
                    break;
                }
            }
        }
        return d;
    }

    Mat cart_deviation_deriv(const Vec& x, int k) const {
        const double r = x.norm();
        Mat d = Mat::Zero(n_, n_);
        if (r < 1e-12) return d;
        const Vec y = x / r;
        const double drdk = x(k) / r;
        const Vec dy = (Vec::Unit(n_, k) - y * y(k)) / r;
        for (const auto& t : *terms_) {
            switch (t.profile) {
                case CartesianTerm::Profile::power: {
                    const double pw = -double(decay_order_ + t.upower);
                    const double rad = cart_cutoff(r) * std::pow(r, pw);
                    const double drad = (cart_cutoff_dr(r) * std::pow(r, pw) +
                                         cart_cutoff(r) * pw * std::pow(r, pw - 1.0)) * drdk;
                    d += (drad * t.poly.eval(y) + rad * t.poly.gradient(y).dot(dy)) * t.coef;
                    break;
                }
                case CartesianTerm::Profile::gaussian: {
                    const double z = (r - t.center) / t.width;
                    const double e = std::exp(-z * z);
                    const double de = e * (-2.0 * z / t.width) * drdk;
                    d += (de * t.poly.eval(y) + e * t.poly.gradient(y).dot(dy)) * t.coef;
                    break;
                }
                case CartesianTerm::Profile::conformal_gaussian: {
                    const double z = (r - t.center) / t.width;
                    const double phi = t.bump_amp * std::exp(-z * z);
                    const double dphi = phi * (-2.0 * z / t.width) * drdk;
                    d += 2.0 * std::exp(2.0 * phi) * dphi * Mat::Identity(n_, n_);
                    break;
                }
            }
        }
        return d;
    }

    bool euclidean_tail() const {
        // cartesian_ae with only compactly supported (gaussian/conformal)
        // terms is exactly Euclidean far out.
        for (const auto& t : *terms_)
            if (t.profile == CartesianTerm::Profile::power) return false;
        return true;
    }

    Kind kind_ = Kind::euclidean;
    int n_ = 2;
    int decay_order_ = 3;
    std::optional<Cone2dParams> cone_;
    std::shared_ptr<PerturbationSpec> pert_;
    std::shared_ptr<std::vector<CartesianTerm>> terms_;
    double cutoff_ = 1.0;
};

}  // namespace scatlab::metrics
