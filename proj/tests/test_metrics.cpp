#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "scatlab/metrics.hpp"

#include <cmath>
#include <random>

using namespace scatlab;
using namespace scatlab::metrics;
using sphere::Poly;

namespace {

// Independent Koszul oracle: Christoffels from central differences of the
// metric alone (never calls the model's analytic derivatives).
std::vector<Mat> fd_christoffel(const MetricModel& m, const Vec& x, double h = 1e-6) {
    const int n = m.dim();
    std::vector<Mat> dg(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
        Vec xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        dg[size_t(k)] = (m.metric(xp) - m.metric(xm)) / (2 * h);
    }
    const Mat gi = m.metric_inverse(x);
    std::vector<Mat> gamma(size_t(n), Mat::Zero(n, n));
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double s = 0;
                for (int l = 0; l < n; ++l)
                    s += gi(k, l) *
                         (dg[size_t(i)](j, l) + dg[size_t(j)](i, l) - dg[size_t(l)](i, j));
                gamma[size_t(k)](i, j) = 0.5 * s;
            }
    return gamma;
}

double max_gamma_diff(const std::vector<Mat>& a, const std::vector<Mat>& b) {
    double d = 0;
    for (size_t k = 0; k < a.size(); ++k) d = std::max(d, (a[k] - b[k]).cwiseAbs().maxCoeff());
    return d;
}

MetricModel sample_nf_model(int n, int m, double amp) {
    PerturbationSpec spec;
    spec.m = m;
    spec.amplitude = amp;
    spec.h_m = sphere::poly_weighted_metric(Poly(n, {{1.0, [n] {
                                                          std::vector<int> e(size_t(n), 0);
                                                          e[0] = 1;
                                                          return e;
                                                      }()}}));
    return MetricModel::normal_form_ae(n, std::move(spec));
}

std::mt19937 rng(999);
Vec random_point(int n, double rmin, double rmax) {
    std::normal_distribution<double> g;
    Vec x(n);
    for (int i = 0; i < n; ++i) x(i) = g(rng);
    x.normalize();
    std::uniform_real_distribution<double> u(rmin, rmax);
    return Vec(u(rng) * x);
}

}  // namespace

TEST_CASE("euclidean model") {
    auto m = MetricModel::euclidean(3);
    Vec x(3);
    x << 2, 0, 0;
    CHECK((m.metric(x) - Mat::Identity(3, 3)).norm() == 0.0);
    auto gamma = m.christoffel(x);
    for (const auto& gk : gamma) CHECK(gk.norm() == 0.0);
    auto R = m.riemann(x);
    for (double v : R.comp) CHECK(v == 0.0);
}

TEST_CASE("cone2d polar components") {
    Cone2dParams p;
    p.slope = 1.4;
    p.smoothing_radius = 1.0;
    auto m = MetricModel::cone2d(p);
    // exterior profile phi(r) = c r - (c-1) r0 / 2 (the exact cone of angle
    // 2 pi c about the offset apex)
    auto phi = [&](double r) { return p.slope * r - 0.5 * (p.slope - 1.0) * p.smoothing_radius; };
    // at (r, theta), pull the Cartesian metric back to polar components:
    // g_rr = e_r.g.e_r, g_tt = r^2 e_t.g.e_t with e_r, e_t unit polar frame
    for (double r : {2.0, 5.0, 11.0}) {
        for (double th : {0.3, 1.2, 4.0}) {
            Vec x(2), er(2), et(2);
            x << r * std::cos(th), r * std::sin(th);
            er << std::cos(th), std::sin(th);
            et << -std::sin(th), std::cos(th);
            const Mat g = m.metric(x);
            CHECK(std::abs(er.dot(g * er) - 1.0) < 1e-13);
            CHECK(std::abs(r * r * et.dot(g * et) - phi(r) * phi(r)) < 1e-10);
            CHECK(std::abs(er.dot(g * et)) < 1e-13);
        }
    }
    // polar christoffels of dr^2 + phi^2 dtheta^2:
    // Gamma^r_tt = -phi phi', Gamma^th_{r th} = phi'/phi.
    // transform the Cartesian symbols to polar at theta=0:
    // Gtilde^c_ab = (du^c/dx^k)[G^k_ij (dx^i/du^a)(dx^j/du^b) + d2x^k/du^a du^b]
    const double r0 = 3.0;
    Vec x0(2);
    x0 << r0, 0.0;
    auto gam = m.christoffel(x0);
    Vec dx_dr(2), dx_dt(2), d2x_dtdt(2), d2x_drdt(2);
    dx_dr << 1.0, 0.0;
    dx_dt << 0.0, r0;
    d2x_dtdt << -r0, 0.0;
    d2x_drdt << 0.0, 1.0;
    // Gamma^r_tt: du^r/dx = (1, 0)
    const double gamma_r_tt = dx_dt.dot(gam[0] * dx_dt) + d2x_dtdt(0);
    CHECK(std::abs(gamma_r_tt - (-phi(r0) * p.slope)) < 1e-8);
    // Gamma^theta_{r theta}: du^theta/dx = (0, 1/r)
    const double gamma_t_rt = (dx_dr.dot(gam[1] * dx_dt) + d2x_drdt(1)) / r0;
    CHECK(std::abs(gamma_t_rt - p.slope / phi(r0)) < 1e-8);

    // exact check: analytic christoffel agrees with the FD Koszul oracle
    for (int trial = 0; trial < 10; ++trial) {
        Vec x = random_point(2, 1.5, 20.0);
        CHECK(max_gamma_diff(m.christoffel(x), fd_christoffel(m, x)) < 1e-6);
    }
    // reduces to euclidean when c = 1
    Cone2dParams pe;
    pe.slope = 1.0;
    auto me = MetricModel::cone2d(pe);
    Vec xx(2);
    xx << 3.0, 4.0;
    CHECK((me.metric(xx) - Mat::Identity(2, 2)).norm() < 1e-14);
}

TEST_CASE("cone2d is flat outside the smoothing radius") {
    Cone2dParams p;
    p.slope = 0.8;
    p.smoothing_radius = 1.0;
    auto m = MetricModel::cone2d(p);
    for (double r : {1.5, 3.0, 10.0}) {
        Vec x(2);
        x << r * 0.6, r * 0.8;
        CHECK(std::abs(m.gauss_curvature(x)) < 1e-7);
    }
    // cap curvature is single-signed: positive for c < 1, negative for c > 1
    for (double r = 0.15; r < 1.0; r += 0.1) {
        Vec xc(2);
        xc << r, 0.0;
        CHECK(m.gauss_curvature(xc) > -1e-9);
    }
    Cone2dParams pw;
    pw.slope = 1.3;
    pw.smoothing_radius = 1.0;
    auto mw = MetricModel::cone2d(pw);
    for (double r = 0.15; r < 1.0; r += 0.1) {
        Vec xc(2);
        xc << r, 0.0;
        CHECK(mw.gauss_curvature(xc) < 1e-9);
    }
}

TEST_CASE("cone2d holonomy equals the angle defect") {
    // parallel transport around a circle r=const > r0; the rotation angle of
    // the transported vector relative to start is 2 pi (1 - c) (unrolling
    // oracle for the flat cone).
    Cone2dParams p;
    p.slope = 1.3;
    p.smoothing_radius = 1.0;
    auto m = MetricModel::cone2d(p);
    const double r = 4.0;
    const int N = 2000;
    auto rhs = [&](double th, const Vec& v) {
        Vec x(2), dx(2);
        x << r * std::cos(th), r * std::sin(th);
        dx << -r * std::sin(th), r * std::cos(th);
        auto gam = m.christoffel(x);
        Vec dv(2);
        for (int k = 0; k < 2; ++k) dv(k) = -dx.dot(gam[size_t(k)] * v);
        return dv;
    };
    Vec v(2);
    v << 1.0, 0.0;
    const double h = 2 * kPi / N;
    for (int i = 0; i < N; ++i) {  // rk4 transport
        const double th = h * i;
        Vec k1 = rhs(th, v);
        Vec k2 = rhs(th + 0.5 * h, Vec(v + 0.5 * h * k1));
        Vec k3 = rhs(th + 0.5 * h, Vec(v + 0.5 * h * k2));
        Vec k4 = rhs(th + h, Vec(v + h * k3));
        v += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    // rotation angle measured in the g-inner product at the base point
    Vec x0(2), v0(2);
    x0 << r, 0.0;
    v0 << 1.0, 0.0;
    const Mat g = m.metric(x0);
    const double cosang = v0.dot(g * v) / std::sqrt(v0.dot(g * v0) * v.dot(g * v));
    const double expect = 2 * kPi * (p.slope - 1.0);  // -defect = 2 pi (c - 1)
    CHECK(std::abs(std::abs(std::remainder(std::acos(std::clamp(cosang, -1.0, 1.0)), 2 * kPi)) -
                   std::abs(std::remainder(expect, 2 * kPi))) < 1e-6);
}

TEST_CASE("cone tip exclusion zone raises domain error") {
    Cone2dParams p;
    p.slope = 0.7;
    p.smoothing_radius = 1.0;
    p.exclusion_radius = 0.1;
    auto m = MetricModel::cone2d(p);
    Vec x(2);
    x << 0.05, 0.0;
    CHECK_THROWS_AS(m.metric(x), std::domain_error);
    x << 0.5, 0.0;
    CHECK_NOTHROW(m.metric(x));
}

TEST_CASE("normal form ae: zero perturbation gives identity") {
    auto m = sample_nf_model(3, 3, 0.0);
    for (int trial = 0; trial < 5; ++trial) {
        Vec x = random_point(3, 0.5, 30.0);
        CHECK((m.metric(x) - Mat::Identity(3, 3)).norm() < 1e-14);
    }
}

TEST_CASE("normal form ae: SPD, taper, and christoffel oracle") {
    auto m = sample_nf_model(3, 3, 0.4);
    // exactly euclidean inside the taper inner radius
    Vec xin(3);
    xin << 1.0, 0.5, 0.0;
    CHECK((m.metric(xin) - Mat::Identity(3, 3)).norm() < 1e-15);
    for (int trial = 0; trial < 10; ++trial) {
        Vec x = random_point(3, 3.0, 60.0);
        const Mat g = m.metric(x);
        Eigen::SelfAdjointEigenSolver<Mat> es(g);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
        CHECK((g - g.transpose()).norm() < 1e-15);
        CHECK(max_gamma_diff(m.christoffel(x), fd_christoffel(m, x)) <
              1e-6 * std::max(1.0, std::abs(m.christoffel(x)[0](0, 0))));
    }
    CHECK(m.positivity_threshold() > 0.4);
}

TEST_CASE("normal form ae decay orders") {
    auto m = sample_nf_model(3, 3, 0.5);
    auto fit = m.validate_decay(6.0);
    CHECK(fit.pass);
    CHECK(std::abs(fit.metric_deviation.slope + 3.0) < 0.3);
    CHECK(std::abs(fit.christoffel.slope + 4.0) < 0.3);
    CHECK(std::abs(fit.curvature.slope + 5.0) < 0.3);
    // bounded scaled deviations over [R0, 100 R0]
    double worst_dev = 0.0, worst_gam = 0.0;
    for (double r : {6.0, 12.0, 30.0, 90.0, 300.0, 600.0}) {
        Vec x(3);
        x << r, 0.0, 0.0;
        Vec y = x.normalized();
        worst_dev = std::max(worst_dev,
                             (m.metric(x) - Mat::Identity(3, 3)).norm() * std::pow(r, 3));
        auto gam = m.christoffel(x);
        double gmax = 0;
        for (auto& gk : gam) gmax = std::max(gmax, gk.cwiseAbs().maxCoeff());
        worst_gam = std::max(worst_gam, gmax * std::pow(r, 4));
    }
    CHECK(worst_dev < 10.0);
    CHECK(worst_gam < 40.0);
}

TEST_CASE("cartesian ae: decay fits and negative control") {
    const int n = 3;
    CartesianTerm t;
    t.profile = CartesianTerm::Profile::power;
    Mat C = Mat::Zero(n, n);
    C(0, 0) = 1.0;
    C(0, 1) = C(1, 0) = 0.5;
    C(2, 2) = -0.8;
    t.coef = C;
    t.poly = Poly(n, {{1.0, {0, 0, 0}}, {0.6, {1, 0, 0}}});
    auto m = MetricModel::cartesian_ae(n, 3, {t}, 1.0);
    auto fit = m.validate_decay(5.0);
    CHECK(fit.pass);
    CHECK(std::abs(fit.metric_deviation.slope + 3.0) < 0.3);
    CHECK(std::abs(fit.christoffel.slope + 4.0) < 0.3);
    CHECK(std::abs(fit.curvature.slope + 5.0) < 0.3);

    // analytic first derivatives match the FD oracle
    for (int trial = 0; trial < 10; ++trial) {
        Vec x = random_point(3, 3.0, 40.0);
        CHECK(max_gamma_diff(m.christoffel(x), fd_christoffel(m, x)) < 1e-8);
    }

    // negative control: deviation ~ |x|^{-1} while labeled m=3 must fail
    CartesianTerm bad = t;
    bad.upower = -2;
    auto mbad = MetricModel::cartesian_ae(n, 3, {bad}, 1.0);
    auto fbad = mbad.validate_decay(5.0);
    CHECK_FALSE(fbad.pass);
}

TEST_CASE("conformal gaussian bump curvature matches the analytic formula") {
    CartesianTerm t;
    t.profile = CartesianTerm::Profile::conformal_gaussian;
    t.center = 4.0;
    t.width = 1.0;
    t.bump_amp = 0.15;
    t.coef = Mat::Identity(2, 2);
    t.poly = Poly::constant(2, 1.0);
    auto m = MetricModel::cartesian_ae(2, 3, {t}, 1.0);
    // analytic K from the conformal formula vs numeric sectional curvature
    for (double r : {3.0, 4.0, 5.0}) {
        Vec x(2);
        x << r * 0.8, r * 0.6;
        const double ka = m.gauss_curvature(x);
        // numeric path: finite-difference curvature through christoffels
        Vec e1(2), e2(2);
        e1 << 1, 0;
        e2 << 0, 1;
        const Mat g = m.metric(x);
        Vec u = e1 / std::sqrt(e1.dot(g * e1));
        Vec w = e2 - (e2.dot(g * u)) * u;
        w /= std::sqrt(w.dot(g * w));
        const double kn = m.sectional_curvature(x, u, w);
        CHECK(std::abs(ka - kn) < 1e-5 * std::max(1.0, std::abs(ka)));
    }
}
