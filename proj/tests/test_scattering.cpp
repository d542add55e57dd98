#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "scatlab/scattering.hpp"

#include <cmath>
#include <random>

using namespace scatlab;
using namespace scatlab::scattering;
using namespace scatlab::metrics;
using sphere::GreatCircle;
using sphere::Poly;
using sphere::XrayRange;

namespace {

Vec v3(double a, double b, double c) {
    Vec v(3);
    v << a, b, c;
    return v;
}

MetricModel nf_with(const sphere::SymTensorField& h_m, int m, double amp) {
    PerturbationSpec spec;
    spec.m = m;
    spec.amplitude = amp;
    spec.h_m = h_m;
    return MetricModel::normal_form_ae(3, std::move(spec));
}

sphere::SymTensorField generic_hm() {
    // y1-weighted round metric plus an off-axis covector product
    Poly p(3, {{0.6, {0, 1, 0}}, {0.3, {0, 0, 1}}});
    Vec a(3), b(3);
    a << 1.0, 0.2, -0.1;
    b << -0.3, 0.8, 0.5;
    return sphere::add(sphere::poly_weighted_metric(Poly::coordinate(3, 0)),
                       sphere::scale(sphere::poly_covector_product(p, {a, b}), 0.5));
}

sphere::SymTensorField killing_hm() {
    auto k1 = sphere::killing_two_tensor(sphere::rotation_generator(3, 0, 1),
                                         sphere::rotation_generator(3, 0, 1));
    auto k2 = sphere::killing_two_tensor(sphere::rotation_generator(3, 1, 2),
                                         sphere::rotation_generator(3, 0, 2));
    return sphere::add(sphere::add(k1, sphere::scale(k2, 0.4)),
                       sphere::scale(sphere::round_metric(3), 0.2));
}

std::mt19937 rng(4242);
Vec random_unit(int n) {
    std::normal_distribution<double> g;
    Vec y(n);
    for (int i = 0; i < n; ++i) y(i) = g(rng);
    return y.normalized();
}
Vec random_tangent(const Vec& y) {
    std::normal_distribution<double> g;
    Vec v(y.size());
    for (int i = 0; i < y.size(); ++i) v(i) = g(rng);
    v -= v.dot(y) * y;
    return v.normalized();
}

}  // namespace

TEST_CASE("euclidean scattering map has zero deviation") {
    auto m = MetricModel::euclidean(3);
    for (double d : {0.7, 3.0, 20.0}) {
        auto s = scattering_map(m, v3(0, 0, -1), v3(d, 0, 0));
        CHECK(s.deviation < 1e-6);
    }
}

TEST_CASE("deviation scales linearly in the amplitude at fixed eta") {
    auto h = generic_hm();
    const Vec y = v3(0, 0, -1);
    const Vec eta = v3(7.0, 1.0, 0);
    double d1, d2;
    {
        auto m1 = nf_with(h, 3, 0.02);
        d1 = scattering_map(m1, y, eta).deviation;
        auto m2 = nf_with(h, 3, 0.01);
        d2 = scattering_map(m2, y, eta).deviation;
    }
    CHECK(d1 > 1e-7);
    CHECK(std::abs(d1 / d2 - 2.0) < 0.05);
}

TEST_CASE("slow field at eps=0 follows the circle solution") {
    auto m = MetricModel::euclidean(3);
    GreatCircle c(v3(0, 0, 1), v3(1, 0, 0));
    // integrate the eps=0 slow field and compare against the closed form
    ode::Rhs rhs = [&](double, const Vec& u, Vec& du) { du = slow_field(m, 0.0, u); };
    Vec u0 = circle_solution(c, 0.0);
    auto sol = ode::integrate(rhs, 0.0, u0, kPi);
    for (double s : {0.5, 1.5, 2.5, kPi}) {
        CHECK((sol.dense.eval(s) - circle_solution(c, s)).norm() < 1e-8);
    }
    // energy conservation at eps=0
    Vec uend = sol.y_end;
    Vec yend = uend.segment(2, 3), etaend = uend.segment(5, 3);
    CHECK(std::abs(etaend.squaredNorm() - 1.0) < 1e-10);
    // rho~ returns to 0 at s = pi
    CHECK(std::abs(uend(0)) < 1e-10);
}

TEST_CASE("linearized scattering: zero tensor gives zero correction") {
    auto zero = sphere::scale(sphere::round_metric(3), 0.0);
    GreatCircle c(v3(0, 0, 1), v3(0.6, 0.8, 0));
    auto lin = linearized_scattering(zero, 3, c);
    CHECK(lin.c_m_pi.norm() < 1e-12);
    CHECK(lin.tau_m == 0.0);
}

TEST_CASE("fundamental matrix block structure") {
    GreatCircle c(v3(0, 0, 1), v3(1, 0, 0));
    auto lin = linearized_scattering(generic_hm(), 3, c);
    for (size_t i = 0; i < lin.s_grid.size(); i += 8) {
        const double s = lin.s_grid[i];
        const Mat& R = lin.R_grid[i];
        // (rho~, xi~0) block is the rotation by s
        Mat rot(2, 2);
        rot << std::cos(s), std::sin(s), -std::sin(s), std::cos(s);
        CHECK((R.topLeftCorner(2, 2) - rot).norm() < 1e-8);
        // pure (rho~, xi~0) perturbations do not leak into (y, eta)
        CHECK(R.bottomLeftCorner(6, 2).norm() < 1e-8);
        // the energy row: dE(c(s)) R(s) = dE(c(0)) on constraint-tangent
        // perturbations (E conserved along the linearized flow)
        const Vec c0 = circle_solution(c, s);
        Vec dE = Vec::Zero(8), dE0 = Vec::Zero(8);
        dE.segment(5, 3) = 2.0 * c0.segment(5, 3);
        dE0.segment(5, 3) = 2.0 * c.eta_hat;
        // tangent probes at s=0: y.dy = 0, y.d_eta + eta.dy = 0
        const Vec y0v = c.y, e0v = c.eta_hat;
        Vec bv(3);
        bv << y0v(1) * e0v(2) - y0v(2) * e0v(1), y0v(2) * e0v(0) - y0v(0) * e0v(2),
            y0v(0) * e0v(1) - y0v(1) * e0v(0);
        std::vector<Vec> probes;
        for (int comp = 0; comp < 2; ++comp) {
            Vec d = Vec::Zero(8);
            d(comp) = 1.0;
            probes.push_back(d);
        }
        for (const Vec& dy : {e0v, bv}) {
            Vec d = Vec::Zero(8);
            d.segment(2, 3) = dy;
            d.segment(5, 3) = -(e0v.dot(dy)) * y0v;  // keeps y.eta = 0
            probes.push_back(d);
        }
        for (const Vec& de : {e0v, bv}) {
            Vec d = Vec::Zero(8);
            d.segment(5, 3) = de;
            probes.push_back(d);
        }
        for (const Vec& d : probes)
            CHECK(std::abs(dE.dot(R * d) - dE0.dot(d)) < 1e-7);
    }
}

TEST_CASE("killing h_m closed forms") {
    auto h = killing_hm();
    GreatCircle c(v3(0, 0, 1), v3(0.6, 0.8, 0));
    auto lin = linearized_scattering(h, 3, c);
    auto rep = moment_identities(h, 3, c);

    // rho_m(pi) = -(m/2+1) h_m(y,eta) int_0^pi sin^{m+2}
    CHECK(std::abs(lin.rho_m_pi - rep.rhom_prediction) < 1e-8);
    // the rho-component of the mismatch vanishes structurally
    CHECK(lin.rho_component_residual < 1e-9);
    // xi~0 component of the obstruction collapses for killing tensors (eqcos)
    CHECK(std::abs(lin.mismatch(1)) < 1e-8);
    // energyvar and eqcos residuals vanish
    CHECK(std::abs(rep.energyvar) < 1e-10);
    CHECK(std::abs(rep.eqcos) < 1e-10);
    // the eqdirection combination evaluates to its sine-moment value
    const double predicted =
        (rep.sine_moment_m - (0.5 * 3 + 1.0) * rep.sine_moment_m2) * h.eval(c.y, {c.eta_hat, c.eta_hat});
    CHECK(std::abs(rep.eqdirection - predicted) < 1e-10);
}

TEST_CASE("energy variation computed two ways") {
    auto h = generic_hm();
    GreatCircle c(v3(0.2, -0.4, 0.89).normalized(), Vec(v3(0.9, 0.3, 0.1) -
                                                        v3(0.9, 0.3, 0.1).dot(v3(0.2, -0.4, 0.89).normalized()) *
                                                            v3(0.2, -0.4, 0.89).normalized()));
    auto lin = linearized_scattering(h, 3, c);
    // E-component of c_m at pi: dE . c_m = 2 eta . c_m_eta = - int sin^m H0h
    // (the energy pairing dE(H_m) = -H0 h_m with H0 the flow of E/2)
    const Vec c0 = circle_solution(c, kPi);
    const Vec eta_pi = c0.segment(5, 3);
    const double from_cm = 2.0 * eta_pi.dot(lin.c_m_pi.segment(5, 3));
    auto rep = moment_identities(h, 3, c);
    CHECK(std::abs(from_cm - (-rep.energyvar)) < 1e-8);
}

TEST_CASE("finite-difference order and coefficient match the linearization") {
    auto h = generic_hm();
    const double amp = 0.4;
    auto m = nf_with(h, 3, amp);
    const Vec y0 = v3(0, 0, -1);
    Vec eta0 = v3(1, 0, 0);  // unit h0-norm at y0
    auto fd = scattering_derivative_fd(m, y0, eta0, 3);
    CHECK(std::abs(fd.order - 3.0) < 0.3);

    // linearized prediction: the model family has h_rho^{-1} = h0^{-1} +
    // amp rho^3 h_m near the boundary, so the eps^3 coefficient is amp *
    // (the unit-amplitude mismatch)
    GreatCircle c(y0, eta0);
    auto lin = linearized_scattering(h, 3, c);
    Vec predicted(6);
    predicted.head(3) = lin.mismatch.segment(2, 3);
    predicted.tail(3) = lin.mismatch.segment(5, 3);
    predicted *= amp;
    CHECK((fd.coefficient - predicted).norm() < 0.05 * predicted.norm());
    // travel-time shift coefficient
    CHECK(std::abs(fd.tau_m_fd - amp * lin.tau_m) < 0.05 * std::abs(amp * lin.tau_m));
}

TEST_CASE("higher-order perturbation has order >= m+1") {
    // family whose leading tensor sits at rho^{m+1}: label it with m order
    // probes and the fitted order comes out at least m+1
    auto h = generic_hm();
    auto m4 = nf_with(h, 4, 0.4);
    const Vec y0 = v3(0, 0, -1);
    Vec eta0 = v3(1, 0, 0);
    auto fd = scattering_derivative_fd(m4, y0, eta0, 3);
    CHECK(fd.order > 3.5);
}

TEST_CASE("moment identities for potential tensors and parity families") {
    // closed-circle integrals of H0 h vanish for any h (exact derivative):
    Poly p(3, {{1.0, {1, 1, 0}}, {-0.5, {0, 0, 2}}});
    Vec a(3), b(3);
    a << 0.2, 1.0, -0.4;
    b << 0.7, -0.3, 0.6;
    auto h = sphere::poly_covector_product(p, {a, b});
    for (int trial = 0; trial < 5; ++trial) {
        Vec y = random_unit(3);
        GreatCircle c(y, random_tangent(y));
        PhaseFunction H0h = [&](const Vec& yy, const Vec& tt) {
            return sphere::killing_energy_derivative(h, yy, tt);
        };
        CHECK(std::abs(weighted_phase_integral(H0h, c, 0, 0, XrayRange::full)) < 1e-10);
    }

    // parity families: odd coefficient matches m = 3, even matches m = 4
    auto h_odd = sphere::poly_weighted_metric(Poly::coordinate(3, 0));
    auto h_even = sphere::poly_weighted_metric(Poly::coordinate(3, 0, 2));
    Vec y = random_unit(3);
    GreatCircle c(y, random_tangent(y));
    CHECK(moment_identities(h_odd, 3, c).parity_residual < 1e-9);
    CHECK(moment_identities(h_even, 4, c).parity_residual < 1e-9);
    // mismatched parity violates the identity
    CHECK(moment_identities(h_even, 3, c).parity_residual > 1e-4);
}

TEST_CASE("integration-by-parts cascade at m=4") {
    // F restricting to a pure 6-mode on every circle: F = Re[((y+i eta).a)^6]
    // with an isotropic a; the sin^4-window hypothesis holds and the cascade
    // reduction must vanish as well
    Eigen::VectorXcd a(3);
    a << std::complex<double>(1, 0), std::complex<double>(0, 1), std::complex<double>(0, 0);
    PhaseFunction F = [a](const Vec& y, const Vec& t) {
        std::complex<double> z = 0;
        for (int i = 0; i < 3; ++i) z += (y(i) + std::complex<double>(0, 1) * t(i)) * a(i);
        std::complex<double> z6 = std::pow(z, 6);
        return z6.real();
    };
    PhaseFunction H0F = [a](const Vec& y, const Vec& t) {
        // d/ds F(e^{sH0}) = Re[-6 i z^6] since z -> e^{-is} z along circles
        std::complex<double> z = 0;
        for (int i = 0; i < 3; ++i) z += (y(i) + std::complex<double>(0, 1) * t(i)) * a(i);
        std::complex<double> z6 = std::pow(z, 6);
        return (std::complex<double>(0, -6) * z6).real();
    };
    for (int trial = 0; trial < 5; ++trial) {
        Vec y = random_unit(3);
        GreatCircle c(y, random_tangent(y));
        auto rep = cascade_reduction(F, H0F, 4, c);
        CHECK(std::abs(rep.hypothesis_integral) < 1e-10);  // sin^4-window kills 6-modes
        CHECK(rep.by_parts_residual < 1e-9);
        CHECK(std::abs(rep.reduced_integral) < 1e-10);     // sin^2-window too
    }
}

TEST_CASE("forward and reversed euclidean shots are consistent") {
    auto m = MetricModel::euclidean(3);
    Vec y = v3(0, 0, -1);
    Vec eta = v3(4.0, 1.5, 0);
    auto fwd = scattering_map(m, y, eta);
    // reversed data: start at the exit with the reflected covector
    auto rev = scattering_map(m, fwd.out.y, Vec(-fwd.out.eta));
    CHECK((rev.out.y - y).norm() < 1e-6);
    CHECK((rev.out.eta + eta).norm() < 1e-6);
}
