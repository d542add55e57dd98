#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "scatlab/core.hpp"

#include <cmath>

using namespace scatlab;

TEST_CASE("smoothstep5 endpoints and monotonicity") {
    CHECK(smoothstep5(-1.0) == 0.0);
    CHECK(smoothstep5(0.0) == 0.0);
    CHECK(smoothstep5(1.0) == 1.0);
    CHECK(smoothstep5(2.0) == 1.0);
    double prev = 0.0;
    for (int i = 1; i <= 100; ++i) {
        double v = smoothstep5(i / 100.0);
        CHECK(v >= prev);
        prev = v;
    }
    // derivative consistency
    const double h = 1e-6;
    for (double u : {0.2, 0.5, 0.8}) {
        double fd = (smoothstep5(u + h) - smoothstep5(u - h)) / (2 * h);
        CHECK(std::abs(fd - smoothstep5_deriv(u)) < 1e-8);
    }
}

TEST_CASE("boundary rho profile") {
    CHECK(boundary_rho_radial(2.0) == 0.5);
    CHECK(boundary_rho_radial(1.0) == 1.0);
    CHECK(boundary_rho_radial(0.25) == 1.0);
    // positive and continuous through the blend zone
    for (double r = 0.4; r < 1.1; r += 0.01) {
        CHECK(boundary_rho_radial(r) > 0.5);
        CHECK(boundary_rho_radial(r) < 1.2);
    }
}

TEST_CASE("gauss-legendre integrates polynomials exactly") {
    auto q = gauss_legendre(8);
    // degree 15 is exact for 8 nodes
    auto f = [](double x) { return 3 * std::pow(x, 15) - 2 * std::pow(x, 8) + x; };
    double got = gl_integrate(f, -1.0, 1.0, q);
    double expect = -2.0 * 2.0 / 9.0;  // odd terms cancel; x^8 term: 2/9 each side
    CHECK(std::abs(got - expect) < 1e-13);

    // weights sum to interval length
    double s = 0;
    for (double w : q.weights) s += w;
    CHECK(std::abs(s - 2.0) < 1e-13);
}

TEST_CASE("linear and loglog fits recover slopes") {
    std::vector<double> xs, ys;
    for (int i = 1; i <= 20; ++i) {
        xs.push_back(i);
        ys.push_back(2.5 - 3.0 * i);
    }
    auto [a, b] = linear_fit(xs, ys);
    CHECK(std::abs(a - 2.5) < 1e-12);
    CHECK(std::abs(b + 3.0) < 1e-12);

    std::vector<double> rs, vs;
    for (int i = 0; i < 10; ++i) {
        double r = 2.0 * std::pow(1.7, i);
        rs.push_back(r);
        vs.push_back(5.0 * std::pow(r, -3.0));
    }
    auto fit = loglog_slope(rs, vs);
    CHECK(std::abs(fit.slope + 3.0) < 1e-10);
}

TEST_CASE("unit ball volumes") {
    CHECK(std::abs(unit_ball_volume(1) - 2.0) < 1e-14);
    CHECK(std::abs(unit_ball_volume(2) - kPi) < 1e-14);
    CHECK(std::abs(unit_ball_volume(3) - 4.0 * kPi / 3.0) < 1e-14);
}

TEST_CASE("format_double round-trips") {
    for (double v : {1.0, -0.1, 3.141592653589793, 1e-17, 7.25e300}) {
        std::string s = format_double(v);
        CHECK(std::stod(s) == v);
    }
}

TEST_CASE("tangent basis is orthonormal with last column y") {
    for (int n : {2, 3, 4}) {
        Vec y = Vec::LinSpaced(n, 0.3, 1.7).normalized();
        Mat B = tangent_basis(y);
        CHECK((B.col(n - 1) - y).norm() < 1e-14);
        CHECK((B.transpose() * B - Mat::Identity(n, n)).norm() < 1e-12);
    }
}
