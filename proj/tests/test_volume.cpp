#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "scatlab/volume.hpp"

#include <cmath>
#include <random>

using namespace scatlab;
using namespace scatlab::volume;
using namespace scatlab::metrics;
using sphere::Poly;

namespace {

MetricModel nf_model(int n, int m, double amp) {
    PerturbationSpec spec;
    spec.m = m;
    spec.amplitude = amp;
    auto e = [n](int p) {
        std::vector<int> v(size_t(n), 0);
        v[size_t(n - 1)] = p;
        return v;
    };
    Poly q(n, {{3.0, e(0)}, {-30.0, e(2)}, {35.0, e(4)}});
    spec.h_m = sphere::poly_weighted_metric(q);
    return MetricModel::normal_form_ae(n, std::move(spec));
}

std::mt19937 rng(777);

// random smooth SPD family with bounded inverse on [-R, R]
std::function<Mat(double)> random_spd_family(int k, double R) {
    std::uniform_real_distribution<double> u(-0.4, 0.4);
    Mat S0(k, k), S1(k, k), S2(k, k);
    auto rnd = [&](Mat& S) {
        for (int i = 0; i < k; ++i)
            for (int j = i; j < k; ++j) S(i, j) = S(j, i) = u(rng);
    };
    rnd(S0);
    rnd(S1);
    rnd(S2);
    const double w = kPi / R;
    return [=](double t) {
        Mat S = S0 + std::sin(w * t) * S1 + std::cos(2.0 * w * t) * S2;
        Eigen::SelfAdjointEigenSolver<Mat> es(S);
        Mat out = Mat::Zero(k, k);
        for (int i = 0; i < k; ++i)
            out += std::exp(es.eigenvalues()(i)) * es.eigenvectors().col(i) *
                   es.eigenvectors().col(i).transpose();
        return out;
    };
}

}  // namespace

TEST_CASE("euclidean cylinder volumes") {
    CHECK(std::abs(vol_euclidean_cylinder(1.0, 3) - 2.0 * kPi) < 1e-14);
    CHECK(std::abs(vol_euclidean_cylinder(1.0, 2) - 4.0) < 1e-14);
    CHECK(vol_euclidean_cylinder(0.0, 3) == 0.0);
}

TEST_CASE("cylinder volume on the euclidean model matches the closed form") {
    auto m = MetricModel::euclidean(2);
    CylinderSpec spec;
    spec.R = 6.0;
    spec.n_radial = 10;
    spec.n_t = 16;
    spec.family.T_start = 60.0;
    auto v = vol_g_cylinder(m, spec);
    CHECK(std::abs(v.value - v.euclidean) < 1e-8 * v.euclidean);

    auto m3 = MetricModel::euclidean(3);
    CylinderSpec spec3;
    spec3.R = 4.0;
    spec3.n_radial = 6;
    spec3.n_angular = 8;
    spec3.n_t = 12;
    spec3.family.T_start = 60.0;
    auto v3 = vol_g_cylinder(m3, spec3);
    CHECK(std::abs(v3.value - v3.euclidean) < 1e-8 * v3.euclidean);
}

TEST_CASE("cylinder volume difference scales linearly in the amplitude") {
    CylinderSpec spec;
    spec.R = 8.0;
    spec.n_radial = 8;
    spec.n_inner = 24;
    spec.n_t = 16;
    spec.family.T_start = 80.0;
    auto m1 = nf_model(2, 3, 0.02);
    auto m2 = nf_model(2, 3, 0.01);
    const double d1 = vol_g_cylinder(m1, spec).difference;
    const double d2 = vol_g_cylinder(m2, spec).difference;
    CHECK(std::abs(d1) > 1e-6);
    CHECK(std::abs(d1 / d2 - 2.0) < 0.08);
}

TEST_CASE("direct region volume oracle in 2d") {
    // polygonize F_R from its parameter-boundary geodesics and integrate
    // sqrt(det g) over the region on a grid; independent of det A
    auto m = nf_model(2, 3, 0.1);
    const double R = 5.0;
    Vec p_minus(2);
    p_minus << 0, -1;
    FamilyParams par;
    par.T_start = 60.0;
    par.T_end = R + 1.0;

    // boundary curves: eta = +-R over t in [-R, R], and t = +-R over eta
    std::vector<Vec> poly;
    const int M = 60;
    auto traj_at = [&](double eta_val) {
        Vec eta(2);
        eta << eta_val, 0.0;
        return jacobi::boundary_geodesic(m, p_minus, eta, par);
    };
    {
        auto tr = traj_at(R);
        for (int i = 0; i <= M; ++i)
            poly.push_back(tr.single().sol.dense.eval(-R + 2.0 * R * i / M).head(2));
    }
    for (int i = 1; i <= M; ++i) {  // t = +R edge, eta from R to -R
        auto tr = traj_at(R - 2.0 * R * i / M);
        poly.push_back(tr.single().sol.dense.eval(R).head(2));
    }
    {
        auto tr = traj_at(-R);
        for (int i = 1; i <= M; ++i)
            poly.push_back(tr.single().sol.dense.eval(R - 2.0 * R * i / M).head(2));
    }
    for (int i = 1; i < M; ++i) {  // t = -R edge, eta from -R to R
        auto tr = traj_at(-R + 2.0 * R * i / M);
        poly.push_back(tr.single().sol.dense.eval(-R).head(2));
    }

    auto inside = [&](const Vec& x) {
        bool in = false;
        for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
            const bool c = ((poly[i](1) > x(1)) != (poly[j](1) > x(1))) &&
                           (x(0) < (poly[j](0) - poly[i](0)) * (x(1) - poly[i](1)) /
                                           (poly[j](1) - poly[i](1)) +
                                       poly[i](0));
            if (c) in = !in;
        }
        return in;
    };
    double lo0 = 1e300, hi0 = -1e300, lo1 = 1e300, hi1 = -1e300;
    for (const auto& v : poly) {
        lo0 = std::min(lo0, v(0));
        hi0 = std::max(hi0, v(0));
        lo1 = std::min(lo1, v(1));
        hi1 = std::max(hi1, v(1));
    }
    const int G = 1000;
    double direct = 0.0;
    for (int i = 0; i < G; ++i)
        for (int j = 0; j < G; ++j) {
            Vec x(2);
            x << lo0 + (hi0 - lo0) * (i + 0.5) / G, lo1 + (hi1 - lo1) * (j + 0.5) / G;
            if (inside(x)) direct += m.sqrt_det(x);
        }
    direct *= (hi0 - lo0) * (hi1 - lo1) / double(G) / double(G);

    CylinderSpec spec;
    spec.R = R;
    spec.n_radial = 10;
    spec.n_inner = 32;
    spec.n_t = 16;
    spec.family = par;
    auto v = vol_g_cylinder(m, spec);
    CHECK(std::abs(v.value - direct) < 1e-2 * v.value);
}

TEST_CASE("quadrature refinement stability") {
    auto m = nf_model(2, 3, 0.03);
    CylinderSpec a;
    a.R = 8.0;
    a.n_radial = 8;
    a.n_inner = 32;
    a.n_t = 16;
    a.family.T_start = 80.0;
    CylinderSpec b = a;
    b.n_radial = 12;
    b.n_inner = 48;
    b.n_t = 24;
    const double va = vol_g_cylinder(m, a).value;
    const double vb = vol_g_cylinder(m, b).value;
    CHECK(std::abs(va - vb) < 2e-4 * std::abs(vb));
}

TEST_CASE("jensen determinant gap") {
    // identity family: both sides vanish
    auto id = [](double) { return Mat::Identity(2, 2); };
    auto g0 = jensen_det_gap(id, 10.0);
    CHECK(std::abs(g0.lhs) < 1e-12);
    CHECK(std::abs(g0.rhs_factor) < 1e-12);

    // random smooth SPD families: gap nonnegative, admissible constant positive
    for (int trial = 0; trial < 25; ++trial) {
        auto A = random_spd_family(2, 7.0);
        auto g = jensen_det_gap(A, 7.0);
        CHECK(g.lhs >= -1e-10);
        CHECK(g.admissible_c > 0.0);
    }

    // jacobi families from an AE model: gap nonnegative and shrinking with
    // the amplitude
    Vec p_minus(3), eta(3);
    p_minus << 0, 0, -1;
    eta << 2.0, 0.5, 0;
    FamilyParams par;
    par.T_start = 60.0;
    par.T_end = 40.0;
    double g_big, g_small;
    {
        auto fam = jacobi::stable_family(nf_model(3, 3, 0.02), p_minus, eta, par);
        g_big = jensen_det_gap([&](double t) { return fam.A_at(t); }, 35.0).lhs;
        auto fam2 = jacobi::stable_family(nf_model(3, 3, 0.005), p_minus, eta, par);
        g_small = jensen_det_gap([&](double t) { return fam2.A_at(t); }, 35.0).lhs;
    }
    CHECK(g_big >= -1e-10);
    CHECK(g_small >= -1e-10);
    CHECK(g_small < g_big);
}

TEST_CASE("hoelder stability gap") {
    // constant f: equality, deficiency zero
    auto c = holder_gap([](double) { return 2.5; }, 9.0, 3);
    CHECK(std::abs(c.lhs - c.base) < 1e-10 * c.lhs);
    CHECK(c.deficiency < 1e-12);

    // strictly varying f: strict inequality with positive deficiency
    auto s = holder_gap([](double t) { return 1.0 + 0.5 * std::sin(kPi * t / 9.0); }, 9.0, 3);
    CHECK(s.deficiency > 1e-4);
    CHECK(s.lhs > s.base);
    CHECK(s.admissible_c > 0.0);
    // gap stays nonnegative for any c below the admissible constant
    CHECK(s.gap(0.5 * s.admissible_c) >= 0.0);

    // random positive families
    std::uniform_real_distribution<double> u(0.1, 0.6);
    for (int trial = 0; trial < 25; ++trial) {
        const double a = u(rng), b = u(rng);
        auto f = [a, b](double t) { return 1.0 + a * std::sin(t) + b * 0.5 * std::cos(2 * t); };
        auto g = holder_gap(f, 6.0, 3);
        CHECK(g.lhs >= g.base * (1.0 - 1e-12));
        CHECK(g.admissible_c >= 0.0);
    }
}
