#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "scatlab/ode.hpp"

#include <cmath>

using namespace scatlab;
using namespace scatlab::ode;

TEST_CASE("exponential decay matches closed form") {
    Rhs rhs = [](double, const Vec& y, Vec& d) { d = -y; };
    Vec y0(1);
    y0 << 1.0;
    auto res = integrate(rhs, 0.0, y0, 5.0);
    CHECK(std::abs(res.y_end(0) - std::exp(-5.0)) < 1e-10);
    CHECK_FALSE(res.step_underflow);
}

TEST_CASE("harmonic oscillator long-time accuracy and dense output") {
    Rhs rhs = [](double, const Vec& y, Vec& d) {
        d.resize(2);
        d(0) = y(1);
        d(1) = -y(0);
    };
    Vec y0(2);
    y0 << 1.0, 0.0;
    Options opt;
    opt.rel_tol = 1e-11;
    opt.abs_tol = 1e-13;
    auto res = integrate(rhs, 0.0, y0, 50.0, opt);
    CHECK(std::abs(res.y_end(0) - std::cos(50.0)) < 1e-8);
    CHECK(std::abs(res.y_end(1) + std::sin(50.0)) < 1e-8);
    // dense output at off-node times
    for (double t : {0.3, 7.7, 23.1, 41.9}) {
        Vec y = res.dense.eval(t);
        CHECK(std::abs(y(0) - std::cos(t)) < 1e-7);
    }
}

TEST_CASE("backward integration") {
    Rhs rhs = [](double t, const Vec&, Vec& d) { d.setConstant(2.0 * t); };
    Vec y0(1);
    y0 << 25.0;  // y = t^2
    auto res = integrate(rhs, 5.0, y0, -2.0);
    CHECK(std::abs(res.y_end(0) - 4.0) < 1e-9);
}

TEST_CASE("event location at cosine root") {
    Rhs rhs = [](double, const Vec& y, Vec& d) {
        d.resize(2);
        d(0) = y(1);
        d(1) = -y(0);
    };
    Vec y0(2);
    y0 << 1.0, 0.0;  // y(t) = cos t
    EventSpec ev;
    ev.g = [](double, const Vec& y) { return y(0); };
    ev.direction = -1;
    ev.terminal = true;
    auto res = integrate(rhs, 0.0, y0, 10.0, {}, {ev});
    REQUIRE(res.event_terminated);
    CHECK(std::abs(res.t_end - kPi / 2.0) < 1e-9);
    CHECK(std::abs(res.y_end(1) + 1.0) < 1e-8);
}

TEST_CASE("non-terminal events are all recorded") {
    Rhs rhs = [](double, const Vec& y, Vec& d) {
        d.resize(2);
        d(0) = y(1);
        d(1) = -y(0);
    };
    Vec y0(2);
    y0 << 0.0, 1.0;  // sin t
    EventSpec ev;
    ev.g = [](double, const Vec& y) { return y(0); };
    auto res = integrate(rhs, 0.0, y0, 10.0, {}, {ev});
    REQUIRE(res.events.size() == 3);  // roots at pi, 2pi, 3pi
    CHECK(std::abs(res.events[0].t - kPi) < 1e-9);
    CHECK(std::abs(res.events[1].t - 2 * kPi) < 1e-9);
    CHECK(std::abs(res.events[2].t - 3 * kPi) < 1e-9);
}
