// scatlab -- shared numerical utilities: blends, quadrature nodes, fits, hashing.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace scatlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr double kPi = 3.14159265358979323846;

// Quintic smoothstep: 0 for u<=0, 1 for u>=1, C^2 monotone in between.
inline double smoothstep5(double u) {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

inline double smoothstep5_deriv(double u) {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    return u * u * (30.0 + u * (-60.0 + 30.0 * u));
}

// Ramp from (a,0) to (b,1).
inline double smooth_ramp(double x, double a, double b) {
    return smoothstep5((x - a) / (b - a));
}

inline double smooth_ramp_deriv(double x, double a, double b) {
    return smoothstep5_deriv((x - a) / (b - a)) / (b - a);
}

// Quintic Hermite interpolant matching value/slope/curvature at both ends.
inline double quintic_hermite(double t, double p0, double m0, double a0,
                              double p1, double m1, double a1) {
    const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
    const double h0 = 1 - 10 * t3 + 15 * t4 - 6 * t5;
    const double h1 = t - 6 * t3 + 8 * t4 - 3 * t5;
    const double h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    const double h3 = 0.5 * t3 - t4 + 0.5 * t5;
    const double h4 = -4 * t3 + 7 * t4 - 3 * t5;
    const double h5 = 10 * t3 - 15 * t4 + 6 * t5;
    return p0 * h0 + m0 * h1 + a0 * h2 + a1 * h3 + m1 * h4 + p1 * h5;
}

// Boundary defining function realized as 1/|x| outside the unit ball and a
// fixed positive profile inside: rho == 1 on |x| <= 1/2, quintic-blended in
// between. Interior values are an artifact of the extension; only |x| >= 1
// behavior enters boundary data.
inline double boundary_rho_radial(double r) {
    if (r >= 1.0) return 1.0 / r;
    if (r <= 0.5) return 1.0;
    const double t = (r - 0.5) / 0.5;
    // ell(r) = 1/rho, matching ell=1, ell'=0 at r=1/2 and ell=r at r=1.
    const double ell = quintic_hermite(t, 1.0, 0.0, 0.0, 1.0, 0.5, 0.0);
    return 1.0 / ell;
}

inline double boundary_rho(const Vec& x) { return boundary_rho_radial(x.norm()); }

// --- Gauss-Legendre nodes/weights on [-1,1], computed by Newton on P_k. ---
struct Quadrature {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline Quadrature gauss_legendre(int k) {
    Quadrature q;
    q.nodes.resize(k);
    q.weights.resize(k);
    for (int i = 0; i < k; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (k + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int j = 2; j <= k; ++j) {
                double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            double dp = k * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        double p0 = 1.0, p1 = x;
        for (int j = 2; j <= k; ++j) {
            double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
            p0 = p1;
            p1 = p2;
        }
        double dp = k * (x * p1 - p0) / (x * x - 1.0);
        q.nodes[i] = x;
        q.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return q;
}

// Integrate f on [a,b] with a k-point Gauss-Legendre rule.
template <class F>
double gl_integrate(F&& f, double a, double b, const Quadrature& q) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0.0;
    for (size_t i = 0; i < q.nodes.size(); ++i)
        s += q.weights[i] * f(mid + half * q.nodes[i]);
    return s * half;
}

// --- small least-squares fits ---

// y ~ a + b x. Returns {a, b}.
inline std::pair<double, double> linear_fit(const std::vector<double>& xs,
                                            const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("linear_fit: need >= 2 samples");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = double(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double det = n * sxx - sx * sx;
    const double b = (n * sxy - sx * sy) / det;
    const double a = (sy - b * sx) / n;
    return {a, b};
}

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;  // rms residual in log space
    int used = 0;
};

// Fit |v| ~ C x^slope from positive samples (log-log regression).
inline SlopeFit loglog_slope(const std::vector<double>& xs, const std::vector<double>& vs,
                             double floor = 0.0) {
    std::vector<double> lx, ly;
    for (size_t i = 0; i < xs.size(); ++i) {
        const double v = std::abs(vs[i]);
        if (xs[i] > 0.0 && v > floor) {
            lx.push_back(std::log(xs[i]));
            ly.push_back(std::log(v));
        }
    }
    SlopeFit out;
    out.used = int(lx.size());
    if (lx.size() < 2) return out;
    auto [a, b] = linear_fit(lx, ly);
    out.intercept = a;
    out.slope = b;
    double ss = 0;
    for (size_t i = 0; i < lx.size(); ++i) {
        const double r = ly[i] - (a + b * lx[i]);
        ss += r * r;
    }
    out.residual = std::sqrt(ss / double(lx.size()));
    return out;
}

// Fit y ~ c0 + c1 t + c2 t^2 and return c0 (tail-limit extraction).
inline double quadratic_limit_fit(const std::vector<double>& ts, const std::vector<double>& ys) {
    const int n = int(ts.size());
    if (n < 3) throw std::invalid_argument("quadratic_limit_fit: need >= 3 samples");
    Eigen::MatrixXd A(n, 3);
    Eigen::VectorXd b(n);
    for (int i = 0; i < n; ++i) {
        A(i, 0) = 1.0;
        A(i, 1) = ts[i];
        A(i, 2) = ts[i] * ts[i];
        b(i) = ys[i];
    }
    Eigen::Vector3d c = (A.transpose() * A).ldlt().solve(A.transpose() * b);
    return c(0);
}

// Volume of the unit ball in R^d.
inline double unit_ball_volume(int d) {
    return std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

// Shortest round-trip decimal representation (std::to_chars).
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// FNV-1a, used for config hashes in run manifests.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Deterministically complete a unit vector y to an orthonormal basis whose
// last column is y; the first n-1 columns span the tangent space at y.
inline Mat tangent_basis(const Vec& y) {
    const int n = int(y.size());
    Mat b(n, n);
    // Householder reflection mapping e_n to y.
    Vec v = y;
    v(n - 1) += (y(n - 1) >= 0.0 ? 1.0 : -1.0);
    const double vn2 = v.squaredNorm();
    Mat H = Mat::Identity(n, n) - (2.0 / vn2) * (v * v.transpose());
    // H maps y to -+e_n; its columns are orthonormal. Reorder so column n-1 is y.
    if (y(n - 1) >= 0.0) H = -H;
    for (int j = 0; j < n; ++j) b.col(j) = H.col(j);
    // Last column of H is y up to sign; enforce exactly.
    b.col(n - 1) = y;
    // Re-orthogonalize the first n-1 columns against y (Gram-Schmidt pass).
    for (int j = 0; j < n - 1; ++j) {
        Vec c = b.col(j);
        c -= (c.dot(y)) * y;
        for (int i = 0; i < j; ++i) c -= c.dot(b.col(i)) * b.col(i);
        b.col(j) = c.normalized();
    }
    return b;
}

}  // namespace scatlab
