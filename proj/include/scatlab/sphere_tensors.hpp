// scatlab -- symmetric tensor fields on the unit sphere S^{n-1} in embedded
// (unit-vector) representation, first-order tensor calculus, and weighted
// great-circle integrals. Tangential covariant derivative = ambient
// directional derivative followed by projection I - y y^T.
#pragma once

#include "scatlab/core.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace scatlab::sphere {

inline Vec normalized(const Vec& y) { return y / y.norm(); }

inline Mat tangent_projector(const Vec& y) {
    return Mat::Identity(y.size(), y.size()) - y * y.transpose() / y.squaredNorm();
}

struct GreatCircle {
    Vec y;        // base point, |y| = 1
    Vec eta_hat;  // unit tangent at y

    GreatCircle(Vec y_, Vec eta_) : y(std::move(y_)), eta_hat(std::move(eta_)) {
        y.normalize();
        eta_hat -= eta_hat.dot(y) * y;
        const double n = eta_hat.norm();
        if (n < 1e-14) throw std::invalid_argument("GreatCircle: tangent parallel to base point");
        eta_hat /= n;
    }
};

// Point and unit tangent of the arclength-parametrized great circle.
inline std::pair<Vec, Vec> great_circle_point(const GreatCircle& c, double s) {
    const double cs = std::cos(s), sn = std::sin(s);
    return {cs * c.y + sn * c.eta_hat, -sn * c.y + cs * c.eta_hat};
}

// --- polynomials on R^n (restricted to the sphere) ---

struct Monomial {
    double coef = 0.0;
    std::vector<int> exps;  // exponent per coordinate
};

class Poly {
public:
    Poly() = default;
    Poly(int n, std::vector<Monomial> terms) : n_(n), terms_(std::move(terms)) {}

    static Poly constant(int n, double c) { return Poly(n, {Monomial{c, std::vector<int>(n, 0)}}); }
    static Poly coordinate(int n, int i, int power = 1) {
        std::vector<int> e(n, 0);
        e[i] = power;
        return Poly(n, {Monomial{1.0, e}});
    }

    int dim() const { return n_; }

    double eval(const Vec& y) const {
        double s = 0.0;
        for (const auto& m : terms_) {
            double p = m.coef;
            for (int i = 0; i < n_; ++i)
                for (int k = 0; k < m.exps[i]; ++k) p *= y(i);
            s += p;
        }
        return s;
    }

    Vec gradient(const Vec& y) const {
        Vec g = Vec::Zero(n_);
        for (const auto& m : terms_) {
            for (int i = 0; i < n_; ++i) {
                if (m.exps[i] == 0) continue;
                double p = m.coef * m.exps[i];
                for (int j = 0; j < n_; ++j) {
                    int e = m.exps[j] - (j == i ? 1 : 0);
                    for (int k = 0; k < e; ++k) p *= y(j);
                }
                g(i) += p;
            }
        }
        return g;
    }

private:
    int n_ = 0;
    std::vector<Monomial> terms_;
};

// --- symmetric tensor fields, rank q <= 3 ---
//
// A field evaluates multilinearly and symmetrically on q tangent vectors;
// values depend only on the tangential part of each argument. Fields carry an
// optional analytic covariant derivative (deriv) and, for rank 2, an optional
// ambient matrix representation used by the metric models.

class SymTensorField {
public:
    using EvalFn = std::function<double(const Vec& y, const std::vector<Vec>& args)>;
    // Covariant derivative (nabla_u h)(args) at y; u tangent at y.
    using DerivFn = std::function<double(const Vec& y, const Vec& u, const std::vector<Vec>& args)>;
    using AmbientFn = std::function<Mat(const Vec& y)>;
    using AmbientDerivFn = std::function<Mat(const Vec& y, const Vec& u)>;

    SymTensorField() = default;
    SymTensorField(int rank, EvalFn eval) : rank_(rank), eval_(std::move(eval)) {}

    int rank() const { return rank_; }
    bool has_analytic_deriv() const { return bool(deriv_); }
    bool has_ambient() const { return bool(ambient_); }

    double eval(const Vec& y, const std::vector<Vec>& args) const {
        return eval_(y, args);
    }

    // Value on q copies of a single tangent vector.
    double eval_diag(const Vec& y, const Vec& v) const {
        return eval_(y, std::vector<Vec>(size_t(rank_), v));
    }

    // Tangential covariant derivative (nabla_u h)(args). Arguments are
    // extended off y by projection, which is parallel at y, so this equals
    // the derivative of s -> h_{y(s)}(P args) along the geodesic through y
    // with velocity u. Central differences with geodesic displacement unless
    // an analytic derivative was supplied.
    double covariant_derivative(const Vec& y, const Vec& u, const std::vector<Vec>& args,
                                double step = 1e-5) const {
        if (deriv_) return deriv_(y, u, args);
        const double un = u.norm();
        if (un < 1e-300) return 0.0;
        const Vec uh = u / un;
        auto sample = [&](double s) {
            const Vec ys = std::cos(s) * y + std::sin(s) * uh;
            const Mat P = tangent_projector(ys);
            std::vector<Vec> pargs(args.size());
            for (size_t i = 0; i < args.size(); ++i) pargs[i] = P * args[i];
            return eval_(ys, pargs);
        };
        return un * (sample(step) - sample(-step)) / (2.0 * step);
    }

    // Ambient matrix of a rank-2 field (tangential: M = P M P).
    Mat ambient(const Vec& y) const {
        if (ambient_) return ambient_(y);
        const int n = int(y.size());
        const Mat B = tangent_basis(y);
        Mat M = Mat::Zero(n, n);
        for (int a = 0; a < n - 1; ++a)
            for (int b = a; b < n - 1; ++b) {
                const double v = eval_(y, {B.col(a), B.col(b)});
                M += v * (B.col(a) * B.col(b).transpose() +
                          (a == b ? Mat::Zero(n, n)
                                  : Mat(B.col(b) * B.col(a).transpose())));
            }
        return M;
    }

    // Directional derivative of the ambient matrix along tangent u, moving on
    // the sphere. FD fallback works entry-wise on the projected matrix.
    Mat ambient_deriv(const Vec& y, const Vec& u, double step = 1e-6) const {
        if (ambient_deriv_) return ambient_deriv_(y, u);
        const double un = u.norm();
        const int n = int(y.size());
        if (un < 1e-300) return Mat::Zero(n, n);
        const Vec uh = u / un;
        auto at = [&](double s) {
            const Vec ys = std::cos(s) * y + std::sin(s) * uh;
            return ambient(ys);
        };
        return un * (at(step) - at(-step)) / (2.0 * step);
    }

    void set_deriv(DerivFn d) { deriv_ = std::move(d); }
    void set_ambient(AmbientFn a, AmbientDerivFn da = nullptr) {
        ambient_ = std::move(a);
        ambient_deriv_ = std::move(da);
    }

private:
    int rank_ = 0;
    EvalFn eval_;
    DerivFn deriv_;
    AmbientFn ambient_;
    AmbientDerivFn ambient_deriv_;
};

// --- builtin fields ---

inline SymTensorField constant_scalar(int /*n*/, double c) {
    SymTensorField f(0, [c](const Vec&, const std::vector<Vec>&) { return c; });
    f.set_deriv([](const Vec&, const Vec&, const std::vector<Vec>&) { return 0.0; });
    return f;
}

// Restriction of the polynomial p to the sphere, as a rank-0 field.
inline SymTensorField poly_scalar(const Poly& p) {
    SymTensorField f(0, [p](const Vec& y, const std::vector<Vec>&) { return p.eval(y); });
    f.set_deriv([p](const Vec& y, const Vec& u, const std::vector<Vec>&) {
        return p.gradient(y).dot(u);  // u tangent, so ambient gradient suffices
    });
    return f;
}

// Round metric h_0 as a rank-2 field; parallel, so nabla h_0 = 0.
inline SymTensorField round_metric(int n) {
    SymTensorField f(2, [](const Vec& y, const std::vector<Vec>& a) {
        const Mat P = tangent_projector(y);
        return double((P * a[0]).dot(P * a[1]));
    });
    f.set_deriv([](const Vec&, const Vec&, const std::vector<Vec>&) { return 0.0; });
    f.set_ambient([n](const Vec& y) { return tangent_projector(normalized(y)); },
                  [n](const Vec& y, const Vec&) { return Mat::Zero(n, n); });
    return f;
}

inline Mat rotation_generator(int n, int i, int j) {
    Mat W = Mat::Zero(n, n);
    W(i, j) = 1.0;
    W(j, i) = -1.0;
    return W;
}

// 1-form dual to the rotational Killing field y -> W y.
inline SymTensorField killing_one_form(const Mat& W) {
    SymTensorField f(1, [W](const Vec& y, const std::vector<Vec>& a) {
        return double((W * y).dot(a[0]));
    });
    f.set_deriv([W](const Vec& y, const Vec& u, const std::vector<Vec>& a) {
        // nabla_u sigma (v) = (W u).v - (W y . y)(u.v); second term vanishes
        // since W is antisymmetric, and the projector variation contributes
        // -(y.v)(Wy.u) = 0 for tangent v.
        return double((W * u).dot(a[0]));
    });
    return f;
}

// Symmetric product of two 1-forms given by ambient-linear maps y -> W y.
// With W antisymmetric these are Killing 2-tensors of the round sphere.
inline SymTensorField killing_two_tensor(const Mat& W1, const Mat& W2) {
    const int n = int(W1.rows());
    auto val = [W1, W2](const Vec& y, const Vec& v, const Vec& w) {
        return 0.5 * ((W1 * y).dot(v) * (W2 * y).dot(w) + (W2 * y).dot(v) * (W1 * y).dot(w));
    };
    SymTensorField f(2, [val](const Vec& y, const std::vector<Vec>& a) {
        return val(y, a[0], a[1]);
    });
    f.set_deriv([W1, W2, val](const Vec& y, const Vec& u, const std::vector<Vec>& a) {
        auto dval = [&](const Mat& A, const Mat& B, const Vec& v, const Vec& w) {
            return (A * u).dot(v) * (B * y).dot(w) + (A * y).dot(v) * (B * u).dot(w);
        };
        return 0.5 * (dval(W1, W2, a[0], a[1]) + dval(W2, W1, a[0], a[1]));
    });
    f.set_ambient(
        [W1, W2, n](const Vec& yy) {
            const Vec y = normalized(yy);
            const Vec s1 = W1 * y, s2 = W2 * y;
            return Mat(0.5 * (s1 * s2.transpose() + s2 * s1.transpose()));
        },
        [W1, W2, n](const Vec& yy, const Vec& u) {
            const Vec y = normalized(yy);
            const Vec s1 = W1 * y, s2 = W2 * y;
            const Vec d1 = W1 * u, d2 = W2 * u;
            return Mat(0.5 * (d1 * s2.transpose() + s1 * d2.transpose() +
                              d2 * s1.transpose() + s2 * d1.transpose()));
        });
    return f;
}

// p(y) * h_0, the workhorse for scalar-weighted rank-2 perturbations.
inline SymTensorField poly_weighted_metric(const Poly& p) {
    const int n = p.dim();
    SymTensorField f(2, [p](const Vec& y, const std::vector<Vec>& a) {
        const Mat P = tangent_projector(y);
        return p.eval(y) * double((P * a[0]).dot(P * a[1]));
    });
    f.set_deriv([p](const Vec& y, const Vec& u, const std::vector<Vec>& a) {
        const Mat P = tangent_projector(y);
        return p.gradient(y).dot(u) * double((P * a[0]).dot(P * a[1]));
    });
    f.set_ambient(
        [p](const Vec& yy) {
            const Vec y = normalized(yy);
            return Mat(p.eval(y) * tangent_projector(y));
        },
        [p, n](const Vec& yy, const Vec& u) {
            const Vec y = normalized(yy);
            const Mat P = tangent_projector(y);
            const Mat dP = -(u * y.transpose() + y * u.transpose());
            return Mat(p.gradient(y).dot(u) * P + p.eval(y) * dP);
        });
    return f;
}

// y_1^2-weighted round metric; generic non-Killing test field.
inline SymTensorField x1_squared_weighted(int n) {
    return poly_weighted_metric(Poly::coordinate(n, 0, 2));
}

// p(y) * sym(a_1 ... a_q) with constant ambient covectors a_i (projected
// tangentially through the tangent arguments).
inline SymTensorField poly_covector_product(const Poly& p, std::vector<Vec> as) {
    const int q = int(as.size());
    const int n = p.dim();
    auto symval = [as, q](const std::vector<Vec>& args) {
        // average over argument permutations; q <= 3 so enumerate
        static const int perms3[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                         {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
        double s = 0.0;
        if (q == 1) {
            s = as[0].dot(args[0]);
        } else if (q == 2) {
            s = 0.5 * (as[0].dot(args[0]) * as[1].dot(args[1]) +
                       as[0].dot(args[1]) * as[1].dot(args[0]));
        } else {
            for (auto& pm : perms3)
                s += as[0].dot(args[pm[0]]) * as[1].dot(args[pm[1]]) * as[2].dot(args[pm[2]]);
            s /= 6.0;
        }
        return s;
    };
    SymTensorField f(q, [p, symval](const Vec& y, const std::vector<Vec>& args) {
        return p.eval(y) * symval(args);
    });
    f.set_deriv([p, as, symval, q](const Vec& y, const Vec& u, const std::vector<Vec>& args) {
        double s = p.gradient(y).dot(u) * symval(args);
        // projector variation: arguments extended by projection pick up
        // d/ds P v_i = -y (u.v_i) at the base point.
        for (int i = 0; i < q; ++i) {
            std::vector<Vec> mod = args;
            mod[size_t(i)] = Vec(-(u.dot(args[size_t(i)])) * y);
            s += p.eval(y) * symval(mod);
        }
        return s;
    });
    if (q == 2) {
        f.set_ambient([p, as](const Vec& yy) {
            const Vec y = normalized(yy);
            const Mat P = tangent_projector(y);
            const Vec b0 = P * as[0], b1 = P * as[1];
            return Mat(0.5 * p.eval(y) * (b0 * b1.transpose() + b1 * b0.transpose()));
        });
    }
    return f;
}

inline SymTensorField add(const SymTensorField& a, const SymTensorField& b) {
    if (a.rank() != b.rank()) throw std::invalid_argument("add: rank mismatch");
    SymTensorField f(a.rank(), [a, b](const Vec& y, const std::vector<Vec>& args) {
        return a.eval(y, args) + b.eval(y, args);
    });
    if (a.has_analytic_deriv() && b.has_analytic_deriv())
        f.set_deriv([a, b](const Vec& y, const Vec& u, const std::vector<Vec>& args) {
            return a.covariant_derivative(y, u, args) + b.covariant_derivative(y, u, args);
        });
    if (a.has_ambient() && b.has_ambient())
        f.set_ambient([a, b](const Vec& y) { return Mat(a.ambient(y) + b.ambient(y)); },
                      [a, b](const Vec& y, const Vec& u) {
                          return Mat(a.ambient_deriv(y, u) + b.ambient_deriv(y, u));
                      });
    return f;
}

inline SymTensorField scale(const SymTensorField& a, double c) {
    SymTensorField f(a.rank(), [a, c](const Vec& y, const std::vector<Vec>& args) {
        return c * a.eval(y, args);
    });
    if (a.has_analytic_deriv())
        f.set_deriv([a, c](const Vec& y, const Vec& u, const std::vector<Vec>& args) {
            return c * a.covariant_derivative(y, u, args);
        });
    if (a.has_ambient())
        f.set_ambient([a, c](const Vec& y) { return Mat(c * a.ambient(y)); },
                      [a, c](const Vec& y, const Vec& u) { return Mat(c * a.ambient_deriv(y, u)); });
    return f;
}

// --- calculus ---

// Symmetrized covariant derivative: Dh(v_1,...,v_{q+1}) =
// sum_j (nabla_{v_j} h)(v_1,...,^j...,v_{q+1}).
inline SymTensorField sym_derivative(const SymTensorField& h) {
    const int q = h.rank();
    return SymTensorField(q + 1, [h, q](const Vec& y, const std::vector<Vec>& args) {
        double s = 0.0;
        for (int j = 0; j <= q; ++j) {
            std::vector<Vec> rest;
            rest.reserve(size_t(q));
            for (int i = 0; i <= q; ++i)
                if (i != j) rest.push_back(args[size_t(i)]);
            s += h.covariant_derivative(y, args[size_t(j)], rest);
        }
        return s;
    });
}

// Trace over an orthonormal tangent frame; rank q-2 (zero field for q < 2).
inline SymTensorField trace(const SymTensorField& h) {
    const int q = h.rank();
    if (q < 2)
        return SymTensorField(0, [](const Vec&, const std::vector<Vec>&) { return 0.0; });
    return SymTensorField(q - 2, [h, q](const Vec& y, const std::vector<Vec>& args) {
        const Mat B = tangent_basis(y);
        double s = 0.0;
        for (int a = 0; a + 1 < int(y.size()); ++a) {
            std::vector<Vec> full;
            full.reserve(size_t(q));
            full.push_back(B.col(a));
            full.push_back(B.col(a));
            for (const auto& v : args) full.push_back(v);
            s += h.eval(y, full);
        }
        return s;
    });
}

// Divergence D*h = -sum_a iota_{e_a} nabla_{e_a} h; rank q-1.
inline SymTensorField divergence(const SymTensorField& h) {
    const int q = h.rank();
    if (q < 1)
        return SymTensorField(0, [](const Vec&, const std::vector<Vec>&) { return 0.0; });
    return SymTensorField(q - 1, [h, q](const Vec& y, const std::vector<Vec>& args) {
        const Mat B = tangent_basis(y);
        double s = 0.0;
        for (int a = 0; a + 1 < int(y.size()); ++a) {
            std::vector<Vec> full;
            full.reserve(size_t(q));
            full.push_back(B.col(a));
            for (const auto& v : args) full.push_back(v);
            s -= h.covariant_derivative(y, B.col(a), full);
        }
        return s;
    });
}

struct TraceDivergence {
    SymTensorField trace;
    SymTensorField divergence;
};

inline TraceDivergence trace_and_divergence(const SymTensorField& h) {
    if (h.rank() < 1) throw std::invalid_argument("trace_and_divergence: rank >= 1 required");
    return {trace(h), divergence(h)};
}

// Derivative of a rank-2 field along the round geodesic flow, as a function
// on the unit cotangent bundle: (1/3) (Dh)_y(eta,eta,eta).
inline double killing_energy_derivative(const SymTensorField& h, const Vec& y, const Vec& eta_hat) {
    std::vector<Vec> two{eta_hat, eta_hat};
    return h.covariant_derivative(y, eta_hat, two);
    // equals d/ds h(c(s); c'(s), c'(s)) along the great circle.
}

// --- weighted great-circle (Funk/X-ray) integrals ---

enum class XrayRange { half, full };

// integral of sin(s)^j cos(s)^k f(gamma(s); gamma'(s) x rank) over [0,pi] or
// [0,2pi], periodic trapezoid rule on an even N-point grid.
inline double weighted_xray(const SymTensorField& f, const GreatCircle& circle, int j, int k,
                            XrayRange range, int N = 2048) {
    if (N % 2 != 0) throw std::invalid_argument("weighted_xray: N must be even");
    const double smax = (range == XrayRange::full) ? 2.0 * kPi : kPi;
    const double h = smax / N;
    double acc = 0.0;
    for (int i = 0; i <= N; ++i) {
        if (range == XrayRange::full && i == N) break;  // periodic: skip duplicate endpoint
        const double s = i * h;
        auto [y, t] = great_circle_point(circle, s);
        double w = 1.0;
        for (int a = 0; a < j; ++a) w *= std::sin(s);
        for (int a = 0; a < k; ++a) w *= std::cos(s);
        double val = f.rank() == 0 ? f.eval(y, {}) : f.eval_diag(y, t);
        double tw = 1.0;
        if (range == XrayRange::half && (i == 0 || i == N)) tw = 0.5;
        acc += tw * w * val;
    }
    return acc * h;
}

}  // namespace scatlab::sphere
