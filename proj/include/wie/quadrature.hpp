#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <queue>
#include <vector>

#include "wie/error.hpp"

namespace wie {

using ScalarFn = std::function<double(double)>;

/// Declared growth envelope (1 + t)^degree * exp(rate * t) of a time function.
///
/// `superexponential` marks a function that no exponential weight can tame; every
/// tail integral against it diverges.
struct Growth {
    double rate = 0.0;
    double degree = 0.0;
    bool superexponential = false;

    static Growth bounded() { return {}; }
    static Growth polynomial(double degree) { return {0.0, degree, false}; }
    static Growth exponential(double rate) { return {rate, 0.0, false}; }
    static Growth unbounded() { return {0.0, 0.0, true}; }

    double envelope(double t) const {
        if (superexponential) return std::numeric_limits<double>::infinity();
        return std::pow(1.0 + t, degree) * std::exp(rate * t);
    }

    /// Envelope of the square root of a function with this growth.
    Growth amplitude() const { return {0.5 * rate, 0.5 * degree, superexponential}; }
    /// Envelope of the square of a function with this growth.
    Growth squared() const { return {2.0 * rate, 2.0 * degree, superexponential}; }

    bool tamed_by(double mu) const { return !superexponential && mu > rate; }

    /// Upper bound of the integral over [T, inf) of exp(-mu s) * envelope(s).
    double tail_bound(double mu, double T) const {
        if (!tamed_by(mu)) return std::numeric_limits<double>::infinity();
        const double nu = mu - rate;
        const double a = degree + 1.0;
        const double X = nu * (1.0 + T);
        // exp(nu) * nu^{-a} * Gamma(a, X) with the standard upper incomplete gamma bounds, in log form
        double log_gamma_upper = (a - 1.0) * std::log(X) - X;
        if (a > 1.0) {
            if (!(X > a)) return std::numeric_limits<double>::infinity();
            log_gamma_upper -= std::log1p(-(a - 1.0) / X);
        }
        return std::exp(nu - a * std::log(nu) + log_gamma_upper);
    }
};

/// Quadrature configuration shared by every weighted integral.
///
/// GaussLaguerre evaluates semi-infinite integrals with an n-node rule after
/// rescaling the weight to exp(-tau); it cross-checks against a smaller rule and
/// falls back to adaptive panels when the two disagree or when the weighted
/// node contributions vary by more than `variation_limit` relative to the sum.
/// Finite intervals always use adaptive Gauss-Kronrod (7/15) panels.
struct QuadratureSpec {
    enum class Method { GaussLaguerre, AdaptivePanels };

    Method method = Method::GaussLaguerre;
    int nodes = 64;
    double panel_tol = 1e-13;
    int max_panels = 4000;
    double abs_tol = 1e-15;
    double rel_tol = 1e-12;
    double exponent_cap = 700.0;
    double variation_limit = 1e6;

    static QuadratureSpec gauss_laguerre(int nodes = 64) {
        QuadratureSpec q;
        q.nodes = nodes;
        return q;
    }
    static QuadratureSpec adaptive(double panel_tol = 1e-13, int max_panels = 4000) {
        QuadratureSpec q;
        q.method = Method::AdaptivePanels;
        q.panel_tol = panel_tol;
        q.max_panels = max_panels;
        return q;
    }

    void validate() const {
        if (nodes < 4) throw InvalidArgument("quadrature: nodes must be >= 4");
        if (!(abs_tol > 0.0) || !(rel_tol > 0.0) || !(panel_tol > 0.0))
            throw InvalidArgument("quadrature: tolerances must be positive");
        if (max_panels < 1) throw InvalidArgument("quadrature: max_panels must be >= 1");
    }

    double adaptive_rel_tol() const {
        return method == Method::AdaptivePanels ? std::min(panel_tol, rel_tol) : rel_tol;
    }
};

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

namespace detail {

inline QuadratureRule compute_gauss_laguerre(int n) {
    // Newton iteration on L_n with the classical asymptotic starting guesses; extended
    // precision keeps the weights accurate to a few ulp at n = 64.
    using real = long double;
    auto laguerre = [n](real z, real& p1, real& p2) {
        p1 = 1.0L;
        p2 = 0.0L;
        for (int j = 1; j <= n; ++j) {
            const real p3 = p2;
            p2 = p1;
            p1 = ((2.0L * j - 1.0L - z) * p2 - (j - 1.0L) * p3) / j;
        }
        return (n * p1 - n * p2) / z;
    };
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    std::vector<real> roots(n);
    real z = 0.0L;
    for (int i = 0; i < n; ++i) {
        if (i == 0) {
            z = 3.0L / (1.0L + 2.4L * n);
        } else if (i == 1) {
            z += 15.0L / (1.0L + 2.5L * n);
        } else {
            const real ai = i - 1;
            z += ((1.0L + 2.55L * ai) / (1.9L * ai)) * (z - roots[i - 2]);
        }
        real p1, p2;
        for (int iter = 0; iter < 100; ++iter) {
            const real pp = laguerre(z, p1, p2);
            const real z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-18L * std::abs(z)) break;
        }
        const real pp = laguerre(z, p1, p2);
        roots[i] = z;
        rule.nodes[i] = static_cast<double>(z);
        rule.weights[i] = static_cast<double>(-1.0L / (pp * n * p2));
    }
    return rule;
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
    double a;
    double b;
    double value;
    double error;
    bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel kronrod15(F&& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double gauss = fc * kWg[3];
    double kron = fc * kWgk[7];
    for (int j = 0; j < 7; ++j) {
        const double dx = h * kXgk[j];
        const double f1 = f(c - dx);
        const double f2 = f(c + dx);
        kron += kWgk[j] * (f1 + f2);
        if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
    }
    return {a, b, kron * h, std::abs((kron - gauss) * h)};
}

}  // namespace detail

/// Gauss-Laguerre rule for weight exp(-x) on [0, inf); tables are built once and shared.
inline const QuadratureRule& gauss_laguerre_rule(int n) {
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<QuadratureRule>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<QuadratureRule>(detail::compute_gauss_laguerre(n));
    return *slot;
}

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    int panels = 0;
};

/// Adaptive Gauss-Kronrod integration over [a, b] starting from the given breakpoints.
///
/// Throws QuadratureError with the partial value once `max_panels` is exhausted.
template <class F>
QuadratureResult integrate_adaptive(F&& f, std::vector<double> breakpoints, double abs_tol,
                                    double rel_tol, int max_panels) {
    std::sort(breakpoints.begin(), breakpoints.end());
    breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());
    std::priority_queue<detail::Panel> heap;
    double total = 0.0, total_err = 0.0;
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        auto p = detail::kronrod15(f, breakpoints[i], breakpoints[i + 1]);
        total += p.value;
        total_err += p.error;
        heap.push(p);
    }
    int panels = static_cast<int>(heap.size());
    while (!heap.empty() && total_err > std::max(abs_tol, rel_tol * std::abs(total))) {
        if (!std::isfinite(total)) throw QuadratureError("quadrature: non-finite integrand", total, total_err);
        if (panels >= max_panels)
            throw QuadratureError("quadrature: panel budget exhausted", total, total_err);
        const auto worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) {
            throw QuadratureError("quadrature: panel width underflow", total, total_err);
        }
        const auto left = detail::kronrod15(f, worst.a, mid);
        const auto right = detail::kronrod15(f, mid, worst.b);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        ++panels;
    }
    // Re-sum in panel order so the result does not depend on refinement history round-off.
    std::vector<detail::Panel> all;
    all.reserve(heap.size());
    while (!heap.empty()) {
        all.push_back(heap.top());
        heap.pop();
    }
    std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.a < y.a; });
    QuadratureResult r;
    for (const auto& p : all) {
        r.value += p.value;
        r.error += p.error;
    }
    r.panels = panels;
    if (!std::isfinite(r.value)) throw QuadratureError("quadrature: non-finite integrand", r.value, r.error);
    return r;
}

/// Breakpoints 0, s, 2s, 4s, ... below `length`, then `length`; resolves a kernel of scale s.
inline std::vector<double> geometric_breakpoints(double scale, double length) {
    std::vector<double> pts{0.0};
    if (scale > 0.0 && std::isfinite(scale)) {
        for (double x = scale; x < length; x *= 2.0) pts.push_back(x);
    }
    pts.push_back(length);
    return pts;
}

/// Integral of exp(-tau) * psi(tau) over [0, inf).
///
/// `ratio` is the exponential growth rate of psi measured in tau units (must be < 1)
/// and `degree` its polynomial growth; both only steer the adaptive truncation.
template <class F>
double laguerre_integral(F&& psi, const QuadratureSpec& spec, double ratio = 0.0, double degree = 0.0) {
    if (spec.method == QuadratureSpec::Method::GaussLaguerre) {
        const auto& big = gauss_laguerre_rule(spec.nodes);
        const auto& small = gauss_laguerre_rule(std::max(4, (3 * spec.nodes) / 4));
        double s_big = 0.0, biggest = 0.0;
        for (std::size_t k = 0; k < big.nodes.size(); ++k) {
            const double term = big.weights[k] * psi(big.nodes[k]);
            s_big += term;
            biggest = std::max(biggest, std::abs(term));
        }
        double s_small = 0.0;
        for (std::size_t k = 0; k < small.nodes.size(); ++k) s_small += small.weights[k] * psi(small.nodes[k]);
        const bool finite = std::isfinite(s_big) && std::isfinite(s_small);
        const bool agree = std::abs(s_big - s_small) <= spec.abs_tol + spec.rel_tol * std::abs(s_big);
        const bool smooth = biggest == 0.0 || biggest <= spec.variation_limit * std::abs(s_big);
        if (finite && agree && smooth) return s_big;
    }
    const double decay = std::max(1.0 - ratio, 1e-3);
    double upper = (60.0 + std::max(degree, 0.0) * 8.0) / decay;
    auto weighted = [&](double tau) { return std::exp(-tau) * psi(tau); };
    auto r = integrate_adaptive(weighted, geometric_breakpoints(0.5, upper), spec.abs_tol,
                                spec.adaptive_rel_tol(), spec.max_panels);
    return r.value;
}

/// Integral over [0, inf) of exp(-t/eps) * phi(t), via t = eps * tau.
template <class F>
double weighted_halfline(F&& phi, double eps, const QuadratureSpec& spec, const Growth& growth = {}) {
    if (!(eps > 0.0)) throw InvalidArgument("weighted_halfline: eps must be positive");
    if (!growth.tamed_by(1.0 / eps))
        throw DivergenceError("weighted_halfline: growth rate not below 1/eps");
    auto psi = [&](double tau) { return phi(eps * tau); };
    return eps * laguerre_integral(psi, spec, growth.rate * eps, growth.degree);
}

/// Integral over [t, inf) of exp(-mu (s - t)) * phi(s); the overflow-free tail form.
template <class F>
double shifted_tail(F&& phi, double mu, double t, const QuadratureSpec& spec, const Growth& growth = {}) {
    if (!growth.tamed_by(mu))
        throw DivergenceError("laplace_tail: decay rate " + std::to_string(mu) +
                              " does not exceed growth rate " + std::to_string(growth.rate));
    auto psi = [&](double tau) { return phi(t + tau / mu); };
    return laguerre_integral(psi, spec, growth.rate / mu, growth.degree) / mu;
}

/// Integral over [t0, inf) of exp(-mu s) * phi(s).
template <class F>
double laplace_tail(F&& phi, double mu, double t0, const QuadratureSpec& spec, const Growth& growth = {}) {
    if (!(mu > 0.0)) throw DivergenceError("laplace_tail: mu must be positive");
    if (t0 < 0.0) throw InvalidArgument("laplace_tail: t0 must be >= 0");
    const double shifted = shifted_tail(phi, mu, t0, spec, growth);
    return std::exp(-mu * t0) * shifted;
}

/// Integral over [a, b] of phi, adaptive panels seeded with `breakpoints` (must span [a, b]).
template <class F>
double integrate_interval(F&& phi, double a, double b, const QuadratureSpec& spec,
                          std::vector<double> breakpoints = {}) {
    if (b == a) return 0.0;
    if (breakpoints.empty()) breakpoints = {a, b};
    return integrate_adaptive(phi, std::move(breakpoints), spec.abs_tol, spec.adaptive_rel_tol(),
                              spec.max_panels)
        .value;
}

/// Integral over [0, t] of exp(lambda (t - s)) * phi(s).
///
/// Evaluated as the integral over u in [0, t] of exp(lambda u) phi(t - u) so the kernel
/// never exceeds exp(lambda t); fails with OverflowError once lambda t passes the cap.
template <class F>
double convolution_integral(F&& phi, double lambda, double t, const QuadratureSpec& spec) {
    if (t < 0.0) throw InvalidArgument("convolution_integral: t must be >= 0");
    if (t == 0.0) return 0.0;
    if (lambda * t > spec.exponent_cap)
        throw OverflowError("convolution_integral: lambda*t exceeds exponent cap");
    auto integrand = [&](double u) { return std::exp(lambda * u) * phi(t - u); };
    std::vector<double> pts;
    if (lambda < 0.0) {
        pts = geometric_breakpoints(1.0 / -lambda, t);
    } else if (lambda * t > 1.0) {
        // Growing kernel: resolve its scale near u = t.
        pts = geometric_breakpoints(1.0 / lambda, t);
        for (auto& p : pts) p = t - p;
    } else {
        pts = {0.0, t};
    }
    return integrate_adaptive(integrand, std::move(pts), spec.abs_tol, spec.adaptive_rel_tol(),
                              spec.max_panels)
        .value;
}

}  // namespace wie
