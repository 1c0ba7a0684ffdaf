#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wie/csv.hpp"
#include "wie/error.hpp"
#include "wie/frequency_grid.hpp"
#include "wie/quadrature.hpp"

namespace wie {

enum class Extrapolation { Zero, HoldLast };

/// Scalar time profile g(t) on [0, inf).
struct TimeProfile {
    ScalarFn fn;
    std::string label;

    double operator()(double t) const {
        const double v = fn(t);
        if (!std::isfinite(v))
            throw InvalidArgument("time profile '" + label + "' is non-finite at t=" + csv::format_double(t));
        return v;
    }

    static TimeProfile constant(double c) {
        return {[c](double) { return c; }, "constant(" + csv::format_double(c) + ")"};
    }
    /// amplitude * exp(rate * t)
    static TimeProfile exponential(double amplitude, double rate) {
        return {[=](double t) { return amplitude * std::exp(rate * t); },
                "exponential(" + csv::format_double(amplitude) + "," + csv::format_double(rate) + ")"};
    }
    /// sum_k c_k t^k
    static TimeProfile polynomial(std::vector<double> coefficients) {
        std::string label = "polynomial(";
        for (std::size_t k = 0; k < coefficients.size(); ++k)
            label += (k ? "," : "") + csv::format_double(coefficients[k]);
        return {[c = std::move(coefficients)](double t) {
                    double v = 0.0;
                    for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * t + *it;
                    return v;
                },
                label + ")"};
    }
    /// amplitude * t^exponent; negative exponents give integrable singularities at 0
    static TimeProfile power(double amplitude, double exponent) {
        return {[=](double t) { return amplitude * std::pow(t, exponent); },
                "power(" + csv::format_double(amplitude) + "," + csv::format_double(exponent) + ")"};
    }
    /// amplitude * exp(a t^2): faster than any exponential for a > 0
    static TimeProfile exp_quadratic(double amplitude, double a) {
        return {[=](double t) { return amplitude * std::exp(a * t * t); },
                "exp_quadratic(" + csv::format_double(amplitude) + "," + csv::format_double(a) + ")"};
    }
    /// Linear interpolation of samples with monotone t; beyond the last sample either 0 or the last value.
    static TimeProfile sampled(std::vector<std::pair<double, double>> samples, Extrapolation extrapolation) {
        if (samples.empty()) throw InvalidArgument("sampled profile has no samples");
        for (std::size_t i = 1; i < samples.size(); ++i)
            if (!(samples[i].first > samples[i - 1].first))
                throw InvalidArgument("sampled profile: t must be strictly increasing");
        auto table = std::make_shared<const std::vector<std::pair<double, double>>>(std::move(samples));
        return {[table, extrapolation](double t) {
                    if (t > table->back().first && extrapolation == Extrapolation::Zero) return 0.0;
                    return csv::interpolate(*table, t);
                },
                std::string("sampled(") + (extrapolation == Extrapolation::Zero ? "zero" : "hold-last") + ")"};
    }
    static TimeProfile from_csv(const std::string& path, Extrapolation extrapolation) {
        auto p = sampled(csv::read_two_column(path), extrapolation);
        p.label = "csv(" + path + ")";
        return p;
    }
};

using SpaceProfile = std::function<Complex(std::span<const double>)>;

/// Separable space-time forcing, f_hat(t, xi) = sum_j g_j(t) h_j(xi).
///
/// `growth` is the declared growth class of t -> ||f(t, .)||_2^2.
struct ForcingTerm {
    struct Component {
        TimeProfile time;
        SpaceProfile space_hat;
        std::string space_label;
    };

    std::vector<Component> components;
    Growth growth = Growth::bounded();

    static ForcingTerm zero() { return {}; }
    bool is_zero() const { return components.empty(); }

    /// Growth envelope of each |g_j(t)|.
    Growth amplitude_growth() const { return growth.amplitude(); }

    Complex hat(double t, std::span<const double> xi) const {
        if (t < 0.0) throw InvalidArgument("forcing_hat: t must be >= 0");
        Complex v = 0.0;
        for (const auto& c : components) v += c.time(t) * c.space_hat(xi);
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw InvalidArgument("forcing_hat: non-finite profile evaluation");
        return v;
    }

    /// Gram matrix G_jl = sum_k w_k Re(h_j conj h_l) on the grid (Plancherel inner products).
    Eigen::MatrixXd gram(const FrequencyGrid& grid) const {
        const std::size_t m = components.size();
        std::vector<std::vector<Complex>> values(m, std::vector<Complex>(grid.size()));
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t k = 0; k < grid.size(); ++k) values[j][k] = components[j].space_hat(grid.node(k));
        Eigen::MatrixXd G(m, m);
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t l = 0; l < m; ++l) {
                double s = 0.0;
                for (std::size_t k = 0; k < grid.size(); ++k)
                    s += grid.weight(k) * (values[j][k] * std::conj(values[l][k])).real();
                G(j, l) = s;
            }
        return G;
    }
};

/// Vector-valued time forcing for the finite-dimensional problem, f(t) = sum_j g_j(t) c_j.
///
/// `growth` is the declared growth class of t -> |f(t)|^2.
struct VectorForcing {
    struct Component {
        TimeProfile time;
        Eigen::VectorXd coefficients;
    };

    std::vector<Component> components;
    Growth growth = Growth::bounded();

    bool is_zero() const { return components.empty(); }
    Growth amplitude_growth() const { return growth.amplitude(); }

    Eigen::VectorXd value(double t, Eigen::Index dimension) const {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(dimension);
        for (const auto& c : components) v += c.time(t) * c.coefficients;
        return v;
    }

    Eigen::MatrixXd gram() const {
        const auto m = static_cast<Eigen::Index>(components.size());
        Eigen::MatrixXd G(m, m);
        for (Eigen::Index j = 0; j < m; ++j)
            for (Eigen::Index l = 0; l < m; ++l) G(j, l) = components[j].coefficients.dot(components[l].coefficients);
        return G;
    }

    /// Same time profiles with every coefficient vector mapped by M.
    VectorForcing transformed(const Eigen::MatrixXd& M) const {
        VectorForcing out;
        out.growth = growth;
        for (const auto& c : components) out.components.push_back({c.time, M * c.coefficients});
        return out;
    }
};

struct TransformabilityCertificate {
    double epsilon_tested = 0.0;
    double weighted_norm = 0.0;   // integral of exp(-t/eps) ||f(t)||^2
    double truncation_T = 0.0;
    double tail_bound = 0.0;
    double envelope_constant = 0.0;  // sup over audit samples of ||f(t)||^2 / envelope(t)
};

namespace detail {

inline double gram_form(const std::vector<TimeProfile>& profiles, const Eigen::MatrixXd& G, double t) {
    const auto m = static_cast<Eigen::Index>(profiles.size());
    Eigen::VectorXd g(m);
    for (Eigen::Index j = 0; j < m; ++j) g(j) = profiles[j](t);
    return g.dot(G * g);
}

inline TransformabilityCertificate certify(const std::vector<TimeProfile>& profiles, const Eigen::MatrixXd& G,
                                           const Growth& growth, double eps, double tol,
                                           const QuadratureSpec& quad) {
    if (!(eps > 0.0)) throw InvalidArgument("certify_transformable: eps must be positive");
    if (!(tol > 0.0)) throw InvalidArgument("certify_transformable: tol must be positive");
    TransformabilityCertificate cert;
    cert.epsilon_tested = eps;
    if (profiles.empty() || G.isZero(0.0)) return cert;
    if (!growth.tamed_by(1.0 / eps))
        throw TransformabilityError(
            "transformability violated: declared growth of ||f||^2 is not dominated by exp(-t/eps) at eps=" +
            csv::format_double(eps));
    auto sq = [&](double t) { return gram_form(profiles, G, t); };
    try {
        cert.weighted_norm = weighted_halfline(sq, eps, quad, growth);
    } catch (const QuadratureError& e) {
        throw TransformabilityError(std::string("transformability violated: weighted norm did not converge (") +
                                    e.what() + ")");
    }
    // Envelope constant over an audit sample spanning the weight's effective support.
    const auto& rule = gauss_laguerre_rule(quad.nodes);
    double C = 0.0;
    for (double x : rule.nodes) {
        const double t = eps * x;
        const double v = sq(t);
        const double env = growth.envelope(t);
        if (!std::isfinite(v)) throw TransformabilityError("transformability violated: ||f||^2 is non-finite");
        C = std::max(C, v / env);
    }
    if (!std::isfinite(C))
        throw TransformabilityError("transformability violated: samples exceed the declared growth envelope");
    cert.envelope_constant = C;
    const double mu = 1.0 / eps;
    double T = eps;
    for (int iter = 0; iter < 200; ++iter, T *= 1.5) {
        const double tail = C * growth.tail_bound(mu, T);
        if (tail <= tol * cert.weighted_norm) {
            cert.truncation_T = T;
            cert.tail_bound = tail;
            return cert;
        }
    }
    throw TransformabilityError("transformability violated: tail bound never drops below tolerance");
}

inline std::vector<TimeProfile> profiles_of(const auto& forcing) {
    std::vector<TimeProfile> p;
    for (const auto& c : forcing.components) p.push_back(c.time);
    return p;
}

}  // namespace detail

/// Certificate that the integral of exp(-t/eps) ||f(t,.)||_2^2 is finite; the spatial
/// norm is taken by Plancherel on the frequency grid.
inline TransformabilityCertificate certify_transformable(const ForcingTerm& f, const FrequencyGrid& grid, double eps,
                                                         double tol, const QuadratureSpec& quad = {}) {
    return detail::certify(detail::profiles_of(f), f.gram(grid), f.growth, eps, tol, quad);
}

inline TransformabilityCertificate certify_transformable(const VectorForcing& f, double eps, double tol,
                                                         const QuadratureSpec& quad = {}) {
    return detail::certify(detail::profiles_of(f), f.gram(), f.growth, eps, tol, quad);
}

/// Spatial profiles commonly used in configs and tests (Fourier side).
namespace profiles {

/// amplitude * exp(-width^2 |xi|^2 / 2): transform of a Gaussian of standard width `width`.
inline SpaceProfile gaussian(double amplitude = 1.0, double width = 1.0) {
    return [=](std::span<const double> xi) { return Complex(amplitude * std::exp(-0.5 * width * width * norm2(xi)), 0.0); };
}

/// amplitude / (1 + |xi|^2)
inline SpaceProfile lorentzian(double amplitude = 1.0) {
    return [=](std::span<const double> xi) { return Complex(amplitude / (1.0 + norm2(xi)), 0.0); };
}

}  // namespace profiles

}  // namespace wie
