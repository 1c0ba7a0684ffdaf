#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "wie/csv.hpp"
#include "wie/energy.hpp"
#include "wie/error.hpp"
#include "wie/forcing.hpp"
#include "wie/frequency_grid.hpp"
#include "wie/quadrature.hpp"
#include "wie/symbols.hpp"

namespace wie {

/// u' + L u = f in R^N with u(0) = u0, posed per frequency node.
struct SpectralProblem {
    MultiplierSymbol symbol;
    SpaceProfile u0_hat;
    ForcingTerm f;
    FrequencyGrid grid;
    bool real_field = true;  // enforce conjugate symmetry of u0_hat and the space profiles
    std::string id = "problem";

    void validate() const;
};

/// Values that only depend on the problem and the grid, evaluated once.
struct SpectralTables {
    std::vector<double> L;                  // symbol per node
    std::vector<Complex> u0;                // initial datum per node
    std::vector<std::vector<Complex>> h;    // h[j][k]: space profile j at node k
    std::vector<double> weights;

    explicit SpectralTables(const SpectralProblem& p) {
        const auto n = p.grid.size();
        L.resize(n);
        u0.resize(n);
        weights.resize(n);
        h.assign(p.f.components.size(), std::vector<Complex>(n));
        for (std::size_t k = 0; k < n; ++k) {
            const auto xi = p.grid.node(k);
            L[k] = p.symbol(xi);
            u0[k] = p.u0_hat(xi);
            weights[k] = p.grid.weight(k);
            for (std::size_t j = 0; j < h.size(); ++j) h[j][k] = p.f.components[j].space_hat(xi);
            if (!std::isfinite(L[k]) || !std::isfinite(u0[k].real()) || !std::isfinite(u0[k].imag()))
                throw InvalidArgument("spectral problem: non-finite symbol or initial datum at node " +
                                      std::to_string(k));
        }
    }

    /// f_hat(t, xi_k) for every node.
    std::vector<Complex> forcing(const ForcingTerm& f, double t) const {
        std::vector<Complex> out(L.size(), Complex(0.0));
        for (std::size_t j = 0; j < h.size(); ++j) {
            const double g = f.components[j].time(t);
            if (g == 0.0) continue;
            for (std::size_t k = 0; k < out.size(); ++k) out[k] += g * h[j][k];
        }
        return out;
    }
};

namespace detail {

inline void require_conjugate_symmetric(const FrequencyGrid& grid, const std::vector<Complex>& v,
                                        const std::string& what) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const long p = grid.partner(k);
        if (p < 0) continue;
        if (static_cast<std::size_t>(p) == k) {
            // Nyquist corner: the continuum partner is off the grid.
            bool origin = true;
            for (double x : grid.node(k)) origin = origin && x == 0.0;
            if (!origin) continue;
        }
        const Complex a = v[k], b = std::conj(v[static_cast<std::size_t>(p)]);
        if (std::abs(a - b) > 1e-12 * std::max(1.0, std::abs(a)))
            throw InvalidArgument(what + " is not conjugate symmetric at node " + std::to_string(k) +
                                  "; the physical field would not be real");
    }
}

}  // namespace detail

inline void SpectralProblem::validate() const {
    if (symbol.dimension() != grid.dimension()) throw InvalidArgument("spectral problem: symbol/grid dimension mismatch");
    if (!u0_hat) throw InvalidArgument("spectral problem: missing initial datum");
    for (const auto& c : f.components)
        if (!c.space_hat || !c.time.fn) throw InvalidArgument("spectral problem: incomplete forcing component");
    const SpectralTables tab(*this);
    double vl = 0.0;
    for (std::size_t k = 0; k < tab.L.size(); ++k) vl += tab.weights[k] * (1.0 + std::abs(tab.L[k])) * std::norm(tab.u0[k]);
    if (!std::isfinite(vl)) throw InvalidArgument("spectral problem: initial datum has infinite V_L norm on the grid");
    if (real_field) {
        detail::require_conjugate_symmetric(grid, tab.u0, "initial datum");
        for (std::size_t j = 0; j < tab.h.size(); ++j)
            detail::require_conjugate_symmetric(grid, tab.h[j], "forcing space profile " + std::to_string(j));
    }
}

/// Per-node roots of eps r^2 - r - L = 0.
struct RootData {
    double eps = 0.0;
    std::vector<double> L;
    std::vector<double> Z;       // sqrt(1 + 4 eps L)
    std::vector<double> lambda;  // (1 - Z) / (2 eps), the decaying root
    std::vector<double> mu;      // (1 + Z) / (2 eps), the growing root
};

/// Bits of `check_bounds`; a set bit is a violated inequality.
enum BoundBit : unsigned {
    kZFloor = 1u << 0,        // Z >= 1/sqrt(2)
    kSymbolOverZ2 = 1u << 1,  // |L|/Z^2 <= 1/(4 eps)
    kLambdaBelowMu = 1u << 2, // |lambda|/Z <= mu/Z
    kMuOverZ = 1u << 3,       // mu/Z <= (1 + sqrt 2)/(2 eps)
    kMuFloor = 1u << 4,       // mu >= 1/(2 eps)
    kLambdaCeiling = 1u << 5, // lambda <= -2K
    kLambdaSqrt = 1u << 6,    // |lambda| <= sqrt(|L|/eps)
    kLambdaBelowL = 1u << 7,  // -lambda <= L
};

inline constexpr unsigned kFirstBundle = kZFloor | kSymbolOverZ2 | kLambdaBelowMu | kMuOverZ | kMuFloor;
inline constexpr unsigned kSecondBundle = kLambdaCeiling | kLambdaSqrt | kLambdaBelowL;

inline std::vector<std::string> describe_bounds(unsigned mask) {
    static const char* names[] = {"Z>=1/sqrt2",       "|L|/Z^2<=1/(4eps)", "|lambda|<=mu",
                                  "mu/Z<=(1+sqrt2)/(2eps)", "mu>=1/(2eps)", "lambda<=-2K",
                                  "|lambda|<=sqrt(|L|/eps)", "-lambda<=L"};
    std::vector<std::string> out;
    for (int b = 0; b < 8; ++b)
        if (mask & (1u << b)) out.emplace_back(names[b]);
    return out;
}

/// Exact (tolerance-free) evaluation of both inequality bundles at one node.
inline unsigned check_bounds(double L, double eps, double K) {
    const double radicand = 1.0 + 4.0 * eps * L;
    const double Z = std::sqrt(radicand);
    const double lambda = -2.0 * L / (1.0 + Z);
    const double mu = (1.0 + Z) / (2.0 * eps);
    unsigned bad = 0;
    if (!(Z >= std::sqrt(0.5))) bad |= kZFloor;
    if (!(std::abs(L) / radicand <= 1.0 / (4.0 * eps))) bad |= kSymbolOverZ2;
    if (!(std::abs(lambda) / Z <= mu / Z)) bad |= kLambdaBelowMu;
    if (!(mu / Z <= (1.0 + std::sqrt(2.0)) / (2.0 * eps))) bad |= kMuOverZ;
    if (!(mu >= 1.0 / (2.0 * eps))) bad |= kMuFloor;
    if (!(lambda <= -2.0 * K)) bad |= kLambdaCeiling;
    if (!(std::abs(lambda) <= std::sqrt(std::abs(L) / eps))) bad |= kLambdaSqrt;
    if (!(-lambda <= L)) bad |= kLambdaBelowL;
    return bad;
}

namespace detail {

inline bool close_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace detail

/// Roots at every node. Fails with PolicyError once 1 + 4 eps L drops below 1/2 and
/// asserts the root identities and both bound bundles node by node.
inline RootData root_data(const MultiplierSymbol& symbol, double eps, const std::vector<double>& L_values) {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidArgument("root_data: eps must be positive");
    RootData r;
    r.eps = eps;
    r.L = L_values;
    const auto n = L_values.size();
    r.Z.resize(n);
    r.lambda.resize(n);
    r.mu.resize(n);
    const double K = symbol.lower_bound();
    for (std::size_t k = 0; k < n; ++k) {
        const double L = L_values[k];
        const double radicand = 1.0 + 4.0 * eps * L;
        if (!(radicand >= 0.5))
            throw PolicyError("root_data: 1 + 4 eps L < 1/2 at node " + std::to_string(k) + "; eps " +
                                  csv::format_double(eps) + " exceeds the admissible range",
                              eps, epsilon_threshold(symbol).epsilon_max);
        const double Z = std::sqrt(radicand);
        const double lambda = -2.0 * L / (1.0 + Z);
        const double mu = (1.0 + Z) / (2.0 * eps);
        r.Z[k] = Z;
        r.lambda[k] = lambda;
        r.mu[k] = mu;
        const bool vieta = detail::close_rel(lambda + mu, 1.0 / eps, 1e-12) &&
                           detail::close_rel(lambda * mu, -L / eps, 1e-12) &&
                           detail::close_rel(lambda * (eps * lambda - 1.0), L, 1e-12);
        if (!vieta) throw Error("root_data: root identities fail at node " + std::to_string(k));
        if (const unsigned bad = check_bounds(L, eps, K)) {
            std::string what = "root_data: bound violated at node " + std::to_string(k) + ":";
            for (const auto& s : describe_bounds(bad)) what += " " + s;
            throw Error(what);
        }
    }
    return r;
}

inline RootData root_data(const MultiplierSymbol& symbol, double eps, const FrequencyGrid& grid) {
    std::vector<double> L(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) L[k] = symbol(grid.node(k));
    return root_data(symbol, eps, L);
}

/// Complex values over a time grid x frequency grid, row-major in time.
struct SpectralField {
    std::vector<double> times;
    std::size_t nodes = 0;
    std::vector<Complex> values;
    double eps = std::numeric_limits<double>::quiet_NaN();  // NaN for the limit solution
    std::string label;

    Complex at(std::size_t j, std::size_t k) const { return values[j * nodes + k]; }
    std::span<const Complex> slice(std::size_t j) const { return {values.data() + j * nodes, nodes}; }
};

/// u_hat and its time derivative at one instant, over all nodes.
struct SpectralState {
    std::vector<Complex> value;
    std::vector<Complex> derivative;
};

struct SpectralTrajectory {
    std::function<SpectralState(double)> state;
    Growth growth = Growth::bounded();  // declared growth of sum_k w_k (|u|^2 + |u'|^2)

    /// u + delta * shape(t) * direction, exact derivative.
    SpectralTrajectory perturbed(std::function<double(double)> shape, std::function<double(double)> shape_slope,
                                 std::vector<Complex> direction, double delta) const {
        SpectralTrajectory out;
        auto base = state;
        out.state = [=](double t) {
            SpectralState s = base(t);
            const double a = delta * shape(t), b = delta * shape_slope(t);
            for (std::size_t k = 0; k < direction.size(); ++k) {
                s.value[k] += a * direction[k];
                s.derivative[k] += b * direction[k];
            }
            return s;
        };
        out.growth = growth;
        return out;
    }
};

namespace detail {

/// Distinct symbol values on the grid; nodes sharing a value share every time integral.
struct SymbolClasses {
    std::vector<double> values;
    std::vector<std::size_t> of_node;

    explicit SymbolClasses(const std::vector<double>& L) : of_node(L.size()) {
        std::map<double, std::size_t> index;
        for (std::size_t k = 0; k < L.size(); ++k) {
            auto [it, fresh] = index.try_emplace(L[k], values.size());
            if (fresh) values.push_back(L[k]);
            of_node[k] = it->second;
        }
    }
};

inline double capped_exp(double x, const QuadratureSpec& quad) {
    if (x > quad.exponent_cap) throw OverflowError("exponent " + csv::format_double(x) + " exceeds cap");
    return std::exp(x);
}

}  // namespace detail

/// Finite-energy minimizer per node:
/// u_eps = e^{lambda t}(u0 - S0/Z) + (1/Z) int_0^t e^{lambda(t-s)} f ds + (1/Z) int_t^inf e^{-mu(s-t)} f ds,
/// with S0 = int_0^inf e^{-mu s} f ds.
class SelectedSpectralMinimizer {
public:
    SelectedSpectralMinimizer(const SpectralProblem& p, double eps, const QuadratureSpec& quad = {})
        : problem_(p), eps_(eps), quad_(quad), tab_(p), classes_(tab_.L) {
        quad_.validate();
        epsilon_threshold(p.symbol).require(eps);
        roots_ = root_data(p.symbol, eps, tab_.L);
        if (!p.f.is_zero()) certify_transformable(p.f, p.grid, eps, 1e-8, quad_);
        const auto m = p.f.components.size();
        const Growth amp = p.f.amplitude_growth();
        tail0_.assign(classes_.values.size(), std::vector<double>(m));
        for (std::size_t c = 0; c < classes_.values.size(); ++c) {
            const double mu = class_mu(c);
            for (std::size_t j = 0; j < m; ++j)
                tail0_[c][j] = shifted_tail(p.f.components[j].time, mu, 0.0, quad_, amp);
        }
    }

    double eps() const { return eps_; }
    const RootData& roots() const { return roots_; }
    const SpectralTables& tables() const { return tab_; }
    const SpectralProblem& problem() const { return problem_; }

    SpectralState state(double t) const {
        if (t < 0.0) throw InvalidArgument("minimizer: t must be >= 0");
        const auto m = problem_.f.components.size();
        const auto nc = classes_.values.size();
        const Growth amp = problem_.f.amplitude_growth();
        std::vector<double> growing(nc);
        std::vector<std::vector<double>> conv(nc, std::vector<double>(m)), tail(nc, std::vector<double>(m));
        for (std::size_t c = 0; c < nc; ++c) {
            const double lambda = class_lambda(c), mu = class_mu(c);
            growing[c] = detail::capped_exp(lambda * t, quad_);
            for (std::size_t j = 0; j < m; ++j) {
                const auto& g = problem_.f.components[j].time;
                conv[c][j] = convolution_integral(g, lambda, t, quad_);
                tail[c][j] = shifted_tail(g, mu, t, quad_, amp);
            }
        }
        SpectralState s{std::vector<Complex>(tab_.L.size()), std::vector<Complex>(tab_.L.size())};
        for (std::size_t k = 0; k < tab_.L.size(); ++k) {
            const std::size_t c = classes_.of_node[k];
            const double lambda = roots_.lambda[k], mu = roots_.mu[k], Z = roots_.Z[k];
            Complex s0 = 0.0, middle = 0.0, third = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                const Complex h = tab_.h[j][k];
                s0 += h * tail0_[c][j];
                middle += h * conv[c][j];
                third += h * tail[c][j];
            }
            const double e = growing[c];
            middle /= Z;
            // Tails grouped so that at t = 0 they cancel exactly and u(0) = u0 bit for bit.
            s.value[k] = e * tab_.u0[k] + (third - e * s0) / Z + middle;
            s.derivative[k] = lambda * (e * (tab_.u0[k] - s0 / Z) + middle) + mu * third / Z;
        }
        return s;
    }

    std::vector<Complex> slice(double t) const { return state(t).value; }
    std::vector<Complex> derivative_slice(double t) const { return state(t).derivative; }

    SpectralField field(const std::vector<double>& times) const {
        SpectralField out{times, tab_.L.size(), {}, eps_, problem_.id};
        out.values.reserve(times.size() * tab_.L.size());
        for (double t : times) {
            const auto v = slice(t);
            out.values.insert(out.values.end(), v.begin(), v.end());
        }
        return out;
    }

    SpectralTrajectory trajectory() const {
        SpectralTrajectory tr;
        const auto self = std::make_shared<const SelectedSpectralMinimizer>(*this);
        tr.state = [self](double t) { return self->state(t); };
        double rate = std::max(0.0, problem_.f.growth.rate);
        for (double l : roots_.lambda) rate = std::max(rate, 2.0 * l);
        tr.growth = {rate, problem_.f.growth.degree + 2.0, problem_.f.growth.superexponential};
        return tr;
    }

private:
    double class_lambda(std::size_t c) const {
        const double Z = std::sqrt(1.0 + 4.0 * eps_ * classes_.values[c]);
        return -2.0 * classes_.values[c] / (1.0 + Z);
    }
    double class_mu(std::size_t c) const {
        const double Z = std::sqrt(1.0 + 4.0 * eps_ * classes_.values[c]);
        return (1.0 + Z) / (2.0 * eps_);
    }

    SpectralProblem problem_;
    double eps_;
    QuadratureSpec quad_;
    SpectralTables tab_;
    detail::SymbolClasses classes_;
    RootData roots_;
    std::vector<std::vector<double>> tail0_;
};

/// u_hat(t) = e^{-L t}(u0 + int_0^t e^{L s} f ds) per node.
class SemigroupSolution {
public:
    explicit SemigroupSolution(const SpectralProblem& p, const QuadratureSpec& quad = {})
        : problem_(p), quad_(quad), tab_(p), classes_(tab_.L) {}

    const SpectralTables& tables() const { return tab_; }

    SpectralState state(double t) const {
        if (t < 0.0 || !std::isfinite(t)) throw InvalidArgument("semigroup: t must be finite and >= 0");
        const auto m = problem_.f.components.size();
        const auto nc = classes_.values.size();
        std::vector<double> decay(nc);
        std::vector<std::vector<double>> conv(nc, std::vector<double>(m));
        for (std::size_t c = 0; c < nc; ++c) {
            const double L = classes_.values[c];
            decay[c] = detail::capped_exp(-L * t, quad_);
            for (std::size_t j = 0; j < m; ++j) {
                try {
                    conv[c][j] = convolution_integral(problem_.f.components[j].time, -L, t, quad_);
                } catch (const QuadratureError& e) {
                    throw QuadratureError(std::string(e.what()) + " (symbol class " + std::to_string(c) + ")",
                                          e.partial_value(), e.error_estimate());
                }
            }
        }
        const auto f = tab_.forcing(problem_.f, t);
        SpectralState s{std::vector<Complex>(tab_.L.size()), std::vector<Complex>(tab_.L.size())};
        for (std::size_t k = 0; k < tab_.L.size(); ++k) {
            const std::size_t c = classes_.of_node[k];
            Complex v = decay[c] * tab_.u0[k];
            for (std::size_t j = 0; j < m; ++j) v += tab_.h[j][k] * conv[c][j];
            s.value[k] = v;
            s.derivative[k] = f[k] - tab_.L[k] * v;
        }
        return s;
    }

    std::vector<Complex> slice(double t) const { return state(t).value; }

    SpectralField field(const std::vector<double>& times) const {
        SpectralField out{times, tab_.L.size(), {}, std::numeric_limits<double>::quiet_NaN(), problem_.id};
        for (double t : times) {
            const auto v = slice(t);
            out.values.insert(out.values.end(), v.begin(), v.end());
        }
        return out;
    }

    SpectralTrajectory trajectory() const {
        SpectralTrajectory tr;
        const auto self = std::make_shared<const SemigroupSolution>(*this);
        tr.state = [self](double t) { return self->state(t); };
        tr.growth = {std::max(-2.0 * problem_.symbol.lower_bound(), problem_.f.growth.rate),
                     problem_.f.growth.degree + 2.0, problem_.f.growth.superexponential};
        return tr;
    }

private:
    SpectralProblem problem_;
    QuadratureSpec quad_;
    SpectralTables tab_;
    detail::SymbolClasses classes_;
};

inline SpectralField semigroup_solution(const SpectralProblem& p, const std::vector<double>& times,
                                        const QuadratureSpec& quad = {}) {
    return SemigroupSolution(p, quad).field(times);
}

inline Complex minimizer_hat(const SelectedSpectralMinimizer& m, double t, std::size_t node) {
    return m.slice(t).at(node);
}

inline Complex minimizer_derivative_hat(const SelectedSpectralMinimizer& m, double t, std::size_t node) {
    return m.derivative_slice(t).at(node);
}

/// sqrt(sum_k w_k (1 + |L_k|) |u_k|^2).
inline double vl_norm(std::span<const Complex> slice, const std::vector<double>& L, const std::vector<double>& w) {
    double s = 0.0;
    for (std::size_t k = 0; k < slice.size(); ++k) s += w[k] * (1.0 + std::abs(L[k])) * std::norm(slice[k]);
    return std::sqrt(s);
}

inline double vl_norm(std::span<const Complex> slice, const MultiplierSymbol& symbol, const FrequencyGrid& grid) {
    if (slice.size() != grid.size()) throw InvalidArgument("vl_norm: slice/grid size mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < slice.size(); ++k)
        s += grid.weight(k) * (1.0 + std::abs(symbol(grid.node(k)))) * std::norm(slice[k]);
    return std::sqrt(s);
}

/// Fourier-side energy: int exp(-t/eps) sum_k w_k ((eps/2)|u'|^2 + (1/2) L |u|^2 - Re(f conj u)) dt.
inline EnergyValue energy_spectral(const SpectralTrajectory& u, const SpectralProblem& p, double eps,
                                   const QuadratureSpec& quad = {}, const EnergyOptions& opt = {}) {
    if (!(eps > 0.0)) throw InvalidArgument("energy: eps must be positive");
    const SpectralTables tab(p);
    auto integrand = [&](double t) {
        const auto s = u.state(t);
        const auto f = tab.forcing(p.f, t);
        double sum = 0.0;
        for (std::size_t k = 0; k < tab.L.size(); ++k)
            sum += tab.weights[k] * (0.5 * eps * std::norm(s.derivative[k]) + 0.5 * tab.L[k] * std::norm(s.value[k]) -
                                     (f[k] * std::conj(s.value[k])).real());
        return sum;
    };
    const Growth g{std::max(u.growth.rate, p.f.growth.rate), u.growth.degree + p.f.growth.degree,
                   u.growth.superexponential || p.f.growth.superexponential};
    return detail::weighted_energy(integrand, eps, g, quad, opt);
}

/// Physical-space energy on the FFT grid: every field is transformed back and integrated over the box.
inline EnergyValue energy_physical(const SpectralTrajectory& u, const SpectralProblem& p, double eps,
                                   const QuadratureSpec& quad = {}, const EnergyOptions& opt = {}) {
    if (p.grid.mode() != FrequencyGrid::Mode::UniformFFT) throw InvalidArgument("physical energy needs an FFT grid");
    const SpectralTables tab(p);
    const double cell = p.grid.physical_cell();
    auto integrand = [&](double t) {
        const auto s = u.state(t);
        std::vector<Complex> Lu(s.value.size());
        for (std::size_t k = 0; k < Lu.size(); ++k) Lu[k] = tab.L[k] * s.value[k];
        const auto v = p.grid.to_physical(s.value);
        const auto d = p.grid.to_physical(s.derivative);
        const auto lv = p.grid.to_physical(Lu);
        const auto f = p.grid.to_physical(tab.forcing(p.f, t));
        double sum = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i)
            sum += 0.5 * eps * std::norm(d[i]) + 0.5 * (lv[i] * std::conj(v[i])).real() - (f[i] * std::conj(v[i])).real();
        return cell * sum;
    };
    const Growth g{std::max(u.growth.rate, p.f.growth.rate), u.growth.degree + p.f.growth.degree,
                   u.growth.superexponential || p.f.growth.superexponential};
    return detail::weighted_energy(integrand, eps, g, quad, opt);
}

/// Bound on sup_{[0,T]} ||u||_{V_L}^2 for the evolution solution.
struct AprioriBound {
    double bound = 0.0;
    double lower_bound_K = 0.0;
    double horizon = 0.0;
    double initial_vl2 = 0.0;
    double forcing_l2 = 0.0;  // int_0^T ||f||_2^2
    double measured_sup = 0.0;
    double ratio() const { return bound > 0.0 ? measured_sup / bound : (measured_sup > 0.0 ? INFINITY : 0.0); }
    bool holds() const { return measured_sup <= bound; }
};

inline AprioriBound apriori_bound(const SpectralProblem& p, double T, const QuadratureSpec& quad = {}) {
    if (!(T > 0.0)) throw InvalidArgument("apriori_bound: T must be positive");
    const SpectralTables tab(p);
    AprioriBound b;
    b.lower_bound_K = p.symbol.lower_bound();
    b.horizon = T;
    b.initial_vl2 = std::pow(vl_norm(tab.u0, tab.L, tab.weights), 2);
    if (!p.f.is_zero()) {
        const Eigen::MatrixXd G = p.f.gram(p.grid);
        std::vector<TimeProfile> prof;
        for (const auto& c : p.f.components) prof.push_back(c.time);
        b.forcing_l2 = integrate_interval([&](double s) { return detail::gram_form(prof, G, s); }, 0.0, T, quad);
    }
    const double K = b.lower_bound_K;
    b.bound = 2.0 * (1.0 - K) * (T + 1.0) * std::exp(-2.0 * K * T) * (b.initial_vl2 + b.forcing_l2);
    return b;
}

/// Bound plus the measured sup of ||u(t)||_{V_L}^2 over `times` for the evolution solution.
inline AprioriBound audit_apriori(const SpectralProblem& p, double T, const std::vector<double>& times,
                                  const QuadratureSpec& quad = {}) {
    auto b = apriori_bound(p, T, quad);
    const SemigroupSolution u(p, quad);
    const auto& tab = u.tables();
    for (double t : times) {
        if (t < 0.0 || t > T) continue;
        b.measured_sup = std::max(b.measured_sup, std::pow(vl_norm(u.slice(t), tab.L, tab.weights), 2));
    }
    return b;
}

/// Max over nodes and interior times of |-eps u'' + u' + L u - f| by centred differences.
inline double el_residual(const std::function<std::vector<Complex>(double)>& u, const SpectralProblem& p, double eps,
                          const std::vector<double>& t_grid) {
    if (t_grid.size() < 3) throw InvalidArgument("el_residual: need at least 3 grid points");
    const double h = t_grid[1] - t_grid[0];
    if (!(h > 0.0)) throw InvalidArgument("el_residual: grid must be increasing");
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (std::abs((t_grid[i] - t_grid[i - 1]) - h) > 1e-9 * h) throw InvalidArgument("el_residual: grid must be uniform");
    const SpectralTables tab(p);
    std::vector<std::vector<Complex>> v;
    v.reserve(t_grid.size());
    for (double t : t_grid) v.push_back(u(t));
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < t_grid.size(); ++i) {
        const auto f = tab.forcing(p.f, t_grid[i]);
        for (std::size_t k = 0; k < tab.L.size(); ++k) {
            const Complex d2 = (v[i + 1][k] - 2.0 * v[i][k] + v[i - 1][k]) / (h * h);
            const Complex d1 = (v[i + 1][k] - v[i - 1][k]) / (2.0 * h);
            worst = std::max(worst, std::abs(-eps * d2 + d1 + tab.L[k] * v[i][k] - f[k]));
        }
    }
    return worst;
}

/// (1/2) int w ||u||^2 <= eps ||u(0)||^2 + 2 eps^2 int w ||u'||^2 with Plancherel norms on the grid.
inline PoincareCheck poincare_spectral(const SpectralTrajectory& u, const SpectralProblem& p, double eps,
                                       const QuadratureSpec& quad = {}) {
    const SpectralTables tab(p);
    auto l2 = [&](const std::vector<Complex>& v) {
        double s = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) s += tab.weights[k] * std::norm(v[k]);
        return s;
    };
    const double u2 = weighted_halfline([&](double t) { return l2(u.state(t).value); }, eps, quad, u.growth);
    const double d2 = weighted_halfline([&](double t) { return l2(u.state(t).derivative); }, eps, quad, u.growth);
    return {0.5 * u2, eps * l2(u.state(0.0).value) + 2.0 * eps * eps * d2};
}

/// CSV rows t,k,xi_1[,xi_2..],re,im.
inline void write_field_csv(std::ostream& out, const SpectralField& field, const FrequencyGrid& grid) {
    out << "t,k";
    for (int d = 0; d < grid.dimension(); ++d) out << ",xi_" << (d + 1);
    out << ",re,im\n";
    for (std::size_t j = 0; j < field.times.size(); ++j) {
        for (std::size_t k = 0; k < field.nodes; ++k) {
            out << csv::format_double(field.times[j]) << ',' << k;
            for (double x : grid.node(k)) out << ',' << csv::format_double(x);
            const Complex v = field.at(j, k);
            out << ',' << csv::format_double(v.real()) << ',' << csv::format_double(v.imag()) << '\n';
        }
    }
}

/// Little-endian float64 pairs (re, im), row-major time x frequency, no header.
inline void write_field_binary(std::ostream& out, const SpectralField& field) {
    auto put = [&](double v) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
        out.write(bytes, 8);
    };
    for (const auto& v : field.values) {
        put(v.real());
        put(v.imag());
    }
}

}  // namespace wie
