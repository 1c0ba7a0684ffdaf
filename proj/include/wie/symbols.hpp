#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wie/csv.hpp"
#include "wie/error.hpp"

namespace wie {

using FrequencyFn = std::function<double(std::span<const double>)>;

inline double norm2(std::span<const double> xi) {
    double s = 0.0;
    for (double v : xi) s += v * v;
    return s;
}

/// Flat list of frequency vectors of a fixed dimension.
struct FrequencySamples {
    int dimension = 1;
    std::vector<double> coords;

    std::size_t size() const { return dimension > 0 ? coords.size() / dimension : 0; }
    std::span<const double> operator[](std::size_t k) const {
        return {coords.data() + k * dimension, static_cast<std::size_t>(dimension)};
    }

    /// Tensor grid with `points` equispaced nodes per axis covering [-half_width, half_width].
    static FrequencySamples tensor(int dimension, int points, double half_width) {
        FrequencySamples s{dimension, {}};
        std::vector<double> axis(points);
        for (int i = 0; i < points; ++i)
            axis[i] = points == 1 ? 0.0 : -half_width + 2.0 * half_width * i / (points - 1);
        std::size_t total = 1;
        for (int d = 0; d < dimension; ++d) total *= points;
        s.coords.reserve(total * dimension);
        for (std::size_t flat = 0; flat < total; ++flat) {
            std::size_t rem = flat;
            for (int d = 0; d < dimension; ++d) {
                s.coords.push_back(axis[rem % points]);
                rem /= points;
            }
        }
        return s;
    }
};

enum class SymbolKind { Classical, Fractional, ZerothOrder, Custom };

inline const char* to_string(SymbolKind k) {
    switch (k) {
        case SymbolKind::Classical: return "classical";
        case SymbolKind::Fractional: return "fractional";
        case SymbolKind::ZerothOrder: return "zeroth-order";
        case SymbolKind::Custom: return "custom";
    }
    return "?";
}

/// Real Fourier multiplier symbol L(xi) with a certified lower bound K <= 0.
///
/// Classical and fractional symbols carry the analytic bound K = 0. Zeroth-order
/// and custom symbols are certified on an audit grid: K = min(0, inf_grid L - margin).
/// The audit grid and margin are kept so reports can record them. Immutable.
class MultiplierSymbol {
public:
    static MultiplierSymbol classical(int dimension) {
        check_dimension(dimension);
        MultiplierSymbol s(SymbolKind::Classical, dimension);
        s.eval_ = [](std::span<const double> xi) { return norm2(xi); };
        return s;
    }

    static MultiplierSymbol fractional(double order, int dimension) {
        check_dimension(dimension);
        if (!(order > 0.0 && order < 1.0)) throw InvalidArgument("s outside (0,1)");
        MultiplierSymbol s(SymbolKind::Fractional, dimension);
        s.order_ = order;
        s.eval_ = [order](std::span<const double> xi) { return std::pow(norm2(xi), order); };
        return s;
    }

    /// L(xi) = mass - kappa_hat(xi) for an even, real kernel transform.
    static MultiplierSymbol zeroth_order(FrequencyFn kappa_hat, double mass, int dimension,
                                         const FrequencySamples& audit_grid, double margin = 0.0) {
        check_dimension(dimension);
        if (!std::isfinite(mass)) throw InvalidArgument("zeroth-order: mass must be finite");
        check_audit_grid(audit_grid, dimension);
        std::vector<double> neg(dimension);
        for (std::size_t k = 0; k < audit_grid.size(); ++k) {
            const auto xi = audit_grid[k];
            const double v = kappa_hat(xi);
            if (!std::isfinite(v)) throw InvalidArgument("zeroth-order: kappa_hat returned a non-finite value");
            for (int d = 0; d < dimension; ++d) neg[d] = -xi[d];
            const double w = kappa_hat(neg);
            if (std::abs(v - w) > 1e-12 * std::max(1.0, std::abs(v)))
                throw InvalidArgument("zeroth-order: kappa_hat must be even");
        }
        MultiplierSymbol s(SymbolKind::ZerothOrder, dimension);
        s.mass_ = mass;
        s.eval_ = [k = std::move(kappa_hat), mass](std::span<const double> xi) { return mass - k(xi); };
        s.certify(audit_grid, margin);
        return s;
    }

    static MultiplierSymbol custom(FrequencyFn evaluator, int dimension, const FrequencySamples& audit_grid,
                                   double margin = 0.0, std::string label = "custom") {
        check_dimension(dimension);
        check_audit_grid(audit_grid, dimension);
        MultiplierSymbol s(SymbolKind::Custom, dimension);
        s.label_ = std::move(label);
        s.eval_ = std::move(evaluator);
        s.certify(audit_grid, margin);
        return s;
    }

    /// Custom symbol from a radial table (|xi|, L) with linear interpolation, held beyond the ends.
    static MultiplierSymbol from_table(std::vector<std::pair<double, double>> table, int dimension,
                                       const FrequencySamples& audit_grid, double margin = 0.0) {
        if (table.empty()) throw InvalidArgument("custom symbol table is empty");
        auto shared = std::make_shared<const std::vector<std::pair<double, double>>>(std::move(table));
        return custom(
            [shared](std::span<const double> xi) { return csv::interpolate(*shared, std::sqrt(norm2(xi))); },
            dimension, audit_grid, margin, "table");
    }

    double operator()(std::span<const double> xi) const { return eval_(xi); }
    double operator()(double xi) const {
        const double one[1] = {xi};
        return eval_(std::span<const double>(one, 1));
    }

    SymbolKind kind() const { return kind_; }
    int dimension() const { return dimension_; }
    double lower_bound() const { return lower_bound_; }
    double order() const { return order_; }
    double mass() const { return mass_; }
    double margin() const { return margin_; }
    std::size_t audit_points() const { return audit_points_; }
    double audit_infimum() const { return audit_inf_; }

    std::string describe() const {
        std::string d = to_string(kind_);
        if (kind_ == SymbolKind::Fractional) d += "(s=" + csv::format_double(order_) + ")";
        if (kind_ == SymbolKind::ZerothOrder) d += "(mass=" + csv::format_double(mass_) + ")";
        if (kind_ == SymbolKind::Custom) d += "(" + label_ + ")";
        return d + ",N=" + std::to_string(dimension_);
    }

    /// Number of grid points where L(xi) < K. Zero for a sound certificate.
    std::size_t audit(const FrequencySamples& grid) const {
        std::size_t bad = 0;
        for (std::size_t k = 0; k < grid.size(); ++k)
            if (!(eval_(grid[k]) >= lower_bound_)) ++bad;
        return bad;
    }

private:
    MultiplierSymbol(SymbolKind kind, int dimension) : kind_(kind), dimension_(dimension) {}

    static void check_dimension(int dimension) {
        if (dimension < 1) throw InvalidArgument("symbol dimension must be >= 1");
    }
    static void check_audit_grid(const FrequencySamples& grid, int dimension) {
        if (grid.size() == 0) throw InvalidArgument("audit grid is empty");
        if (grid.dimension != dimension) throw InvalidArgument("audit grid dimension mismatch");
    }

    void certify(const FrequencySamples& grid, double margin) {
        if (!(margin >= 0.0)) throw InvalidArgument("lower-bound margin must be >= 0");
        double inf = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const double v = eval_(grid[k]);
            if (!std::isfinite(v)) throw InvalidArgument("symbol evaluates to a non-finite value on the audit grid");
            inf = std::min(inf, v);
        }
        audit_inf_ = inf;
        audit_points_ = grid.size();
        margin_ = margin;
        lower_bound_ = std::min(0.0, inf - margin);
    }

    SymbolKind kind_;
    int dimension_;
    FrequencyFn eval_;
    double lower_bound_ = 0.0;
    double order_ = 1.0;
    double mass_ = 0.0;
    double margin_ = 0.0;
    double audit_inf_ = 0.0;
    std::size_t audit_points_ = 0;
    std::string label_;
};

inline constexpr double kDefaultEpsilonCap = 0.5;

/// Admissible epsilon range for a symbol: 4 eps |K| <= safety / 2.
struct EpsilonPolicy {
    double epsilon_max = kDefaultEpsilonCap;
    double safety = 1.0;

    bool admits(double eps) const { return eps > 0.0 && eps <= epsilon_max; }

    void require(double eps) const {
        if (!admits(eps))
            throw PolicyError("epsilon " + csv::format_double(eps) + " outside admissible range (0, " +
                                  csv::format_double(epsilon_max) + "]",
                              eps, epsilon_max);
    }
};

inline EpsilonPolicy epsilon_threshold(double lower_bound, double safety = 1.0, double cap = kDefaultEpsilonCap) {
    if (!std::isfinite(lower_bound)) throw InvalidArgument("lower bound K must be finite");
    if (!(safety > 0.0 && safety <= 1.0)) throw InvalidArgument("safety must lie in (0,1]");
    if (lower_bound >= 0.0) return {cap, safety};
    return {std::min(cap, safety / (8.0 * -lower_bound)), safety};
}

inline EpsilonPolicy epsilon_threshold(const MultiplierSymbol& symbol, double safety = 1.0,
                                       double cap = kDefaultEpsilonCap) {
    return epsilon_threshold(symbol.lower_bound(), safety, cap);
}

}  // namespace wie
