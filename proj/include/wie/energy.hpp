#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "wie/error.hpp"
#include "wie/quadrature.hpp"

namespace wie {

/// Weighted energy; `finite == false` means the weighted integrand crossed the ceiling at `divergence_time`.
struct EnergyValue {
    double value = 0.0;
    bool finite = true;
    double divergence_time = std::numeric_limits<double>::quiet_NaN();
};

struct EnergyOptions {
    double ceiling = 1e12;      // bound on |weighted integrand| before the energy is declared divergent
    double scan_span = 1000.0;  // scan [0, scan_span * eps] for growth before integrating
};

namespace detail {

/// Scans the weighted integrand on a geometric grid, then integrates it on the half line.
template <class F>
EnergyValue weighted_energy(F&& integrand, double eps, const Growth& growth, const QuadratureSpec& quad,
                            const EnergyOptions& opt) {
    EnergyValue out;
    for (double tau = 0.0; tau <= opt.scan_span; tau = tau == 0.0 ? 0.125 : tau * 1.25) {
        const double t = eps * tau;
        double w;
        try {
            w = std::exp(-tau) * integrand(t);
        } catch (const OverflowError&) {
            w = std::numeric_limits<double>::infinity();
        }
        if (!std::isfinite(w) || std::abs(w) > opt.ceiling) {
            out.value = std::numeric_limits<double>::infinity();
            out.finite = false;
            out.divergence_time = t;
            return out;
        }
    }
    if (!growth.tamed_by(1.0 / eps)) {
        out.value = std::numeric_limits<double>::infinity();
        out.finite = false;
        out.divergence_time = eps * opt.scan_span;
        return out;
    }
    out.value = weighted_halfline(integrand, eps, quad, growth);
    return out;
}

}  // namespace detail

/// Weighted Poincare inequality (1/2) int w|y|^2 <= eps |y(0)|^2 + 2 eps^2 int w|y'|^2, w = exp(-t/eps).
struct PoincareCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double slack() const { return rhs - lhs; }
    bool holds(double tol = 1e-10) const { return lhs <= rhs + tol * std::max(1.0, std::abs(rhs)); }
};

}  // namespace wie
