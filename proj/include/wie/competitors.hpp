#pragma once

#include <cmath>
#include <vector>

namespace wie {

/// Time shape t^power * exp(-rate t); vanishes at t = 0 for power >= 1.
struct CompetitorShape {
    int power = 1;
    double rate = 1.0;

    double value(double t) const { return std::pow(t, power) * std::exp(-rate * t); }
    double derivative(double t) const {
        const double e = std::exp(-rate * t);
        return (power * std::pow(t, power - 1) - rate * std::pow(t, power)) * e;
    }
};

/// Polynomial-times-decaying-exponential shapes used to probe minimality.
inline std::vector<CompetitorShape> competitor_shapes() {
    std::vector<CompetitorShape> out;
    for (int k : {1, 2, 3})
        for (double a : {0.5, 1.0, 3.0, 10.0}) out.push_back({k, a});
    return out;
}

inline const std::vector<double>& competitor_amplitudes() {
    static const std::vector<double> d = {-1e-1, -1e-2, 1e-2, 1e-1};
    return d;
}

}  // namespace wie
