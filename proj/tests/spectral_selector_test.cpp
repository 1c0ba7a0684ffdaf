#include "wie/competitors.hpp"
#include "wie/spectral_selector.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace {

using wie::Complex;
using wie::FrequencyGrid;
using wie::FrequencySamples;
using wie::MultiplierSymbol;
using wie::SelectedSpectralMinimizer;
using wie::SemigroupSolution;
using wie::SpectralProblem;
using wie::TimeProfile;

const double kSqrtPi = std::sqrt(std::numbers::pi);

Complex gaussian_hat(std::span<const double> xi) { return std::exp(-0.5 * wie::norm2(xi)); }

FrequencyGrid single_node(double xi, double weight = 1.0) {
    return FrequencyGrid::explicit_list(FrequencySamples{1, {xi}}, {weight});
}

SpectralProblem heat_problem(int points = 256, double half_width = 20.0) {
    return {MultiplierSymbol::classical(1), gaussian_hat, wie::ForcingTerm::zero(),
            FrequencyGrid::uniform_fft(1, points, half_width)};
}

SpectralProblem forced_fractional(double s = 0.5) {
    SpectralProblem p{MultiplierSymbol::fractional(s, 1), gaussian_hat, {}, FrequencyGrid::uniform_fft(1, 64, 10.0)};
    p.f.components.push_back({TimeProfile::exponential(1.0, -1.0), wie::profiles::gaussian(0.5, 2.0), "g"});
    p.f.components.push_back({TimeProfile::polynomial({0.2, 0.1}), wie::profiles::lorentzian(0.3), "l"});
    p.f.growth = wie::Growth::polynomial(2.0);
    return p;
}

TEST(RootData, Examples) {
    const auto grid = FrequencySamples::tensor(1, 11, 5.0);
    const auto zero = MultiplierSymbol::custom([](std::span<const double>) { return 0.0; }, 1, grid);
    auto r = wie::root_data(zero, 0.1, single_node(0.3));
    EXPECT_EQ(r.Z[0], 1.0);
    EXPECT_EQ(r.lambda[0], 0.0);
    EXPECT_DOUBLE_EQ(r.mu[0], 10.0);

    const auto three = MultiplierSymbol::custom([](std::span<const double>) { return 3.0; }, 1, grid);
    r = wie::root_data(three, 0.1, single_node(0.0));
    EXPECT_NEAR(r.Z[0], 1.4832397, 1e-7);
    EXPECT_NEAR(r.lambda[0], -2.416199, 1e-6);
    EXPECT_NEAR(r.mu[0], 12.416199, 1e-6);

    const auto neg = MultiplierSymbol::custom([](std::span<const double>) { return -1.0; }, 1, grid);
    r = wie::root_data(neg, 0.1, single_node(0.0));
    EXPECT_NEAR(r.Z[0], 0.7745967, 1e-7);
    EXPECT_GE(r.Z[0], 1.0 / std::sqrt(2.0));
    EXPECT_NEAR(r.lambda[0], 1.127017, 1e-6);
    EXPECT_NEAR(r.mu[0], 8.872983, 1e-6);

    EXPECT_NO_THROW(wie::root_data(neg, 0.125, single_node(0.0)));
    try {
        wie::root_data(neg, 0.13, single_node(0.0));
        FAIL();
    } catch (const wie::PolicyError& e) {
        EXPECT_DOUBLE_EQ(e.bound(), 0.125);
    }
}

TEST(RootData, BoundBundlesOnPolicyLadder) {
    const auto audit = FrequencySamples::tensor(1, 2001, 60.0);
    std::vector<MultiplierSymbol> symbols = {
        MultiplierSymbol::classical(1), MultiplierSymbol::fractional(0.5, 1),
        MultiplierSymbol::zeroth_order([](std::span<const double> x) { return std::exp(-0.5 * wie::norm2(x)); }, 1.0,
                                       1, audit),
        MultiplierSymbol::zeroth_order([](std::span<const double> x) { return std::exp(-0.5 * wie::norm2(x)); }, 0.0,
                                       1, audit)};
    for (const auto& L : symbols) {
        const double top = wie::epsilon_threshold(L).epsilon_max;
        for (double eps : {top, top / 10, 1e-2, 1e-3, 1e-4}) {
            std::vector<double> values(audit.size());
            for (std::size_t k = 0; k < audit.size(); ++k) {
                values[k] = L(audit[k]);
                EXPECT_EQ(wie::check_bounds(values[k], eps, L.lower_bound()), 0u) << L.describe() << " eps=" << eps;
            }
            EXPECT_NO_THROW(wie::root_data(L, eps, values));
        }
    }
}

TEST(Semigroup, HeatKernelExample) {
    const auto p = heat_problem();
    const SemigroupSolution u(p);
    for (double t : {0.0, 0.25, 1.0}) {
        const auto slice = u.slice(t);
        for (std::size_t k = 0; k < p.grid.size(); ++k) {
            const double xi = p.grid.node(k)[0];
            EXPECT_NEAR(std::abs(slice[k] - std::exp(-xi * xi * t - 0.5 * xi * xi)), 0.0, 1e-15);
        }
        const auto phys = p.grid.to_physical_real(slice);
        for (int j = 0; j < p.grid.points_per_axis(); ++j) {
            const double x = p.grid.physical_coordinate(j);
            EXPECT_NEAR(phys[j], std::exp(-x * x / (2.0 * (1.0 + 2.0 * t))) / std::sqrt(1.0 + 2.0 * t), 1e-12);
        }
    }
}

TEST(Semigroup, InitialValueAndMassConservation) {
    const auto p = forced_fractional();
    const SemigroupSolution u(p);
    const auto s0 = u.slice(0.0);
    const wie::SpectralTables tab(p);
    for (std::size_t k = 0; k < s0.size(); ++k) EXPECT_EQ(s0[k], tab.u0[k]);

    const auto audit = FrequencySamples::tensor(1, 401, 30.0);
    SpectralProblem z{MultiplierSymbol::zeroth_order(
                          [](std::span<const double> x) { return std::exp(-0.5 * wie::norm2(x)); }, 1.0, 1, audit),
                      gaussian_hat, {}, FrequencyGrid::uniform_fft(1, 32, 8.0)};
    const SemigroupSolution uz(z);
    for (double t : {0.5, 2.0, 10.0}) EXPECT_DOUBLE_EQ(uz.slice(t)[0].real(), 1.0);
}

TEST(Minimizer, ZeroForcingIsDecayingExponential) {
    const auto p = heat_problem(64, 10.0);
    const SelectedSpectralMinimizer m(p, 0.05);
    const auto& r = m.roots();
    for (double t : {0.0, 0.3, 2.0}) {
        const auto s = m.state(t);
        for (std::size_t k = 0; k < p.grid.size(); ++k) {
            const Complex u0 = m.tables().u0[k];
            EXPECT_NEAR(std::abs(s.value[k] - std::exp(r.lambda[k] * t) * u0), 0.0, 1e-15);
            EXPECT_NEAR(std::abs(s.derivative[k] - r.lambda[k] * std::exp(r.lambda[k] * t) * u0), 0.0,
                        1e-13 * std::max(1.0, std::abs(r.lambda[k])));
        }
    }
    EXPECT_EQ(wie::minimizer_hat(m, 0.0, 3), m.tables().u0[3]);
}

TEST(Minimizer, ZeroSymbolNodeWithConstantForcingIsLinear) {
    SpectralProblem p{MultiplierSymbol::classical(1), [](std::span<const double>) { return Complex(0.7); }, {},
                      single_node(0.0, 2.0)};
    p.f.components.push_back({TimeProfile::constant(1.5), [](std::span<const double>) { return Complex(1.0); }, "c"});
    for (double eps : {0.3, 0.05, 1e-3}) {
        const SelectedSpectralMinimizer m(p, eps);
        for (double t : {0.0, 0.4, 3.0}) {
            EXPECT_NEAR(wie::minimizer_hat(m, t, 0).real(), 0.7 + 1.5 * t, 1e-12);
            EXPECT_NEAR(wie::minimizer_derivative_hat(m, t, 0).real(), 1.5, 1e-12);
        }
    }
}

TEST(Minimizer, InitialConditionAndFiniteDifferenceDerivative) {
    const auto p = forced_fractional();
    for (double eps : {0.1, 0.01}) {
        const SelectedSpectralMinimizer m(p, eps);
        const auto s0 = m.slice(0.0);
        for (std::size_t k = 0; k < s0.size(); ++k)
            EXPECT_LE(std::abs(s0[k] - m.tables().u0[k]), 1e-10 * std::max(std::abs(m.tables().u0[k]), 1e-300) + 1e-300)
                << k;
        const double h = 1e-4;
        for (double t : {0.2, 1.0}) {
            const auto d = m.derivative_slice(t);
            const auto up = m.slice(t + h), dn = m.slice(t - h);
            for (std::size_t k = 0; k < d.size(); ++k) {
                const Complex fd = (up[k] - dn[k]) / (2.0 * h);
                EXPECT_LE(std::abs(fd - d[k]), 1e-6 * std::max(1.0, std::abs(d[k])));
            }
        }
    }
}

TEST(Minimizer, RejectsEpsilonOutsidePolicy) {
    const auto audit = FrequencySamples::tensor(1, 401, 30.0);
    SpectralProblem p{MultiplierSymbol::zeroth_order(
                          [](std::span<const double> x) { return std::exp(-0.5 * wie::norm2(x)); }, 0.0, 1, audit),
                      gaussian_hat, {}, FrequencyGrid::uniform_fft(1, 32, 8.0)};
    EXPECT_NO_THROW(SelectedSpectralMinimizer(p, 0.125));
    EXPECT_THROW(SelectedSpectralMinimizer(p, 0.2), wie::PolicyError);
}

TEST(Validation, ConjugateSymmetryIsEnforced) {
    auto p = heat_problem(32, 8.0);
    p.u0_hat = [](std::span<const double> xi) { return Complex(std::exp(-xi[0] * xi[0]), 0.1 * xi[0]); };
    EXPECT_NO_THROW(p.validate());  // odd imaginary part: real field
    p.u0_hat = [](std::span<const double> xi) { return Complex(0.0, std::exp(-xi[0] * xi[0])); };
    EXPECT_THROW(p.validate(), wie::InvalidArgument);
    p.real_field = false;
    EXPECT_NO_THROW(p.validate());
}

TEST(VLNorm, Examples) {
    const auto p = heat_problem();
    const wie::SpectralTables tab(p);
    EXPECT_NEAR(wie::vl_norm(tab.u0, p.symbol, p.grid), std::sqrt(1.5 * kSqrtPi), 1e-12);
    EXPECT_NEAR(wie::vl_norm(tab.u0, p.symbol, p.grid), 1.630546, 1e-6);
    std::vector<Complex> zero(p.grid.size());
    EXPECT_EQ(wie::vl_norm(zero, p.symbol, p.grid), 0.0);
    const auto flat = MultiplierSymbol::custom([](std::span<const double>) { return 0.0; }, 1,
                                               FrequencySamples::tensor(1, 3, 1.0));
    EXPECT_NEAR(wie::vl_norm(tab.u0, flat, p.grid), std::sqrt(kSqrtPi), 1e-12);
}

TEST(Energy, SingleNodeClosedForm) {
    SpectralProblem p{MultiplierSymbol::classical(1), [](std::span<const double>) { return Complex(1.0); }, {},
                      single_node(1.0)};
    const SelectedSpectralMinimizer m(p, 0.1);
    const double lambda = m.roots().lambda[0];
    EXPECT_NEAR(lambda, -0.916080, 1e-6);
    const double expect = (0.1 * lambda * lambda / 2.0 + 0.5) / (10.0 - 2.0 * lambda);
    const auto J = wie::energy_spectral(m.trajectory(), p, 0.1);
    EXPECT_TRUE(J.finite);
    EXPECT_NEAR(J.value, expect, 1e-14);
    EXPECT_NEAR(J.value, 0.045804, 1e-6);  // 0.541960 / 11.832160

    wie::SpectralTrajectory zero{[](double) { return wie::SpectralState{{Complex(0.0)}, {Complex(0.0)}}; }};
    EXPECT_EQ(wie::energy_spectral(zero, p, 0.1).value, 0.0);
}

TEST(Energy, PlancherelCrossCheck) {
    for (const auto& p : {heat_problem(64, 12.0), forced_fractional()}) {
        for (double eps : {0.1, 0.01}) {
            const SelectedSpectralMinimizer m(p, eps);
            const auto tr = m.trajectory();
            const double J = wie::energy_spectral(tr, p, eps).value;
            const double F = wie::energy_physical(tr, p, eps).value;
            EXPECT_NEAR(F, J, 1e-8 * std::abs(J));
        }
    }
}

TEST(Apriori, Examples) {
    const auto p = heat_problem();
    const auto b = wie::audit_apriori(p, 1.0, {0.0, 0.25, 0.5, 1.0});
    EXPECT_NEAR(b.initial_vl2, 1.5 * kSqrtPi, 1e-12);
    EXPECT_NEAR(b.bound, 10.634724, 1e-6);
    EXPECT_NEAR(b.measured_sup, 2.658681, 1e-6);
    EXPECT_TRUE(b.holds());

    auto zero = p;
    zero.u0_hat = [](std::span<const double>) { return Complex(0.0); };
    const auto bz = wie::audit_apriori(zero, 1.0, {0.0, 1.0});
    EXPECT_EQ(bz.bound, 0.0);
    EXPECT_EQ(bz.measured_sup, 0.0);

    const auto audit = FrequencySamples::tensor(1, 101, std::numbers::pi);
    SpectralProblem neg{MultiplierSymbol::custom([](std::span<const double> x) { return 0.5 * (std::cos(x[0]) - 1.0); },
                                                 1, audit),
                        [](std::span<const double>) { return Complex(1.0); }, {}, single_node(0.0)};
    ASSERT_DOUBLE_EQ(neg.symbol.lower_bound(), -1.0);
    EXPECT_NEAR(wie::apriori_bound(neg, 1.0).bound, 8.0 * std::exp(2.0), 1e-12);
}

TEST(Apriori, HoldsWithForcing) {
    const auto p = forced_fractional();
    std::vector<double> times;
    for (int i = 0; i <= 40; ++i) times.push_back(0.05 * i);
    const auto b = wie::audit_apriori(p, 2.0, times);
    EXPECT_GT(b.forcing_l2, 0.0);
    EXPECT_TRUE(b.holds());
    EXPECT_LE(b.ratio(), 1.0);
}

TEST(ELResidual, Examples) {
    std::vector<double> grid;
    for (int i = 0; i <= 1000; ++i) grid.push_back(1e-3 * i);
    const auto p = heat_problem(64, 10.0);
    const SelectedSpectralMinimizer m(p, 0.1);
    const auto tab = m.tables();
    double scale = 0.0;
    for (const auto& v : tab.u0) scale = std::max(scale, std::abs(v));
    EXPECT_LE(wie::el_residual([&](double t) { return m.slice(t); }, p, 0.1, grid), 1e-4 * scale);

    SpectralProblem one{MultiplierSymbol::classical(1), [](std::span<const double>) { return Complex(1.0); }, {},
                        single_node(1.0)};
    const SemigroupSolution u(one);
    EXPECT_NEAR(wie::el_residual([&](double t) { return u.slice(t); }, one, 0.1, grid), 0.1 * std::exp(-1e-3), 1e-6);
    EXPECT_EQ(wie::el_residual([](double) { return std::vector<Complex>{0.0}; }, one, 0.1, grid), 0.0);
    EXPECT_THROW(wie::el_residual([](double) { return std::vector<Complex>{0.0}; }, one, 0.1, {0.0, 0.1}),
                 wie::InvalidArgument);
}

TEST(Properties, PerFrequencyRateIsFirstOrder) {
    const double L = 1.0;
    std::vector<double> x, y;
    for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
        const double lambda = -2.0 * L / (1.0 + std::sqrt(1.0 + 4.0 * eps * L));
        double sup = 0.0;
        for (int i = 0; i <= 2000; ++i) {
            const double t = i * 1e-3;
            sup = std::max(sup, std::abs(std::exp(lambda * t) - std::exp(-L * t)));
        }
        x.push_back(std::log(eps));
        y.push_back(std::log(sup));
    }
    const double slope = (y.back() - y[1]) / (x.back() - x[1]);
    EXPECT_GE(slope, 0.85);
    EXPECT_LE(slope, 1.15);
}

TEST(Properties, MinimizerBeatsFrozenSemigroupAndCompetitors) {
    const auto p = forced_fractional();
    const SemigroupSolution u(p);
    const wie::SpectralTables tab(p);
    for (double eps : {0.1, 0.01}) {
        const SelectedSpectralMinimizer m(p, eps);
        const auto base = m.trajectory();
        const double J = wie::energy_spectral(base, p, eps).value;
        const double T = 1.0;
        wie::SpectralTrajectory frozen{[&](double t) {
            auto s = u.state(std::min(t, T));
            if (t > T) std::fill(s.derivative.begin(), s.derivative.end(), Complex(0.0));
            return s;
        }};
        frozen.growth = wie::Growth::polynomial(2.0);
        EXPECT_LE(J, wie::energy_spectral(frozen, p, eps).value);
        int count = 0;
        std::vector<Complex> dir(p.grid.size());
        for (std::size_t k = 0; k < dir.size(); ++k) dir[k] = std::exp(-std::pow(p.grid.node(k)[0], 2));
        for (const auto& shape : wie::competitor_shapes()) {
            for (double delta : {-0.1, 0.1}) {
                const auto c = base.perturbed([=](double t) { return shape.value(t); },
                                              [=](double t) { return shape.derivative(t); }, dir, delta);
                EXPECT_LE(J, wie::energy_spectral(c, p, eps).value + 1e-12);
                ++count;
            }
        }
        EXPECT_GE(count, 20);
    }
}

TEST(Properties, PoincareHoldsForMinimizerAndSemigroup) {
    const auto p = forced_fractional();
    for (double eps : {0.1, 0.01}) {
        const auto c = wie::poincare_spectral(SelectedSpectralMinimizer(p, eps).trajectory(), p, eps);
        EXPECT_TRUE(c.holds()) << c.lhs << " " << c.rhs;
        const auto s = wie::poincare_spectral(SemigroupSolution(p).trajectory(), p, eps);
        EXPECT_TRUE(s.holds());
    }
}

TEST(FieldIO, CsvAndBinaryLayout) {
    const auto p = heat_problem(8, 4.0);
    const auto field = SemigroupSolution(p).field({0.0, 0.5});
    std::ostringstream csv;
    wie::write_field_csv(csv, field, p.grid);
    std::istringstream in(csv.str());
    std::string line;
    int rows = 0;
    std::getline(in, line);
    EXPECT_EQ(line, "t,k,xi_1,re,im");
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 16);

    std::ostringstream bin;
    wie::write_field_binary(bin, field);
    const std::string bytes = bin.str();
    ASSERT_EQ(bytes.size(), 2u * 8u * 16u);
    double first;
    std::memcpy(&first, bytes.data(), 8);  // little-endian host
    EXPECT_EQ(first, field.values[0].real());
}

}  // namespace
