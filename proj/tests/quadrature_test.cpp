#include "wie/quadrature.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace {

using wie::QuadratureSpec;

constexpr double kTight = 1e-12;

TEST(WeightedHalfline, SpecExamples) {
    const auto q = QuadratureSpec::gauss_laguerre();
    EXPECT_NEAR(wie::weighted_halfline([](double) { return 1.0; }, 0.2, q), 0.2, kTight);
    EXPECT_NEAR(wie::weighted_halfline([](double t) { return t; }, 0.2, q), 0.04, kTight);
    // eps / (1 - 2 eps) with eps = 0.1
    EXPECT_NEAR(wie::weighted_halfline([](double t) { return std::exp(2.0 * t); }, 0.1, q,
                                       wie::Growth::exponential(2.0)),
                0.125, 1e-12 * 0.125);
}

TEST(WeightedHalfline, AdaptiveMethodAgrees) {
    const auto q = QuadratureSpec::adaptive(1e-13, 4000);
    EXPECT_NEAR(wie::weighted_halfline([](double t) { return t; }, 0.2, q), 0.04, 1e-13);
    EXPECT_NEAR(wie::weighted_halfline([](double t) { return std::exp(2.0 * t); }, 0.1, q,
                                       wie::Growth::exponential(2.0)),
                0.125, 1e-12);
}

TEST(WeightedHalfline, SingularIntegrandFallsBackToPanels) {
    // Gamma(1/2) * sqrt(eps) for t^{-1/2}
    const double eps = 0.3;
    const double got = wie::weighted_halfline([](double t) { return 1.0 / std::sqrt(t); }, eps,
                                              QuadratureSpec::gauss_laguerre());
    EXPECT_NEAR(got, std::sqrt(M_PI * eps), 1e-10);
}

TEST(WeightedHalfline, RejectsGrowthAtWeightRate) {
    EXPECT_THROW(wie::weighted_halfline([](double t) { return std::exp(10.0 * t); }, 0.1,
                                        QuadratureSpec{}, wie::Growth::exponential(10.0)),
                 wie::DivergenceError);
    EXPECT_THROW(wie::weighted_halfline([](double) { return 1.0; }, 0.0, QuadratureSpec{}),
                 wie::InvalidArgument);
}

TEST(LaplaceTail, SpecExamples) {
    const QuadratureSpec q;
    EXPECT_NEAR(wie::laplace_tail([](double) { return 1.0; }, 10.0, 0.0, q), 0.1, kTight);
    EXPECT_NEAR(wie::laplace_tail([](double) { return 1.0; }, 10.0, 0.5, q), std::exp(-5.0) / 10.0,
                1e-12 * 6.7379e-4);
    EXPECT_NEAR(wie::laplace_tail([](double s) { return s; }, 1.0, 0.0, q), 1.0, kTight);
}

TEST(LaplaceTail, DivergesWhenRateDoesNotBeatGrowth) {
    EXPECT_THROW(wie::laplace_tail([](double s) { return std::exp(3.0 * s); }, 2.0, 0.0, QuadratureSpec{},
                                   wie::Growth::exponential(3.0)),
                 wie::DivergenceError);
    EXPECT_THROW(wie::laplace_tail([](double) { return 1.0; }, 2.0, 0.0, QuadratureSpec{},
                                   wie::Growth::unbounded()),
                 wie::DivergenceError);
}

TEST(LaplaceTail, TailConsistency) {
    const QuadratureSpec q;
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> rate(0.5, 20.0), start(0.0, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double mu = rate(rng), t0 = start(rng);
        auto phi = [](double s) { return (1.0 + s * s) * std::cos(s) + 2.0; };
        const double whole = wie::laplace_tail(phi, mu, 0.0, q, wie::Growth::polynomial(2));
        const double tail = wie::laplace_tail(phi, mu, t0, q, wie::Growth::polynomial(2));
        const double head =
            wie::integrate_interval([&](double s) { return std::exp(-mu * s) * phi(s); }, 0.0, t0, q);
        EXPECT_NEAR(whole, tail + head, 1e-11 * std::abs(whole)) << "mu=" << mu << " t0=" << t0;
    }
}

TEST(ConvolutionIntegral, SpecExamples) {
    const QuadratureSpec q;
    EXPECT_NEAR(wie::convolution_integral([](double) { return 1.0; }, 0.0, 3.0, q), 3.0, kTight);
    EXPECT_NEAR(wie::convolution_integral([](double) { return 1.0; }, -2.0, 1.0, q),
                (1.0 - std::exp(-2.0)) / 2.0, kTight);
    EXPECT_NEAR(wie::convolution_integral([](double s) { return std::exp(-s); }, -2.0, 1.0, q),
                std::exp(-1.0) - std::exp(-2.0), kTight);
    EXPECT_EQ(wie::convolution_integral([](double) { return 1.0; }, 5.0, 0.0, q), 0.0);
}

TEST(ConvolutionIntegral, SharpKernelIsResolved) {
    // lambda = -1e5: result ~ phi(t)/|lambda|, kernel width far below the interval.
    const QuadratureSpec q;
    const double lambda = -1e5, t = 2.0;
    const double exact = (1.0 - std::exp(lambda * t)) / -lambda;
    EXPECT_NEAR(wie::convolution_integral([](double) { return 1.0; }, lambda, t, q), exact, 1e-12 * exact);
}

TEST(ConvolutionIntegral, OverflowGuard) {
    EXPECT_THROW(wie::convolution_integral([](double) { return 1.0; }, 800.0, 1.0, QuadratureSpec{}),
                 wie::OverflowError);
    // Growing kernel under the cap is fine: (e^{lambda t} - 1)/lambda
    const double v = wie::convolution_integral([](double) { return 1.0; }, 50.0, 2.0, QuadratureSpec{});
    EXPECT_NEAR(v, std::expm1(100.0) / 50.0, 1e-12 * v);
}

TEST(Linearity, WeightedIntegralsAreLinear) {
    const QuadratureSpec q;
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> coef(-3.0, 3.0), epsd(1e-3, 0.4);
    auto phi = [](double t) { return std::exp(-t) * (1.0 + t); };
    auto psi = [](double t) { return std::sin(t) + t * t; };
    for (int trial = 0; trial < 30; ++trial) {
        const double a = coef(rng), b = coef(rng), eps = epsd(rng);
        auto combo = [&](double t) { return a * phi(t) + b * psi(t); };
        const double lhs = wie::weighted_halfline(combo, eps, q, wie::Growth::polynomial(2));
        const double rhs = a * wie::weighted_halfline(phi, eps, q) +
                           b * wie::weighted_halfline(psi, eps, q, wie::Growth::polynomial(2));
        EXPECT_NEAR(lhs, rhs, 1e-12 * (std::abs(a * wie::weighted_halfline(phi, eps, q)) +
                                       std::abs(b * wie::weighted_halfline(psi, eps, q))));
    }
}

TEST(GaussLaguerre, ExactForPolynomialsUpToDegree2nMinus1) {
    for (int n : {4, 8, 16, 32, 64}) {
        const auto& rule = wie::gauss_laguerre_rule(n);
        for (int k = 0; k <= 2 * n - 1; ++k) {
            // sum w_i x_i^k against k! computed in log space
            long double sum = 0.0L;
            for (int i = 0; i < n; ++i)
                sum += static_cast<long double>(rule.weights[i]) * std::pow(static_cast<long double>(rule.nodes[i]), k);
            const double log_exact = std::lgamma(k + 1.0);
            const double rel = std::abs(std::log(static_cast<double>(sum)) - log_exact);
            EXPECT_LT(rel, 1e-12) << "n=" << n << " k=" << k;
        }
    }
}

TEST(GaussLaguerre, NodesMatchGolubWelsch) {
    // Independent route: eigenvalues of the Jacobi matrix of the Laguerre recurrence.
    const int n = 32;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        J(i, i) = 2.0 * i + 1.0;
        if (i + 1 < n) J(i, i + 1) = J(i + 1, i) = i + 1.0;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    const auto& rule = wie::gauss_laguerre_rule(n);
    for (int i = 0; i < n; ++i) {
        EXPECT_NEAR(rule.nodes[i], es.eigenvalues()(i), 1e-10 * es.eigenvalues()(i));
        const double w = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
        if (w > 1e-10) EXPECT_NEAR(rule.weights[i], w, 1e-6 * w);  // eigenvector route loses tiny weights
    }
}

TEST(Adaptive, PanelBudgetExhaustionReportsPartialValue) {
    auto spiky = [](double x) { return std::sin(1.0 / (x + 1e-9)); };
    try {
        wie::integrate_adaptive(spiky, {0.0, 1.0}, 1e-15, 1e-15, 20);
        FAIL() << "expected QuadratureError";
    } catch (const wie::QuadratureError& e) {
        EXPECT_TRUE(std::isfinite(e.partial_value()));
        EXPECT_GT(e.error_estimate(), 0.0);
    }
}

TEST(Spec, ValidateRejectsBadConfigs) {
    auto q = QuadratureSpec::gauss_laguerre(3);
    EXPECT_THROW(q.validate(), wie::InvalidArgument);
    QuadratureSpec r;
    r.abs_tol = 0.0;
    EXPECT_THROW(r.validate(), wie::InvalidArgument);
    EXPECT_NO_THROW(QuadratureSpec{}.validate());
}

}  // namespace
