#include "wie/convergence_lab.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using wie::ErrorNorm;
using wie::FrequencyGrid;
using wie::FrequencySamples;
using wie::MultiplierSymbol;
using wie::OdeProblem;
using wie::SpectralProblem;
using wie::StudyOptions;
using wie::TimeProfile;

OdeProblem scalar(double a, double y0, double c = 0.0) {
    OdeProblem p;
    p.A = MatrixXd::Constant(1, 1, a);
    p.y0 = VectorXd::Constant(1, y0);
    if (c != 0.0) p.f.components.push_back({TimeProfile::constant(c), VectorXd::Ones(1)});
    return p;
}

double kernel_hat(std::span<const double> xi) { return std::exp(-0.5 * wie::norm2(xi)); }
wie::Complex gaussian_hat(std::span<const double> xi) { return std::exp(-0.5 * wie::norm2(xi)); }

// sup_t |exp(mu_eps t) - exp(-t)| on [0, 1] for A = (1), f = 0, y0 = 1.
double scalar_error(double eps, std::size_t samples = 101) {
    const double m = -2.0 / (1.0 + std::sqrt(1.0 + 4.0 * eps));
    double worst = 0.0;
    for (std::size_t j = 0; j < samples; ++j) {
        const double t = static_cast<double>(j) / (samples - 1);
        worst = std::max(worst, std::abs(std::exp(m * t) - std::exp(-t)));
    }
    return worst;
}

TEST(LemmaProfile, ConstantMatchesClosedForm) {
    const auto r = wie::lemma_tech_profile([](double) { return 1.0; }, 1.0, 0.1);
    EXPECT_NEAR(r.sup, 0.1 * (1.0 - std::exp(-10.0)), 1e-12);
    EXPECT_NEAR(r.sup, 0.0999955, 1e-7);
    EXPECT_EQ(r.argmax, 0.0);
    EXPECT_EQ(r.values.back(), 0.0);
}

TEST(LemmaProfile, ZeroFunction) {
    EXPECT_EQ(wie::lemma_tech_profile([](double) { return 0.0; }, 1.0, 0.1).sup, 0.0);
}

TEST(LemmaProfile, ConstantIsMonotoneUnderRefinement) {
    double prev = INFINITY;
    for (double eps : {0.5, 0.2, 0.1, 0.05, 0.01, 0.001}) {
        const double s = wie::lemma_tech_profile([](double) { return 1.0; }, 1.0, eps, {}, 201).sup;
        EXPECT_LE(s, prev);
        prev = s;
    }
}

TEST(LemmaProfile, InverseSquareRootDecreases) {
    double prev = INFINITY;
    for (double eps : {1e-1, 1e-2, 1e-3}) {
        const auto r = wie::lemma_tech_profile([](double s) { return 1.0 / std::sqrt(s); }, 1.0, eps, {}, 401);
        // at t = 0 the profile is sqrt(pi eps) erf(sqrt(1/eps))
        EXPECT_NEAR(r.sup, std::sqrt(std::numbers::pi * eps) * std::erf(std::sqrt(1.0 / eps)), 1e-10);
        EXPECT_LT(r.sup, prev);
        prev = r.sup;
    }
}

TEST(LemmaProfile, NonIntegrableIsRejected) {
    EXPECT_THROW(wie::lemma_tech_profile([](double s) { return 1.0 / s; }, 1.0, 0.1, {}, 11), wie::InvalidArgument);
}

TEST(BranchDivergence, ClosedFormLeadingTerm) {
    const auto r = wie::branch_divergence(scalar(1.0, 1.0), 0.1, 1e-6, {1.0, 3.0, 5.0});
    const double Z = std::sqrt(1.4);
    EXPECT_DOUBLE_EQ(r.Z, Z);
    const double leading5 = 1e-12 * 0.1 / Z * std::expm1(5.0 * Z / 0.1);
    EXPECT_NEAR(std::exp(r.rows[2].log_leading) / leading5, 1.0, 1e-12);
    // The closed form evaluates to 4.17e12 at T = 5 and 1.16e-8 at T = 1.
    EXPECT_NEAR(leading5, 4.17e12, 0.01e12);
    EXPECT_NEAR(std::exp(r.rows[0].log_leading), 1.163e-8, 0.001e-8);
    EXPECT_NEAR(std::exp(r.rows[2].log_energy - r.rows[2].log_leading), 1.0, 1e-3);
    EXPECT_GE(std::exp(r.rows[2].log_energy), 1e10);
    EXPECT_TRUE(r.diverges());
    EXPECT_GE(r.slope, Z / 0.2);
}

TEST(BranchDivergence, SelectedEnergyIsStable) {
    const auto r = wie::branch_divergence(scalar(1.0, 1.0), 0.1, 0.0, {3.0, 4.0, 5.0});
    EXPECT_FALSE(r.diverges());
    EXPECT_NEAR(r.rows[2].selected_energy / r.rows[0].selected_energy, 1.0, 1e-8);
    EXPECT_NEAR(std::exp(r.rows[2].log_energy), r.rows[2].selected_energy, 1e-12);
}

TEST(BranchDivergence, HugeHorizonStaysFinite) {
    const auto r = wie::branch_divergence(scalar(1.0, 1.0), 0.1, 1e-6, {50.0, 100.0});
    EXPECT_TRUE(std::isfinite(r.rows[1].log_energy));
    EXPECT_NEAR(r.rows[1].log_energy, r.rows[1].log_leading, 1e-6);
}

TEST(BoundAudit, ClassicalIsClean) {
    const auto grid = FrequencyGrid::uniform_fft(1, 64, 10.0);
    const auto a = wie::bound_audit(MultiplierSymbol::classical(1), {0.5, 0.1, 1e-2, 1e-3, 1e-4}, grid);
    EXPECT_TRUE(a.clean());
    EXPECT_EQ(a.checked, 5u * 64u);
    EXPECT_EQ(a.counts.size(), 8u);
}

TEST(BoundAudit, ZerothOrderWithNegativeBound) {
    const auto samples = FrequencySamples::tensor(1, 201, 10.0);
    const auto L = MultiplierSymbol::zeroth_order(kernel_hat, 0.0, 1, samples);
    ASSERT_DOUBLE_EQ(L.lower_bound(), -1.0);
    const auto grid = FrequencyGrid::explicit_list(samples, std::vector<double>(samples.size(), 0.1));
    EXPECT_TRUE(wie::bound_audit(L, {0.1}, grid).clean());
    EXPECT_THROW(wie::bound_audit(L, {0.2}, grid), wie::PolicyError);
}

TEST(FitRate, RecoversPowerLaw) {
    const std::vector<double> eps{1e-1, 1e-2, 1e-3, 1e-4};
    std::vector<double> err;
    for (double e : eps) err.push_back(3.0 * std::pow(e, 1.3));
    const auto f = wie::fit_rate(eps, err);
    EXPECT_NEAR(f.rate, 1.3, 1e-12);
    EXPECT_NEAR(f.half_width, 0.0, 1e-10);
    EXPECT_EQ(f.points, 4u);
}

TEST(FitRate, SkipsZerosAndNeedsTwoPoints) {
    EXPECT_TRUE(std::isnan(wie::fit_rate({1e-1, 1e-2}, {0.0, 0.0}).rate));
    const auto f = wie::fit_rate({1e-1, 1e-2}, {1e-1, 1e-2});
    EXPECT_NEAR(f.rate, 1.0, 1e-14);
    EXPECT_TRUE(std::isinf(f.half_width));
}

TEST(FitRate, SmallestPointsWeighDouble) {
    // Doubling the weight of the last two points pulls the slope toward their chord.
    const std::vector<double> eps{1e-1, 1e-2, 1e-3};
    const std::vector<double> err{1e-1, 1e-3, 1e-4};
    const auto f = wie::fit_rate(eps, err);
    // chord of all three by weighted least squares with weights 1, 2, 2
    const double x[] = {-1, -2, -3}, y[] = {-1, -3, -4}, w[] = {1, 2, 2};
    double sw = 0, sx = 0, sy = 0;
    for (int i = 0; i < 3; ++i) sw += w[i], sx += w[i] * x[i], sy += w[i] * y[i];
    double sxx = 0, sxy = 0;
    for (int i = 0; i < 3; ++i) sxx += w[i] * (x[i] - sx / sw) * (x[i] - sx / sw), sxy += w[i] * (x[i] - sx / sw) * (y[i] - sy / sw);
    EXPECT_NEAR(f.rate, sxy / sxx, 1e-12);
}

TEST(OdeStudy, ScalarDecayLadder) {
    StudyOptions opt;
    opt.rate_window = {{0.85, 1.15}};
    const std::vector<double> ladder{1e-1, 1e-2, 1e-3};
    const auto r = wie::convergence_study(scalar(1.0, 1.0), ladder, opt);
    ASSERT_EQ(r.members.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r.members[i].error, scalar_error(ladder[i]), 1e-12);
    EXPECT_NEAR(r.members[0].error, 3.22e-2, 0.01e-2);
    EXPECT_NEAR(r.members[1].error, 3.62e-3, 0.01e-3);
    EXPECT_NEAR(r.members[2].error, 3.67e-4, 0.01e-4);
    EXPECT_NEAR(r.fit.rate, 0.97, 0.02);
    EXPECT_TRUE(r.passed());
}

TEST(OdeStudy, ExactCaseHasZeroError) {
    StudyOptions opt;
    opt.error_max = 1e-12;
    const auto r = wie::convergence_study(scalar(0.0, 1.0, 0.7), {1e-1, 1e-2, 1e-3, 1e-4}, opt);
    for (const auto& m : r.members) EXPECT_LE(m.error, 1e-12);
    EXPECT_TRUE(r.passed());
}

TEST(OdeStudy, ZeroDataZeroError) {
    const auto r = wie::convergence_study(scalar(2.0, 0.0), {1e-1, 1e-2}, StudyOptions{});
    for (const auto& m : r.members) EXPECT_EQ(m.error, 0.0);
    EXPECT_TRUE(std::isnan(r.fit.rate));
}

TEST(OdeStudy, RateFitIsStableWithoutLargestPoint) {
    const std::vector<double> ladder{1e-1, 1e-2, 1e-3, 1e-4};
    const auto full = wie::convergence_study(scalar(1.0, 1.0), ladder, StudyOptions{});
    const auto trimmed = wie::convergence_study(scalar(1.0, 1.0), {1e-2, 1e-3, 1e-4}, StudyOptions{});
    EXPECT_LT(std::abs(full.fit.rate - trimmed.fit.rate), 0.1);
}

TEST(OdeStudy, MemberFailureIsRecorded) {
    OdeProblem p = scalar(1.0, 1.0);
    p.f.components.push_back({TimeProfile::exp_quadratic(1.0, 1.0), VectorXd::Ones(1)});
    p.f.growth = wie::Growth::unbounded();
    const auto r = wie::convergence_study(p, {1e-1, 1e-2}, StudyOptions{});
    EXPECT_FALSE(r.passed());
    ASSERT_FALSE(r.members[0].ok());
    EXPECT_EQ(r.members[0].failure_kind, "transformability violated");
    EXPECT_EQ(r.verdicts.front().name, "transformability violated");
}

TEST(OdeStudy, ThreadCountDoesNotChangeReport) {
    const std::vector<double> ladder{1e-1, 1e-2, 1e-3, 1e-4};
    StudyOptions serial, pooled;
    pooled.threads = 4;
    const auto a = wie::convergence_study(scalar(1.0, 1.0, 0.3), ladder, serial).to_json().dump(2);
    const auto b = wie::convergence_study(scalar(1.0, 1.0, 0.3), ladder, pooled).to_json().dump(2);
    EXPECT_EQ(a, b);
}

TEST(OdeStudy, RejectsBadLadder) {
    EXPECT_THROW(wie::convergence_study(scalar(1.0, 1.0), {1e-2, 1e-1}, StudyOptions{}), wie::InvalidArgument);
    EXPECT_THROW(wie::convergence_study(scalar(1.0, 1.0), {}, StudyOptions{}), wie::InvalidArgument);
}

SpectralProblem fractional_problem() {
    return {MultiplierSymbol::fractional(0.5, 1), gaussian_hat, wie::ForcingTerm::zero(),
            FrequencyGrid::uniform_fft(1, 64, 10.0), true, "frac"};
}

TEST(SpectralStudy, FreeDecayConverges) {
    StudyOptions opt;
    opt.norm = ErrorNorm::SupVL;
    opt.time_samples = 51;
    opt.monotone_tolerance = 0.05;
    opt.node_rate_window = {{0.85, 1.15}};
    const auto r = wie::convergence_study(fractional_problem(), {1e-1, 1e-2, 1e-3}, opt);
    for (const auto& m : r.members) {
        EXPECT_TRUE(m.ok()) << m.failure;
        EXPECT_EQ(m.audit_violations, 0u);
        EXPECT_TRUE(m.energy_finite);
        EXPECT_GE(m.physical_error, 0.0);
    }
    EXPECT_LT(r.members[2].error, r.members[0].error);
    EXPECT_TRUE(r.passed()) << r.to_json().dump(2);
}

TEST(SpectralStudy, ZeroDatum) {
    auto p = fractional_problem();
    p.u0_hat = [](std::span<const double>) { return wie::Complex(0.0); };
    StudyOptions opt;
    opt.time_samples = 11;
    const auto r = wie::convergence_study(p, {1e-1, 1e-2}, opt);
    for (const auto& m : r.members) EXPECT_EQ(m.error, 0.0);
}

TEST(Report, JsonAndCsvShape) {
    const auto r = wie::convergence_study(scalar(1.0, 1.0), {1e-1, 1e-2}, StudyOptions{});
    const auto j = r.to_json();
    EXPECT_EQ(j["schema_version"], wie::kReportSchemaVersion);
    EXPECT_EQ(j["members"].size(), 2u);
    EXPECT_TRUE(j["passed"].get<bool>());
    const auto csv = r.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "epsilon,error,energy,verdict");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_NE(csv.find(",pass\n"), std::string::npos);
}

TEST(ParallelFor, RethrowsFirstFailureByIndex) {
    std::vector<int> seen(16, 0);
    EXPECT_THROW(wie::parallel_for(16, 4,
                                   [&](std::size_t i) {
                                       seen[i] = 1;
                                       if (i == 7) throw wie::Error("boom");
                                   }),
                 wie::Error);
    EXPECT_EQ(std::count(seen.begin(), seen.end(), 1), 16);
}

}  // namespace
