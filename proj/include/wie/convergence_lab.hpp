#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "wie/csv.hpp"
#include "wie/error.hpp"
#include "wie/ode_selector.hpp"
#include "wie/quadrature.hpp"
#include "wie/spectral_selector.hpp"
#include "wie/symbols.hpp"

namespace wie {

using Json = nlohmann::ordered_json;

inline constexpr const char* kReportSchemaVersion = "1.0";

/// Runs body(i) for every i < n on up to `threads` workers (0: all cores). Each index writes
/// its own slot, so results never depend on scheduling; the first failure by index is rethrown.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const auto count = std::min<std::size_t>(threads, n);
    for (std::size_t w = 0; w < count; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline void require_ladder(const std::vector<double>& ladder) {
    if (ladder.empty()) throw InvalidArgument("epsilon ladder is empty");
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        if (!(ladder[i] > 0.0) || !std::isfinite(ladder[i]))
            throw InvalidArgument("epsilon ladder entries must be positive and finite");
        if (i > 0 && !(ladder[i] < ladder[i - 1])) throw InvalidArgument("epsilon ladder must be strictly decreasing");
    }
}

inline std::vector<double> uniform_times(double T, std::size_t samples) {
    if (!(T > 0.0) || !std::isfinite(T)) throw InvalidArgument("time horizon must be positive");
    if (samples < 2) throw InvalidArgument("need at least two time samples");
    std::vector<double> t(samples);
    for (std::size_t j = 0; j < samples; ++j) t[j] = T * static_cast<double>(j) / static_cast<double>(samples - 1);
    t.back() = T;
    return t;
}

// ---------------------------------------------------------------------------------------------
// Weighted tail profile G(t) = int_t^T exp(-(s - t)/eps) |g(s)| ds.

struct LemmaProfile {
    double eps = 0.0;
    double horizon = 0.0;
    double sup = 0.0;
    double argmax = 0.0;
    std::vector<double> times;
    std::vector<double> values;
};

inline LemmaProfile lemma_tech_profile(const std::function<double(double)>& g, double T, double eps,
                                       const QuadratureSpec& quad = {}, std::size_t samples = 2001) {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidArgument("lemma profile: eps must be positive");
    LemmaProfile out;
    out.eps = eps;
    out.horizon = T;
    out.times = uniform_times(T, samples);
    out.values.resize(samples);
    for (std::size_t j = 0; j < samples; ++j) {
        const double t = out.times[j];
        const double len = T - t;
        if (len <= 0.0) {
            out.values[j] = 0.0;
            continue;
        }
        auto integrand = [&](double u) { return std::exp(-u / eps) * std::abs(g(t + u)); };
        double v;
        try {
            v = integrate_interval(integrand, 0.0, len, quad, geometric_breakpoints(eps, len));
        } catch (const QuadratureError& e) {
            throw InvalidArgument(std::string("lemma profile: g is not integrable on (0, T) (") + e.what() + ")");
        }
        out.values[j] = v;
        if (v > out.sup) {
            out.sup = v;
            out.argmax = t;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Rejected-branch energies.

struct BranchRow {
    double horizon = 0.0;
    double log_energy = 0.0;    // log int_0^T e^{-t/eps} |y|^2 for the perturbed selection
    double log_leading = 0.0;   // log of (delta^2 eps / Z)(e^{Z T / eps} - 1)
    double selected_energy = 0.0;
};

struct BranchDivergence {
    double eps = 0.0;
    double delta = 0.0;
    std::size_t component = 0;
    double Z = 0.0;
    double slope = 0.0;        // d log E / dT between the last two horizons
    double slope_floor = 0.0;  // Z / (2 eps) - margin
    std::vector<BranchRow> rows;

    bool diverges() const {
        if (rows.size() < 2 || delta == 0.0) return false;
        for (std::size_t i = 1; i < rows.size(); ++i)
            if (!(rows[i].log_energy > rows[i - 1].log_energy)) return false;
        return slope >= slope_floor;
    }
};

/// Perturbs the selected initial value of the growing part in eigen-direction `component` by delta.
/// Energies are assembled in log form so no intermediate overflows.
inline BranchDivergence branch_divergence(const OdeProblem& p, double eps, double delta,
                                          const std::vector<double>& horizons, std::size_t component = 0,
                                          const QuadratureSpec& quad = {}, double margin = 0.0) {
    if (horizons.empty()) throw InvalidArgument("branch divergence: no horizons");
    for (std::size_t i = 0; i < horizons.size(); ++i)
        if (!(horizons[i] > 0.0) || (i > 0 && !(horizons[i] > horizons[i - 1])))
            throw InvalidArgument("branch divergence: horizons must be positive and increasing");
    const SelectedOdeMinimizer sel(p, eps, quad);
    if (component >= static_cast<std::size_t>(p.dimension()))
        throw InvalidArgument("branch divergence: component out of range");
    const auto i = static_cast<Eigen::Index>(component);
    const double Z = sel.spectrum().Z(i);
    const double grow = sel.spectrum().mu_plus(i);
    const double rate = Z / eps;  // 2 grow - 1/eps
    const Eigen::VectorXd dir = sel.eigen().P.col(i);
    const auto traj = sel.trajectory();

    BranchDivergence out;
    out.eps = eps;
    out.delta = delta;
    out.component = component;
    out.Z = Z;
    out.slope_floor = Z / (2.0 * eps) - margin;
    const double log_d2 = delta != 0.0 ? 2.0 * std::log(std::abs(delta)) : -std::numeric_limits<double>::infinity();

    for (double T : horizons) {
        BranchRow row;
        row.horizon = T;
        const double shift = std::max(0.0, log_d2 + rate * T);
        auto integrand = [&](double t) {
            const Eigen::VectorXd y = traj.value(t);
            double v = std::exp(-t / eps - shift) * y.squaredNorm();
            if (delta != 0.0) {
                v += 2.0 * delta * y.dot(dir) * std::exp((grow - 1.0 / eps) * t - shift);
                v += std::exp(log_d2 + rate * t - shift);
            }
            return v;
        };
        auto pts = geometric_breakpoints(eps, T);
        for (double s = eps / Z; s < T; s *= 2.0) pts.push_back(T - s);
        const double scaled = integrate_interval(integrand, 0.0, T, quad, pts);
        row.log_energy = shift + std::log(scaled);
        row.log_leading = log_d2 + std::log(eps / Z) + rate * T + std::log(-std::expm1(-rate * T));
        row.selected_energy = truncated_weighted_norm(traj, eps, T, quad);
        out.rows.push_back(row);
    }
    if (out.rows.size() >= 2) {
        const auto& a = out.rows[out.rows.size() - 2];
        const auto& b = out.rows.back();
        out.slope = (b.log_energy - a.log_energy) / (b.horizon - a.horizon);
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Bound audits.

struct BoundViolation {
    std::size_t node = 0;
    std::vector<double> xi;
    double eps = 0.0;
    std::string inequality;
};

struct BoundAudit {
    std::size_t checked = 0;
    std::map<std::string, std::size_t> counts;
    std::vector<BoundViolation> violations;

    bool clean() const { return violations.empty(); }
};

namespace detail {

inline std::map<std::string, std::size_t> empty_bound_counts() {
    std::map<std::string, std::size_t> c;
    for (const auto& name : describe_bounds(kFirstBundle | kSecondBundle)) c[name] = 0;
    return c;
}

}  // namespace detail

/// Both inequality bundles at every node and every eps. Inadmissible eps is refused up front.
inline BoundAudit bound_audit(const MultiplierSymbol& symbol, const std::vector<double>& ladder,
                              const FrequencyGrid& grid) {
    require_ladder(ladder);
    const auto policy = epsilon_threshold(symbol);
    const double K = symbol.lower_bound();
    BoundAudit out;
    out.counts = detail::empty_bound_counts();
    for (double eps : ladder) {
        policy.require(eps);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const auto xi = grid.node(k);
            const double L = symbol(xi);
            if (!(1.0 + 4.0 * eps * L >= 0.5))
                throw PolicyError("bound audit: 1 + 4 eps L < 1/2 at node " + std::to_string(k), eps,
                                  policy.epsilon_max);
            ++out.checked;
            for (const auto& name : describe_bounds(check_bounds(L, eps, K))) {
                ++out.counts[name];
                out.violations.push_back({k, std::vector<double>(xi.begin(), xi.end()), eps, name});
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Rate fitting.

struct RateFit {
    double rate = std::numeric_limits<double>::quiet_NaN();
    double half_width = std::numeric_limits<double>::quiet_NaN();  // 95% t-interval
    std::size_t points = 0;
};

/// Weighted least squares of log(error) on log(eps); the two smallest eps count twice.
/// Non-positive or non-finite errors are skipped.
inline RateFit fit_rate(const std::vector<double>& eps, const std::vector<double>& err) {
    if (eps.size() != err.size()) throw InvalidArgument("fit_rate: size mismatch");
    std::vector<std::size_t> use;
    for (std::size_t i = 0; i < eps.size(); ++i)
        if (err[i] > 0.0 && std::isfinite(err[i]) && eps[i] > 0.0) use.push_back(i);
    RateFit fit;
    fit.points = use.size();
    if (use.size() < 2) return fit;
    std::sort(use.begin(), use.end(), [&](auto a, auto b) { return eps[a] > eps[b]; });
    std::vector<double> x, y, w;
    for (std::size_t n = 0; n < use.size(); ++n) {
        x.push_back(std::log(eps[use[n]]));
        y.push_back(std::log(err[use[n]]));
        w.push_back(n + 2 >= use.size() ? 2.0 : 1.0);
    }
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        sw += w[n];
        sx += w[n] * x[n];
        sy += w[n] * y[n];
    }
    const double xm = sx / sw, ym = sy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        sxx += w[n] * (x[n] - xm) * (x[n] - xm);
        sxy += w[n] * (x[n] - xm) * (y[n] - ym);
    }
    if (!(sxx > 0.0)) return fit;
    fit.rate = sxy / sxx;
    if (x.size() > 2) {
        double rss = 0.0;
        for (std::size_t n = 0; n < x.size(); ++n) {
            const double r = y[n] - ym - fit.rate * (x[n] - xm);
            rss += w[n] * r * r;
        }
        const double dof = static_cast<double>(x.size() - 2);
        const double se = std::sqrt(rss / dof / sxx);
        const boost::math::students_t dist(dof);
        fit.half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * se;
    } else {
        fit.half_width = std::numeric_limits<double>::infinity();
    }
    return fit;
}

// ---------------------------------------------------------------------------------------------
// Reports.

struct Verdict {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct StudyMember {
    double eps = 0.0;
    double error = std::numeric_limits<double>::quiet_NaN();
    double node_error = std::numeric_limits<double>::quiet_NaN();
    double physical_error = std::numeric_limits<double>::quiet_NaN();
    double energy = std::numeric_limits<double>::quiet_NaN();
    bool energy_finite = true;
    std::size_t audit_checked = 0;
    std::size_t audit_violations = 0;
    std::string failure_kind;  // empty when the member completed
    std::string failure;

    bool ok() const { return failure_kind.empty(); }
};

struct ConvergenceReport {
    std::string problem_id;
    std::string mode;
    std::string norm;
    double horizon = 0.0;
    std::string grid;
    std::vector<StudyMember> members;
    RateFit fit;
    RateFit node_fit;
    std::vector<Verdict> verdicts;
    Json diagnostics = Json::object();
    Json tables = Json::object();

    bool passed() const {
        return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
    }

    std::vector<double> ladder() const {
        std::vector<double> out;
        for (const auto& m : members) out.push_back(m.eps);
        return out;
    }

    Json to_json() const {
        auto num = [](double v) -> Json { return std::isfinite(v) ? Json(v) : Json(nullptr); };
        Json j;
        j["schema_version"] = kReportSchemaVersion;
        j["problem_id"] = problem_id;
        j["mode"] = mode;
        j["norm"] = norm;
        j["horizon"] = num(horizon);
        j["grid"] = grid;
        j["passed"] = passed();
        Json ms = Json::array();
        for (const auto& m : members) {
            Json e;
            e["epsilon"] = m.eps;
            e["error"] = num(m.error);
            e["node_error"] = num(m.node_error);
            e["physical_error"] = num(m.physical_error);
            e["energy"] = num(m.energy);
            e["energy_finite"] = m.energy_finite;
            e["audit_checked"] = m.audit_checked;
            e["audit_violations"] = m.audit_violations;
            e["status"] = m.ok() ? "ok" : m.failure_kind;
            if (!m.ok()) e["failure"] = m.failure;
            ms.push_back(e);
        }
        j["members"] = ms;
        auto fit_json = [&](const RateFit& f) {
            Json o;
            o["rate"] = num(f.rate);
            o["half_width"] = num(f.half_width);
            o["points"] = f.points;
            return o;
        };
        j["fitted_rate"] = fit_json(fit);
        j["node_rate"] = fit_json(node_fit);
        Json vs = Json::array();
        for (const auto& v : verdicts) vs.push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
        j["verdicts"] = vs;
        j["diagnostics"] = diagnostics;
        j["tables"] = tables;
        return j;
    }

    /// epsilon,error,energy,verdict; one row per ladder member.
    std::string to_csv() const {
        std::ostringstream out;
        out << "epsilon,error,energy,verdict\n";
        auto cell = [](double v) { return std::isfinite(v) ? csv::format_double(v) : std::string(std::isnan(v) ? "" : "inf"); };
        for (const auto& m : members) {
            std::string verdict = "pass";
            if (!m.ok()) verdict = m.failure_kind;
            else if (m.audit_violations > 0) verdict = "bound violated";
            else if (!m.energy_finite) verdict = "energy divergent";
            out << csv::format_double(m.eps) << ',' << cell(m.error) << ',' << cell(m.energy) << ',' << verdict << '\n';
        }
        return out.str();
    }
};

// ---------------------------------------------------------------------------------------------
// Convergence studies.

enum class ErrorNorm { SupUniform, SupVL };

inline const char* to_string(ErrorNorm n) { return n == ErrorNorm::SupUniform ? "sup-uniform" : "sup-vl"; }

struct StudyOptions {
    double horizon = 1.0;
    std::size_t time_samples = 101;
    ErrorNorm norm = ErrorNorm::SupUniform;
    unsigned threads = 1;
    bool energies = true;
    double monotone_tolerance = 0.0;  // relative increase tolerated between neighbours
    std::optional<std::pair<double, double>> rate_window;
    std::optional<std::pair<double, double>> node_rate_window;
    std::optional<double> final_ratio_max;  // error(last) <= ratio * error(first)
    std::optional<double> error_max;        // every error <= this
    std::optional<std::size_t> node;        // node for the per-frequency rate (spectral)
    QuadratureSpec quad{};
};

namespace detail {

inline void record_failure(StudyMember& m, const std::exception& e) {
    if (dynamic_cast<const TransformabilityError*>(&e)) m.failure_kind = "transformability violated";
    else if (dynamic_cast<const PolicyError*>(&e)) m.failure_kind = "policy violated";
    else if (dynamic_cast<const OverflowError*>(&e)) m.failure_kind = "overflow";
    else if (dynamic_cast<const QuadratureError*>(&e)) m.failure_kind = "quadrature failed";
    else m.failure_kind = "member failed";
    m.failure = e.what();
}

inline std::string fmt(double v) { return csv::format_double(v); }

inline void add_verdicts(ConvergenceReport& r, const StudyOptions& opt) {
    for (const auto& m : r.members)
        if (!m.ok()) r.verdicts.push_back({m.failure_kind, false, "eps " + fmt(m.eps) + ": " + m.failure});

    bool nonneg = true;
    for (const auto& m : r.members)
        if (m.ok() && !(m.error >= 0.0)) nonneg = false;
    r.verdicts.push_back({"errors nonnegative", nonneg, ""});

    std::vector<const StudyMember*> done;
    for (const auto& m : r.members)
        if (m.ok()) done.push_back(&m);

    bool mono = true;
    std::string where;
    for (std::size_t i = 1; i < done.size(); ++i) {
        if (done[i]->error > done[i - 1]->error * (1.0 + opt.monotone_tolerance)) {
            mono = false;
            where = "eps " + fmt(done[i]->eps) + " error " + fmt(done[i]->error) + " > " + fmt(done[i - 1]->error);
        }
    }
    r.verdicts.push_back({"errors decrease monotonically", mono, where});

    if (opt.rate_window) {
        const auto [lo, hi] = *opt.rate_window;
        const bool ok = r.fit.rate >= lo && r.fit.rate <= hi;
        r.verdicts.push_back({"fitted rate in window", ok,
                              "rate " + fmt(r.fit.rate) + " window [" + fmt(lo) + ", " + fmt(hi) + "]"});
    }
    if (opt.node_rate_window) {
        const auto [lo, hi] = *opt.node_rate_window;
        const bool ok = r.node_fit.rate >= lo && r.node_fit.rate <= hi;
        r.verdicts.push_back({"node rate in window", ok,
                              "rate " + fmt(r.node_fit.rate) + " window [" + fmt(lo) + ", " + fmt(hi) + "]"});
    }
    if (opt.final_ratio_max && done.size() >= 2) {
        const double ratio = done.back()->error / done.front()->error;
        const bool ok = done.back()->error <= *opt.final_ratio_max * done.front()->error;
        r.verdicts.push_back({"final error ratio", ok, "ratio " + fmt(ratio) + " limit " + fmt(*opt.final_ratio_max)});
    }
    if (opt.error_max) {
        double worst = 0.0;
        for (const auto* m : done) worst = std::max(worst, m->error);
        r.verdicts.push_back({"error ceiling", worst <= *opt.error_max,
                              "max error " + fmt(worst) + " limit " + fmt(*opt.error_max)});
    }
    std::size_t bad = 0;
    for (const auto* m : done) bad += m->audit_violations;
    r.verdicts.push_back({"bound audit clean", bad == 0, std::to_string(bad) + " violations"});
    if (opt.energies) {
        bool finite = true;
        for (const auto* m : done) finite = finite && m->energy_finite;
        r.verdicts.push_back({"minimizer energy finite", finite, ""});
    }
}

}  // namespace detail

/// Selected minimizer against the exact solution along the ladder, sup of |y_eps - y| over [0, T].
inline ConvergenceReport convergence_study(const OdeProblem& p, const std::vector<double>& ladder,
                                           const StudyOptions& opt, const std::string& id = "ode") {
    require_ladder(ladder);
    p.validate();
    if (opt.norm != ErrorNorm::SupUniform) throw InvalidArgument("ode study supports the uniform norm only");
    const auto times = uniform_times(opt.horizon, opt.time_samples);
    const ExactOdeSolution exact(p, opt.quad);
    const auto reference = exact.values(times);
    const auto eig = eigendecompose(p.A);
    const double K = std::min(0.0, eig.mu.minCoeff());

    ConvergenceReport r;
    r.problem_id = id;
    r.mode = "ode";
    r.norm = to_string(opt.norm);
    r.horizon = opt.horizon;
    r.grid = "time samples " + std::to_string(times.size());
    r.members.resize(ladder.size());
    parallel_for(ladder.size(), opt.threads, [&](std::size_t n) {
        StudyMember& m = r.members[n];
        m.eps = ladder[n];
        try {
            for (Eigen::Index i = 0; i < eig.mu.size(); ++i) {
                ++m.audit_checked;
                m.audit_violations += describe_bounds(check_bounds(eig.mu(i), m.eps, K)).size();
            }
            const SelectedOdeMinimizer sel(p, m.eps, opt.quad);
            double worst = 0.0;
            for (std::size_t j = 0; j < times.size(); ++j)
                worst = std::max(worst, (sel.value(times[j]) - reference[j]).norm());
            m.error = worst;
            if (opt.energies) {
                const auto e = energy_ode(sel.trajectory(), p, m.eps, opt.quad);
                m.energy = e.value;
                m.energy_finite = e.finite;
            }
        } catch (const std::exception& e) {
            detail::record_failure(m, e);
        }
    });
    std::vector<double> eps, err;
    for (const auto& m : r.members)
        if (m.ok()) {
            eps.push_back(m.eps);
            err.push_back(m.error);
        }
    r.fit = fit_rate(eps, err);
    detail::add_verdicts(r, opt);
    return r;
}

namespace detail {

/// Default node for the per-frequency rate: largest |u0| * L among nodes with L > 0.
inline std::size_t rate_node(const SpectralTables& tab) {
    std::size_t best = 0;
    double score = -1.0;
    for (std::size_t k = 0; k < tab.L.size(); ++k) {
        const double s = tab.L[k] > 0.0 ? std::abs(tab.u0[k]) * tab.L[k] : 0.0;
        if (s > score) {
            score = s;
            best = k;
        }
    }
    return best;
}

}  // namespace detail

/// Selected minimizer against the semigroup solution along the ladder.
inline ConvergenceReport convergence_study(const SpectralProblem& p, const std::vector<double>& ladder,
                                           const StudyOptions& opt) {
    require_ladder(ladder);
    p.validate();
    const auto times = uniform_times(opt.horizon, opt.time_samples);
    const SemigroupSolution exact(p, opt.quad);
    const auto& tab = exact.tables();
    std::vector<std::vector<Complex>> reference(times.size());
    parallel_for(times.size(), opt.threads, [&](std::size_t j) { reference[j] = exact.slice(times[j]); });
    const std::size_t node = opt.node.value_or(detail::rate_node(tab));
    if (node >= tab.L.size()) throw InvalidArgument("study: rate node out of range");
    const double K = p.symbol.lower_bound();
    const bool fft = p.grid.mode() == FrequencyGrid::Mode::UniformFFT;

    ConvergenceReport r;
    r.problem_id = p.id;
    r.mode = "spectral";
    r.norm = to_string(opt.norm);
    r.horizon = opt.horizon;
    r.grid = p.grid.describe() + "; time samples " + std::to_string(times.size());
    r.members.resize(ladder.size());
    parallel_for(ladder.size(), opt.threads, [&](std::size_t n) {
        StudyMember& m = r.members[n];
        m.eps = ladder[n];
        try {
            const SelectedSpectralMinimizer sel(p, m.eps, opt.quad);
            for (double L : tab.L) {
                ++m.audit_checked;
                m.audit_violations += describe_bounds(check_bounds(L, m.eps, K)).size();
            }
            double worst = 0.0, worst_node = 0.0, worst_phys = 0.0;
            std::vector<Complex> diff(tab.L.size());
            for (std::size_t j = 0; j < times.size(); ++j) {
                const auto v = sel.slice(times[j]);
                for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = v[k] - reference[j][k];
                const double e = opt.norm == ErrorNorm::SupVL
                                     ? vl_norm(diff, tab.L, tab.weights)
                                     : std::abs(*std::max_element(diff.begin(), diff.end(), [](auto a, auto b) {
                                           return std::abs(a) < std::abs(b);
                                       }));
                worst = std::max(worst, e);
                worst_node = std::max(worst_node, std::abs(diff[node]));
                if (fft)
                    for (const auto& x : p.grid.to_physical(diff)) worst_phys = std::max(worst_phys, std::abs(x));
            }
            m.error = worst;
            m.node_error = worst_node;
            if (fft) m.physical_error = worst_phys;
            if (opt.energies) {
                const auto e = energy_spectral(sel.trajectory(), p, m.eps, opt.quad);
                m.energy = e.value;
                m.energy_finite = e.finite;
            }
        } catch (const std::exception& e) {
            detail::record_failure(m, e);
        }
    });
    std::vector<double> eps, err, nerr;
    for (const auto& m : r.members)
        if (m.ok()) {
            eps.push_back(m.eps);
            err.push_back(m.error);
            nerr.push_back(m.node_error);
        }
    r.fit = fit_rate(eps, err);
    r.node_fit = fit_rate(eps, nerr);
    r.diagnostics["rate_node"] = node;
    r.diagnostics["rate_node_symbol"] = tab.L[node];
    r.diagnostics["initial_vl_norm"] = vl_norm(tab.u0, tab.L, tab.weights);
    detail::add_verdicts(r, opt);
    return r;
}

}  // namespace wie
