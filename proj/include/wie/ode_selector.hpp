#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "wie/csv.hpp"
#include "wie/energy.hpp"
#include "wie/error.hpp"
#include "wie/forcing.hpp"
#include "wie/quadrature.hpp"

namespace wie {

/// y' + A y = f on [0, inf), y(0) = y0, with A symmetric.
struct OdeProblem {
    Eigen::MatrixXd A;
    Eigen::VectorXd y0;
    VectorForcing f;

    Eigen::Index dimension() const { return A.rows(); }

    void validate() const {
        if (A.rows() == 0 || A.rows() != A.cols()) throw InvalidArgument("ode: A must be square and non-empty");
        if (y0.size() != A.rows()) throw InvalidArgument("ode: y0 has the wrong dimension");
        if (!A.allFinite() || !y0.allFinite()) throw InvalidArgument("ode: non-finite entries in A or y0");
        for (const auto& c : f.components)
            if (c.coefficients.size() != A.rows()) throw InvalidArgument("ode: forcing vector has the wrong dimension");
        const double scale = A.cwiseAbs().maxCoeff();
        if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw InvalidArgument("ode: A is not symmetric");
    }
};

/// Ascending eigenvalues and orthonormal eigenvectors (columns of P).
struct EigenData {
    Eigen::VectorXd mu;
    Eigen::MatrixXd P;
};

/// Symmetric eigendecomposition. Each eigenvector is signed so that its first entry of
/// largest magnitude is positive. Diagonal input keeps the coordinate basis.
inline EigenData eigendecompose(const Eigen::MatrixXd& A) {
    if (A.rows() == 0 || A.rows() != A.cols()) throw InvalidArgument("eigendecompose: A must be square");
    const double scale = A.cwiseAbs().maxCoeff();
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw InvalidArgument("eigendecompose: A is not symmetric");
    const Eigen::Index n = A.rows();
    EigenData e;
    const Eigen::MatrixXd offdiag = A - Eigen::MatrixXd(A.diagonal().asDiagonal());
    if (offdiag.cwiseAbs().maxCoeff() == 0.0) {
        std::vector<Eigen::Index> order(n);
        for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return A(a, a) < A(b, b); });
        e.mu.resize(n);
        e.P = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            e.mu(i) = A(order[i], order[i]);
            e.P(order[i], i) = 1.0;
        }
        return e;
    }
    const Eigen::MatrixXd sym = 0.5 * (A + A.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) throw InvalidArgument("eigendecompose: solver failed");
    e.mu = solver.eigenvalues();
    e.P = solver.eigenvectors();
    for (Eigen::Index j = 0; j < n; ++j) {
        const double peak = e.P.col(j).cwiseAbs().maxCoeff();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(e.P(i, j)) >= peak - 1e-12) {
                if (e.P(i, j) < 0.0) e.P.col(j) *= -1.0;
                break;
            }
        }
    }
    return e;
}

/// Roots of eps r^2 - r - mu = 0 per eigenvalue: the decaying one and the growing one.
struct RegularizedSpectrum {
    double eps = 0.0;
    Eigen::VectorXd Z;           // sqrt(1 + 4 eps mu)
    Eigen::VectorXd mu_minus;    // (1 - Z) / (2 eps)
    Eigen::VectorXd mu_plus;     // (1 + Z) / (2 eps)
};

inline RegularizedSpectrum regularized_spectrum(const EigenData& eig, double eps) {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidArgument("regularized_spectrum: eps must be positive");
    const Eigen::Index n = eig.mu.size();
    RegularizedSpectrum s;
    s.eps = eps;
    s.Z.resize(n);
    s.mu_minus.resize(n);
    s.mu_plus.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = eig.mu(i);
        const double disc = 1.0 + 4.0 * eps * mu;
        if (!(disc > 0.0))
            throw PolicyError("regularized_spectrum: 1 + 4 eps mu <= 0; eps too large for this spectrum", eps,
                              mu < 0.0 ? 1.0 / (4.0 * -mu) : std::numeric_limits<double>::infinity());
        const double Z = std::sqrt(disc);
        s.Z(i) = Z;
        s.mu_minus(i) = -2.0 * mu / (1.0 + Z);
        s.mu_plus(i) = (1.0 + Z) / (2.0 * eps);
    }
    return s;
}

/// Q has columns mu_minus^i h^i, Qbar has columns mu_plus^i h^i.
struct BlockMatrices {
    Eigen::MatrixXd Q;
    Eigen::MatrixXd Qbar;
};

inline BlockMatrices block_matrices(const EigenData& eig, const RegularizedSpectrum& spec) {
    return {eig.P * spec.mu_minus.asDiagonal(), eig.P * spec.mu_plus.asDiagonal()};
}

/// Forcing in eigen coordinates, g^i = (P^T f)^i / Z^i.
inline VectorForcing decoupled_forcing(const EigenData& eig, const RegularizedSpectrum& spec,
                                       const VectorForcing& f) {
    const Eigen::MatrixXd M = spec.Z.cwiseInverse().asDiagonal() * eig.P.transpose();
    return f.transformed(M);
}

/// Same forcing through the block matrices, (eps Qbar - eps Q)^{-1} f.
inline VectorForcing decoupled_forcing_via_blocks(const EigenData& eig, const RegularizedSpectrum& spec,
                                                  const VectorForcing& f) {
    const auto b = block_matrices(eig, spec);
    const Eigen::MatrixXd D = spec.eps * (b.Qbar - b.Q);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(D);
    if (!lu.isInvertible()) throw InvalidArgument("decoupled forcing: block difference is singular");
    return f.transformed(lu.inverse());
}

/// Value and (analytic where available) derivative of a vector trajectory.
struct OdeTrajectory {
    std::function<Eigen::VectorXd(double)> value;
    std::function<Eigen::VectorXd(double)> derivative;  // empty: centred differences
    Growth growth = Growth::bounded();                   // declared growth of |y|^2 + |y'|^2

    Eigen::VectorXd slope(double t) const {
        if (derivative) return derivative(t);
        const double h = 1e-5 * std::max(1.0, t);
        if (t < h) return (value(t + h) - value(t)) / h;
        return (value(t + h) - value(t - h)) / (2.0 * h);
    }

    /// y + delta * shape(t) * direction, with the exact derivative when y has one.
    OdeTrajectory perturbed(std::function<double(double)> shape, std::function<double(double)> shape_slope,
                            Eigen::VectorXd direction, double delta) const {
        OdeTrajectory out;
        auto base = *this;
        out.value = [=](double t) -> Eigen::VectorXd { return base.value(t) + delta * shape(t) * direction; };
        out.derivative = [=](double t) -> Eigen::VectorXd {
            return base.slope(t) + delta * shape_slope(t) * direction;
        };
        out.growth = growth;
        return out;
    }
};

namespace detail {

/// Sum over profiles j of coef(i, j) * op(profile_j) for every component i.
template <class Op>
Eigen::VectorXd combine(const VectorForcing& g, Eigen::Index n, Op&& op) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (const auto& c : g.components) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (c.coefficients(i) == 0.0) continue;
            out(i) += c.coefficients(i) * op(c.time, i);
        }
    }
    return out;
}

}  // namespace detail

/// x_bar^i(0): Laplace transform of g^i at the growing root.
inline Eigen::VectorXd selection_initial(const RegularizedSpectrum& spec, const VectorForcing& g,
                                         const QuadratureSpec& quad) {
    const Growth amp = g.amplitude_growth();
    return detail::combine(g, spec.mu_plus.size(), [&](const TimeProfile& p, Eigen::Index i) {
        return laplace_tail(p, spec.mu_plus(i), 0.0, quad, amp);
    });
}

/// Finite-energy solution of eps y'' = y' + A y - f with y(0) = y0.
class SelectedOdeMinimizer {
public:
    SelectedOdeMinimizer(const OdeProblem& p, double eps, const QuadratureSpec& quad = {})
        : eps_(eps), quad_(quad), eig_(eigendecompose(p.A)), spec_(regularized_spectrum(eig_, eps)), f_(p.f) {
        p.validate();
        quad_.validate();
        if (!p.f.is_zero()) certify_transformable(p.f, eps, 1e-8, quad_);
        g_ = decoupled_forcing(eig_, spec_, p.f);
        xbar0_ = selection_initial(spec_, g_, quad_);
        x0_ = eig_.P.transpose() * p.y0 - xbar0_;
    }

    double eps() const { return eps_; }
    const EigenData& eigen() const { return eig_; }
    const RegularizedSpectrum& spectrum() const { return spec_; }
    const VectorForcing& decoupled() const { return g_; }
    const Eigen::VectorXd& xbar0() const { return xbar0_; }
    const Eigen::VectorXd& x0() const { return x0_; }

    /// Decaying-root part x(t) in eigen coordinates.
    Eigen::VectorXd x(double t) const {
        Eigen::VectorXd out(x0_.size());
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            const double r = spec_.mu_minus(i) * t;
            if (r > quad_.exponent_cap) throw OverflowError("minimizer: exponent exceeds cap");
            out(i) = std::exp(r) * x0_(i);
        }
        out += detail::combine(g_, out.size(), [&](const TimeProfile& p, Eigen::Index i) {
            return convolution_integral(p, spec_.mu_minus(i), t, quad_);
        });
        return out;
    }

    /// Growing-root part x_bar(t) in eigen coordinates, plus the selection offset.
    Eigen::VectorXd xbar(double t) const {
        const Growth amp = g_.amplitude_growth();
        Eigen::VectorXd out = detail::combine(g_, x0_.size(), [&](const TimeProfile& p, Eigen::Index i) {
            return shifted_tail(p, spec_.mu_plus(i), t, quad_, amp);
        });
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            if (offset_(i) == 0.0) continue;
            const double r = spec_.mu_plus(i) * t;
            if (r > quad_.exponent_cap) throw OverflowError("minimizer: exponent exceeds cap");
            out(i) += offset_(i) * std::exp(r);
        }
        return out;
    }

    Eigen::VectorXd value(double t) const { return eig_.P * (x(t) + xbar(t)); }

    /// y' = P (mu_minus x + mu_plus x_bar); the forcing terms cancel.
    Eigen::VectorXd derivative(double t) const {
        return eig_.P * (spec_.mu_minus.cwiseProduct(x(t)) + spec_.mu_plus.cwiseProduct(xbar(t)));
    }

    /// Same initial value, selection shifted by delta: adds delta^i exp(mu_plus^i t) to x_bar.
    SelectedOdeMinimizer with_selection_offset(const Eigen::VectorXd& delta) const {
        if (delta.size() != x0_.size()) throw InvalidArgument("selection offset has the wrong dimension");
        SelectedOdeMinimizer out = *this;
        out.offset_ = offset_ + delta;
        out.xbar0_ = xbar0_ + delta;
        out.x0_ = x0_ - delta;
        return out;
    }

    OdeTrajectory trajectory() const {
        OdeTrajectory tr;
        const auto self = *this;
        tr.value = [self](double t) { return self.value(t); };
        tr.derivative = [self](double t) { return self.derivative(t); };
        double rate = std::max(0.0, f_.growth.rate);
        for (Eigen::Index i = 0; i < spec_.mu_minus.size(); ++i) {
            rate = std::max(rate, 2.0 * spec_.mu_minus(i));
            if (offset_(i) != 0.0) rate = std::max(rate, 2.0 * spec_.mu_plus(i));
        }
        tr.growth = {rate, f_.growth.degree + 2.0, f_.growth.superexponential};
        return tr;
    }

private:
    double eps_;
    QuadratureSpec quad_;
    EigenData eig_;
    RegularizedSpectrum spec_;
    VectorForcing f_;
    VectorForcing g_;
    Eigen::VectorXd xbar0_;
    Eigen::VectorXd x0_;
    Eigen::VectorXd offset_ = Eigen::VectorXd::Zero(spec_.mu_plus.size());
};

/// y(t) = exp(-A t) (y0 + int_0^t exp(A s) f(s) ds), evaluated in the eigenbasis.
class ExactOdeSolution {
public:
    explicit ExactOdeSolution(const OdeProblem& p, const QuadratureSpec& quad = {})
        : A_(p.A), quad_(quad), eig_(eigendecompose(p.A)), f_(p.f) {
        p.validate();
        z0_ = eig_.P.transpose() * p.y0;
        proj_ = p.f.transformed(eig_.P.transpose());
    }

    Eigen::VectorXd value(double t) const {
        if (t < 0.0) throw InvalidArgument("exact solution: t must be >= 0");
        Eigen::VectorXd z(z0_.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            const double r = -eig_.mu(i) * t;
            if (r > quad_.exponent_cap) throw OverflowError("exact solution: exponent exceeds cap");
            z(i) = std::exp(r) * z0_(i);
        }
        z += detail::combine(proj_, z.size(), [&](const TimeProfile& p, Eigen::Index i) {
            return convolution_integral(p, -eig_.mu(i), t, quad_);
        });
        return eig_.P * z;
    }

    Eigen::VectorXd derivative(double t) const { return f_.value(t, A_.rows()) - A_ * value(t); }

    std::vector<Eigen::VectorXd> values(const std::vector<double>& t_grid) const {
        std::vector<Eigen::VectorXd> out;
        out.reserve(t_grid.size());
        for (double t : t_grid) {
            if (!std::isfinite(t)) throw InvalidArgument("exact solution: non-finite time");
            out.push_back(value(t));
        }
        return out;
    }

    OdeTrajectory trajectory() const {
        OdeTrajectory tr;
        const auto self = *this;
        tr.value = [self](double t) { return self.value(t); };
        tr.derivative = [self](double t) { return self.derivative(t); };
        tr.growth = {std::max({0.0, -2.0 * eig_.mu.minCoeff(), f_.growth.rate}), f_.growth.degree + 2.0,
                     f_.growth.superexponential};
        return tr;
    }

private:
    Eigen::MatrixXd A_;
    QuadratureSpec quad_;
    EigenData eig_;
    VectorForcing f_;
    VectorForcing proj_;
    Eigen::VectorXd z0_;
};

/// Integral over [0, inf) of exp(-t/eps) ((eps/2)|y'|^2 + (1/2)<Ay,y> - <f,y>).
inline EnergyValue energy_ode(const OdeTrajectory& y, const OdeProblem& p, double eps,
                              const QuadratureSpec& quad = {}, const EnergyOptions& opt = {}) {
    if (!(eps > 0.0)) throw InvalidArgument("energy: eps must be positive");
    const auto n = p.dimension();
    auto integrand = [&](double t) {
        const Eigen::VectorXd v = y.value(t);
        const Eigen::VectorXd d = y.slope(t);
        return 0.5 * eps * d.squaredNorm() + 0.5 * v.dot(p.A * v) - p.f.value(t, n).dot(v);
    };
    const Growth g{std::max(y.growth.rate, p.f.growth.rate), y.growth.degree + p.f.growth.degree,
                   y.growth.superexponential || p.f.growth.superexponential};
    return detail::weighted_energy(integrand, eps, g, quad, opt);
}

/// Integral over [0, T] of exp(-t/eps) |y|^2.
inline double truncated_weighted_norm(const OdeTrajectory& y, double eps, double T, const QuadratureSpec& quad = {}) {
    auto integrand = [&](double t) { return std::exp(-t / eps) * y.value(t).squaredNorm(); };
    return integrate_interval(integrand, 0.0, T, quad, geometric_breakpoints(eps, T));
}

/// Max over interior nodes of |eps y'' - y' - A y + f| by centred differences on a uniform grid.
inline double viscous_residual(const std::function<Eigen::VectorXd(double)>& y, const OdeProblem& p, double eps,
                               const std::vector<double>& t_grid) {
    if (t_grid.size() < 3) throw InvalidArgument("viscous_residual: need at least 3 grid points");
    const double h = t_grid[1] - t_grid[0];
    if (!(h > 0.0)) throw InvalidArgument("viscous_residual: grid must be increasing");
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (std::abs((t_grid[i] - t_grid[i - 1]) - h) > 1e-9 * h)
            throw InvalidArgument("viscous_residual: grid must be uniform");
    std::vector<Eigen::VectorXd> v;
    v.reserve(t_grid.size());
    for (double t : t_grid) v.push_back(y(t));
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < t_grid.size(); ++i) {
        const Eigen::VectorXd d2 = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
        const Eigen::VectorXd d1 = (v[i + 1] - v[i - 1]) / (2.0 * h);
        const Eigen::VectorXd r = eps * d2 - d1 - p.A * v[i] + p.f.value(t_grid[i], p.dimension());
        worst = std::max(worst, r.cwiseAbs().maxCoeff());
    }
    return worst;
}

inline PoincareCheck poincare_ode(const OdeTrajectory& y, double eps, const QuadratureSpec& quad = {}) {
    const double y2 = weighted_halfline([&](double t) { return y.value(t).squaredNorm(); }, eps, quad, y.growth);
    const double d2 = weighted_halfline([&](double t) { return y.slope(t).squaredNorm(); }, eps, quad, y.growth);
    return {0.5 * y2, eps * y.value(0.0).squaredNorm() + 2.0 * eps * eps * d2};
}

/// CSV with header t,y_1..y_N.
inline void write_trajectory_csv(const std::string& path, const std::vector<double>& times,
                                 const std::function<Eigen::VectorXd(double)>& y) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot open " + path);
    std::vector<Eigen::VectorXd> rows;
    for (double t : times) rows.push_back(y(t));
    out << "t";
    const auto n = rows.empty() ? 0 : rows.front().size();
    for (Eigen::Index i = 0; i < n; ++i) out << ",y_" << (i + 1);
    out << "\n";
    for (std::size_t k = 0; k < times.size(); ++k) {
        out << csv::format_double(times[k]);
        for (Eigen::Index i = 0; i < n; ++i) out << "," << csv::format_double(rows[k](i));
        out << "\n";
    }
}

}  // namespace wie
