#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace wie {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A constructor precondition was violated (bad fractional order, non-finite profile, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// The requested epsilon lies outside the admissible range of the symbol or spectrum.
class PolicyError : public Error {
public:
    PolicyError(const std::string& what, double eps, double bound)
        : Error(what), eps_(eps), bound_(bound) {}
    double epsilon() const noexcept { return eps_; }
    double bound() const noexcept { return bound_; }

private:
    double eps_;
    double bound_;
};

/// Adaptive refinement did not reach the requested tolerance.
class QuadratureError : public Error {
public:
    QuadratureError(const std::string& what, double partial, double estimate)
        : Error(what), partial_(partial), estimate_(estimate) {}
    double partial_value() const noexcept { return partial_; }
    double error_estimate() const noexcept { return estimate_; }

private:
    double partial_;
    double estimate_;
};

/// A Laplace-type integral diverges: the decay rate does not beat the declared growth.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// The forcing is not square Laplace transformable at the requested epsilon.
class TransformabilityError : public Error {
public:
    using Error::Error;
};

/// An exponent exceeded the configured overflow cap.
class OverflowError : public Error {
public:
    using Error::Error;
};

/// Config validation failure; carries every violation found, not just the first.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}
    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out;
        for (const auto& s : v) {
            if (!out.empty()) out += "; ";
            out += s;
        }
        return out;
    }
    std::vector<std::string> violations_;
};

}  // namespace wie
