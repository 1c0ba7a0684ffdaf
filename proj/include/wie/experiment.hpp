#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wie/convergence_lab.hpp"
#include "wie/csv.hpp"
#include "wie/error.hpp"
#include "wie/forcing.hpp"
#include "wie/frequency_grid.hpp"
#include "wie/ode_selector.hpp"
#include "wie/spectral_selector.hpp"
#include "wie/symbols.hpp"

namespace wie {

inline constexpr const char* kConfigSchemaVersion = "1.0";

struct LemmaSettings {
    std::function<double(double)> g;
    std::string label;
    double horizon = 1.0;
    std::size_t samples = 2001;
    bool strictly_decreasing = true;
    std::optional<double> final_max;
};

struct BranchSettings {
    double delta = 1e-6;
    std::vector<double> horizons{1.0, 3.0, 5.0};
    std::size_t component = 0;
    double margin = 0.0;
    double closed_form_tolerance = 0.05;  // relative, at the last horizon
    double stability_tolerance = 1e-8;    // relative change of the selected energy over horizons >= stable_from
    double stable_from = 3.0;
    std::optional<double> energy_min;     // at the last horizon
};

struct OutputSettings {
    std::filesystem::path dir = "out";
    bool field = false;
    std::vector<double> field_times;
};

/// Validated experiment description; every problem object is already constructed.
struct ExperimentConfig {
    std::string mode;
    std::string id;
    std::vector<double> ladder;
    StudyOptions study;
    std::optional<OdeProblem> ode;
    std::optional<SpectralProblem> spectral;
    std::optional<double> apriori_horizon;
    LemmaSettings lemma;
    BranchSettings branch;
    OutputSettings output;
    Json source;  // the config document as read
};

/// JSON Schema (draft 2020-12) of the config format; printed by `wie schema`.
inline Json config_schema() {
    const Json number = Json::parse(R"({"oneOf": [{"type": "number"}, {"type": "string", "pattern": "^[-+]?[0-9.]+([eE][-+]?[0-9]+)?$"}]})");
    const Json time_profile = Json::parse(R"({
      "type": "object", "required": ["kind"],
      "properties": {
        "kind": {"enum": ["constant", "exponential", "polynomial", "power", "exp-quadratic", "csv"]},
        "value": {"$ref": "#/$defs/number"}, "amplitude": {"$ref": "#/$defs/number"},
        "rate": {"$ref": "#/$defs/number"}, "exponent": {"$ref": "#/$defs/number"},
        "coefficients": {"type": "array", "items": {"$ref": "#/$defs/number"}},
        "path": {"type": "string"}, "extrapolation": {"enum": ["zero", "hold-last"]}}})");
    const Json space_profile = Json::parse(R"({
      "type": "object", "required": ["kind"],
      "properties": {"kind": {"enum": ["gaussian", "lorentzian", "zero"]},
                     "amplitude": {"$ref": "#/$defs/number"}, "width": {"$ref": "#/$defs/number"}}})");
    Json s = Json::parse(R"({
      "$schema": "https://json-schema.org/draft/2020-12/schema",
      "title": "wie experiment config",
      "type": "object",
      "required": ["schema_version", "mode", "epsilon_ladder"],
      "properties": {
        "schema_version": {"const": "1.0"},
        "mode": {"enum": ["ode", "spectral", "lemma-tech", "branch-divergence", "bound-audit"]},
        "id": {"type": "string"},
        "epsilon_ladder": {"type": "array", "minItems": 1, "items": {"$ref": "#/$defs/number"},
                           "description": "strictly decreasing, within the epsilon policy"},
        "threads": {"type": "integer", "minimum": 0},
        "study": {"type": "object", "properties": {
            "horizon": {"$ref": "#/$defs/number"}, "time_samples": {"type": "integer", "minimum": 2},
            "norm": {"enum": ["sup-uniform", "sup-vl"]}, "energies": {"type": "boolean"}}},
        "criteria": {"type": "object", "properties": {
            "rate_window": {"type": "array", "items": {"$ref": "#/$defs/number"}, "minItems": 2, "maxItems": 2},
            "node_rate_window": {"type": "array", "items": {"$ref": "#/$defs/number"}, "minItems": 2, "maxItems": 2},
            "final_ratio_max": {"$ref": "#/$defs/number"}, "error_max": {"$ref": "#/$defs/number"},
            "monotone_tolerance": {"$ref": "#/$defs/number"}, "node": {"type": "integer", "minimum": 0}}},
        "quadrature": {"type": "object", "properties": {
            "method": {"enum": ["gauss-laguerre", "adaptive"]}, "nodes": {"type": "integer"},
            "panel_tol": {"$ref": "#/$defs/number"}, "max_panels": {"type": "integer"},
            "abs_tol": {"$ref": "#/$defs/number"}, "rel_tol": {"$ref": "#/$defs/number"}}},
        "ode": {"type": "object", "required": ["A", "y0"], "properties": {
            "A": {"type": "array", "items": {"type": "array", "items": {"$ref": "#/$defs/number"}}},
            "y0": {"type": "array", "items": {"$ref": "#/$defs/number"}},
            "forcing": {"type": "array", "items": {"type": "object", "required": ["time", "vector"], "properties": {
                "time": {"$ref": "#/$defs/time_profile"},
                "vector": {"type": "array", "items": {"$ref": "#/$defs/number"}}}}}}},
        "spectral": {"type": "object", "required": ["symbol", "grid"], "properties": {
            "dimension": {"enum": [1, 2]},
            "symbol": {"type": "object", "required": ["kind"], "properties": {
                "kind": {"enum": ["classical", "fractional", "zeroth-order", "table"]},
                "s": {"$ref": "#/$defs/number"}, "mass": {"$ref": "#/$defs/number"},
                "margin": {"$ref": "#/$defs/number"}, "kernel": {"$ref": "#/$defs/space_profile"},
                "path": {"type": "string"}}},
            "grid": {"type": "object", "required": ["kind"], "properties": {
                "kind": {"enum": ["fft", "list"]}, "points": {"type": "integer"},
                "half_width": {"$ref": "#/$defs/number"}, "nodes": {"type": "array"},
                "weights": {"type": "array", "items": {"$ref": "#/$defs/number"}}}},
            "initial": {"$ref": "#/$defs/space_profile"},
            "real_field": {"type": "boolean"},
            "apriori_horizon": {"$ref": "#/$defs/number"},
            "forcing": {"type": "array", "items": {"type": "object", "required": ["time", "space"], "properties": {
                "time": {"$ref": "#/$defs/time_profile"}, "space": {"$ref": "#/$defs/space_profile"}}}}}},
        "lemma": {"type": "object", "required": ["function"], "properties": {
            "function": {"$ref": "#/$defs/time_profile"}, "horizon": {"$ref": "#/$defs/number"},
            "samples": {"type": "integer", "minimum": 2}, "strictly_decreasing": {"type": "boolean"},
            "final_max": {"$ref": "#/$defs/number"}}},
        "branch": {"type": "object", "properties": {
            "delta": {"$ref": "#/$defs/number"}, "horizons": {"type": "array", "items": {"$ref": "#/$defs/number"}},
            "component": {"type": "integer", "minimum": 0}, "margin": {"$ref": "#/$defs/number"},
            "closed_form_tolerance": {"$ref": "#/$defs/number"}, "stability_tolerance": {"$ref": "#/$defs/number"},
            "stable_from": {"$ref": "#/$defs/number"}, "energy_min": {"$ref": "#/$defs/number"}}},
        "output": {"type": "object", "properties": {
            "dir": {"type": "string"}, "field": {"type": "boolean"},
            "field_times": {"type": "array", "items": {"$ref": "#/$defs/number"}}}}
      },
      "additionalProperties": false
    })");
    s["$defs"]["number"] = number;
    s["$defs"]["time_profile"] = time_profile;
    s["$defs"]["space_profile"] = space_profile;
    return s;
}

namespace detail {

/// Collects every violation with a JSON-pointer-like location instead of stopping at the first.
class ConfigReader {
public:
    explicit ConfigReader(std::filesystem::path base) : base_(std::move(base)) {}

    std::vector<std::string> issues;

    void fail(const std::string& where, const std::string& what) { issues.push_back(where + ": " + what); }

    const Json* child(const Json& obj, const std::string& key, const std::string& where, bool required) {
        if (!obj.is_object()) return nullptr;
        auto it = obj.find(key);
        if (it == obj.end()) {
            if (required) fail(where + "/" + key, "missing");
            return nullptr;
        }
        return &*it;
    }

    void known_keys(const Json& obj, const std::string& where, std::initializer_list<const char*> keys) {
        if (!obj.is_object()) return;
        const std::set<std::string> allowed(keys.begin(), keys.end());
        for (auto it = obj.begin(); it != obj.end(); ++it)
            if (!allowed.count(it.key())) fail(where + "/" + it.key(), "unknown key");
    }

    /// Numbers may be given as JSON numbers or decimal strings.
    std::optional<double> number(const Json& v, const std::string& where) {
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) {
            const auto& s = v.get_ref<const std::string&>();
            double out = 0.0;
            const char* first = s.data();
            if (!s.empty() && s.front() == '+') ++first;
            const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
            if (ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out)) return out;
            fail(where, "not a decimal number: \"" + s + "\"");
            return std::nullopt;
        }
        fail(where, "expected a number");
        return std::nullopt;
    }

    std::optional<double> number(const Json& obj, const std::string& key, const std::string& where, bool required) {
        const Json* v = child(obj, key, where, required);
        return v ? number(*v, where + "/" + key) : std::nullopt;
    }

    double number_or(const Json& obj, const std::string& key, const std::string& where, double fallback) {
        return number(obj, key, where, false).value_or(fallback);
    }

    std::optional<long long> integer(const Json& obj, const std::string& key, const std::string& where,
                                     bool required, long long min_value = std::numeric_limits<long long>::min()) {
        const Json* v = child(obj, key, where, required);
        if (!v) return std::nullopt;
        if (!v->is_number_integer()) {
            fail(where + "/" + key, "expected an integer");
            return std::nullopt;
        }
        const auto n = v->get<long long>();
        if (n < min_value) {
            fail(where + "/" + key, "must be >= " + std::to_string(min_value));
            return std::nullopt;
        }
        return n;
    }

    std::optional<bool> boolean(const Json& obj, const std::string& key, const std::string& where) {
        const Json* v = child(obj, key, where, false);
        if (!v) return std::nullopt;
        if (!v->is_boolean()) {
            fail(where + "/" + key, "expected a boolean");
            return std::nullopt;
        }
        return v->get<bool>();
    }

    std::optional<std::string> string(const Json& obj, const std::string& key, const std::string& where, bool required) {
        const Json* v = child(obj, key, where, required);
        if (!v) return std::nullopt;
        if (!v->is_string()) {
            fail(where + "/" + key, "expected a string");
            return std::nullopt;
        }
        return v->get<std::string>();
    }

    std::optional<std::vector<double>> numbers(const Json& v, const std::string& where) {
        if (!v.is_array()) {
            fail(where, "expected an array");
            return std::nullopt;
        }
        std::vector<double> out;
        bool ok = true;
        for (std::size_t i = 0; i < v.size(); ++i) {
            auto x = number(v[i], where + "/" + std::to_string(i));
            if (x) out.push_back(*x);
            else ok = false;
        }
        return ok ? std::optional(out) : std::nullopt;
    }

    std::optional<std::vector<double>> numbers(const Json& obj, const std::string& key, const std::string& where,
                                               bool required) {
        const Json* v = child(obj, key, where, required);
        return v ? numbers(*v, where + "/" + key) : std::nullopt;
    }

    std::filesystem::path resolve(const std::string& path) const {
        std::filesystem::path p(path);
        return p.is_absolute() ? p : base_ / p;
    }

    /// Time profile and the growth class of its square.
    std::optional<std::pair<TimeProfile, Growth>> time_profile(const Json& v, const std::string& where) {
        if (!v.is_object()) {
            fail(where, "expected an object");
            return std::nullopt;
        }
        const auto kind = string(v, "kind", where, true);
        if (!kind) return std::nullopt;
        const auto n0 = issues.size();
        try {
            if (*kind == "constant") {
                known_keys(v, where, {"kind", "value"});
                const auto c = number(v, "value", where, true);
                if (c) return std::pair{TimeProfile::constant(*c), Growth::bounded()};
            } else if (*kind == "exponential") {
                known_keys(v, where, {"kind", "amplitude", "rate"});
                const double a = number_or(v, "amplitude", where, 1.0);
                const auto r = number(v, "rate", where, true);
                if (r && issues.size() == n0)
                    return std::pair{TimeProfile::exponential(a, *r),
                                     *r > 0.0 ? Growth::exponential(2.0 * *r) : Growth::bounded()};
            } else if (*kind == "polynomial") {
                known_keys(v, where, {"kind", "coefficients"});
                const auto c = numbers(v, "coefficients", where, true);
                if (c) {
                    if (c->empty()) fail(where + "/coefficients", "empty");
                    else return std::pair{TimeProfile::polynomial(*c), Growth::polynomial(2.0 * (c->size() - 1))};
                }
            } else if (*kind == "power") {
                known_keys(v, where, {"kind", "amplitude", "exponent"});
                const double a = number_or(v, "amplitude", where, 1.0);
                const auto p = number(v, "exponent", where, true);
                if (p && issues.size() == n0)
                    return std::pair{TimeProfile::power(a, *p), Growth::polynomial(std::max(0.0, 2.0 * *p))};
            } else if (*kind == "exp-quadratic") {
                known_keys(v, where, {"kind", "amplitude", "rate"});
                const double a = number_or(v, "amplitude", where, 1.0);
                const auto r = number(v, "rate", where, true);
                if (r && issues.size() == n0)
                    return std::pair{TimeProfile::exp_quadratic(a, *r),
                                     *r > 0.0 ? Growth::unbounded() : Growth::bounded()};
            } else if (*kind == "csv") {
                known_keys(v, where, {"kind", "path", "extrapolation"});
                const auto path = string(v, "path", where, true);
                const auto ex = string(v, "extrapolation", where, false).value_or("zero");
                if (ex != "zero" && ex != "hold-last") fail(where + "/extrapolation", "expected zero or hold-last");
                if (path) {
                    const auto full = resolve(*path);
                    if (!std::filesystem::exists(full)) {
                        fail(where + "/path", "file not found: " + full.string());
                    } else if (issues.size() == n0) {
                        auto prof = TimeProfile::from_csv(full.string(), ex == "zero" ? Extrapolation::Zero
                                                                                      : Extrapolation::HoldLast);
                        prof.label = "csv(" + *path + ")";
                        return std::pair{prof, Growth::bounded()};
                    }
                }
            } else {
                fail(where + "/kind", "unknown time profile kind \"" + *kind + "\"");
            }
        } catch (const Error& e) {
            fail(where, e.what());
        }
        return std::nullopt;
    }

    std::optional<SpaceProfile> space_profile(const Json& v, const std::string& where) {
        if (!v.is_object()) {
            fail(where, "expected an object");
            return std::nullopt;
        }
        const auto kind = string(v, "kind", where, true);
        if (!kind) return std::nullopt;
        if (*kind == "gaussian") {
            known_keys(v, where, {"kind", "amplitude", "width"});
            const double w = number_or(v, "width", where, 1.0);
            if (!(w > 0.0)) fail(where + "/width", "must be positive");
            return profiles::gaussian(number_or(v, "amplitude", where, 1.0), w);
        }
        if (*kind == "lorentzian") {
            known_keys(v, where, {"kind", "amplitude"});
            return profiles::lorentzian(number_or(v, "amplitude", where, 1.0));
        }
        if (*kind == "zero") {
            known_keys(v, where, {"kind"});
            return SpaceProfile([](std::span<const double>) { return Complex(0.0); });
        }
        fail(where + "/kind", "unknown space profile kind \"" + *kind + "\"");
        return std::nullopt;
    }

private:
    std::filesystem::path base_;
};

inline Growth combine_growth(const Growth& a, const Growth& b) {
    return {std::max(a.rate, b.rate), std::max(a.degree, b.degree), a.superexponential || b.superexponential};
}

inline std::optional<OdeProblem> read_ode(ConfigReader& r, const Json& v, const std::string& where) {
    r.known_keys(v, where, {"A", "y0", "forcing"});
    OdeProblem p;
    const auto n0 = r.issues.size();
    const Json* A = r.child(v, "A", where, true);
    if (A) {
        if (!A->is_array() || A->empty()) {
            r.fail(where + "/A", "expected a non-empty array of rows");
        } else {
            const auto n = static_cast<Eigen::Index>(A->size());
            p.A.resize(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto row = r.numbers((*A)[i], where + "/A/" + std::to_string(i));
                if (!row) continue;
                if (static_cast<Eigen::Index>(row->size()) != n) {
                    r.fail(where + "/A/" + std::to_string(i), "row length differs from the number of rows");
                    continue;
                }
                for (Eigen::Index j = 0; j < n; ++j) p.A(i, j) = (*row)[j];
            }
        }
    }
    if (const auto y0 = r.numbers(v, "y0", where, true)) p.y0 = Eigen::Map<const Eigen::VectorXd>(y0->data(), y0->size());
    if (const Json* f = r.child(v, "forcing", where, false)) {
        if (!f->is_array()) r.fail(where + "/forcing", "expected an array");
        else
            for (std::size_t j = 0; j < f->size(); ++j) {
                const std::string w = where + "/forcing/" + std::to_string(j);
                r.known_keys((*f)[j], w, {"time", "vector"});
                const Json* t = r.child((*f)[j], "time", w, true);
                const auto vec = r.numbers((*f)[j], "vector", w, true);
                const auto prof = t ? r.time_profile(*t, w + "/time") : std::nullopt;
                if (prof && vec) {
                    p.f.components.push_back({prof->first, Eigen::Map<const Eigen::VectorXd>(vec->data(), vec->size())});
                    p.f.growth = combine_growth(p.f.growth, prof->second);
                }
            }
    }
    if (r.issues.size() != n0) return std::nullopt;
    try {
        p.validate();
    } catch (const Error& e) {
        r.fail(where, e.what());
        return std::nullopt;
    }
    return p;
}

inline std::optional<FrequencyGrid> read_grid(ConfigReader& r, const Json& v, const std::string& where, int dim) {
    const auto kind = r.string(v, "kind", where, true);
    if (!kind) return std::nullopt;
    try {
        if (*kind == "fft") {
            r.known_keys(v, where, {"kind", "points", "half_width"});
            const auto n = r.integer(v, "points", where, true, 2);
            const auto h = r.number(v, "half_width", where, true);
            if (n && h) return FrequencyGrid::uniform_fft(dim, static_cast<int>(*n), *h);
        } else if (*kind == "list") {
            r.known_keys(v, where, {"kind", "nodes", "weights"});
            const Json* nodes = r.child(v, "nodes", where, true);
            const auto w = r.numbers(v, "weights", where, true);
            if (!nodes || !w) return std::nullopt;
            if (!nodes->is_array()) {
                r.fail(where + "/nodes", "expected an array");
                return std::nullopt;
            }
            FrequencySamples s{dim, {}};
            for (std::size_t k = 0; k < nodes->size(); ++k) {
                const std::string wk = where + "/nodes/" + std::to_string(k);
                const Json& node = (*nodes)[k];
                if (dim == 1 && !node.is_array()) {
                    if (auto x = r.number(node, wk)) s.coords.push_back(*x);
                    continue;
                }
                const auto xs = r.numbers(node, wk);
                if (!xs) continue;
                if (static_cast<int>(xs->size()) != dim) r.fail(wk, "expected " + std::to_string(dim) + " coordinates");
                else s.coords.insert(s.coords.end(), xs->begin(), xs->end());
            }
            if (s.size() != w->size()) {
                r.fail(where + "/weights", "one weight per node required");
                return std::nullopt;
            }
            return FrequencyGrid::explicit_list(std::move(s), *w);
        } else {
            r.fail(where + "/kind", "unknown grid kind \"" + *kind + "\"");
        }
    } catch (const Error& e) {
        r.fail(where, e.what());
    }
    return std::nullopt;
}

inline std::optional<MultiplierSymbol> read_symbol(ConfigReader& r, const Json& v, const std::string& where, int dim,
                                                   const FrequencyGrid* grid) {
    const auto kind = r.string(v, "kind", where, true);
    if (!kind) return std::nullopt;
    try {
        if (*kind == "classical") {
            r.known_keys(v, where, {"kind"});
            return MultiplierSymbol::classical(dim);
        }
        if (*kind == "fractional") {
            r.known_keys(v, where, {"kind", "s"});
            const auto s = r.number(v, "s", where, true);
            if (s) return MultiplierSymbol::fractional(*s, dim);
            return std::nullopt;
        }
        if (*kind == "zeroth-order" || *kind == "table") {
            if (!grid) return std::nullopt;  // grid errors are already recorded
            const double margin = r.number_or(v, "margin", where, 0.0);
            if (*kind == "zeroth-order") {
                r.known_keys(v, where, {"kind", "kernel", "mass", "margin"});
                const Json* k = r.child(v, "kernel", where, true);
                const auto kernel = k ? r.space_profile(*k, where + "/kernel") : std::nullopt;
                const double mass = r.number_or(v, "mass", where, 0.0);
                if (!kernel) return std::nullopt;
                auto real = [kernel = *kernel](std::span<const double> xi) { return kernel(xi).real(); };
                return MultiplierSymbol::zeroth_order(real, mass, dim, grid->samples(), margin);
            }
            r.known_keys(v, where, {"kind", "path", "margin"});
            const auto path = r.string(v, "path", where, true);
            if (!path) return std::nullopt;
            const auto full = r.resolve(*path);
            if (!std::filesystem::exists(full)) {
                r.fail(where + "/path", "file not found: " + full.string());
                return std::nullopt;
            }
            return MultiplierSymbol::from_table(csv::read_two_column(full.string()), dim, grid->samples(), margin);
        }
        r.fail(where + "/kind", "unknown symbol kind \"" + *kind + "\"");
    } catch (const Error& e) {
        r.fail(where, e.what());
    }
    return std::nullopt;
}

inline std::optional<SpectralProblem> read_spectral(ConfigReader& r, const Json& v, const std::string& where,
                                                    const std::string& id, std::optional<double>& apriori) {
    r.known_keys(v, where, {"dimension", "symbol", "grid", "initial", "forcing", "real_field", "apriori_horizon"});
    const auto n0 = r.issues.size();
    const auto dim = r.integer(v, "dimension", where, false).value_or(1);
    if (dim < 1) {
        r.fail(where + "/dimension", "must be >= 1");
        return std::nullopt;
    }
    const Json* g = r.child(v, "grid", where, true);
    const auto grid = g ? read_grid(r, *g, where + "/grid", static_cast<int>(dim)) : std::nullopt;
    const Json* s = r.child(v, "symbol", where, true);
    const auto symbol = s ? read_symbol(r, *s, where + "/symbol", static_cast<int>(dim), grid ? &*grid : nullptr)
                          : std::nullopt;
    SpaceProfile u0 = [](std::span<const double>) { return Complex(0.0); };
    if (const Json* i = r.child(v, "initial", where, false))
        if (auto p = r.space_profile(*i, where + "/initial")) u0 = *p;
    ForcingTerm f;
    if (const Json* fj = r.child(v, "forcing", where, false)) {
        if (!fj->is_array()) r.fail(where + "/forcing", "expected an array");
        else
            for (std::size_t j = 0; j < fj->size(); ++j) {
                const std::string w = where + "/forcing/" + std::to_string(j);
                r.known_keys((*fj)[j], w, {"time", "space"});
                const Json* t = r.child((*fj)[j], "time", w, true);
                const Json* sp = r.child((*fj)[j], "space", w, true);
                const auto prof = t ? r.time_profile(*t, w + "/time") : std::nullopt;
                const auto space = sp ? r.space_profile(*sp, w + "/space") : std::nullopt;
                if (prof && space) {
                    f.components.push_back({prof->first, *space, prof->first.label});
                    f.growth = combine_growth(f.growth, prof->second);
                }
            }
    }
    apriori = r.number(v, "apriori_horizon", where, false);
    if (apriori && !(*apriori > 0.0)) r.fail(where + "/apriori_horizon", "must be positive");
    const bool real = r.boolean(v, "real_field", where).value_or(true);
    if (r.issues.size() != n0 || !grid || !symbol) return std::nullopt;
    SpectralProblem p{*symbol, u0, f, *grid, real, id};
    try {
        p.validate();
    } catch (const Error& e) {
        r.fail(where, e.what());
        return std::nullopt;
    }
    return p;
}

inline void check_ladder_policy(ConfigReader& r, const ExperimentConfig& c) {
    for (std::size_t i = 0; i < c.ladder.size(); ++i) {
        const std::string where = "/epsilon_ladder/" + std::to_string(i);
        const double eps = c.ladder[i];
        if (!(eps > 0.0)) {
            r.fail(where, "epsilon must be positive");
            continue;
        }
        if (i > 0 && !(eps < c.ladder[i - 1])) r.fail(where, "ladder must be strictly decreasing");
        if (c.spectral) {
            const auto policy = epsilon_threshold(c.spectral->symbol);
            if (!policy.admits(eps))
                r.fail(where, "eps " + csv::format_double(eps) + " exceeds the policy bound epsilon_max = " +
                                  csv::format_double(policy.epsilon_max));
        } else if (c.ode && c.mode != "lemma-tech") {
            const double low = eigendecompose(c.ode->A).mu.minCoeff();
            if (low < 0.0 && !(1.0 + 4.0 * eps * low > 0.0))
                r.fail(where, "eps " + csv::format_double(eps) + " exceeds the policy bound epsilon_max = " +
                                  csv::format_double(1.0 / (4.0 * -low)) + " (exclusive)");
        }
    }
}

}  // namespace detail

/// Parses and validates a config document; throws ConfigError listing every violation.
inline ExperimentConfig parse_config_json(const Json& doc, const std::filesystem::path& base_dir = ".") {
    detail::ConfigReader r(base_dir);
    ExperimentConfig c;
    c.source = doc;
    if (!doc.is_object()) throw ConfigError({"/: expected a JSON object"});
    r.known_keys(doc, "", {"schema_version", "mode", "id", "epsilon_ladder", "threads", "study", "criteria",
                           "quadrature", "ode", "spectral", "lemma", "branch", "output"});
    if (const auto v = r.string(doc, "schema_version", "", true); v && *v != kConfigSchemaVersion)
        r.fail("/schema_version", "unsupported version \"" + *v + "\" (expected " + kConfigSchemaVersion + ")");
    static const std::set<std::string> modes{"ode", "spectral", "lemma-tech", "branch-divergence", "bound-audit"};
    c.mode = r.string(doc, "mode", "", true).value_or("");
    if (!c.mode.empty() && !modes.count(c.mode)) r.fail("/mode", "unknown mode \"" + c.mode + "\"");
    c.id = r.string(doc, "id", "", false).value_or(c.mode.empty() ? "experiment" : c.mode);
    if (auto l = r.numbers(doc, "epsilon_ladder", "", true)) {
        if (l->empty()) r.fail("/epsilon_ladder", "empty");
        c.ladder = *l;
    }
    c.study.threads = static_cast<unsigned>(r.integer(doc, "threads", "", false, 0).value_or(1));

    if (const Json* q = r.child(doc, "quadrature", "", false)) {
        r.known_keys(*q, "/quadrature", {"method", "nodes", "panel_tol", "max_panels", "abs_tol", "rel_tol"});
        const auto method = r.string(*q, "method", "/quadrature", false).value_or("gauss-laguerre");
        if (method == "adaptive") c.study.quad.method = QuadratureSpec::Method::AdaptivePanels;
        else if (method != "gauss-laguerre") r.fail("/quadrature/method", "expected gauss-laguerre or adaptive");
        c.study.quad.nodes = static_cast<int>(r.integer(*q, "nodes", "/quadrature", false, 4).value_or(c.study.quad.nodes));
        c.study.quad.max_panels =
            static_cast<int>(r.integer(*q, "max_panels", "/quadrature", false, 1).value_or(c.study.quad.max_panels));
        c.study.quad.panel_tol = r.number_or(*q, "panel_tol", "/quadrature", c.study.quad.panel_tol);
        c.study.quad.abs_tol = r.number_or(*q, "abs_tol", "/quadrature", c.study.quad.abs_tol);
        c.study.quad.rel_tol = r.number_or(*q, "rel_tol", "/quadrature", c.study.quad.rel_tol);
        try {
            c.study.quad.validate();
        } catch (const Error& e) {
            r.fail("/quadrature", e.what());
        }
    }
    if (const Json* s = r.child(doc, "study", "", false)) {
        r.known_keys(*s, "/study", {"horizon", "time_samples", "norm", "energies"});
        c.study.horizon = r.number_or(*s, "horizon", "/study", 1.0);
        if (!(c.study.horizon > 0.0)) r.fail("/study/horizon", "must be positive");
        c.study.time_samples = static_cast<std::size_t>(r.integer(*s, "time_samples", "/study", false, 2).value_or(101));
        const auto norm = r.string(*s, "norm", "/study", false).value_or(c.mode == "spectral" ? "sup-vl" : "sup-uniform");
        if (norm == "sup-vl") c.study.norm = ErrorNorm::SupVL;
        else if (norm != "sup-uniform") r.fail("/study/norm", "expected sup-uniform or sup-vl");
        c.study.energies = r.boolean(*s, "energies", "/study").value_or(true);
    }
    else if (c.mode == "spectral") c.study.norm = ErrorNorm::SupVL;
    if (const Json* k = r.child(doc, "criteria", "", false)) {
        r.known_keys(*k, "/criteria",
                     {"rate_window", "node_rate_window", "final_ratio_max", "error_max", "monotone_tolerance", "node"});
        auto window = [&](const char* key) -> std::optional<std::pair<double, double>> {
            auto w = r.numbers(*k, key, "/criteria", false);
            if (!w) return std::nullopt;
            if (w->size() != 2 || !((*w)[0] <= (*w)[1])) {
                r.fail(std::string("/criteria/") + key, "expected [low, high]");
                return std::nullopt;
            }
            return std::pair{(*w)[0], (*w)[1]};
        };
        c.study.rate_window = window("rate_window");
        c.study.node_rate_window = window("node_rate_window");
        c.study.final_ratio_max = r.number(*k, "final_ratio_max", "/criteria", false);
        c.study.error_max = r.number(*k, "error_max", "/criteria", false);
        c.study.monotone_tolerance = r.number_or(*k, "monotone_tolerance", "/criteria", 0.0);
        if (auto n = r.integer(*k, "node", "/criteria", false, 0)) c.study.node = static_cast<std::size_t>(*n);
    }
    if (const Json* o = r.child(doc, "output", "", false)) {
        r.known_keys(*o, "/output", {"dir", "field", "field_times"});
        if (auto d = r.string(*o, "dir", "/output", false)) c.output.dir = *d;
        c.output.field = r.boolean(*o, "field", "/output").value_or(false);
        if (auto t = r.numbers(*o, "field_times", "/output", false)) c.output.field_times = *t;
    }

    const bool wants_ode = c.mode == "ode" || c.mode == "branch-divergence";
    const bool wants_spectral = c.mode == "spectral" || c.mode == "bound-audit";
    if (const Json* o = r.child(doc, "ode", "", wants_ode)) c.ode = detail::read_ode(r, *o, "/ode");
    if (const Json* s = r.child(doc, "spectral", "", wants_spectral))
        c.spectral = detail::read_spectral(r, *s, "/spectral", c.id, c.apriori_horizon);
    if (c.mode == "ode" && c.study.norm == ErrorNorm::SupVL) r.fail("/study/norm", "ode studies use sup-uniform");

    if (const Json* l = r.child(doc, "lemma", "", c.mode == "lemma-tech")) {
        r.known_keys(*l, "/lemma", {"function", "horizon", "samples", "strictly_decreasing", "final_max"});
        if (const Json* g = r.child(*l, "function", "/lemma", true))
            if (auto prof = r.time_profile(*g, "/lemma/function")) {
                c.lemma.label = prof->first.label;
                c.lemma.g = prof->first.fn;
            }
        c.lemma.horizon = r.number_or(*l, "horizon", "/lemma", 1.0);
        if (!(c.lemma.horizon > 0.0)) r.fail("/lemma/horizon", "must be positive");
        c.lemma.samples = static_cast<std::size_t>(r.integer(*l, "samples", "/lemma", false, 2).value_or(2001));
        c.lemma.strictly_decreasing = r.boolean(*l, "strictly_decreasing", "/lemma").value_or(true);
        c.lemma.final_max = r.number(*l, "final_max", "/lemma", false);
    }
    if (const Json* b = r.child(doc, "branch", "", false)) {
        r.known_keys(*b, "/branch", {"delta", "horizons", "component", "margin", "closed_form_tolerance",
                                     "stability_tolerance", "stable_from", "energy_min"});
        c.branch.delta = r.number_or(*b, "delta", "/branch", c.branch.delta);
        if (auto h = r.numbers(*b, "horizons", "/branch", false)) c.branch.horizons = *h;
        c.branch.component = static_cast<std::size_t>(r.integer(*b, "component", "/branch", false, 0).value_or(0));
        c.branch.margin = r.number_or(*b, "margin", "/branch", 0.0);
        c.branch.closed_form_tolerance = r.number_or(*b, "closed_form_tolerance", "/branch", c.branch.closed_form_tolerance);
        c.branch.stability_tolerance = r.number_or(*b, "stability_tolerance", "/branch", c.branch.stability_tolerance);
        c.branch.stable_from = r.number_or(*b, "stable_from", "/branch", c.branch.stable_from);
        c.branch.energy_min = r.number(*b, "energy_min", "/branch", false);
    }
    if (c.mode == "branch-divergence") {
        for (std::size_t i = 0; i < c.branch.horizons.size(); ++i)
            if (!(c.branch.horizons[i] > 0.0) || (i > 0 && !(c.branch.horizons[i] > c.branch.horizons[i - 1])))
                r.fail("/branch/horizons", "horizons must be positive and increasing");
        if (c.ode && c.branch.component >= static_cast<std::size_t>(c.ode->dimension()))
            r.fail("/branch/component", "out of range");
    }
    if (c.mode != "lemma-tech") detail::check_ladder_policy(r, c);
    else
        for (std::size_t i = 0; i < c.ladder.size(); ++i)
            if (!(c.ladder[i] > 0.0) || (i > 0 && !(c.ladder[i] < c.ladder[i - 1])))
                r.fail("/epsilon_ladder/" + std::to_string(i), "ladder must be positive and strictly decreasing");
    if (!r.issues.empty()) throw ConfigError(r.issues);
    return c;
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({path.string() + ": cannot read file"});
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError({path.string() + ": " + e.what()});
    }
    return parse_config_json(doc, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

// ---------------------------------------------------------------------------------------------

/// Writes via a sibling temp file and a rename, so readers never see a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::filesystem::remove(tmp);
            throw Error("write failed for " + tmp);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error("cannot move " + tmp + " to " + path.string() + ": " + ec.message());
    }
}

struct RunResult {
    int exit_code = 0;
    ConvergenceReport report;
    std::vector<std::filesystem::path> files;
};

namespace detail {

inline ConvergenceReport run_lemma(const ExperimentConfig& c) {
    ConvergenceReport r;
    r.problem_id = c.id;
    r.mode = c.mode;
    r.norm = "sup";
    r.horizon = c.lemma.horizon;
    r.grid = "time samples " + std::to_string(c.lemma.samples);
    r.members.resize(c.ladder.size());
    std::vector<double> argmax(c.ladder.size(), std::numeric_limits<double>::quiet_NaN());
    parallel_for(c.ladder.size(), c.study.threads, [&](std::size_t n) {
        auto& m = r.members[n];
        m.eps = c.ladder[n];
        try {
            const auto p = lemma_tech_profile(c.lemma.g, c.lemma.horizon, m.eps, c.study.quad, c.lemma.samples);
            m.error = p.sup;
            argmax[n] = p.argmax;
        } catch (const std::exception& e) {
            record_failure(m, e);
        }
    });
    for (const auto& m : r.members)
        if (!m.ok()) r.verdicts.push_back({m.failure_kind, false, "eps " + fmt(m.eps) + ": " + m.failure});
    Json rows = Json::array();
    for (std::size_t n = 0; n < r.members.size(); ++n)
        rows.push_back({{"epsilon", r.members[n].eps},
                        {"sup", std::isfinite(r.members[n].error) ? Json(r.members[n].error) : Json(nullptr)},
                        {"argmax", std::isfinite(argmax[n]) ? Json(argmax[n]) : Json(nullptr)}});
    r.tables["profile_sup"] = rows;
    r.diagnostics["function"] = c.lemma.label;
    if (c.lemma.strictly_decreasing) {
        bool ok = true;
        for (std::size_t n = 1; n < r.members.size(); ++n)
            if (!(r.members[n].error < r.members[n - 1].error)) ok = false;
        r.verdicts.push_back({"sup strictly decreasing", ok, ""});
    }
    if (c.lemma.final_max) {
        const double last = r.members.back().error;
        r.verdicts.push_back({"final sup below limit", last <= *c.lemma.final_max,
                              "sup " + fmt(last) + " limit " + fmt(*c.lemma.final_max)});
    }
    return r;
}

inline ConvergenceReport run_branch(const ExperimentConfig& c) {
    ConvergenceReport r;
    r.problem_id = c.id;
    r.mode = c.mode;
    r.norm = "log-energy";
    r.horizon = c.branch.horizons.back();
    r.grid = "horizons " + std::to_string(c.branch.horizons.size());
    r.members.resize(c.ladder.size());
    std::vector<std::optional<BranchDivergence>> runs(c.ladder.size());
    parallel_for(c.ladder.size(), c.study.threads, [&](std::size_t n) {
        auto& m = r.members[n];
        m.eps = c.ladder[n];
        try {
            runs[n] = branch_divergence(*c.ode, m.eps, c.branch.delta, c.branch.horizons, c.branch.component,
                                        c.study.quad, c.branch.margin);
            m.energy = std::exp(runs[n]->rows.back().log_energy);
            m.energy_finite = std::isfinite(m.energy);
        } catch (const std::exception& e) {
            record_failure(m, e);
        }
    });
    Json tables = Json::array();
    for (std::size_t n = 0; n < runs.size(); ++n) {
        const auto& m = r.members[n];
        if (!m.ok()) {
            r.verdicts.push_back({m.failure_kind, false, "eps " + fmt(m.eps) + ": " + m.failure});
            continue;
        }
        const auto& b = *runs[n];
        Json rows = Json::array();
        for (const auto& row : b.rows)
            rows.push_back({{"horizon", row.horizon},
                            {"log_energy", row.log_energy},
                            {"log_leading", row.log_leading},
                            {"selected_energy", row.selected_energy}});
        tables.push_back({{"epsilon", b.eps}, {"delta", b.delta}, {"Z", b.Z}, {"slope", b.slope},
                          {"slope_floor", b.slope_floor}, {"rows", rows}});
        const std::string tag = " (eps " + fmt(b.eps) + ")";
        r.verdicts.push_back({"rejected branch diverges" + tag, b.diverges(),
                              "slope " + fmt(b.slope) + " floor " + fmt(b.slope_floor)});
        const auto& last = b.rows.back();
        const double match = std::exp(last.log_energy - last.log_leading) - 1.0;
        r.verdicts.push_back({"closed form match" + tag, std::abs(match) <= c.branch.closed_form_tolerance,
                              "relative deviation " + fmt(match)});
        if (c.branch.energy_min)
            r.verdicts.push_back({"energy above floor" + tag, last.log_energy >= std::log(*c.branch.energy_min),
                                  "log energy " + fmt(last.log_energy)});
        double drift = 0.0, ref = std::numeric_limits<double>::quiet_NaN();
        for (const auto& row : b.rows) {
            if (row.horizon < c.branch.stable_from) continue;
            if (std::isnan(ref)) ref = row.selected_energy;
            drift = std::max(drift, std::abs(row.selected_energy - ref) / std::abs(ref));
        }
        if (!std::isnan(ref))
            r.verdicts.push_back({"selected energy stable" + tag, drift <= c.branch.stability_tolerance,
                                  "relative drift " + fmt(drift)});
    }
    r.tables["branch"] = tables;
    return r;
}

inline ConvergenceReport run_bound_audit(const ExperimentConfig& c) {
    ConvergenceReport r;
    r.problem_id = c.id;
    r.mode = c.mode;
    r.norm = "bounds";
    r.grid = c.spectral->grid.describe();
    const auto& p = *c.spectral;
    r.members.resize(c.ladder.size());
    std::vector<BoundAudit> audits(c.ladder.size());
    parallel_for(c.ladder.size(), c.study.threads, [&](std::size_t n) {
        auto& m = r.members[n];
        m.eps = c.ladder[n];
        try {
            audits[n] = bound_audit(p.symbol, {m.eps}, p.grid);
            m.audit_checked = audits[n].checked;
            m.audit_violations = audits[n].violations.size();
        } catch (const std::exception& e) {
            record_failure(m, e);
        }
    });
    auto counts = empty_bound_counts();
    Json violations = Json::array();
    std::size_t total = 0;
    for (std::size_t n = 0; n < audits.size(); ++n) {
        const auto& m = r.members[n];
        if (!m.ok()) r.verdicts.push_back({m.failure_kind, false, "eps " + fmt(m.eps) + ": " + m.failure});
        for (const auto& [k, v] : audits[n].counts) counts[k] += v;
        for (const auto& v : audits[n].violations) {
            if (violations.size() < 1000)
                violations.push_back({{"node", v.node}, {"xi", v.xi}, {"epsilon", v.eps}, {"inequality", v.inequality}});
            ++total;
        }
    }
    r.tables["counts"] = counts;
    r.tables["violations"] = violations;
    r.diagnostics["symbol"] = p.symbol.describe();
    r.diagnostics["lower_bound"] = p.symbol.lower_bound();
    r.diagnostics["epsilon_max"] = epsilon_threshold(p.symbol).epsilon_max;
    r.verdicts.push_back({"bound audit clean", total == 0, std::to_string(total) + " violations"});
    if (c.apriori_horizon) {
        try {
            const double T = *c.apriori_horizon;
            const auto b = audit_apriori(p, T, uniform_times(T, c.study.time_samples), c.study.quad);
            r.tables["apriori"] = {{"horizon", T}, {"bound", b.bound}, {"measured_sup", b.measured_sup},
                                   {"ratio", b.ratio()}};
            r.verdicts.push_back({"a-priori bound holds", b.holds(), "ratio " + fmt(b.ratio())});
        } catch (const std::exception& e) {
            r.verdicts.push_back({"a-priori bound holds", false, e.what()});
        }
    }
    return r;
}

inline Json field_meta(const SpectralField& field, const FrequencyGrid& grid, const std::string& file) {
    Json nodes = Json::array();
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto xi = grid.node(k);
        nodes.push_back(std::vector<double>(xi.begin(), xi.end()));
    }
    return {{"schema_version", kReportSchemaVersion},
            {"file", file},
            {"layout", "little-endian float64 (re, im) pairs, row-major time x frequency"},
            {"epsilon", field.eps},
            {"label", field.label},
            {"grid", grid.describe()},
            {"time_count", field.times.size()},
            {"node_count", field.nodes},
            {"times", field.times},
            {"nodes", nodes}};
}

}  // namespace detail

/// Runs one experiment, writes report.json and summary.csv (plus the optional field dump) into
/// `out_dir`, and returns 0 iff every verdict passes.
inline RunResult run_experiment(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
    RunResult res;
    if (c.mode == "ode") res.report = convergence_study(*c.ode, c.ladder, c.study, c.id);
    else if (c.mode == "spectral") res.report = convergence_study(*c.spectral, c.ladder, c.study);
    else if (c.mode == "lemma-tech") res.report = detail::run_lemma(c);
    else if (c.mode == "branch-divergence") res.report = detail::run_branch(c);
    else if (c.mode == "bound-audit") res.report = detail::run_bound_audit(c);
    else throw InvalidArgument("unknown mode " + c.mode);

    std::filesystem::create_directories(out_dir);
    std::vector<std::pair<std::filesystem::path, std::string>> pending;
    if (c.mode == "spectral" && c.output.field) {
        std::optional<double> eps;
        for (const auto& m : res.report.members)
            if (m.ok()) eps = m.eps;
        if (eps) {
            const auto times = c.output.field_times.empty() ? uniform_times(c.study.horizon, 11) : c.output.field_times;
            const auto field = SelectedSpectralMinimizer(*c.spectral, *eps, c.study.quad).field(times);
            std::ostringstream bin;
            write_field_binary(bin, field);
            pending.emplace_back(out_dir / "field.bin", bin.str());
            pending.emplace_back(out_dir / "field_meta.json",
                                 detail::field_meta(field, c.spectral->grid, "field.bin").dump(2) + "\n");
        }
    }
    Json doc = res.report.to_json();
    doc["config"] = c.source;
    Json failed = Json::array();
    for (const auto& v : res.report.verdicts)
        if (!v.pass) failed.push_back(v.name);
    doc["failed_verdicts"] = failed;
    pending.emplace_back(out_dir / "summary.csv", res.report.to_csv());
    pending.emplace_back(out_dir / "report.json", doc.dump(2) + "\n");
    for (const auto& [path, content] : pending) {
        write_atomic(path, content);
        res.files.push_back(path);
    }
    res.exit_code = res.report.passed() ? 0 : 1;
    return res;
}

inline RunResult run_experiment(const ExperimentConfig& c) { return run_experiment(c, c.output.dir); }

}  // namespace wie
