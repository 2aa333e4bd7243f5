#pragma once

// Model files and result serialization. Infinite values are written as the
// strings "inf" / "-inf"; NaN (a quantity that was not computed) as null.

#include "qsd/error.hpp"
#include "qsd/montecarlo.hpp"
#include "qsd/spectral.hpp"
#include "qsd/verdict.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace qsd::io {

using json = nlohmann::ordered_json;

inline json number(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

inline double to_number(const json& j, const std::string& what) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return kInf;
        if (s == "-inf") return -kInf;
    }
    throw Error(ErrorKind::ParseError, what + " must be a number or \"inf\"");
}

inline std::string_view to_string(TailHint h) {
    switch (h) {
        case TailHint::Auto: return "auto";
        case TailHint::Finite: return "finite";
        case TailHint::Infinite: return "infinite";
    }
    return "?";
}
inline std::string_view to_string(TailVerdict v) {
    switch (v) {
        case TailVerdict::Finite: return "Finite";
        case TailVerdict::Infinite: return "Infinite";
        case TailVerdict::Inconclusive: return "Inconclusive";
    }
    return "?";
}
inline std::string_view to_string(TailConfidence c) { return c == TailConfidence::Declared ? "Declared" : "Numerical"; }

inline TailHint parse_hint(const json& j, const std::string& what) {
    const std::string s = j.is_string() ? j.get<std::string>() : "";
    if (s == "auto") return TailHint::Auto;
    if (s == "finite") return TailHint::Finite;
    if (s == "infinite") return TailHint::Infinite;
    throw Error(ErrorKind::ParseError, what + " must be \"auto\", \"finite\" or \"infinite\"");
}

// ---------------------------------------------------------------------------
// Model files

/// Tabulated h-transformed drift: b_h = base - 1/g with g Hermite-interpolated.
struct DriftTable {
    std::string base;
    std::vector<double> x, g;
};

struct ModelSpec {
    std::string drift = "0";
    std::optional<DriftTable> drift_table;
    std::string kappa = "0";
    double alpha = kInf;
    DeclaredHints hints;
    std::optional<double> tol;
    std::optional<double> x_max_cap;
};

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw Error(ErrorKind::ParseError, "unknown key \"" + it.key() + "\" in " + where);
}

inline std::string expression(const json& j, const std::string& what) {
    if (!j.is_string()) throw Error(ErrorKind::ParseError, what + " must be an expression string");
    return j.get<std::string>();
}

}  // namespace detail

inline ModelSpec spec_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::ParseError, "model file must be a JSON object");
    detail::reject_unknown(j, {"drift", "drift_table", "kappa", "alpha", "hints", "numerics"}, "model");
    ModelSpec s;
    if (j.contains("drift") == j.contains("drift_table"))
        throw Error(ErrorKind::ParseError, "model needs exactly one of \"drift\" and \"drift_table\"");
    if (j.contains("drift")) s.drift = detail::expression(j["drift"], "drift");
    if (j.contains("drift_table")) {
        const json& t = j["drift_table"];
        if (!t.is_object()) throw Error(ErrorKind::ParseError, "drift_table must be an object");
        detail::reject_unknown(t, {"base", "x", "g"}, "drift_table");
        if (!t.contains("base") || !t.contains("x") || !t.contains("g"))
            throw Error(ErrorKind::ParseError, "drift_table needs base, x and g");
        DriftTable d;
        d.base = detail::expression(t["base"], "drift_table.base");
        try {
            d.x = t["x"].get<std::vector<double>>();
            d.g = t["g"].get<std::vector<double>>();
        } catch (const json::exception&) {
            throw Error(ErrorKind::ParseError, "drift_table.x and drift_table.g must be number arrays");
        }
        s.drift = d.base;
        s.drift_table = std::move(d);
    }
    if (!j.contains("kappa")) throw Error(ErrorKind::ParseError, "model needs \"kappa\"");
    s.kappa = detail::expression(j["kappa"], "kappa");
    if (!j.contains("alpha")) throw Error(ErrorKind::ParseError, "model needs \"alpha\"");
    s.alpha = to_number(j["alpha"], "alpha");
    if (!(s.alpha >= 0.0)) throw Error(ErrorKind::ParseError, "alpha must lie in [0, inf]");
    if (j.contains("hints")) {
        const json& h = j["hints"];
        if (!h.is_object()) throw Error(ErrorKind::ParseError, "hints must be an object");
        detail::reject_unknown(h, {"kappa_limit", "scale_tail", "speed_tail"}, "hints");
        if (h.contains("kappa_limit")) {
            const json& k = h["kappa_limit"];
            if (k.is_string() && k.get<std::string>() == "none")
                s.hints.kappa_limit = KappaLimitHint{std::nullopt};
            else
                s.hints.kappa_limit = KappaLimitHint{to_number(k, "hints.kappa_limit")};
        }
        if (h.contains("scale_tail")) s.hints.scale_tail = parse_hint(h["scale_tail"], "hints.scale_tail");
        if (h.contains("speed_tail")) s.hints.speed_tail = parse_hint(h["speed_tail"], "hints.speed_tail");
    }
    if (j.contains("numerics")) {
        const json& n = j["numerics"];
        if (!n.is_object()) throw Error(ErrorKind::ParseError, "numerics must be an object");
        detail::reject_unknown(n, {"tol", "x_max_cap"}, "numerics");
        if (n.contains("tol")) {
            s.tol = to_number(n["tol"], "numerics.tol");
            if (!(*s.tol > 0.0) || std::isinf(*s.tol)) throw Error(ErrorKind::ParseError, "numerics.tol must be > 0");
        }
        if (n.contains("x_max_cap")) {
            s.x_max_cap = to_number(n["x_max_cap"], "numerics.x_max_cap");
            if (!(*s.x_max_cap >= 10.0) || std::isinf(*s.x_max_cap))
                throw Error(ErrorKind::ParseError, "numerics.x_max_cap must be >= 10");
        }
    }
    return s;
}

inline json to_json(const ModelSpec& s) {
    json j;
    if (s.drift_table) {
        j["drift_table"] = {{"base", s.drift_table->base}, {"x", s.drift_table->x}, {"g", s.drift_table->g}};
    } else {
        j["drift"] = s.drift;
    }
    j["kappa"] = s.kappa;
    j["alpha"] = number(s.alpha);
    json h = json::object();
    if (s.hints.kappa_limit) h["kappa_limit"] = s.hints.kappa_limit->value ? number(*s.hints.kappa_limit->value) : json("none");
    if (s.hints.scale_tail != TailHint::Auto) h["scale_tail"] = to_string(s.hints.scale_tail);
    if (s.hints.speed_tail != TailHint::Auto) h["speed_tail"] = to_string(s.hints.speed_tail);
    if (!h.empty()) j["hints"] = h;
    json n = json::object();
    if (s.tol) n["tol"] = *s.tol;
    if (s.x_max_cap) n["x_max_cap"] = *s.x_max_cap;
    if (!n.empty()) j["numerics"] = n;
    return j;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ParseError, path + ": " + e.what());
    }
}

inline ModelSpec load_spec(const std::string& path) { return spec_from_json(read_json_file(path)); }

inline Coefficient coefficient(const std::string& src, const std::string& what) {
    try {
        return Coefficient::of_expression(src);
    } catch (const Error& e) {
        throw Error(e.kind(), what + ": " + e.what());
    }
}

/// Build and validate the model described by a spec.
inline DiffusionModel build_model(const ModelSpec& s) {
    DiffusionModel m;
    m.drift = coefficient(s.drift, "drift");
    if (s.drift_table) {
        auto table = std::make_shared<const qsd::detail::GTable>(m.drift, s.drift_table->x, s.drift_table->g);
        Coefficient base = m.drift;
        m.drift = Coefficient::of_function([base, table](double x) { return base(x) - 1.0 / (*table)(x); },
                                           "h-transform of (" + base.label + ")");
    }
    m.killing = coefficient(s.kappa, "kappa");
    m.boundary = std::isinf(s.alpha) ? BoundaryCondition::absorbing() : BoundaryCondition::elastic(s.alpha);
    m.hints = s.hints;
    validate_model(m);
    return m;
}

inline SpectralOptions spectral_options(const ModelSpec& s) {
    SpectralOptions o;
    if (s.tol) o.tol = *s.tol;
    if (s.x_max_cap) {
        o.x_cap = *s.x_max_cap;
        o.mass_cap = std::max(o.mass_cap, 4.0 * *s.x_max_cap);
    }
    return o;
}

/// Spec of the h-transformed model: an expression when h'/h is constant,
/// otherwise the tabulated g of the transform.
inline ModelSpec spec_from_htransform(const ModelSpec& src, const HTransform& h) {
    ModelSpec out = src;
    out.hints.scale_tail = TailHint::Auto;
    out.hints.speed_tail = TailHint::Auto;
    if (h.log_derivative) {
        out.drift = h.model.drift.label;
        out.drift_table.reset();
    } else {
        out.drift_table = DriftTable{src.drift, h.table->knots(), h.table->values()};
        out.drift = src.drift;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Results

inline json to_json(const TailDiagnosis& d) {
    json j;
    j["verdict"] = to_string(d.verdict);
    j["value"] = d.finite() ? number(d.value) : json(nullptr);
    j["growth_exponent"] = d.infinite() ? number(d.growth_exponent) : json(nullptr);
    j["confidence"] = to_string(d.confidence);
    return j;
}

inline json to_json(const BoundaryClassification& b) {
    return {{"at_zero", b.at_zero == ZeroBoundary::Regular ? "regular" : "not_regular"},
            {"at_infinity", to_string(b.at_infinity)},
            {"accessible_at_infinity", b.accessible_at_infinity},
            {"recurrent_unkilled", b.recurrent_unkilled}};
}

inline json to_json(const Verdict& v) {
    const Evidence& e = v.evidence;
    json ev;
    ev["lambda0"] = number(e.lambda0);
    ev["lambda_bracket"] = {number(e.lambda_bracket.first), number(e.lambda_bracket.second)};
    ev["truncation_error"] = number(e.truncation_error);
    ev["kappa_liminf"] = number(e.kappa_liminf);
    ev["kappa_limsup"] = number(e.kappa_limsup);
    ev["kappa_limit_exists"] = e.kappa_limit_exists;
    ev["boundary"] = e.boundary ? to_json(*e.boundary) : json(nullptr);
    ev["scale_tail"] = to_json(e.scale_tail);
    ev["speed_tail"] = to_json(e.speed_tail);
    ev["l1_mass"] = to_json(e.l1_mass);
    ev["l2_mass"] = to_json(e.l2_mass);
    json j;
    j["outcome"] = to_string(v.outcome);
    j["theorem"] = to_string(e.theorem_applied);
    j["mortality_rate"] = number(v.mortality_rate);
    j["escape_rate"] = number(v.escape_rate);
    j["qsd_available"] = v.qsd.has_value();
    j["reason"] = v.reason;
    j["evidence"] = ev;
    return j;
}

inline json to_json(const EigenResult& e) {
    json j;
    j["lambda0"] = number(e.lambda0);
    j["bracket"] = {number(e.bracket.first), number(e.bracket.second)};
    j["x_max_used"] = number(e.x_max_used);
    j["truncation_error"] = number(e.truncation_error);
    json est = json::array();
    for (double v : e.estimates) est.push_back(number(v));
    j["estimates"] = est;
    j["l1_mass"] = to_json(e.l1_mass);
    j["l2_mass"] = to_json(e.l2_mass);
    return j;
}

inline json to_json(const SurvivorStats& s) {
    json j;
    j["paths"] = s.paths;
    j["dt"] = s.dt;
    j["bin_edges"] = s.bin_edges;
    json recs = json::array();
    for (std::size_t t = 0; t < s.times(); ++t) {
        std::vector<std::uint64_t> hist(s.bins());
        for (std::size_t b = 0; b < s.bins(); ++b) hist[b] = s.histogram(t, b);
        recs.push_back({{"t", s.record_times[t]},
                        {"survivors", s.survivors(t)},
                        {"survival_prob", s.survival_prob(t)},
                        {"absorbed_at_zero", s.absorbed(t)},
                        {"killed", s.killed(t)},
                        {"overflow", s.overflow(t)},
                        {"histogram", hist}});
    }
    j["records"] = recs;
    j["warnings"] = s.warnings;
    return j;
}

inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return qsd::detail::shortest(v);
}

/// Columns: t, survivors, survival_prob, bin_0..bin_{K-1}, overflow.
inline std::string stats_csv(const SurvivorStats& s) {
    std::ostringstream o;
    o << "t,survivors,survival_prob";
    for (std::size_t b = 0; b < s.bins(); ++b) o << ",bin_" << b;
    o << ",overflow\n";
    for (std::size_t t = 0; t < s.times(); ++t) {
        o << fmt(s.record_times[t]) << ',' << s.survivors(t) << ',' << fmt(s.survival_prob(t));
        for (std::size_t b = 0; b < s.bins(); ++b) o << ',' << s.histogram(t, b);
        o << ',' << s.overflow(t) << '\n';
    }
    return o.str();
}

inline std::string density_csv(const SampledDensity& d) {
    std::ostringstream o;
    o << "x,density,cdf\n";
    for (std::size_t i = 0; i < d.grid.size(); ++i)
        o << fmt(d.grid[i]) << ',' << fmt(d.density[i]) << ',' << fmt(d.cdf[i]) << '\n';
    return o.str();
}

/// ln φ and ln ρ at the resolved nodes.
inline std::string phi_csv(const EigenResult& e) {
    std::ostringstream o;
    o << "x,log_phi,log_rho\n";
    for (std::size_t i = 0; i < e.grid.size(); ++i)
        o << fmt(e.grid[i]) << ',' << fmt(e.log_phi[i]) << ',' << fmt(e.log_rho[i]) << '\n';
    return o.str();
}

}  // namespace qsd::io
