#pragma once

// The killed diffusion dX = b(X)dt + dW on (0,∞) with killing rate κ and an
// elastic/reflecting/absorbing condition at 0, and its scale/speed primitives
// ρ = exp(2∫_0^x b), S = ∫ρ^{-1}, M = ∫ρ.

#include "qsd/detail/iterated_march.hpp"
#include "qsd/detail/primitive.hpp"
#include "qsd/error.hpp"
#include "qsd/expr.hpp"
#include "qsd/quadrature.hpp"
#include "qsd/tail.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qsd {

/// A coefficient function on (0,∞). `constant` is set when the function is
/// known to be x-independent, which lets the solvers take shortcuts.
struct Coefficient {
    std::function<double(double)> fn;
    std::optional<double> constant;
    std::string label;

    double operator()(double x) const { return constant ? *constant : fn(x); }

    static Coefficient of_constant(double c) {
        return {[c](double) { return c; }, c, detail::shortest(c)};
    }

    static Coefficient of_function(std::function<double(double)> f, std::string label = "f(x)") {
        return {std::move(f), std::nullopt, std::move(label)};
    }

    static Coefficient of_expression(std::string_view src) {
        Expr e = parse_expr(src);
        auto compiled = std::make_shared<CompiledExpr>(e);
        Coefficient c;
        c.label = std::string(src);
        c.constant = compiled->constant();
        c.fn = [compiled](double x) { return (*compiled)(x); };
        return c;
    }

    bool is_zero() const { return constant && *constant == 0.0; }
};

/// Boundary condition at 0: φ'(0) = α φ(0). α = 0 reflects, α = ∞ absorbs.
class BoundaryCondition {
public:
    static BoundaryCondition reflecting() { return BoundaryCondition(0.0); }
    static BoundaryCondition absorbing() { return BoundaryCondition(kInf); }
    static BoundaryCondition elastic(double alpha) {
        if (!(alpha >= 0.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in [0, inf]");
        return BoundaryCondition(alpha);
    }

    double alpha() const noexcept { return alpha_; }
    bool absorbing_at_zero() const noexcept { return std::isinf(alpha_); }
    bool reflecting_at_zero() const noexcept { return alpha_ == 0.0; }

    /// p0 = α/(1+α) ∈ [0,1]; finite at both extremes.
    double p0() const noexcept { return std::isinf(alpha_) ? 1.0 : alpha_ / (1.0 + alpha_); }

    /// (φ(0), φ'(0)) = (1/(1+α), α/(1+α)).
    double initial_value() const noexcept { return 1.0 - p0(); }
    double initial_slope() const noexcept { return p0(); }

private:
    explicit BoundaryCondition(double a) : alpha_(a) {}
    double alpha_;
};

/// Declared limit of κ at ∞: a value, or an assertion that no limit exists.
struct KappaLimitHint {
    std::optional<double> value;  // nullopt: the user asserts the limit does not exist
};

struct DeclaredHints {
    std::optional<KappaLimitHint> kappa_limit;
    TailHint scale_tail = TailHint::Auto;
    TailHint speed_tail = TailHint::Auto;
};

struct DiffusionModel {
    Coefficient drift = Coefficient::of_constant(0.0);
    Coefficient killing = Coefficient::of_constant(0.0);
    BoundaryCondition boundary = BoundaryCondition::absorbing();
    DeclaredHints hints;
};

// ---------------------------------------------------------------------------
// ρ and the working grid

/// log ρ(x) = 2∫_0^x b.
inline double log_rho(const DiffusionModel& m, double x, double tol = 1e-10) {
    if (x < 0.0) throw Error(ErrorKind::InvalidArgument, "log_rho requires x >= 0");
    if (m.drift.constant) return 2.0 * *m.drift.constant * x;
    return 2.0 * integrate(m.drift, 0.0, x, tol);
}

inline double eval_rho(const DiffusionModel& m, double x, double tol = 1e-10) {
    return std::exp(log_rho(m, x, tol));
}

/// Graded mesh on [0, x_max]: geometric from 1e-6 near the regular boundary,
/// uniform (h = 0.02) up to 20, then geometric with ratio 1.01. Powers of two
/// are always included so tail panels start on grid points.
inline std::vector<double> graded_grid(double x_max) {
    if (!(x_max > 0.0)) throw Error(ErrorKind::InvalidArgument, "grid requires x_max > 0");
    std::vector<double> g{0.0};
    const double inner = std::min(0.05, x_max);
    for (double x = 1e-6; x < inner; x *= 1.25) g.push_back(x);
    const double h = 0.02;
    for (int i = 0;; ++i) {
        double x = inner + h * i;
        if (x >= std::min(20.0, x_max)) break;
        g.push_back(x);
    }
    for (double x = std::max(20.0, inner); x < x_max; x = std::max(x * 1.01, x + h)) g.push_back(x);
    for (double p = 1.0 / 1024.0; p < x_max; p *= 2.0) g.push_back(p);
    g.push_back(x_max);
    std::sort(g.begin(), g.end());
    std::vector<double> out;
    for (double x : g)
        if (out.empty() || x - out.back() > 1e-12 * std::max(1.0, x)) out.push_back(x);
    if (out.back() != x_max) out.back() = x_max;
    return out;
}

// ---------------------------------------------------------------------------
// Scale/speed table

struct ScaleSpeedTable {
    DiffusionModel model;
    std::vector<double> grid;
    std::vector<double> log_rho;    // log ρ(x_i)
    std::vector<double> log_scale;  // log S(x_i), -inf at 0
    std::vector<double> log_speed;  // log M(x_i), -inf at 0
    std::vector<double> log_scale_cell;  // log ∫_{x_i}^{x_{i+1}} ρ^{-1}
    std::vector<double> log_speed_cell;  // log ∫_{x_i}^{x_{i+1}} ρ
    double log_scale_beyond = kInf; // log ∫_{x_max}^∞ ρ^{-1}, +inf when divergent
    double log_speed_beyond = kInf; // log ∫_{x_max}^∞ ρ
    TailDiagnosis scale_tail;       // ∫_0^∞ ρ^{-1}
    TailDiagnosis speed_tail;       // ∫_0^∞ ρ
    TailDiagnosis iterated_scale_tail;  // ∫_1^∞ ρ^{-1}(y) ∫_1^y ρ: finite iff ∞ accessible
    TailDiagnosis iterated_speed_tail;  // ∫_1^∞ ρ(y) ∫_1^y ρ^{-1}: finite for entrance/regular

    double x_max() const { return grid.back(); }
    std::size_t size() const { return grid.size(); }
    double rho(std::size_t i) const { return std::exp(log_rho[i]); }
    double scale(std::size_t i) const { return std::exp(log_scale[i]); }
    double speed(std::size_t i) const { return std::exp(log_speed[i]); }
};

struct TableOptions {
    double tol = 1e-10;
    bool iterated = true;      // compute the two iterated integrals (boundary classification)
    double iterated_from = 1.0;
    TailOptions tail;
};

namespace detail {

struct CellMasses {
    double dlog_rho;    // log ρ(e) - log ρ(a)
    double log_scale;   // log ∫_a^e ρ^{-1}
    double log_speed;   // log ∫_a^e ρ
};

inline double log_exp_linear(double base, double k, double w) {
    // log ∫_0^w exp(base + k y) dy
    if (std::fabs(k * w) < 1e-8) return base + std::log(w) + std::log1p(0.5 * k * w);
    if (k > 0) return base + k * w + std::log(-std::expm1(-k * w)) - std::log(k);
    return base + std::log(-std::expm1(k * w)) - std::log(-k);
}

// Masses of ρ^{±1} over [a, e] given log ρ(a).
inline CellMasses cell_masses(const Coefficient& b, double a, double e, double lr_a, double tol) {
    if (b.constant) {
        double c = *b.constant;
        return {2.0 * c * (e - a), log_exp_linear(-lr_a, -2.0 * c, e - a), log_exp_linear(lr_a, 2.0 * c, e - a)};
    }
    PiecewisePrimitive prim(b, a, e);
    auto ls = log_integrate([&](double y) { return -(lr_a + 2.0 * prim(y)); }, a, e, tol);
    auto lm = log_integrate([&](double y) { return lr_a + 2.0 * prim(y); }, a, e, tol);
    if (!ls.converged || !lm.converged)
        throw Error(ErrorKind::QuadratureFailure, "scale/speed cell integral did not converge");
    return {2.0 * prim.total(), ls.log_value, lm.log_value};
}

// Tail of ∫ exp(sign·log ρ) beyond `from`, given log ρ(from).
inline TailDiagnosis classify_rho_tail(const Coefficient& b, double from, double lr_from, double sign, TailHint hint,
                                       const TailOptions& opts, double log_head, double tol,
                                       double& log_beyond) {
    // The classifier sees only the part beyond `from`, so the remainder test is
    // relative to the tail itself and the tail is kept separately from the head.
    TailClassifier tc(from, hint, opts);
    double lr = lr_from;
    while (!tc.decided()) {
        double a = tc.panel_start();
        double e = tc.next_cutoff();
        CellMasses cm = cell_masses(b, a, e, lr, tol);
        lr += cm.dlog_rho;
        tc.push(sign > 0 ? cm.log_speed : cm.log_scale);
    }
    TailDiagnosis d = tc.result();
    if (d.finite()) {
        log_beyond = d.value > 0.0 ? std::log(d.value) : kNegInf;
        d.value = std::exp(log_add(log_head, log_beyond));
    } else {
        log_beyond = kInf;
    }
    return d;
}

}  // namespace detail

/// Feed the iterated-integral march into two classifiers.
inline std::pair<TailDiagnosis, TailDiagnosis> classify_iterated_tails(const Coefficient& b, double c,
                                                                       const TailOptions& opts = {}) {
    detail::IteratedMarch march(
        [&b](double x) { return b(x); }, c);
    TailClassifier ti(c, TailHint::Auto, opts);
    TailClassifier tj(c, TailHint::Auto, opts);
    for (int k = 0; !(ti.decided() && tj.decided()); ++k) {
        auto inc = march.advance_to(c * std::ldexp(1.0, k + 1));
        if (!ti.decided()) ti.push(inc[0]);
        if (!tj.decided()) tj.push(inc[1]);
    }
    return {ti.result(), tj.result()};
}

inline ScaleSpeedTable build_scale_speed(const DiffusionModel& model, double x_max, const TableOptions& opts = {}) {
    if (!(x_max > 0.0) || !(opts.tol > 0.0))
        throw Error(ErrorKind::InvalidArgument, "build_scale_speed requires x_max > 0 and tol > 0");
    ScaleSpeedTable t;
    t.model = model;
    t.grid = graded_grid(x_max);
    const std::size_t n = t.grid.size();
    t.log_rho.assign(n, 0.0);
    t.log_scale.assign(n, kNegInf);
    t.log_speed.assign(n, kNegInf);
    t.log_scale_cell.assign(n - 1, kNegInf);
    t.log_speed_cell.assign(n - 1, kNegInf);
    const Coefficient& b = model.drift;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        double a = t.grid[i], e = t.grid[i + 1];
        detail::CellMasses cm = detail::cell_masses(b, a, e, t.log_rho[i], opts.tol);
        t.log_rho[i + 1] = t.log_rho[i] + cm.dlog_rho;
        if (!std::isfinite(t.log_rho[i + 1]))
            throw Error(ErrorKind::QuadratureFailure, "log rho is not finite at x=" + std::to_string(e));
        t.log_scale_cell[i] = cm.log_scale;
        t.log_speed_cell[i] = cm.log_speed;
        t.log_scale[i + 1] = log_add(t.log_scale[i], cm.log_scale);
        t.log_speed[i + 1] = log_add(t.log_speed[i], cm.log_speed);
    }
    t.scale_tail = detail::classify_rho_tail(b, x_max, t.log_rho.back(), -1.0, model.hints.scale_tail, opts.tail,
                                             t.log_scale.back(), opts.tol, t.log_scale_beyond);
    t.speed_tail = detail::classify_rho_tail(b, x_max, t.log_rho.back(), 1.0, model.hints.speed_tail, opts.tail,
                                             t.log_speed.back(), opts.tol, t.log_speed_beyond);
    if (opts.iterated) {
        auto [ti, tj] = classify_iterated_tails(b, opts.iterated_from, opts.tail);
        t.iterated_scale_tail = ti;
        t.iterated_speed_tail = tj;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Killing-rate limits at ∞

struct KappaLimits {
    double liminf_est;
    double limsup_est;
    bool limit_exists;
    bool declared = false;

    /// K, meaningful when limit_exists.
    double limit() const { return 0.5 * (liminf_est + limsup_est); }
};

struct KappaLimitOptions {
    int k_max = 40;
    int samples_per_window = 2048;
    double tol = 1e-6;
    double divergence_floor = 1e8;
};

inline KappaLimits tail_kappa_limits(const DiffusionModel& m, double from, const KappaLimitOptions& opts = {}) {
    if (!(from > 0.0)) throw Error(ErrorKind::InvalidArgument, "tail_kappa_limits requires from > 0");
    if (m.hints.kappa_limit) {
        const auto& h = *m.hints.kappa_limit;
        if (h.value) return {*h.value, *h.value, true, true};
    }
    if (m.killing.constant) {
        double c = *m.killing.constant;
        bool exists = !(m.hints.kappa_limit && !m.hints.kappa_limit->value);
        return {c, c, exists, false};
    }
    std::vector<double> mins, maxs;
    for (int k = 0; k <= opts.k_max; ++k) {
        double a = from * std::ldexp(1.0, k);
        double lo = kInf, hi = -kInf;
        for (int j = 0; j <= opts.samples_per_window; ++j) {
            double v = m.killing(a + a * j / opts.samples_per_window);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        mins.push_back(lo);
        maxs.push_back(hi);
    }
    const std::size_t n = mins.size();
    KappaLimits out{mins.back(), maxs.back(), false, false};
    bool increasing = mins[n - 1] > mins[n - 2] && mins[n - 2] > mins[n - 3];
    if (increasing && mins.back() >= opts.divergence_floor) {
        out.liminf_est = out.limsup_est = kInf;
        return out;
    }
    double lo3 = std::min({mins[n - 1], mins[n - 2], mins[n - 3]});
    double hi3 = std::max({maxs[n - 1], maxs[n - 2], maxs[n - 3]});
    out.limit_exists = hi3 - lo3 <= opts.tol * std::max(1.0, std::fabs(hi3));
    if (m.hints.kappa_limit && !m.hints.kappa_limit->value) out.limit_exists = false;
    return out;
}

/// Finite-valued check of the coefficients on a validation grid.
inline void validate_model(const DiffusionModel& m, double x_hi = 50.0, int points = 2000) {
    for (int i = 1; i <= points; ++i) {
        double x = x_hi * std::pow(static_cast<double>(i) / points, 2.0);
        double b = m.drift(x);
        double k = m.killing(x);
        if (!std::isfinite(b))
            throw Error(ErrorKind::InvalidArgument, "drift is not finite at x=" + detail::shortest(x));
        if (!std::isfinite(k) || k < 0.0)
            throw Error(ErrorKind::InvalidArgument, "killing rate must be finite and >= 0; fails at x=" +
                                                        detail::shortest(x));
    }
}

}  // namespace qsd
