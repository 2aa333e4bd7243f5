#pragma once

// The quasilimiting verdict: convergence to the quasistationary distribution,
// escape to infinity, or an honest "undetermined"; plus the h-transform that
// conditions a transient process on eventual absorption at 0.

#include "qsd/boundary.hpp"
#include "qsd/model.hpp"
#include "qsd/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qsd {

enum class Outcome { Converges, Escapes, Undetermined };
enum class Theorem { HighKilling, RecurrentLowKilling, TransientLowKilling, EntranceBoundary, ZeroKappaCorollary, None };

inline std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::Converges: return "converges";
        case Outcome::Escapes: return "escapes";
        case Outcome::Undetermined: return "undetermined";
    }
    return "?";
}

inline std::string_view to_string(Theorem t) {
    switch (t) {
        case Theorem::HighKilling: return "HighKilling";
        case Theorem::RecurrentLowKilling: return "RecurrentLowKilling";
        case Theorem::TransientLowKilling: return "TransientLowKilling";
        case Theorem::EntranceBoundary: return "EntranceBoundary";
        case Theorem::ZeroKappaCorollary: return "ZeroKappaCorollary";
        case Theorem::None: return "None";
    }
    return "?";
}

struct Evidence {
    double lambda0 = std::numeric_limits<double>::quiet_NaN();
    std::pair<double, double> lambda_bracket{std::numeric_limits<double>::quiet_NaN(),
                                             std::numeric_limits<double>::quiet_NaN()};
    double truncation_error = 0.0;
    double kappa_liminf = std::numeric_limits<double>::quiet_NaN();
    double kappa_limsup = std::numeric_limits<double>::quiet_NaN();
    bool kappa_limit_exists = false;
    std::optional<BoundaryClassification> boundary;
    TailDiagnosis scale_tail, speed_tail, l1_mass, l2_mass;
    Theorem theorem_applied = Theorem::None;
};

struct Verdict {
    Outcome outcome = Outcome::Undetermined;
    double mortality_rate = std::numeric_limits<double>::quiet_NaN();
    double escape_rate = std::numeric_limits<double>::quiet_NaN();
    std::optional<SampledDensity> qsd;
    std::string reason;
    Evidence evidence;
};

struct VerdictOptions {
    SpectralOptions spectral;
    double margin = 1e-4;       // relative band around K = λ₀
    double table_x_max = 20.0;
    double kappa_from = 1.0;
};

namespace detail {

// a < b outside the tolerance band.
inline bool strictly_less(double a, double b, const VerdictOptions& o) {
    if (std::isinf(b) && b > 0) return std::isfinite(a);
    if (std::isinf(a) || std::isinf(b)) return false;
    return a < b - o.margin * std::max(std::fabs(a), std::fabs(b)) - 10.0 * o.spectral.tol;
}

inline Verdict undetermined(Verdict v, std::string why) {
    v.outcome = Outcome::Undetermined;
    v.reason = std::move(why);
    v.evidence.theorem_applied = Theorem::None;
    return v;
}

inline Verdict converges(Verdict v, const EigenResult& e, Theorem th) {
    try {
        v.qsd = qsd_density(e);
    } catch (const Error& err) {
        return undetermined(std::move(v), std::string("quasistationary density could not be normalized: ") + err.what());
    }
    v.outcome = Outcome::Converges;
    v.mortality_rate = e.lambda0;
    v.evidence.theorem_applied = th;
    return v;
}

}  // namespace detail

/// Walk the classification tree for `m`. Requires 0 to be a regular boundary.
inline Verdict decide(const DiffusionModel& m, const VerdictOptions& o = {}) {
    if (!check_regular_zero(m))
        throw Error(ErrorKind::PreconditionViolated, "0 is not a regular boundary for this drift");
    Verdict v;
    ScaleSpeedTable table = build_scale_speed(m, o.table_x_max);
    v.evidence.scale_tail = table.scale_tail;
    v.evidence.speed_tail = table.speed_tail;
    BoundaryClassification bc;
    try {
        bc = classify_boundaries(table);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::InconclusiveTail) return detail::undetermined(std::move(v), "tail diagnosis inconclusive");
        throw;
    }
    v.evidence.boundary = bc;
    if (bc.accessible_at_infinity)
        return detail::undetermined(std::move(v), std::string("infinity is an accessible (") +
                                                      std::string(to_string(bc.at_infinity)) +
                                                      ") boundary; the classification assumes it is not");

    EigenResult e;
    try {
        e = lambda0(m, o.spectral);
    } catch (const Error& err) {
        if (err.kind() == ErrorKind::NoConvergence || err.kind() == ErrorKind::IntegratorFailure)
            return detail::undetermined(std::move(v), std::string("bottom of the spectrum not resolved: ") + err.what());
        throw;
    }
    v.evidence.lambda0 = e.lambda0;
    v.evidence.lambda_bracket = e.bracket;
    v.evidence.truncation_error = e.truncation_error;
    v.evidence.l1_mass = e.l1_mass;
    v.evidence.l2_mass = e.l2_mass;

    KappaLimits kl = tail_kappa_limits(m, o.kappa_from);
    v.evidence.kappa_liminf = kl.liminf_est;
    v.evidence.kappa_limsup = kl.limsup_est;
    v.evidence.kappa_limit_exists = kl.limit_exists;

    if (bc.at_infinity == InfinityBoundary::Entrance) return detail::converges(std::move(v), e, Theorem::EntranceBoundary);

    const double lam = e.lambda0;
    if (detail::strictly_less(lam, kl.liminf_est, o)) return detail::converges(std::move(v), e, Theorem::HighKilling);

    if (kl.limit_exists && detail::strictly_less(kl.limsup_est, lam, o)) {
        const double K = kl.limit();
        if (bc.recurrent_unkilled) return detail::converges(std::move(v), e, Theorem::RecurrentLowKilling);
        v.outcome = Outcome::Escapes;
        v.escape_rate = lam - K;
        v.mortality_rate = K;
        v.evidence.theorem_applied = Theorem::TransientLowKilling;
        return v;
    }

    if (m.killing.is_zero() && bc.recurrent_unkilled) {
        if (m.boundary.reflecting_at_zero()) return detail::undetermined(std::move(v), "no killing mechanism");
        if (lam > 10.0 * o.spectral.tol + e.truncation_error)
            return detail::converges(std::move(v), e, Theorem::ZeroKappaCorollary);
        v.outcome = Outcome::Escapes;
        v.escape_rate = 0.0;
        v.mortality_rate = 0.0;
        v.evidence.theorem_applied = Theorem::ZeroKappaCorollary;
        return v;
    }

    if (kl.limit_exists) return detail::undetermined(std::move(v), "K = lambda0 within tolerance; this case is left open");
    return detail::undetermined(std::move(v), "killing-rate limit does not exist and neither strict inequality holds");
}

// ---------------------------------------------------------------------------
// h-transform

namespace detail {

// g(x) = ρ(x)(S(∞) - S(x)) = ∫_x^∞ exp(-2∫_x^y b) dy, so h'/h = -1/g.
inline double g_direct(const Coefficient& b, double x) {
    if (b.constant) return 1.0 / (2.0 * *b.constant);
    // Panels u ∈ [2^k, 2^{k+1}] of the offset variable u = y - x.
    TailOptions topt;
    topt.rtol = 1e-13;
    CellMasses head = cell_masses(b, x, x + 1.0, 0.0, 1e-12);
    TailClassifier tc(1.0, TailHint::Auto, topt, head.log_scale);
    double lr = head.dlog_rho;
    while (!tc.decided()) {
        double a = x + tc.panel_start(), e = x + tc.next_cutoff();
        CellMasses cm = cell_masses(b, a, e, lr, 1e-12);
        lr += cm.dlog_rho;
        tc.push(cm.log_scale);
    }
    TailDiagnosis d = tc.result();
    if (!d.finite())
        throw Error(ErrorKind::PreconditionViolated, "scale tail is not finite at x=" + shortest(x));
    return d.value;
}

/// Cubic Hermite table of g with its exact slope g' = 2bg - 1.
class GTable {
public:
    GTable(const Coefficient& b, double x_end, double rtol) : b_(b) {
        std::vector<double> xs;
        for (double x = 0.0; x < 20.0; x += 0.25) xs.push_back(x);
        for (double x = 20.0; x < x_end; x *= 1.1) xs.push_back(x);
        xs.push_back(x_end);
        for (double x : xs) push(x);
        // Bisect intervals whose midpoint interpolant misses the direct value.
        for (std::size_t i = 0; i + 1 < x_.size();) {
            double mid = 0.5 * (x_[i] + x_[i + 1]);
            double direct = g_direct(b_, mid);
            double interp = eval_interval(i, mid);
            if (std::fabs(interp - direct) > rtol * std::fabs(direct) && x_[i + 1] - x_[i] > 1e-6) {
                insert(i + 1, mid, direct);
            } else {
                ++i;
            }
        }
    }

    /// Rebuild from stored knots and values; slopes follow from b.
    GTable(const Coefficient& b, std::vector<double> knots, std::vector<double> values)
        : b_(b), x_(std::move(knots)), g_(std::move(values)) {
        if (x_.size() < 2 || x_.size() != g_.size() || !std::is_sorted(x_.begin(), x_.end()))
            throw Error(ErrorKind::InvalidArgument, "g table needs at least two sorted knots with matching values");
        for (std::size_t i = 0; i < x_.size(); ++i) dg_.push_back(2.0 * b_(x_[i]) * g_[i] - 1.0);
    }

    double x_end() const { return x_.back(); }
    const std::vector<double>& knots() const { return x_; }
    const std::vector<double>& values() const { return g_; }
    const std::vector<double>& slopes() const { return dg_; }

    double operator()(double x) const {
        if (x < 0.0 || x > x_.back()) return g_direct(b_, x);
        auto it = std::upper_bound(x_.begin(), x_.end(), x);
        std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
        if (i + 1 >= x_.size()) return g_.back();
        return eval_interval(i, x);
    }

private:
    void push(double x) {
        double g = g_direct(b_, x);
        x_.push_back(x);
        g_.push_back(g);
        dg_.push_back(2.0 * b_(x) * g - 1.0);
    }
    void insert(std::size_t at, double x, double g) {
        x_.insert(x_.begin() + static_cast<std::ptrdiff_t>(at), x);
        g_.insert(g_.begin() + static_cast<std::ptrdiff_t>(at), g);
        dg_.insert(dg_.begin() + static_cast<std::ptrdiff_t>(at), 2.0 * b_(x) * g - 1.0);
    }
    double eval_interval(std::size_t i, double x) const {
        double h = x_[i + 1] - x_[i];
        double s = (x - x_[i]) / h;
        double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
        double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
        return h00 * g_[i] + h10 * h * dg_[i] + h01 * g_[i + 1] + h11 * h * dg_[i + 1];
    }

    Coefficient b_;
    std::vector<double> x_, g_, dg_;
};

}  // namespace detail

struct HTransform {
    DiffusionModel model;
    std::optional<double> log_derivative;                 // h'/h when it is constant
    std::shared_ptr<const detail::GTable> table;          // g = -h/h' otherwise
};

/// Condition a transient process (κ ≡ 0, absorbing 0) on hitting 0:
/// b_h = b + h'/h, h(x) = P_x(T_0 < ∞) = (S(∞) - S(x))/S(∞).
inline HTransform htransform_details(const DiffusionModel& m, double table_end = 20480.0, double rtol = 1e-11) {
    if (!m.killing.is_zero())
        throw Error(ErrorKind::PreconditionViolated, "h-transform requires zero killing");
    if (!m.boundary.absorbing_at_zero())
        throw Error(ErrorKind::PreconditionViolated, "h-transform requires absorption at 0");
    TableOptions topt;
    topt.iterated = false;
    ScaleSpeedTable t = build_scale_speed(m, 20.0, topt);
    if (!t.scale_tail.resolved())
        throw Error(ErrorKind::InconclusiveTail, "scale tail is inconclusive");
    if (t.scale_tail.infinite())
        throw Error(ErrorKind::PreconditionViolated, "process is recurrent: h is identically 1 and the transform is trivial");

    HTransform out;
    out.model = m;
    const Coefficient& b = m.drift;
    if (b.constant) {
        const double ld = -2.0 * *b.constant;
        out.log_derivative = ld;
        const double nb = *b.constant + ld;
        out.model.drift = Coefficient::of_constant(nb);
        out.model.drift.label = "(" + b.label + ") + (" + detail::shortest(ld) + ")";
        return out;
    }
    auto table = std::make_shared<const detail::GTable>(b, table_end, rtol);
    out.table = table;
    Coefficient base = b;
    out.model.drift = Coefficient::of_function([base, table](double x) { return base(x) - 1.0 / (*table)(x); },
                                               "h-transform of (" + b.label + ")");
    return out;
}

inline DiffusionModel htransform(const DiffusionModel& m) { return htransform_details(m).model; }

}  // namespace qsd
