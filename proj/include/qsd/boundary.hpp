#pragma once

// Feller classification of 0 and ∞ and the recurrence test for the unkilled
// process.

#include "qsd/model.hpp"

#include <cmath>
#include <string_view>

namespace qsd {

enum class ZeroBoundary { Regular, NotRegular };
enum class InfinityBoundary { Regular, Exit, Entrance, Natural };

inline std::string_view to_string(InfinityBoundary b) {
    switch (b) {
        case InfinityBoundary::Regular: return "regular";
        case InfinityBoundary::Exit: return "exit";
        case InfinityBoundary::Entrance: return "entrance";
        case InfinityBoundary::Natural: return "natural";
    }
    return "?";
}

struct BoundaryClassification {
    ZeroBoundary at_zero = ZeroBoundary::Regular;
    InfinityBoundary at_infinity = InfinityBoundary::Natural;
    bool accessible_at_infinity = false;
    bool recurrent_unkilled = false;
};

/// ∞ is accessible iff I = ∫_c^∞ ρ^{-1}(y)∫_c^y ρ < ∞; J = ∫_c^∞ ρ(y)∫_c^y ρ^{-1}
/// decides between exit/natural and regular/entrance.
inline InfinityBoundary classify_infinity(const ScaleSpeedTable& t) {
    const auto& i = t.iterated_scale_tail;
    const auto& j = t.iterated_speed_tail;
    if (!i.resolved() || !j.resolved())
        throw Error(ErrorKind::InconclusiveTail, "boundary integrals at infinity could not be classified");
    if (i.finite()) return j.finite() ? InfinityBoundary::Regular : InfinityBoundary::Exit;
    return j.finite() ? InfinityBoundary::Entrance : InfinityBoundary::Natural;
}

/// Scale divergence at ∞ of the unkilled process.
inline bool is_recurrent(const ScaleSpeedTable& t) {
    if (!t.scale_tail.resolved()) throw Error(ErrorKind::InconclusiveTail, "scale tail at infinity is inconclusive");
    return t.scale_tail.infinite();
}

/// True iff ∫_0^1 ρ and ∫_0^1 ρ^{-1} both converge. ρ is referenced to 1 so a
/// drift that is not integrable at 0 still yields finite log-densities on (0,1].
inline bool check_regular_zero(const DiffusionModel& m, const TailOptions& opts = {}) {
    const Coefficient& b = m.drift;
    if (b.constant) return std::isfinite(*b.constant);
    try {
        // Panels [2^{-k-1}, 2^{-k}], walked towards 0 with log ρ(2^{-k}) accumulated.
        TailClassifier up(1.0, TailHint::Auto, opts);
        TailClassifier down(1.0, TailHint::Auto, opts);
        double lr_hi = 0.0;  // log ρ at the panel's right end, relative to ρ(1) = 1
        for (int k = 0; !(up.decided() && down.decided()); ++k) {
            double hi = std::ldexp(1.0, -k);
            double lo = 0.5 * hi;
            detail::CellMasses cm = detail::cell_masses(b, lo, hi, 0.0, 1e-10);
            double lr_lo = lr_hi - cm.dlog_rho;
            if (!std::isfinite(lr_lo)) return false;
            if (!up.decided()) up.push(cm.log_speed + lr_lo);
            if (!down.decided()) down.push(cm.log_scale - lr_lo);
            lr_hi = lr_lo;
        }
        return up.result().finite() && down.result().finite();
    } catch (const Error&) {
        return false;
    }
}

inline BoundaryClassification classify_boundaries(const ScaleSpeedTable& t) {
    BoundaryClassification c;
    c.at_zero = check_regular_zero(t.model) ? ZeroBoundary::Regular : ZeroBoundary::NotRegular;
    c.at_infinity = classify_infinity(t);
    c.accessible_at_infinity =
        c.at_infinity == InfinityBoundary::Regular || c.at_infinity == InfinityBoundary::Exit;
    c.recurrent_unkilled = is_recurrent(t);
    return c;
}

}  // namespace qsd
