#pragma once

// Bottom of the spectrum λ₀^κ by oscillation bisection, the eigenfunction
// φ(λ₀,·) with its L¹(ρ) and L²(ρ) masses, the normalized quasistationary
// density and the Hardy-type bounds for κ ≡ 0.

#include "qsd/boundary.hpp"
#include "qsd/detail/prufer.hpp"
#include "qsd/model.hpp"
#include "qsd/tail.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

namespace qsd {

struct PhiSamples {
    std::vector<double> grid;
    std::vector<double> log_abs_phi;  // ln|φ| at grid points reached
    std::vector<int> sign;            // sign of φ at grid points (0 at an exact zero)
    int zero_count = 0;
    std::optional<double> first_zero;
};

struct SpectralOptions {
    double tol = 1e-8;
    double x_first = 10.0;
    double x_cap = 10240.0;
    double mass_cap = 40960.0;   // furthest point used when resolving eigenfunction masses
    double rtol = 1e-10;
    TailOptions tail;
};

struct EigenResult {
    double lambda0 = 0.0;
    std::pair<double, double> bracket{0.0, 0.0};
    double x_max_used = 0.0;
    double truncation_error = 0.0;  // extrapolated λ₀(x_max) - λ₀ removed from the raw estimate
    std::vector<double> estimates;  // λ₀(x_max) per level
    std::vector<double> grid;       // nodes where φ is resolved
    std::vector<double> log_phi;
    std::vector<double> log_rho;
    std::vector<double> log_l1_cell;  // ln ∫ φρ per grid cell
    TailDiagnosis l1_mass;
    TailDiagnosis l2_mass;

    double phi(std::size_t i) const { return std::exp(log_phi[i]); }
};

/// Integrate the eigen-ODE at λ from the boundary condition across [0, x_max].
inline PhiSamples solve_phi(const DiffusionModel& m, double lambda, double x_max, double rtol = 1e-10) {
    if (!(x_max > 0.0)) throw Error(ErrorKind::InvalidArgument, "solve_phi requires x_max > 0");
    detail::SweepOptions so;
    so.rtol = so.atol = rtol;
    auto sw = detail::sweep(m, lambda, detail::initial_state(m.boundary), graded_grid(x_max), so);
    PhiSamples out;
    out.grid = sw.nodes;
    out.log_abs_phi.resize(sw.nodes.size());
    out.sign.resize(sw.nodes.size());
    for (std::size_t i = 0; i < sw.nodes.size(); ++i) {
        out.log_abs_phi[i] = detail::log_abs_phi(sw.states[i]);
        double s = std::sin(sw.states[i][0]);
        out.sign[i] = s > 0 ? 1 : (s < 0 ? -1 : 0);
    }
    out.zero_count = detail::zero_count_from_theta(sw.last[0]);
    if (out.zero_count > 0) {
        // Rerun with a stop at θ = π to pin the first zero.
        detail::SweepOptions stop = so;
        stop.stop_theta = std::numbers::pi;
        auto z = detail::sweep(m, lambda, detail::initial_state(m.boundary), {0.0, x_max}, stop);
        out.first_zero = z.stop_point;
    }
    return out;
}

namespace detail {

// θ(x_max) ≥ (n+1)π, i.e. φ(λ,·) has more than n zeros in (0, x_max].
inline bool has_more_zeros(const DiffusionModel& m, double lambda, double x_max, int n, double rtol) {
    SweepOptions so;
    so.rtol = so.atol = rtol;
    so.stop_theta = (n + 1) * std::numbers::pi;
    auto sw = sweep(m, lambda, initial_state(m.boundary), {0.0, x_max}, so);
    return sw.stop_point.has_value();
}

inline double kappa_sup_near_zero(const DiffusionModel& m) {
    if (m.killing.constant) return *m.killing.constant;
    double s = 0.0;
    for (int i = 0; i <= 256; ++i) s = std::max(s, m.killing(i / 256.0));
    return s;
}

struct LevelResult {
    double lo, hi;
};

// Bisection for the n-th oscillation threshold on [0, x_max].
inline LevelResult bisect_level(const DiffusionModel& m, double x_max, int n, double hi_start, double tol,
                                double rtol) {
    double lo = 0.0;
    double hi = hi_start;
    int grow = 0;
    while (!has_more_zeros(m, hi, x_max, n, rtol)) {
        lo = hi;
        hi *= 2.0;
        if (++grow > 60) throw Error(ErrorKind::NoConvergence, "no oscillation found for any trial lambda");
    }
    while (hi - lo > tol) {
        double mid = 0.5 * (lo + hi);
        (has_more_zeros(m, mid, x_max, n, rtol) ? hi : lo) = mid;
    }
    return {lo, hi};
}

struct Threshold {
    double value, lo, hi, raw_lo, raw_hi, x_max, truncation;
    std::vector<double> estimates;
};

// λ_n as the limit of the per-level thresholds λ_n(x_max), x_max = x_first·2^k.
// Accepts when consecutive levels agree within 10·tol, or when the level
// differences decay geometrically and the extrapolated remainder is below 10·tol;
// in the second case the remainder is subtracted.
inline Threshold threshold(const DiffusionModel& m, int n, const SpectralOptions& opt) {
    if (!(opt.tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "tolerance must be positive");
    if (n < 0) throw Error(ErrorKind::InvalidArgument, "eigenvalue index must be >= 0");
    double hi_start = std::max(1.0, kappa_sup_near_zero(m));
    Threshold t{};
    std::vector<LevelResult> levels;
    const double accept = 10.0 * opt.tol;
    for (double x = opt.x_first; x <= opt.x_cap * (1 + 1e-12); x *= 2.0) {
        LevelResult lv = bisect_level(m, x, n, hi_start, opt.tol, opt.rtol);
        levels.push_back(lv);
        hi_start = std::max(lv.hi, 1e-3);
        double est = 0.5 * (lv.lo + lv.hi);
        t.estimates.push_back(est);
        const std::size_t k = t.estimates.size();
        if (k < 2) continue;
        double d = t.estimates[k - 2] - est;
        if (std::fabs(d) <= accept) {
            t.value = est;
            t.lo = t.raw_lo = lv.lo;
            t.hi = t.raw_hi = lv.hi;
            t.x_max = x;
            t.truncation = 0.0;
            return t;
        }
        if (k >= 3) {
            double dprev = t.estimates[k - 3] - t.estimates[k - 2];
            double r = dprev > 0.0 ? d / dprev : -1.0;
            if (d > 0.0 && r > 0.0 && r <= 0.5) {
                double rem = d * r / (1.0 - r);
                if (rem <= accept) {
                    t.value = est - rem;
                    t.lo = lv.lo - rem;
                    t.hi = lv.hi - rem;
                    t.raw_lo = lv.lo;
                    t.raw_hi = lv.hi;
                    t.x_max = x;
                    t.truncation = rem;
                    return t;
                }
            }
        }
    }
    throw Error(ErrorKind::NoConvergence, "lambda estimate did not stabilize by x_max=" +
                                              detail::shortest(opt.x_cap));
}

// Grid-cell masses fed in order into a tail classifier anchored at 1; the
// cells below 1 form the head.
class PanelFeeder {
public:
    explicit PanelFeeder(const TailOptions& opts) : opts_(opts) {}

    void add(double b, double log_mass) {
        if (tc_ && tc_->decided()) return;
        if (b <= 1.0 + 1e-12) {
            head_ = log_add(head_, log_mass);
            return;
        }
        if (!tc_) tc_.emplace(1.0, TailHint::Auto, opts_, head_);
        panel_ = log_add(panel_, log_mass);
        if (b >= tc_->next_cutoff() * (1 - 1e-12)) {
            tc_->push(panel_);
            panel_ = kNegInf;
        }
    }
    bool decided() const { return tc_ && tc_->decided(); }
    TailDiagnosis result() const {
        if (tc_) return tc_->result();
        return TailClassifier(1.0, TailHint::Auto, opts_, head_).result();
    }

private:
    TailOptions opts_;
    std::optional<TailClassifier> tc_;
    double head_ = kNegInf;
    double panel_ = kNegInf;
};

struct MassProfile {
    std::vector<double> grid;
    std::vector<double> log_phi, log_rho;
    std::vector<double> log_l1, log_l2;  // per cell
    TailDiagnosis l1, l2;
};

inline bool same_node(double a, double b) { return std::fabs(a - b) <= 1e-12 * std::max(1.0, std::fabs(a)); }

inline bool feed_profile(const MassProfile& p, const TailOptions& opts, TailDiagnosis& l1, TailDiagnosis& l2) {
    PanelFeeder f1(opts), f2(opts);
    for (std::size_t i = 0; i + 1 < p.grid.size(); ++i) {
        f1.add(p.grid[i + 1], p.log_l1[i]);
        f2.add(p.grid[i + 1], p.log_l2[i]);
    }
    l1 = f1.result();
    l2 = f2.result();
    return f1.decided() && f2.decided();
}

// Resolve φ(λ₀,·) and its masses. The forward solution is trusted while the
// solutions at the two bracket ends agree; beyond that the decaying branch is
// continued backwards from a far point with its WKB slope and glued on.
inline MassProfile resolve_masses(const DiffusionModel& m, double lam_lo, double lam_hi, double x_fwd,
                                  const SpectralOptions& opt) {
    SweepOptions so;
    so.rtol = so.atol = opt.rtol;
    so.cells = true;
    so.stop_theta = std::numbers::pi;
    const PruferState y0 = initial_state(m.boundary);
    const std::vector<double> g = graded_grid(x_fwd);
    Sweep lo = sweep(m, lam_lo, y0, g, so);
    so.cells = false;
    Sweep hi = sweep(m, lam_hi, y0, g, so);

    std::size_t good = lo.reached;
    for (std::size_t i = 1; i <= lo.reached; ++i) {
        if (i > hi.reached || std::fabs(log_abs_phi(lo.states[i]) - log_abs_phi(hi.states[i])) > 1e-3) {
            good = i - 1;
            break;
        }
    }

    MassProfile fwd;
    for (std::size_t i = 0; i <= good; ++i) {
        fwd.grid.push_back(g[i]);
        fwd.log_phi.push_back(log_abs_phi(lo.states[i]));
        fwd.log_rho.push_back(2.0 * lo.states[i][2]);
        if (i < good) {
            fwd.log_l1.push_back(lo.log_l1_cell[i]);
            fwd.log_l2.push_back(lo.log_l2_cell[i]);
        }
    }
    if (feed_profile(fwd, opt.tail, fwd.l1, fwd.l2) || good == 0) return fwd;

    // Matching point: largest power of two ≤ 0.75·x_good (a node of every graded grid).
    const double x_good = g[good];
    const double xm = std::exp2(std::floor(std::log2(0.75 * x_good)));
    std::size_t im = 0;
    while (im < good && !same_node(g[im], xm)) ++im;
    if (im == good || xm < 1.0 / 512.0) return fwd;
    const PruferState& ym = lo.states[im];

    for (double X = std::max(4.0 * xm, 2.0 * x_good); X <= opt.mass_cap * (1 + 1e-12); X *= 2.0) {
        const double bX = m.drift(X);
        const double disc = bX * bX + 2.0 * (m.killing(X) - lam_lo);
        if (!(disc > 0.0)) break;
        const double gamma = -bX - std::sqrt(disc);
        std::vector<double> gX = graded_grid(X);
        std::vector<double> nodes;
        for (auto it = gX.rbegin(); it != gX.rend() && *it >= 0.5 * xm * (1 - 1e-12); ++it) nodes.push_back(*it);
        SweepOptions sb;
        sb.rtol = sb.atol = opt.rtol;
        sb.cells = true;
        Sweep back = sweep(m, lam_lo, PruferState{std::atan2(1.0, gamma), 0.0, 0.0}, nodes, sb);

        std::size_t jm = 0;
        while (jm < nodes.size() && !same_node(nodes[jm], xm)) ++jm;
        if (jm == nodes.size()) break;
        const double k = std::round((ym[0] - back.states[jm][0]) / std::numbers::pi);
        const double dth = k * std::numbers::pi;

        // θ agreement on [x_m/2, x_m] against the forward solution.
        bool consistent = true;
        for (std::size_t j = jm; j < nodes.size(); ++j) {
            std::size_t i = 0;
            while (i <= good && !same_node(g[i], nodes[j])) ++i;
            if (i > good) continue;
            if (std::fabs(back.states[j][0] + dth - lo.states[i][0]) > 1e-3) consistent = false;
        }
        // No zero between x_m and X/2.
        const int band = zero_count_from_theta(ym[0]);
        for (std::size_t j = 0; j <= jm; ++j)
            if (nodes[j] <= 0.5 * X && zero_count_from_theta(back.states[j][0] + dth) != band) consistent = false;
        if (!consistent) break;

        const double dl = log_abs_phi(ym) - log_abs_phi(back.states[jm]);
        const double dP = ym[2] - back.states[jm][2];
        MassProfile p;
        for (std::size_t i = 0; i <= im; ++i) {
            p.grid.push_back(fwd.grid[i]);
            p.log_phi.push_back(fwd.log_phi[i]);
            p.log_rho.push_back(fwd.log_rho[i]);
            if (i < im) {
                p.log_l1.push_back(fwd.log_l1[i]);
                p.log_l2.push_back(fwd.log_l2[i]);
            }
        }
        // Backward nodes ascend from x_m as j decreases; cell (j-1, j) lies between nodes[j] and nodes[j-1].
        for (std::size_t j = jm; j-- > 0;) {
            if (nodes[j] > 0.5 * X * (1 + 1e-12)) break;
            p.grid.push_back(nodes[j]);
            p.log_phi.push_back(log_abs_phi(back.states[j]) + dl);
            p.log_rho.push_back(2.0 * (back.states[j][2] + dP));
            p.log_l1.push_back(back.log_l1_cell[j] + dl + 2.0 * dP);
            p.log_l2.push_back(back.log_l2_cell[j] + 2.0 * dl + 2.0 * dP);
        }
        if (feed_profile(p, opt.tail, p.l1, p.l2) || X * 2.0 > opt.mass_cap * (1 + 1e-12)) return p;
    }
    return fwd;
}

}  // namespace detail

/// λ₀^κ with the eigenfunction and its masses.
inline EigenResult lambda0(const DiffusionModel& m, const SpectralOptions& opt = {}) {
    detail::Threshold t = detail::threshold(m, 0, opt);
    EigenResult e;
    e.lambda0 = t.value;
    e.bracket = {t.lo, t.hi};
    e.x_max_used = t.x_max;
    e.truncation_error = t.truncation;
    e.estimates = t.estimates;
    detail::MassProfile p = detail::resolve_masses(m, t.raw_lo, t.raw_hi, t.x_max, opt);
    e.grid = std::move(p.grid);
    e.log_phi = std::move(p.log_phi);
    e.log_rho = std::move(p.log_rho);
    e.log_l1_cell = std::move(p.log_l1);
    e.l1_mass = p.l1;
    e.l2_mass = p.l2;
    return e;
}

inline EigenResult lambda0(const DiffusionModel& m, double tol) {
    SpectralOptions o;
    o.tol = tol;
    return lambda0(m, o);
}

/// n-th oscillation threshold: the infimum of λ for which φ(λ,·) has more than n zeros.
inline double lambda_n(const DiffusionModel& m, int n, const SpectralOptions& opt = {}) {
    return detail::threshold(m, n, opt).value;
}

inline double lambda_n(const DiffusionModel& m, int n, double tol) {
    SpectralOptions o;
    o.tol = tol;
    return lambda_n(m, n, o);
}

// ---------------------------------------------------------------------------

/// Density sampled on a grid, with cell masses and a C¹ cumulative distribution.
struct SampledDensity {
    std::vector<double> grid;
    std::vector<double> density;
    std::vector<double> cdf;  // at grid nodes; cdf.back() is the resolved mass (≈ 1)

    /// Cubic Hermite interpolation of the distribution function; constant beyond the grid.
    double cdf_at(double x) const {
        if (x <= grid.front()) return 0.0;
        if (x >= grid.back()) return cdf.back();
        auto it = std::upper_bound(grid.begin(), grid.end(), x);
        std::size_t i = static_cast<std::size_t>(it - grid.begin()) - 1;
        double h = grid[i + 1] - grid[i];
        double s = (x - grid[i]) / h;
        double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
        double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
        double v = h00 * cdf[i] + h10 * h * density[i] + h01 * cdf[i + 1] + h11 * h * density[i + 1];
        return std::clamp(v, cdf[i], cdf[i + 1]);
    }

    double mass(double a, double b) const { return cdf_at(b) - cdf_at(a); }
};

/// φ(λ₀,x)ρ(x) / ∫φρ.
inline SampledDensity qsd_density(const EigenResult& e) {
    if (!e.l1_mass.finite() || !(e.l1_mass.value > 0.0))
        throw Error(ErrorKind::NotNormalizable, e.l1_mass.infinite()
                                                    ? "eigenfunction is not integrable against the speed measure"
                                                    : "integrability of the eigenfunction could not be decided");
    const double lm = std::log(e.l1_mass.value);
    SampledDensity d;
    d.grid = e.grid;
    d.density.resize(e.grid.size());
    d.cdf.assign(e.grid.size(), 0.0);
    for (std::size_t i = 0; i < e.grid.size(); ++i) d.density[i] = std::exp(e.log_phi[i] + e.log_rho[i] - lm);
    double acc = kNegInf;
    for (std::size_t i = 0; i + 1 < e.grid.size(); ++i) {
        acc = log_add(acc, e.log_l1_cell[i]);
        d.cdf[i + 1] = std::exp(acc - lm);
    }
    return d;
}

// ---------------------------------------------------------------------------

struct PinskyBounds {
    double lower, upper, A;
};

/// A = sup_x (∫_x^∞ ρ)(∫_0^x ρ^{-1}) over the table grid; 1/(8A) ≤ λ₀ ≤ 1/(2A).
inline PinskyBounds pinsky_bounds(const ScaleSpeedTable& t) {
    const auto& m = t.model;
    if (!m.killing.is_zero() || !m.boundary.absorbing_at_zero())
        throw Error(ErrorKind::PreconditionViolated, "Hardy bounds need zero killing and absorption at 0");
    if (!t.scale_tail.infinite())
        throw Error(ErrorKind::PreconditionViolated, "Hardy bounds need absorption to be certain (recurrence)");
    if (!t.speed_tail.finite())
        throw Error(ErrorKind::PreconditionViolated, "Hardy bounds need a finite speed measure");
    const std::size_t n = t.size();
    double log_T = t.log_speed_beyond;
    double log_A = kNegInf;
    for (std::size_t i = n; i-- > 0;) {
        if (i + 1 < n) log_T = log_add(log_T, t.log_speed_cell[i]);
        log_A = std::max(log_A, log_T + t.log_scale[i]);
    }
    const double A = std::exp(log_A);
    return {1.0 / (8.0 * A), 1.0 / (2.0 * A), A};
}

}  // namespace qsd
