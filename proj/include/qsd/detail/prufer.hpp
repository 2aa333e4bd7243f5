#pragma once

// Prüfer form of (L^κ - λ)φ = 0, i.e. φ'' = -2bφ' + 2(κ-λ)φ, with φ = r sinθ,
// φ' = r cosθ:
//
//   θ'     = cos²θ + 2b sinθ cosθ + 2(λ-κ) sin²θ
//   (ln r)' = sinθ cosθ (1 + 2(κ-λ)) - 2b cos²θ
//   P'     = b                      (so ln ρ = 2P)
//
// θ' = 1 wherever sinθ = 0, so zeros of φ are the upward crossings of θ
// through multiples of π.

#include "qsd/error.hpp"
#include "qsd/model.hpp"
#include "qsd/quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/numeric/odeint.hpp>

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace qsd::detail {

using PruferState = std::array<double, 3>;  // θ, ln r, P

struct PruferSystem {
    const Coefficient* b;
    const Coefficient* kappa;
    double lambda;

    void operator()(const PruferState& y, PruferState& dy, double x) const {
        const double s = std::sin(y[0]);
        const double c = std::cos(y[0]);
        const double bx = (*b)(x);
        const double q = (*kappa)(x) - lambda;
        dy[0] = c * c + 2.0 * bx * s * c - 2.0 * q * s * s;
        dy[1] = s * c * (1.0 + 2.0 * q) - 2.0 * bx * c * c;
        dy[2] = bx;
    }
};

inline double log_abs_phi(const PruferState& y) { return y[1] + std::log(std::fabs(std::sin(y[0]))); }

/// Result of one sweep across an ordered list of nodes.
struct Sweep {
    std::vector<double> nodes;          // in the direction of integration
    std::vector<PruferState> states;    // states at nodes[0..reached]
    std::vector<double> log_l1_cell;    // log ∫ |φ|ρ between consecutive nodes
    std::vector<double> log_l2_cell;    // log ∫ φ²ρ between consecutive nodes
    std::size_t reached = 0;            // last node index with a recorded state
    std::optional<double> stop_point;   // where θ first reached the stop level
    PruferState last{};                 // state where the sweep ended
    double last_x = 0.0;
};

struct SweepOptions {
    double stop_theta = std::numeric_limits<double>::infinity();  // forward sweeps only
    bool cells = false;
    double rtol = 1e-10;
    double atol = 1e-10;
    long max_steps = 5000000;
};

/// Integrate from nodes.front() with initial state y0 through every node.
inline Sweep sweep(const DiffusionModel& m, double lambda, const PruferState& y0, std::vector<double> nodes,
                   const SweepOptions& opt = {}) {
    namespace odeint = boost::numeric::odeint;
    using G = boost::math::quadrature::gauss<double, 10>;
    static const auto& gx = G::abscissa();
    static const auto& gw = G::weights();

    Sweep out;
    out.nodes = std::move(nodes);
    const auto& nd = out.nodes;
    const std::size_t n = nd.size();
    out.states.assign(n, PruferState{});
    out.states[0] = y0;
    if (opt.cells) {
        out.log_l1_cell.assign(n > 0 ? n - 1 : 0, kNegInf);
        out.log_l2_cell.assign(n > 0 ? n - 1 : 0, kNegInf);
    }
    out.last = y0;
    out.last_x = nd.front();
    if (n < 2) return out;

    const double dir = nd.back() > nd.front() ? 1.0 : -1.0;
    PruferSystem sys{&m.drift, &m.killing, lambda};
    auto stepper = odeint::make_dense_output(opt.atol, opt.rtol, odeint::runge_kutta_dopri5<PruferState>());
    const double span = std::fabs(nd.back() - nd.front());
    stepper.initialize(y0, nd.front(), dir * std::min(1e-3, 1e-3 * span));

    PruferState tmp;
    auto cell_accumulate = [&](std::size_t cell, double lo, double hi) {
        if (!(hi > lo)) return;
        const double c = 0.5 * (lo + hi);
        const double h = 0.5 * (hi - lo);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            for (int sgn : {1, -1}) {
                if (sgn < 0 && gx[i] == 0.0) continue;
                stepper.calc_state(c + sgn * h * gx[i], tmp);
                double lp = log_abs_phi(tmp);
                double lw = std::log(gw[i] * h);
                out.log_l1_cell[cell] = log_add(out.log_l1_cell[cell], lp + 2.0 * tmp[2] + lw);
                out.log_l2_cell[cell] = log_add(out.log_l2_cell[cell], 2.0 * lp + 2.0 * tmp[2] + lw);
            }
        }
    };

    std::size_t next = 1;  // next node to record
    long steps = 0;
    while (next < n) {
        std::pair<double, double> st;
        try {
            st = stepper.do_step(sys);
        } catch (const std::exception& e) {
            throw Error(ErrorKind::IntegratorFailure, std::string("Prufer integration failed near x=") +
                                                          std::to_string(stepper.current_time()) + ": " + e.what());
        }
        if (++steps > opt.max_steps)
            throw Error(ErrorKind::IntegratorFailure,
                        "Prufer integration exceeded its step budget near x=" + std::to_string(st.second));
        const auto& cur = stepper.current_state();
        if (!std::isfinite(cur[0]) || !std::isfinite(cur[1]) || !std::isfinite(cur[2]))
            throw Error(ErrorKind::IntegratorFailure,
                        "non-finite Prufer state near x=" + std::to_string(st.second));
        double t0 = st.first, t1 = st.second;

        // Stop level crossed inside this step: locate it and truncate the step.
        double t_end = t1;
        bool stop = false;
        if (dir > 0 && cur[0] >= opt.stop_theta) {
            double lo = t0, hi = t1;
            for (int it = 0; it < 60; ++it) {
                double mid = 0.5 * (lo + hi);
                stepper.calc_state(mid, tmp);
                (tmp[0] >= opt.stop_theta ? hi : lo) = mid;
            }
            t_end = hi;
            stop = true;
            out.stop_point = hi;
        }

        // Record nodes and cell integrals covered by [t0, t_end] (in direction).
        auto ahead = [&](double a, double b) { return dir > 0 ? a < b : a > b; };
        double pos = t0;
        while (next < n && !ahead(t_end, nd[next])) {
            if (opt.cells) cell_accumulate(next - 1, std::min(pos, nd[next]), std::max(pos, nd[next]));
            stepper.calc_state(nd[next], out.states[next]);
            out.reached = next;
            pos = nd[next];
            ++next;
        }
        if (opt.cells && next < n && ahead(pos, t_end)) cell_accumulate(next - 1, std::min(pos, t_end), std::max(pos, t_end));

        if (stop) {
            stepper.calc_state(t_end, out.last);
            out.last_x = t_end;
            return out;
        }
        out.last = cur;
        out.last_x = t1;
    }
    return out;
}

/// Initial Prüfer state for φ(0) = 1/(1+α), φ'(0) = α/(1+α).
inline PruferState initial_state(const BoundaryCondition& bc) {
    const double v = bc.initial_value();
    const double s = bc.initial_slope();
    return {std::atan2(v, s), std::log(std::hypot(v, s)), 0.0};
}

/// Number of zeros of φ(λ,·) in (0, x]: θ starts in [0, π/2].
inline int zero_count_from_theta(double theta) { return static_cast<int>(std::floor(theta / std::numbers::pi)); }

}  // namespace qsd::detail
