#pragma once

// Stiff march for the iterated Feller integrals
//
//   I = ∫_c^∞ ρ(y)^{-1} ∫_c^y ρ(z) dz dy,   J = ∫_c^∞ ρ(y) ∫_c^y ρ(z)^{-1} dz dy.
//
// With m = ρ^{-1}∫_c^y ρ and s = ρ∫_c^y ρ^{-1} the integrands are m and s
// themselves and satisfy m' = 1 - 2bm, s' = 1 + 2bs. Marching log m and log s
// avoids forming ρ; each equation u' = e^{-u} + σ(x) is stiff wherever |b| is
// large and is advanced by a scalar L-stable Rosenbrock 2(3) pair.

#include "qsd/error.hpp"
#include "qsd/quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <array>
#include <memory>
#include <cmath>
#include <functional>
#include <string>

namespace qsd::detail {

/// Adaptive scalar Rosenbrock 2(3) (the ode23s pair) for u' = e^{-u} + σ(t),
/// with its continuous extension.
class ScalarStiffMarch {
public:
    ScalarStiffMarch(std::function<double(double)> sigma, double t0, double u0, double h0, double rtol)
        : sigma_(std::move(sigma)), t_(t0), u_(u0), h_(h0), rtol_(rtol), t_prev_(t0), u_prev_(u0) {}

    double time() const noexcept { return t_; }
    double prev_time() const noexcept { return t_prev_; }

    /// Value at t in [prev_time, time].
    double dense(double t) const {
        double s = (t - t_prev_) / hd_;
        double c = 1.0 - 2.0 * kD;
        return u_prev_ + hd_ * (s * (1.0 - s) / c * k1_ + s * (s - 2.0 * kD) / c * k2_);
    }

    void step() {
        for (int tries = 0; tries < 200; ++tries) {
            const double h = h_;
            const double t = t_, u = u_;
            const double jac = -std::exp(-u);
            const double dt = dsigma(t);
            const double w = 1.0 - h * kD * jac;
            const double f0 = f(t, u);
            const double k1 = (f0 + h * kD * dt) / w;
            const double f1 = f(t + 0.5 * h, u + 0.5 * h * k1);
            const double k2 = (f1 - k1) / w + k1;
            const double un = u + h * k2;
            const double f2 = f(t + h, un);
            const double k3 = (f2 - kE32 * (k2 - f1) - 2.0 * (k1 - f0) + h * kD * dt) / w;
            const double err = std::fabs(h / 6.0 * (k1 - 2.0 * k2 + k3));
            const double scale = rtol_ * std::max({1.0, std::fabs(u), std::fabs(un)});
            if (std::isfinite(un) && std::isfinite(err) && err <= scale) {
                t_prev_ = t;
                u_prev_ = u;
                hd_ = h;
                k1_ = k1;
                k2_ = k2;
                t_ = t + h;
                u_ = un;
                double fac = err > 0.0 ? 0.8 * std::cbrt(scale / err) : 5.0;
                h_ = h * std::clamp(fac, 0.2, 5.0);
                return;
            }
            double fac = std::isfinite(err) && err > 0.0 ? 0.8 * std::cbrt(scale / err) : 0.1;
            h_ = h * std::clamp(fac, 0.1, 0.5);
            if (!(h_ > 1e-15 * std::max(1.0, t)))
                throw Error(ErrorKind::IntegratorFailure,
                            "iterated-integral march step size underflow near x=" + std::to_string(t));
        }
        throw Error(ErrorKind::IntegratorFailure,
                    "iterated-integral march rejected too many steps near x=" + std::to_string(t_));
    }

private:
    static constexpr double kD = 0.29289321881345248;   // 1/(2+√2)
    static constexpr double kE32 = 7.4142135623730950;  // 6+√2

    double f(double t, double u) const { return std::exp(-u) + sigma_(t); }
    double dsigma(double t) const {
        double h = 1e-6 * std::max(1.0, t);
        double lo = std::max(0.5 * t, t - h);
        return (sigma_(t + h) - sigma_(lo)) / (t + h - lo);
    }

    std::function<double(double)> sigma_;
    double t_, u_, h_, rtol_;
    double t_prev_, u_prev_, hd_ = 1.0, k1_ = 0.0, k2_ = 0.0;
};

class IteratedMarch {
public:
    IteratedMarch(std::function<double(double)> drift, double c, double rtol = 1e-9)
        : b_(std::make_shared<std::function<double(double)>>(std::move(drift))),
          m_([b = b_](double x) { return -2.0 * (*b)(x); }, c + h0(c), start(c, -1.0), h0(c), rtol),
          s_([b = b_](double x) { return 2.0 * (*b)(x); }, c + h0(c), start(c, 1.0), h0(c), rtol),
          pos_{c + h0(c), c + h0(c)} {}

    /// Advance to x and return {log ∫m, log ∫s} over the traversed stretch.
    std::array<double, 2> advance_to(double x) {
        return {advance(m_, pos_[0], x), advance(s_, pos_[1], x)};
    }

private:
    static double h0(double c) { return 1e-7 * std::max(1.0, c); }
    double start(double c, double sign) const {
        double h = h0(c);
        return std::log(h + sign * (*b_)(c) * h * h);
    }

    static double advance(ScalarStiffMarch& st, double& pos, double x) {
        double acc = kNegInf;
        long guard = 0;
        while (pos < x) {
            if (st.time() <= pos) {
                st.step();
                if (++guard > 4000000)
                    throw Error(ErrorKind::IntegratorFailure, "iterated-integral march exceeded step budget");
            }
            double lo = std::max(pos, st.prev_time());
            double hi = std::min(x, st.time());
            if (hi > lo) acc = log_add(acc, segment(st, lo, hi));
            pos = hi;
        }
        return acc;
    }

    static double segment(const ScalarStiffMarch& st, double lo, double hi) {
        using G = boost::math::quadrature::gauss<double, 10>;
        static const auto& gx = G::abscissa();
        static const auto& gw = G::weights();
        const double c = 0.5 * (lo + hi);
        const double h = 0.5 * (hi - lo);
        double out = kNegInf;
        for (std::size_t i = 0; i < gx.size(); ++i) {
            double lw = std::log(gw[i] * h);
            out = log_add(out, st.dense(c + h * gx[i]) + lw);
            if (gx[i] != 0.0) out = log_add(out, st.dense(c - h * gx[i]) + lw);
        }
        return out;
    }

    std::shared_ptr<std::function<double(double)>> b_;
    ScalarStiffMarch m_, s_;
    std::array<double, 2> pos_;
};

}  // namespace qsd::detail
