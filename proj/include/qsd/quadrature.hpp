#pragma once

// Adaptive Gauss–Kronrod quadrature, on linear values and in log space.
//
// The log-space variant integrates exp(L(x)) and returns the logarithm of the
// integral. Each subinterval is rescaled by its own largest sample, so
// integrands spanning hundreds of orders of magnitude (scale densities under
// strong drift) neither overflow nor lose their small contributions.

#include "qsd/error.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <array>
#include <span>
#include <vector>
#include <string>

namespace qsd {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::fabs(a - b)));
}

inline double log_sum(std::span<const double> v) {
    double m = kNegInf;
    for (double x : v) m = std::max(m, x);
    if (m == kNegInf || !std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

/// log(e^a - e^b) for a >= b.
inline double log_sub(double a, double b) {
    if (b == kNegInf) return a;
    if (b >= a) return kNegInf;
    return a + std::log1p(-std::exp(b - a));
}

/// Adaptive 21-point Gauss–Kronrod for smooth integrands on a bounded interval.
/// Throws QuadratureFailure if the estimate is non-finite or misses `tol`
/// (absolute + relative) by more than an order of magnitude.
template <class F>
double integrate(F&& f, double a, double b, double tol = 1e-12) {
    if (a == b) return 0.0;
    double err = 0.0;
    double l1 = 0.0;
    double v = boost::math::quadrature::gauss_kronrod<double, 21>::integrate(f, a, b, 20, tol, &err, &l1);
    if (!std::isfinite(v) || err > 10.0 * tol * std::max(1.0, l1)) {
        throw Error(ErrorKind::QuadratureFailure,
                    "integral over [" + std::to_string(a) + ", " + std::to_string(b) +
                        "] did not converge (error estimate " + std::to_string(err) + ")");
    }
    return v;
}

namespace detail {

template <class L>
double log_gk15_panel(L& logf, double a, double b, double& log_err) {
    using K = boost::math::quadrature::gauss_kronrod<double, 15>;
    using G = boost::math::quadrature::gauss<double, 7>;
    static const auto& kx = K::abscissa();
    static const auto& kw = K::weights();
    static const auto& gw = G::weights();

    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    std::array<double, 15> v;
    v[0] = logf(c);
    for (std::size_t j = 1; j < 8; ++j) {
        v[2 * j - 1] = logf(c - h * kx[j]);
        v[2 * j] = logf(c + h * kx[j]);
    }
    double shift = kNegInf;
    for (double x : v)
        if (!std::isnan(x)) shift = std::max(shift, x);
    if (shift == kNegInf) {
        log_err = kNegInf;
        return kNegInf;
    }
    if (!std::isfinite(shift)) {
        log_err = kInf;
        return kInf;
    }
    auto w = [&](std::size_t idx) { return std::isnan(v[idx]) ? 0.0 : std::exp(v[idx] - shift); };
    double kr = kw[0] * w(0);
    double ga = gw[0] * w(0);
    for (std::size_t j = 1; j < 8; ++j) {
        double pair = w(2 * j - 1) + w(2 * j);
        kr += kw[j] * pair;
        if (j % 2 == 0) ga += gw[j / 2] * pair;
    }
    double err = std::fabs(kr - ga);
    log_err = err > 0.0 ? shift + std::log(h * err) : kNegInf;
    return kr > 0.0 ? shift + std::log(h * kr) : kNegInf;
}

}  // namespace detail

struct LogQuadResult {
    double log_value;
    bool converged;
};

/// log ∫_a^b exp(logf(x)) dx by globally adaptive Gauss–Kronrod (7/15) in
/// log space: the panel with the largest error estimate is bisected until the
/// summed error falls below `rtol` times the current total.
template <class L>
LogQuadResult log_integrate(L&& logf, double a, double b, double rtol = 1e-11, int max_evals = 200000) {
    if (!(b > a)) return {kNegInf, true};
    struct Panel {
        double a, b, value, log_err;
        bool operator<(const Panel& o) const { return log_err < o.log_err; }
    };
    std::vector<Panel> heap;
    auto push = [&](double lo, double hi) {
        double e = 0.0;
        double v = detail::log_gk15_panel(logf, lo, hi, e);
        heap.push_back({lo, hi, v, e});
        std::push_heap(heap.begin(), heap.end());
    };
    push(a, b);
    int evals = 15;
    const double log_rtol = std::log(rtol);
    for (;;) {
        double total = kNegInf, err = kNegInf, mag = 0.0;
        for (const auto& p : heap) {
            total = log_add(total, p.value);
            err = log_add(err, p.log_err);
            if (std::isfinite(p.value)) mag = std::max(mag, std::fabs(p.value));
        }
        if (total == kInf || std::isnan(total)) return {kInf, false};
        // A log-integrand of size |L| carries a relative rounding error of about |L|·eps.
        const double floor = std::log(64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, mag));
        if (err == kNegInf || err <= std::max(log_rtol, floor) + total) return {total, true};
        if (evals >= max_evals) return {total, false};
        std::pop_heap(heap.begin(), heap.end());
        Panel worst = heap.back();
        heap.pop_back();
        double m = 0.5 * (worst.a + worst.b);
        if (!(m > worst.a && m < worst.b)) return {total, false};
        push(worst.a, m);
        push(m, worst.b);
        evals += 30;
    }
}

}  // namespace qsd
