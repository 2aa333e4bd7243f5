#pragma once

// Piecewise Chebyshev representation of F(y) = ∫_a^y f on [a, e], refined by
// bisection until each piece's coefficients of f have decayed.

#include "qsd/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace qsd::detail {

class PiecewisePrimitive {
public:
    static constexpr int kN = 17;  // Chebyshev points per piece

    template <class F>
    PiecewisePrimitive(F&& f, double a, double e, double tol = 1e-13) : a_(a), e_(e) {
        if (!(e > a)) {
            pieces_.push_back(Piece{a, a, {}, 0.0});
            return;
        }
        build(f, a, e, tol, 0);
        double acc = 0.0;
        for (auto& p : pieces_) {
            p.offset = acc;
            acc += p.eval_local(p.hi);
        }
        total_ = acc;
    }

    double total() const noexcept { return total_; }

    /// ∫_a^y f for y in [a, e].
    double operator()(double y) const {
        y = std::clamp(y, a_, e_);
        auto it = std::upper_bound(pieces_.begin(), pieces_.end(), y,
                                   [](double v, const Piece& p) { return v < p.hi; });
        if (it == pieces_.end()) --it;
        return it->offset + it->eval_local(y);
    }

private:
    struct Piece {
        double lo, hi;
        std::array<double, kN + 1> c;  // Chebyshev coefficients of the primitive on [lo, hi]
        double offset;

        double eval_local(double y) const {
            if (hi == lo) return 0.0;
            double t = (2.0 * y - lo - hi) / (hi - lo);
            double b1 = 0.0, b2 = 0.0;
            for (int k = kN; k >= 1; --k) {
                double b0 = 2.0 * t * b1 - b2 + c[k];
                b2 = b1;
                b1 = b0;
            }
            return t * b1 - b2 + c[0];
        }
    };

    template <class F>
    void build(F& f, double lo, double hi, double tol, int depth) {
        constexpr int n = kN - 1;
        std::array<double, kN> v;
        double vmax = 0.0;
        for (int j = 0; j <= n; ++j) {
            double t = std::cos(std::numbers::pi * j / n);
            v[j] = f(0.5 * (lo + hi) + 0.5 * (hi - lo) * t);
            if (!std::isfinite(v[j]))
                throw Error(ErrorKind::QuadratureFailure,
                            "coefficient is not finite near x=" + std::to_string(0.5 * (lo + hi)));
            vmax = std::max(vmax, std::fabs(v[j]));
        }
        std::array<double, kN> c{};
        for (int k = 0; k <= n; ++k) {
            double s = 0.0;
            for (int j = 0; j <= n; ++j) {
                double w = (j == 0 || j == n) ? 0.5 : 1.0;
                s += w * v[j] * std::cos(std::numbers::pi * k * j / n);
            }
            c[k] = 2.0 * s / n;
        }
        c[0] *= 0.5;
        c[n] *= 0.5;
        double tail = std::fabs(c[n]) + std::fabs(c[n - 1]) + std::fabs(c[n - 2]);
        if (tail > tol * std::max(1.0, vmax) && depth < 40 && hi - lo > 1e-12 * std::max(1.0, std::fabs(lo))) {
            double m = 0.5 * (lo + hi);
            build(f, lo, m, tol, depth + 1);
            build(f, m, hi, tol, depth + 1);
            return;
        }
        // Integrate the series: C_k = h (c_{k-1} - c_{k+1}) / (2k), h = half-width.
        Piece p{lo, hi, {}, 0.0};
        const double h = 0.5 * (hi - lo);
        auto ck = [&](int k) { return k <= n ? c[k] : 0.0; };
        for (int k = 1; k <= kN; ++k) {
            double prev = k == 1 ? 2.0 * c[0] : ck(k - 1);
            p.c[k] = h * (prev - ck(k + 1)) / (2.0 * k);
        }
        // Fix C_0 so that the primitive vanishes at lo (t = -1).
        double at_lo = 0.0;
        for (int k = 1; k <= kN; ++k) at_lo += (k % 2 ? -1.0 : 1.0) * p.c[k];
        p.c[0] = -at_lo;
        pieces_.push_back(p);
    }

    double a_, e_;
    std::vector<Piece> pieces_;
    double total_ = 0.0;
};

}  // namespace qsd::detail
