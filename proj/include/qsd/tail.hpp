#pragma once

// Numerical surrogate for "∫_c^∞ f < ∞": increments of the integral over
// geometric panels [c·2^k, c·2^{k+1}] are compared and the tail is declared
// Infinite, Finite (with a geometric-series remainder) or Inconclusive.

#include "qsd/quadrature.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <vector>

namespace qsd {

enum class TailHint { Auto, Finite, Infinite };
enum class TailVerdict { Finite, Infinite, Inconclusive };
enum class TailConfidence { Declared, Numerical };

struct TailDiagnosis {
    TailVerdict verdict = TailVerdict::Inconclusive;
    double value = kInf;                // Finite only: the integral, head included
    double growth_exponent = 0.0;       // Infinite only: log2 of the last increment ratio
    std::vector<double> cutoffs;
    TailConfidence confidence = TailConfidence::Numerical;

    bool finite() const noexcept { return verdict == TailVerdict::Finite; }
    bool infinite() const noexcept { return verdict == TailVerdict::Infinite; }
    bool resolved() const noexcept { return verdict != TailVerdict::Inconclusive; }
};

struct TailOptions {
    int k_max = 40;
    double infinite_ratio = 0.9;
    double finite_ratio = 0.5;
    double rtol = 1e-10;
};

/// Incremental form of the tail rule, for callers that produce panel
/// increments from a running computation (an ODE march) rather than a
/// closed-form integrand.
class TailClassifier {
public:
    TailClassifier(double from, TailHint hint = TailHint::Auto, TailOptions opts = {}, double log_head = kNegInf)
        : from_(from), hint_(hint), opts_(opts), log_partial_(log_head) {}

    /// Feed log ∫ over the next panel. Returns true once a decision is made.
    bool push(double log_increment) {
        if (decided_) return true;
        const int k = static_cast<int>(log_incs_.size());
        log_incs_.push_back(log_increment);
        cutoffs_.push_back(from_ * std::ldexp(1.0, k + 1));
        log_partial_ = log_add(log_partial_, log_increment);

        if (log_increment == kInf || std::isnan(log_increment)) {
            decide(TailVerdict::Infinite, kInf, kInf);
            return true;
        }
        if (k >= 1 && log_incs_[k] == kNegInf && log_incs_[k - 1] == kNegInf) {
            decide(TailVerdict::Finite, log_partial_, 0.0);
            return true;
        }
        if (k >= 2) {
            double r1 = ratio(log_incs_[k - 2], log_incs_[k - 1]);
            double r2 = ratio(log_incs_[k - 1], log_incs_[k]);
            // Falling ratios mean the integrand is past a hump, not diverging.
            if (r1 >= std::log(opts_.infinite_ratio) && r2 >= std::log(opts_.infinite_ratio) &&
                r2 >= r1 - 0.05) {
                decide(TailVerdict::Infinite, kInf, r2 / std::numbers::ln2);
                return true;
            }
            // Slack of 1e-6 so integrands decaying like x^{-2} (ratio -> 1/2 from above) qualify.
            const double fin = std::log(opts_.finite_ratio) + 1e-6;
            if (r1 <= fin && r2 <= fin) {
                // Geometric remainder d_k·r/(1-r) with r the latest ratio.
                double rem = r2 == kNegInf ? kNegInf : log_incs_[k] + r2 - std::log(-std::expm1(r2));
                if (rem <= std::log(opts_.rtol) + log_partial_) {
                    decide(TailVerdict::Finite, log_add(log_partial_, rem), 0.0);
                    return true;
                }
            }
        }
        if (k + 1 >= opts_.k_max) {
            decide(TailVerdict::Inconclusive, kInf, 0.0);
            return true;
        }
        return false;
    }

    bool decided() const noexcept { return decided_; }
    double next_cutoff() const { return from_ * std::ldexp(1.0, static_cast<int>(log_incs_.size()) + 1); }
    double panel_start() const { return from_ * std::ldexp(1.0, static_cast<int>(log_incs_.size())); }

    /// Final diagnosis; valid before a decision too (then Inconclusive unless hinted).
    TailDiagnosis result() const {
        TailDiagnosis d = numeric_;
        if (!decided_) {
            d.verdict = TailVerdict::Inconclusive;
            d.cutoffs = cutoffs_;
        }
        if (hint_ == TailHint::Finite) {
            d.confidence = TailConfidence::Declared;
            if (!d.finite()) d.value = std::exp(log_partial_);
            d.verdict = TailVerdict::Finite;
        } else if (hint_ == TailHint::Infinite) {
            d.confidence = TailConfidence::Declared;
            d.verdict = TailVerdict::Infinite;
            d.value = kInf;
        }
        return d;
    }

private:
    static double ratio(double a, double b) {
        if (b == kNegInf) return kNegInf;
        if (a == kNegInf) return kInf;
        return b - a;
    }

    void decide(TailVerdict v, double log_value, double growth) {
        decided_ = true;
        numeric_.verdict = v;
        numeric_.value = v == TailVerdict::Finite ? std::exp(log_value) : kInf;
        numeric_.growth_exponent = growth;
        numeric_.cutoffs = cutoffs_;
        numeric_.confidence = TailConfidence::Numerical;
    }

    double from_;
    TailHint hint_;
    TailOptions opts_;
    double log_partial_;
    std::vector<double> log_incs_;
    std::vector<double> cutoffs_;
    bool decided_ = false;
    TailDiagnosis numeric_;
};

/// Classify ∫_from^∞ f for a nonnegative integrand f.
template <class F>
TailDiagnosis classify_tail(F&& f, double from, TailHint hint = TailHint::Auto, TailOptions opts = {}) {
    TailClassifier tc(from, hint, opts);
    auto logf = [&](double x) {
        double v = f(x);
        return v > 0.0 ? std::log(v) : kNegInf;
    };
    while (!tc.decided()) {
        double a = tc.panel_start();
        double b = tc.next_cutoff();
        tc.push(log_integrate(logf, a, b).log_value);
    }
    return tc.result();
}

/// Same rule applied to an integrand given by its logarithm.
template <class L>
TailDiagnosis classify_log_tail(L&& logf, double from, TailHint hint = TailHint::Auto, TailOptions opts = {},
                                double log_head = kNegInf) {
    TailClassifier tc(from, hint, opts, log_head);
    while (!tc.decided()) {
        double a = tc.panel_start();
        double b = tc.next_cutoff();
        tc.push(log_integrate(logf, a, b).log_value);
    }
    return tc.result();
}

}  // namespace qsd
