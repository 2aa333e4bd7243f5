#include "qsd/spectral.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace qsd;
using test::kInfAlpha;
using test::make_model;

namespace {

// ½φ'' + bφ' + λφ = 0 oscillates iff b² - 2λ < 0.
double constant_drift_threshold(double b) { return b * b / 2.0; }

}  // namespace

TEST(AiryOracle, SeriesIsSane) {
    // Ai'(0) = -1/(3^{1/3} Γ(1/3)).
    EXPECT_NEAR(static_cast<double>(test::airy_prime(0.0L)), -0.2588194037928068, 1e-15);
    EXPECT_NEAR(test::airy_prime_root(-1.5, -0.5), -1.0187929716474710, 1e-12);
}

TEST(Spectral, ConstantDriftThreshold) {
    for (double mu : {0.5, 1.0, 2.0}) {
        auto e = lambda0(make_model(detail::shortest(-mu), "0", kInfAlpha));
        const double oracle = constant_drift_threshold(-mu);
        EXPECT_NEAR(e.lambda0, oracle, 1e-6 * oracle) << mu;
        ASSERT_TRUE(e.l1_mass.finite()) << mu;
    }
    auto up = lambda0(make_model("1", "0", kInfAlpha));
    EXPECT_NEAR(up.lambda0, 0.5, 1e-6);
    EXPECT_EQ(up.l1_mass.verdict, TailVerdict::Infinite);
}

TEST(Spectral, DriftDownHasUnitMassEigenfunction) {
    // φ = x e^{x}, ρ = e^{-2x}: ∫φρ = ∫ x e^{-x} = 1 with the normalization φ'(0) = 1.
    auto e = lambda0(make_model("-1", "0", kInfAlpha));
    ASSERT_TRUE(e.l1_mass.finite());
    EXPECT_NEAR(e.l1_mass.value, 1.0, 1e-5);
}

TEST(Spectral, AiryEigenvalues) {
    const double c = std::cbrt(2.0);
    const double l0 = -test::airy_prime_root(-1.5, -0.5) / c;
    const double l1 = -test::airy_prime_root(-3.6, -2.9) / c;
    EXPECT_NEAR(l0, 0.80861, 1e-5);
    EXPECT_NEAR(l1, 2.57810, 1e-5);

    auto m = make_model("0", "x", 0.0);
    auto e = lambda0(m);
    EXPECT_NEAR(e.lambda0, l0, 1e-6);
    EXPECT_TRUE(e.l1_mass.finite());
    EXPECT_TRUE(e.l2_mass.finite());
    EXPECT_NEAR(lambda_n(m, 1, 1e-8), l1, 1e-6);
    EXPECT_NEAR(lambda_n(m, 0, 1e-8), e.lambda0, 1e-9);
}

TEST(Spectral, OrnsteinUhlenbeckOddHermiteLevels) {
    // Dirichlet at 0 keeps the odd Hermite eigenfunctions: λ_n = 2n + 1.
    auto m = make_model("-x", "0", kInfAlpha);
    for (int n = 0; n < 3; ++n) EXPECT_NEAR(lambda_n(m, n, 1e-8), 2.0 * n + 1.0, 1e-6) << n;
}

TEST(Spectral, EssentialSpectrumEdgeHasNoSecondLevel) {
    auto m = make_model("-1", "0", kInfAlpha);
    try {
        double l1 = lambda_n(m, 1, 1e-8);
        EXPECT_NEAR(l1, 0.5, 1e-3);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NoConvergence);
    }
}

TEST(SolvePhi, Examples) {
    auto crit = solve_phi(make_model("-1", "0", kInfAlpha), 0.5, 20.0);
    EXPECT_EQ(crit.zero_count, 0);
    // φ ∝ x e^{x}: ln φ - ln x - x is constant.
    double ref = std::nan("");
    for (std::size_t i = 0; i < crit.grid.size(); ++i) {
        const double x = crit.grid[i];
        if (x < 0.1) continue;
        const double d = crit.log_abs_phi[i] - std::log(x) - x;
        if (std::isnan(ref)) ref = d;
        EXPECT_NEAR(d, ref, 1e-6) << x;
    }

    auto osc = solve_phi(make_model("-1", "0", kInfAlpha), 1.0, 20.0);
    EXPECT_GE(osc.zero_count, 1);
    ASSERT_TRUE(osc.first_zero.has_value());
    EXPECT_NEAR(*osc.first_zero, std::numbers::pi / std::sqrt(2.0 * 1.0 - 1.0), 1e-6);

    auto flat = solve_phi(make_model("0", "0", 0.0), 0.0, 20.0);
    EXPECT_EQ(flat.zero_count, 0);
    for (double lp : flat.log_abs_phi) EXPECT_NEAR(lp, 0.0, 1e-9);
}

TEST(SolvePhi, ZeroCountIsMonotoneInLambda) {
    for (const char* b : {"-1", "-x", "sin(x)"}) {
        auto m = make_model(b, "0", kInfAlpha);
        int prev = 0;
        for (double lam = 0.0; lam <= 6.0; lam += 0.25) {
            int z = solve_phi(m, lam, 15.0).zero_count;
            EXPECT_GE(z, prev) << b << " at " << lam;
            prev = z;
        }
    }
}

TEST(EigenResult, Invariants) {
    for (auto m : {make_model("-1", "0", kInfAlpha), make_model("0", "x", 0.0), make_model("-x", "0", 2.0),
                   make_model("-0.5", "0.2*x/(1+x)", kInfAlpha)}) {
        const double tol = 1e-8;
        auto e = lambda0(m, tol);
        EXPECT_LE(e.bracket.first, e.lambda0 + 1e-15);
        EXPECT_GE(e.bracket.second, e.lambda0 - 1e-15);
        EXPECT_LE(e.bracket.second - e.bracket.first, 10 * tol);
        // φ > 0 on (0, x_max]; φ(0) = 0 under absorption.
        for (std::size_t i = 1; i < e.log_phi.size(); ++i) EXPECT_TRUE(std::isfinite(e.log_phi[i]));
    }
}

TEST(Spectral, ShiftInvariance) {
    for (const char* b : {"-1", "-x", "-0.7 - 0.3*exp(-x)"}) {
        for (const char* k : {"0", "exp(-x)", "0.2*x/(1+x)"}) {
            const double base = lambda0(make_model(b, k, kInfAlpha)).lambda0;
            for (double c : {0.3, 1.7}) {
                std::string shifted = std::string("(") + k + ") + " + detail::shortest(c);
                const double l = lambda0(make_model(b, shifted, kInfAlpha)).lambda0;
                EXPECT_NEAR(l, base + c, 2e-8) << b << " | " << k << " + " << c;
            }
        }
    }
}

TEST(Spectral, MonotoneInKilling) {
    const double tol = 1e-8;
    for (const char* b : {"-1", "-x", "0.5 - 1/(1+x)"}) {
        double prev = -1.0;
        for (const char* k : {"0", "0.5*exp(-x)", "exp(-x)", "exp(-x) + 0.2*x/(1+x)", "1 + exp(-x)"}) {
            double l = lambda0(make_model(b, k, kInfAlpha), tol).lambda0;
            EXPECT_GE(l + tol, prev) << b << " | " << k;
            prev = l;
        }
    }
}

TEST(QsdDensity, GammaShapeTwo) {
    auto d = qsd_density(lambda0(make_model("-1", "0", kInfAlpha)));
    EXPECT_NEAR(d.cdf.back(), 1.0, 1e-6);
    for (double x : {0.1, 0.5, 1.0, 2.0, 5.0, 10.0}) {
        EXPECT_NEAR(d.cdf_at(x), 1.0 - (1.0 + x) * std::exp(-x), 1e-5) << x;
    }
    for (std::size_t i = 0; i < d.grid.size(); i += 97) {
        const double x = d.grid[i];
        EXPECT_NEAR(d.density[i], x * std::exp(-x), 1e-5) << x;
    }
    EXPECT_NEAR(d.mass(1.0, 2.0), 2.0 * std::exp(-1.0) - 3.0 * std::exp(-2.0), 1e-5);
}

TEST(QsdDensity, NormalizedOnEveryFiniteInput) {
    for (auto m : {make_model("-x", "0", kInfAlpha), make_model("0", "x", 0.0), make_model("-x^2", "0", kInfAlpha),
                   make_model("-2", "0", 1.0)}) {
        auto e = lambda0(m);
        ASSERT_TRUE(e.l1_mass.finite());
        EXPECT_NEAR(qsd_density(e).cdf.back(), 1.0, 1e-6);
    }
}

TEST(QsdDensity, EscapingModelIsNotNormalizable) {
    try {
        qsd_density(lambda0(make_model("1", "0", kInfAlpha)));
        FAIL() << "expected NotNormalizable";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NotNormalizable);
    }
}

TEST(HardyBounds, DriftDownAttainsLowerBound) {
    auto p = pinsky_bounds(build_scale_speed(make_model("-1", "0", kInfAlpha), 20.0));
    EXPECT_NEAR(p.A, 0.25, 1e-9);
    EXPECT_NEAR(p.lower, 0.5, 1e-6);
    EXPECT_NEAR(p.upper, 2.0, 1e-6);
}

TEST(HardyBounds, Sandwich) {
    for (const char* b : {"-1", "-x", "-(1+x)", "-2 + 1/(1+x)"}) {
        auto m = make_model(b, "0", kInfAlpha);
        auto p = pinsky_bounds(build_scale_speed(m, 20.0));
        const double l = lambda0(m).lambda0;
        EXPECT_LE(p.lower, l + 1e-8) << b;
        EXPECT_GE(p.upper, l - 1e-8) << b;
    }
}

TEST(HardyBounds, Scaling) {
    // b_c(x) = c b(cx) rescales A by 1/c².
    const double c = 2.0;
    auto p1 = pinsky_bounds(build_scale_speed(make_model("-x", "0", kInfAlpha), 20.0));
    auto pc = pinsky_bounds(build_scale_speed(make_model("-4*x", "0", kInfAlpha), 20.0));
    EXPECT_NEAR(pc.A, p1.A / (c * c), 1e-3 * p1.A / (c * c));
    EXPECT_NEAR(pc.lower, p1.lower * c * c, 1e-3 * p1.lower * c * c);
}

TEST(HardyBounds, Preconditions) {
    EXPECT_THROW(pinsky_bounds(build_scale_speed(make_model("1", "0", kInfAlpha), 20.0)), Error);
    EXPECT_THROW(pinsky_bounds(build_scale_speed(make_model("-1", "1", kInfAlpha), 20.0)), Error);
    EXPECT_THROW(pinsky_bounds(build_scale_speed(make_model("-1", "0", 0.0), 20.0)), Error);
}
