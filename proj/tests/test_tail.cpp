#include "qsd/quadrature.hpp"
#include "qsd/tail.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace qsd;

TEST(LogArithmetic, AddSumSub) {
    EXPECT_NEAR(log_add(std::log(2.0), std::log(3.0)), std::log(5.0), 1e-15);
    EXPECT_EQ(log_add(kNegInf, 1.0), 1.0);
    EXPECT_NEAR(log_add(1000.0, 1000.0), 1000.0 + std::log(2.0), 1e-12);
    std::vector<double> v{std::log(1.0), std::log(2.0), std::log(3.0), kNegInf};
    EXPECT_NEAR(log_sum(v), std::log(6.0), 1e-15);
    EXPECT_NEAR(log_sub(std::log(5.0), std::log(3.0)), std::log(2.0), 1e-15);
}

TEST(Quadrature, GaussKronrod) {
    EXPECT_NEAR(integrate([](double x) { return std::sin(x); }, 0.0, M_PI, 1e-12), 2.0, 1e-12);
    EXPECT_NEAR(integrate([](double x) { return std::exp(-x * x); }, -5.0, 5.0, 1e-12), std::sqrt(M_PI), 1e-10);
}

TEST(Quadrature, LogIntegrateHandlesHugeRanges) {
    // ∫_0^50 e^{20x} dx = (e^{1000} - 1)/20.
    auto r = log_integrate([](double x) { return 20.0 * x; }, 0.0, 50.0);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.log_value, 1000.0 - std::log(20.0), 1e-10);
    // Steep peak: ∫_0^10 e^{-200(x-3)^2} dx = sqrt(π/200).
    auto p = log_integrate([](double x) { return -200.0 * (x - 3.0) * (x - 3.0); }, 0.0, 10.0);
    EXPECT_NEAR(std::exp(p.log_value), std::sqrt(M_PI / 200.0), 1e-10);
    // A tiny integrand far below double range.
    auto t = log_integrate([](double x) { return -2000.0 - x; }, 0.0, 1.0);
    EXPECT_NEAR(t.log_value, -2000.0 + std::log1p(-std::exp(-1.0)), 1e-10);
}

TEST(Tail, Examples) {
    auto fin = classify_tail([](double x) { return std::exp(-2.0 * x); }, 1.0);
    ASSERT_EQ(fin.verdict, TailVerdict::Finite);
    const double oracle = std::exp(-2.0) / 2.0;  // ∫_1^∞ e^{-2x}
    EXPECT_NEAR(fin.value, oracle, 1e-9 * oracle);
    EXPECT_NEAR(fin.value, 0.067668, 1e-6);

    EXPECT_EQ(classify_tail([](double x) { return std::exp(2.0 * x); }, 1.0).verdict, TailVerdict::Infinite);
    EXPECT_NE(classify_tail([](double x) { return 1.0 / x; }, 1.0).verdict, TailVerdict::Finite);
}

TEST(Tail, PowerLaws) {
    // x^{-3/2} leaves a remainder of order X^{-1/2}: it may stay Inconclusive but never Infinite.
    EXPECT_NE(classify_tail([](double x) { return std::pow(x, -1.5); }, 1.0).verdict, TailVerdict::Infinite);
    for (double p : {2.0, 3.0}) {
        auto d = classify_tail([p](double x) { return std::pow(x, -p); }, 1.0);
        ASSERT_EQ(d.verdict, TailVerdict::Finite) << p;
        EXPECT_NEAR(d.value, 1.0 / (p - 1.0), 1e-6 / (p - 1.0)) << p;
    }
    for (double p : {0.0, 0.5, 1.0})
        EXPECT_NE(classify_tail([p](double x) { return std::pow(x, -p); }, 1.0).verdict, TailVerdict::Finite) << p;
}

TEST(Tail, HumpIsFinite) {
    // x e^{-x/2} rises before it decays; ∫_1^∞ = 6 e^{-1/2}.
    auto d = classify_tail([](double x) { return x * std::exp(-0.5 * x); }, 1.0);
    ASSERT_EQ(d.verdict, TailVerdict::Finite);
    EXPECT_NEAR(d.value, 6.0 * std::exp(-0.5), 1e-8);
}

TEST(Tail, LogIntegrandAndHead) {
    // ∫_1^∞ e^{-x} with the head ∫_0^1 e^{-x} supplied separately.
    const double head = std::log1p(-std::exp(-1.0));
    auto d = classify_log_tail([](double x) { return -x; }, 1.0, TailHint::Auto, {}, head);
    ASSERT_TRUE(d.finite());
    EXPECT_NEAR(d.value, 1.0, 1e-9);
}

TEST(Tail, HintSupremacy) {
    auto grow = [](double x) { return std::exp(x); };
    auto decay = [](double x) { return std::exp(-x); };
    auto slow = [](double x) { return 1.0 / x; };
    for (auto hint : {TailHint::Finite, TailHint::Infinite}) {
        const auto want = hint == TailHint::Finite ? TailVerdict::Finite : TailVerdict::Infinite;
        EXPECT_EQ(classify_tail(grow, 1.0, hint).verdict, want);
        EXPECT_EQ(classify_tail(decay, 1.0, hint).verdict, want);
        EXPECT_EQ(classify_tail(slow, 1.0, hint).verdict, want);
        EXPECT_EQ(classify_tail(slow, 1.0, hint).confidence, TailConfidence::Declared);
    }
}

TEST(Tail, IncrementalClassifierMatchesBatch) {
    TailClassifier tc(1.0);
    while (!tc.decided()) {
        const double a = tc.panel_start(), b = tc.next_cutoff();
        tc.push(std::log(std::exp(-a) - std::exp(-b)));
    }
    auto d = tc.result();
    ASSERT_TRUE(d.finite());
    EXPECT_NEAR(d.value, std::exp(-1.0), 1e-10);
}
