#include "qsd/montecarlo.hpp"
#include "qsd/spectral.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qsd;
using test::kInfAlpha;
using test::make_model;

namespace {

SimConfig small_config(std::uint64_t paths, double t) {
    SimConfig c;
    c.paths = paths;
    c.t_final = t;
    c.dt = 1e-3;
    c.seed = 11;
    c.record_times = {0.25 * t, 0.5 * t, 0.75 * t, t};
    c.bin_edges = {0.0, 0.5, 1.0, 2.0, 4.0};
    return c;
}

double binomial_se(double p, std::uint64_t n) { return std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

// Hand-built statistics with the same counts in every group.
SurvivorStats synthetic(const std::vector<double>& times, const std::vector<double>& edges,
                        const std::function<std::vector<std::uint64_t>(double)>& bins_at, std::uint64_t per_group) {
    SurvivorStats s;
    s.paths = per_group * SurvivorStats::kGroups;
    s.dt = 1e-3;
    s.record_times = times;
    s.bin_edges = edges;
    s.group_paths.assign(SurvivorStats::kGroups, per_group);
    s.tally.assign(SurvivorStats::kGroups * times.size() * s.stride(), 0);
    for (int g = 0; g < SurvivorStats::kGroups; ++g)
        for (std::size_t j = 0; j < times.size(); ++j) {
            auto bins = bins_at(times[j]);
            std::uint64_t surv = 0;
            for (std::size_t b = 0; b < bins.size(); ++b) {
                s.tally[(g * times.size() + j) * s.stride() + SurvivorStats::kBins + b] = bins[b];
                surv += bins[b];
            }
            s.tally[(g * times.size() + j) * s.stride() + SurvivorStats::kSurv] = surv;
        }
    return s;
}

}  // namespace

TEST(Simulate, DeterministicAcrossThreadCounts) {
    auto m = make_model("-1", "0.2*exp(-x)", 1.0);
    auto cfg = small_config(3000, 1.0);
    cfg.threads = 1;
    auto ref = simulate(m, cfg);
    for (unsigned th : {2u, 4u}) {
        cfg.threads = th;
        auto s = simulate(m, cfg);
        EXPECT_EQ(s.tally, ref.tally) << th;
        EXPECT_EQ(s.group_paths, ref.group_paths) << th;
    }
    cfg.seed = 12;
    EXPECT_NE(simulate(m, cfg).tally, ref.tally);
}

TEST(Simulate, TallyInvariants) {
    for (auto m : {make_model("-1", "0", kInfAlpha), make_model("1", "0.3", kInfAlpha), make_model("0", "x", 0.0),
                   make_model("-x", "0", 2.0), make_model("sin(x)", "0.1*exp(-x)", kInfAlpha)}) {
        auto cfg = small_config(2000, 2.0);
        auto s = simulate(m, cfg);
        std::uint64_t prev = s.paths;
        for (std::size_t j = 0; j < s.times(); ++j) {
            EXPECT_LE(s.survivors(j), prev);
            prev = s.survivors(j);
            std::uint64_t in_bins = 0;
            for (std::size_t b = 0; b < s.bins(); ++b) in_bins += s.histogram(j, b);
            EXPECT_EQ(in_bins + s.overflow(j), s.survivors(j));
            EXPECT_EQ(s.survivors(j) + s.absorbed(j) + s.killed(j), s.paths);
            EXPECT_LE(s.survival_prob(j), 1.0);
        }
        EXPECT_EQ(s.paths_excluding(), s.paths);
    }
}

TEST(Simulate, ConstantKillingWithReflection) {
    // b ≡ 0, κ ≡ 1, reflection at 0: P(τ > t) = e^{-t}.
    auto cfg = small_config(20000, 2.0);
    auto s = simulate(make_model("0", "1", 0.0), cfg);
    const double p = std::exp(-2.0);
    EXPECT_NEAR(s.survival_prob(3), p, 3.0 * binomial_se(p, cfg.paths));
    EXPECT_EQ(s.absorbed(3), 0u);
}

TEST(Simulate, VariableKillingClock) {
    // Same law as above, with κ routed through the position-dependent clock.
    auto m = make_model("0", "0", 0.0);
    m.killing = Coefficient::of_function([](double) { return 1.0; }, "1");
    auto cfg = small_config(20000, 2.0);
    const double p = std::exp(-2.0);
    EXPECT_NEAR(simulate(m, cfg).survival_prob(3), p, 3.0 * binomial_se(p, cfg.paths));
}

TEST(Simulate, BrownianAbsorption) {
    // b ≡ 0 from 1: P(T_0 > t) = erf(1/√(2t)).
    auto cfg = small_config(20000, 1.0);
    auto s = simulate(make_model("0", "0", kInfAlpha), cfg);
    for (std::size_t j = 0; j < s.times(); ++j) {
        const double p = std::erf(1.0 / std::sqrt(2.0 * s.record_times[j]));
        EXPECT_NEAR(s.survival_prob(j), p, 3.0 * binomial_se(p, cfg.paths)) << s.record_times[j];
    }
}

TEST(Simulate, DriftDownAbsorption) {
    // b ≡ -1 from 1: P(T_0 ≤ t) = Φ((-1+t)/√t) + e^{2}Φ((-1-t)/√t) for drift -1 toward 0.
    auto cfg = small_config(20000, 1.0);
    auto s = simulate(make_model("-1", "0", kInfAlpha), cfg);
    for (std::size_t j = 0; j < s.times(); ++j) {
        const double t = s.record_times[j];
        const double hit = detail::normal_cdf((t - 1.0) / std::sqrt(t)) +
                           std::exp(2.0) * detail::normal_cdf((-1.0 - t) / std::sqrt(t));
        const double p = 1.0 - hit;
        EXPECT_NEAR(s.survival_prob(j), p, 3.0 * binomial_se(p, cfg.paths)) << t;
    }
}

TEST(Simulate, FeynmanKacFactorization) {
    // A constant rate c scales survival by e^{-ct} independently of the path.
    auto cfg = small_config(20000, 1.0);
    auto base = simulate(make_model("-1", "0", kInfAlpha), cfg);
    auto killed = simulate(make_model("-1", "0.5", kInfAlpha), cfg);
    for (std::size_t j = 0; j < base.times(); ++j) {
        const double p0 = base.survival_prob(j);
        const double p = p0 * std::exp(-0.5 * base.record_times[j]);
        const double se = std::sqrt(binomial_se(p, cfg.paths) * binomial_se(p, cfg.paths) +
                                    std::exp(-base.record_times[j]) * binomial_se(p0, cfg.paths) *
                                        binomial_se(p0, cfg.paths));
        EXPECT_NEAR(killed.survival_prob(j), p, 3.0 * se) << base.record_times[j];
    }
}

TEST(Simulate, DefaultBinsCoverTheBulk) {
    SimConfig cfg;
    cfg.paths = 4000;
    cfg.t_final = 2.0;
    cfg.bin_count = 40;
    auto s = simulate(make_model("-1", "0", kInfAlpha), cfg);
    EXPECT_EQ(s.bins(), 40u);
    EXPECT_EQ(s.bin_edges.front(), 0.0);
    EXPECT_LT(static_cast<double>(s.overflow(0)), 0.02 * static_cast<double>(s.survivors(0)));
}

TEST(Simulate, WarnsWhenTheStepIsCoarse) {
    auto cfg = small_config(100, 0.1);
    cfg.initial = {{0.01, 1.0}};
    auto s = simulate(make_model("0", "0", kInfAlpha), cfg);
    ASSERT_EQ(s.warnings.size(), 1u);
    EXPECT_EQ(s.warnings[0].rfind("StepTooCoarse", 0), 0u);
    cfg.initial = {{1.0, 1.0}};
    EXPECT_TRUE(simulate(make_model("0", "0", kInfAlpha), cfg).warnings.empty());
}

TEST(Simulate, RejectsBadConfigurations) {
    auto m = make_model("-1", "0", kInfAlpha);
    auto bad = [&](auto edit) {
        auto cfg = small_config(10, 1.0);
        edit(cfg);
        try {
            simulate(m, cfg);
            ADD_FAILURE() << "expected InvalidArgument";
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
        }
    };
    bad([](SimConfig& c) { c.paths = 0; });
    bad([](SimConfig& c) { c.dt = 0.0; });
    bad([](SimConfig& c) { c.initial = {{0.0, 1.0}}; });
    bad([](SimConfig& c) { c.record_times = {0.5, 0.2}; });
    bad([](SimConfig& c) { c.record_times = {2.0}; });
    bad([](SimConfig& c) { c.bin_edges = {1.0}; });
}

TEST(Estimators, MortalityOnExactDecay) {
    std::vector<double> times;
    for (int i = 0; i <= 6; ++i) times.push_back(i);
    auto s = synthetic(times, {0.0, 1.0, 2.0}, [](double t) {
        auto n = static_cast<std::uint64_t>(std::llround(1e6 * std::exp(-0.5 * t)));
        return std::vector<std::uint64_t>{n / 2, n - n / 2};
    }, 1);
    auto est = estimate_mortality(s, 1.0);
    EXPECT_NEAR(est.value, 0.5, 1e-5);
    EXPECT_LT(est.std_error, 1e-5);
    EXPECT_NEAR(estimate_mortality(s, 2.0).value, 0.5, 1e-5);
    EXPECT_THROW(estimate_mortality(s, 5.0), Error);
    EXPECT_THROW(estimate_mortality(s, 0.0), Error);
}

TEST(Estimators, EscapeRateOnExactDecay) {
    std::vector<double> times{1, 2, 3, 4, 5};
    auto s = synthetic(times, {0.0, 1.0, 2.0, 3.0}, [](double t) {
        auto low = static_cast<std::uint64_t>(std::llround(1e6 * std::exp(-0.3 * t)));
        return std::vector<std::uint64_t>{low / 2, low - low / 2, 1000000 - low};
    }, 1);
    auto est = estimate_escape_rate(s, 2.0);
    EXPECT_NEAR(est.value, 0.3, 1e-5);
    // Half of the straddling bin [1, 2) counts when z = 1.5; the ratio to the full count is time-independent.
    EXPECT_NEAR(estimate_escape_rate(s, 1.5).value, 0.3, 1e-5);
    EXPECT_THROW(estimate_escape_rate(s, 0.0), Error);
}

TEST(Estimators, InsufficientSurvivors) {
    std::vector<double> times{1, 2, 3, 4};
    auto s = synthetic(times, {0.0, 1.0, 2.0}, [](double) { return std::vector<std::uint64_t>{0, 1}; }, 1);
    try {
        estimate_escape_rate(s, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InsufficientSurvivors);
    }
    try {
        estimate_mortality(s, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InsufficientSurvivors);
    }
}

TEST(Estimators, JackknifeOfAConstantIsZero) {
    auto e = detail::jackknife([](int) { return 3.0; });
    EXPECT_EQ(e.value, 3.0);
    EXPECT_EQ(e.std_error, 0.0);
}

TEST(CompareQsd, SelfComparison) {
    auto q = qsd_density(lambda0(make_model("-1", "0", kInfAlpha)));
    std::vector<double> edges;
    for (int i = 0; i <= 40; ++i) edges.push_back(0.25 * i);
    auto exact = [&](double) {
        std::vector<std::uint64_t> n;
        for (std::size_t b = 0; b + 1 < edges.size(); ++b)
            n.push_back(static_cast<std::uint64_t>(std::llround(1e7 * q.mass(edges[b], edges[b + 1]))));
        return n;
    };
    auto s = synthetic({1.0}, edges, exact, 1);
    EXPECT_LT(compare_qsd(s, q)[0], 1e-5);

    auto flat = synthetic({1.0}, edges, [&](double) { return std::vector<std::uint64_t>(edges.size() - 1, 10); }, 1);
    const double tv = compare_qsd(flat, q)[0];
    EXPECT_GT(tv, 0.1);
    EXPECT_LE(tv, 1.0);

    auto empty = synthetic({1.0}, edges, [&](double) { return std::vector<std::uint64_t>(edges.size() - 1, 0); }, 1);
    EXPECT_EQ(compare_qsd(empty, q)[0], 1.0);
}
