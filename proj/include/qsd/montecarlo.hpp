#pragma once

// Monte Carlo for the killed diffusion: Euler–Maruyama paths with Brownian
// bridge absorption, reflection or elastic local-time killing at 0, and a
// Feynman–Kac clock for κ. Tallies are integer counts per path group, so the
// merged result is identical for any number of worker threads.

#include "qsd/error.hpp"
#include "qsd/model.hpp"
#include "qsd/rng.hpp"
#include "qsd/spectral.hpp"

#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace qsd {

struct SimConfig {
    std::uint64_t paths = 100000;
    double t_final = 1.0;
    double dt = 1e-3;
    std::uint64_t seed = 1;
    std::vector<std::pair<double, double>> initial{{1.0, 1.0}};  // (point, weight)
    std::vector<double> bin_edges;                                // empty: bin_count bins from a pilot run
    std::size_t bin_count = 100;
    std::vector<double> record_times;                             // empty: {t_final}
    unsigned threads = 0;                                         // 0: hardware concurrency

    void validate() const {
        if (paths < 1) throw Error(ErrorKind::InvalidArgument, "paths must be >= 1");
        if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "dt must be > 0");
        if (!(t_final > 0.0)) throw Error(ErrorKind::InvalidArgument, "t_final must be > 0");
        if (initial.empty()) throw Error(ErrorKind::InvalidArgument, "initial distribution is empty");
        for (auto [x, w] : initial)
            if (!(x > 0.0) || !std::isfinite(x) || !(w > 0.0))
                throw Error(ErrorKind::InvalidArgument, "initial support must lie in (0, inf) with positive weights");
        if (!std::is_sorted(record_times.begin(), record_times.end()))
            throw Error(ErrorKind::InvalidArgument, "record times must be sorted");
        for (double t : record_times)
            if (t < 0.0 || t > t_final * (1 + 1e-12))
                throw Error(ErrorKind::InvalidArgument, "record times must lie in [0, t_final]");
        if (!bin_edges.empty() && (bin_edges.size() < 2 || !std::is_sorted(bin_edges.begin(), bin_edges.end())))
            throw Error(ErrorKind::InvalidArgument, "bin edges must be sorted with at least two entries");
        if (bin_edges.empty() && bin_count < 1) throw Error(ErrorKind::InvalidArgument, "bin count must be >= 1");
        if (t_final / dt > 4.0e9) throw Error(ErrorKind::InvalidArgument, "too many time steps");
    }
};

struct SurvivorStats {
    static constexpr int kGroups = 20;
    // Per (group, time): survivors, outside-bins, absorbed at 0, killed by κ, then bins.
    static constexpr std::size_t kSurv = 0, kOver = 1, kAbs = 2, kKill = 3, kBins = 4;

    std::uint64_t paths = 0;
    double dt = 0.0;
    std::vector<double> record_times;
    std::vector<double> bin_edges;
    std::vector<std::uint64_t> group_paths;  // paths per group
    std::vector<std::uint64_t> tally;        // [group][time][slot]
    std::vector<std::string> warnings;

    std::size_t times() const { return record_times.size(); }
    std::size_t bins() const { return bin_edges.size() - 1; }
    std::size_t stride() const { return kBins + bins(); }

    std::uint64_t group_count(int g, std::size_t j, std::size_t slot) const {
        return tally[(static_cast<std::size_t>(g) * times() + j) * stride() + slot];
    }
    std::uint64_t count(std::size_t j, std::size_t slot, int skip_group = -1) const {
        std::uint64_t s = 0;
        for (int g = 0; g < kGroups; ++g)
            if (g != skip_group) s += group_count(g, j, slot);
        return s;
    }
    std::uint64_t paths_excluding(int skip_group = -1) const {
        std::uint64_t s = 0;
        for (int g = 0; g < kGroups; ++g)
            if (g != skip_group) s += group_paths[static_cast<std::size_t>(g)];
        return s;
    }

    std::uint64_t survivors(std::size_t j) const { return count(j, kSurv); }
    std::uint64_t overflow(std::size_t j) const { return count(j, kOver); }
    std::uint64_t absorbed(std::size_t j) const { return count(j, kAbs); }
    std::uint64_t killed(std::size_t j) const { return count(j, kKill); }
    std::uint64_t histogram(std::size_t j, std::size_t bin) const { return count(j, kBins + bin); }
    double survival_prob(std::size_t j) const { return static_cast<double>(survivors(j)) / static_cast<double>(paths); }
    /// a(t_j, t_k - t_j): conditional survival from t_j to t_k.
    double a_hat(std::size_t j, std::size_t k) const {
        auto sj = survivors(j);
        return sj == 0 ? 0.0 : static_cast<double>(survivors(k)) / static_cast<double>(sj);
    }
};

namespace detail {

struct ConstDrift {
    double c;
    double operator()(double) const noexcept { return c; }
};
struct FnDrift {
    const Coefficient* f;
    double operator()(double x) const { return (*f)(x); }
};

enum class KillMode { None, Constant, Variable };

struct Tally {
    const SurvivorStats* shape;
    std::vector<std::uint64_t> data;
    std::vector<std::uint64_t> group_paths;

    std::uint64_t& at(std::uint64_t path, std::size_t j, std::size_t slot) {
        std::size_t g = static_cast<std::size_t>(path % SurvivorStats::kGroups);
        return data[(g * shape->times() + j) * shape->stride() + slot];
    }
};

template <class Drift, KillMode Kill>
void simulate_range(const DiffusionModel& m, const SimConfig& cfg, Drift drift, const std::vector<std::uint32_t>& rec_steps,
                    std::uint64_t begin, std::uint64_t end, Tally& out) {
    const double dt = cfg.dt;
    const double sdt = std::sqrt(dt);
    const double alpha = m.boundary.alpha();
    const bool absorbing = m.boundary.absorbing_at_zero();
    const bool reflecting = m.boundary.reflecting_at_zero();
    const double eps = sdt;
    const double kconst = Kill == KillMode::Constant ? *m.killing.constant : 0.0;
    const auto& edges = out.shape->bin_edges;
    const std::size_t J = rec_steps.size();
    const std::uint32_t n_total = rec_steps.empty() ? 0 : rec_steps.back();

    double wsum = 0.0;
    for (auto [x, w] : cfg.initial) wsum += w;

    for (std::uint64_t p = begin; p < end; ++p) {
        PathStream rs(cfg.seed, p);
        ++out.group_paths[p % SurvivorStats::kGroups];
        const auto init = rs.block(0xFFFFFFFFu, 1);
        const double e_kill = -std::log(to_unit(init[0]));
        const double e_local = -std::log(to_unit(init[1]));
        double x = cfg.initial.front().first;
        if (cfg.initial.size() > 1) {
            double u = to_unit(init[2]) * wsum, acc = 0.0;
            for (auto [xi, wi] : cfg.initial) {
                x = xi;
                acc += wi;
                if (u < acc) break;
            }
        }
        double clock = 0.0, local = 0.0;
        double kx = Kill == KillMode::Variable ? m.killing(x) : 0.0;
        const double kill_time = Kill == KillMode::Constant ? (kconst > 0.0 ? e_kill / kconst : INFINITY) : INFINITY;

        std::size_t j = 0;
        auto record_alive = [&](double pos) {
            ++out.at(p, j, SurvivorStats::kSurv);
            if (pos < edges.front() || pos >= edges.back()) {
                ++out.at(p, j, SurvivorStats::kOver);
            } else {
                auto it = std::upper_bound(edges.begin(), edges.end(), pos);
                ++out.at(p, j, SurvivorStats::kBins + static_cast<std::size_t>(it - edges.begin()) - 1);
            }
        };
        while (j < J && rec_steps[j] == 0) record_alive(x), ++j;

        enum class Death { None, Boundary, Killing } death = Death::None;
        PhiloxEngine eng(cfg.seed, p, 3);
        boost::random::normal_distribution<double> normal;
        for (std::uint32_t n = 0; n < n_total; ++n) {
            const double x0 = x;
            double x1 = x0 + drift(x0) * dt + sdt * normal(eng);
            if (absorbing) {
                const double bridge = 2.0 * x0 * x1 / dt;
                // exp(-bridge) is below the smallest uniform once bridge > 23.
                if (x1 <= 0.0 || (bridge < 23.0 && to_unit(rs.block(n, 2)[0]) < std::exp(-bridge))) {
                    death = Death::Boundary;
                    break;
                }
            } else {
                x1 = std::fabs(x1);
                if (!reflecting) {
                    if (x1 < eps) local += dt / (2.0 * eps);
                    if (alpha * local >= e_local) {
                        death = Death::Boundary;
                        break;
                    }
                }
            }
            x = x1;
            if constexpr (Kill == KillMode::Variable) {
                const double k1 = m.killing(x1);
                clock += 0.5 * (kx + k1) * dt;
                kx = k1;
                if (clock >= e_kill) {
                    death = Death::Killing;
                    break;
                }
            } else if constexpr (Kill == KillMode::Constant) {
                if ((n + 1) * dt >= kill_time) {
                    death = Death::Killing;
                    break;
                }
            }
            while (j < J && rec_steps[j] == n + 1) record_alive(x), ++j;
        }
        for (; j < J; ++j) ++out.at(p, j, death == Death::Boundary ? SurvivorStats::kAbs : SurvivorStats::kKill);
    }
}

inline unsigned worker_count(const SimConfig& cfg) {
    unsigned n = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("QSD_THREADS")) {
        long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
    return std::max(1u, n);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

SurvivorStats simulate_with_bins(const DiffusionModel& m, const SimConfig& cfg);

// 99.5% quantile of survivors at t_final from a pilot run, for default bins.
inline double pilot_upper_edge(const DiffusionModel& m, const SimConfig& cfg) {
    SimConfig pilot = cfg;
    pilot.paths = std::min<std::uint64_t>(cfg.paths, 5000);
    pilot.record_times = {cfg.t_final};
    double x_init = 0.0;
    for (auto [x, w] : cfg.initial) x_init = std::max(x_init, x);
    pilot.bin_edges.clear();
    for (int i = 0; i <= 2000; ++i) pilot.bin_edges.push_back(i == 0 ? 0.0 : 1e-3 * std::pow(1e9, i / 2000.0));
    SurvivorStats s = simulate_with_bins(m, pilot);
    const std::uint64_t alive = s.survivors(0);
    if (alive == 0) return 4.0 * x_init;
    const double target = 0.995 * static_cast<double>(alive);
    double acc = 0.0;
    for (std::size_t b = 0; b < s.bins(); ++b) {
        acc += static_cast<double>(s.histogram(0, b));
        if (acc >= target) return std::max(s.bin_edges[b + 1], 1e-3);
    }
    return s.bin_edges.back();
}

inline SurvivorStats simulate_with_bins(const DiffusionModel& m, const SimConfig& cfg) {
    SurvivorStats st;
    st.paths = cfg.paths;
    st.dt = cfg.dt;
    st.record_times = cfg.record_times.empty() ? std::vector<double>{cfg.t_final} : cfg.record_times;
    st.bin_edges = cfg.bin_edges;
    st.group_paths.assign(SurvivorStats::kGroups, 0);
    st.tally.assign(SurvivorStats::kGroups * st.times() * st.stride(), 0);

    std::vector<std::uint32_t> rec_steps;
    for (double t : st.record_times) rec_steps.push_back(static_cast<std::uint32_t>(std::llround(t / cfg.dt)));

    double x_min = INFINITY;
    for (auto [x, w] : cfg.initial) x_min = std::min(x_min, x);
    const double cross = normal_cdf(-x_min / std::sqrt(cfg.dt));
    if (cross > 0.01)
        st.warnings.push_back("StepTooCoarse: first-step probability of reaching 0 is " + detail::shortest(cross));

    const unsigned nw = static_cast<unsigned>(std::min<std::uint64_t>(worker_count(cfg), cfg.paths));
    std::vector<Tally> tallies(nw, Tally{&st, std::vector<std::uint64_t>(st.tally.size(), 0),
                                         std::vector<std::uint64_t>(SurvivorStats::kGroups, 0)});
    auto run = [&](unsigned w) {
        const std::uint64_t begin = cfg.paths * w / nw, end = cfg.paths * (w + 1) / nw;
        const bool cdrift = m.drift.constant.has_value();
        const KillMode km = m.killing.constant ? (*m.killing.constant == 0.0 ? KillMode::None : KillMode::Constant)
                                               : KillMode::Variable;
        auto go = [&](auto drift) {
            switch (km) {
                case KillMode::None: simulate_range<decltype(drift), KillMode::None>(m, cfg, drift, rec_steps, begin, end, tallies[w]); break;
                case KillMode::Constant: simulate_range<decltype(drift), KillMode::Constant>(m, cfg, drift, rec_steps, begin, end, tallies[w]); break;
                case KillMode::Variable: simulate_range<decltype(drift), KillMode::Variable>(m, cfg, drift, rec_steps, begin, end, tallies[w]); break;
            }
        };
        if (cdrift) go(ConstDrift{*m.drift.constant});
        else go(FnDrift{&m.drift});
    };
    if (nw == 1) {
        run(0);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(nw);
        for (unsigned w = 0; w < nw; ++w)
            pool.emplace_back([&, w] {
                try {
                    run(w);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    for (const auto& t : tallies) {
        for (std::size_t i = 0; i < st.tally.size(); ++i) st.tally[i] += t.data[i];
        for (int g = 0; g < SurvivorStats::kGroups; ++g) st.group_paths[g] += t.group_paths[g];
    }
    return st;
}

}  // namespace detail

/// Simulate `cfg.paths` paths and tally survivors at the record times.
inline SurvivorStats simulate(const DiffusionModel& m, SimConfig cfg) {
    cfg.validate();
    if (cfg.record_times.empty()) cfg.record_times = {cfg.t_final};
    if (cfg.bin_edges.empty()) {
        const double hi = detail::pilot_upper_edge(m, cfg);
        const auto k = static_cast<double>(cfg.bin_count);
        for (std::size_t i = 0; i <= cfg.bin_count; ++i) cfg.bin_edges.push_back(hi * static_cast<double>(i) / k);
    }
    return detail::simulate_with_bins(m, cfg);
}

// ---------------------------------------------------------------------------
// Estimators

struct Estimate {
    double value;
    double std_error;
};

namespace detail {

// Group jackknife around a statistic f(skip_group); f(-1) uses every group.
template <class F>
Estimate jackknife(F&& f) {
    const double full = f(-1);
    const int G = SurvivorStats::kGroups;
    std::vector<double> loo(G);
    for (int g = 0; g < G; ++g) loo[g] = f(g);
    double mean = std::accumulate(loo.begin(), loo.end(), 0.0) / G;
    double ss = 0.0;
    for (double v : loo) ss += (v - mean) * (v - mean);
    return {full, std::sqrt((G - 1.0) / G * ss)};
}

}  // namespace detail

/// η̂ = -log(a(t, r))/r averaged over the three latest usable (t, t+r) pairs.
inline Estimate estimate_mortality(const SurvivorStats& s, double r, std::uint64_t min_survivors = 100) {
    if (!(r > 0.0)) throw Error(ErrorKind::InvalidArgument, "r must be > 0");
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t j = 0; j < s.times(); ++j)
        for (std::size_t k = j + 1; k < s.times(); ++k)
            if (std::fabs(s.record_times[k] - s.record_times[j] - r) <= 0.5 * s.dt && s.survivors(k) > min_survivors)
                pairs.emplace_back(j, k);
    if (pairs.size() < 3)
        throw Error(ErrorKind::InsufficientSurvivors, "fewer than 3 record-time pairs with enough survivors");
    pairs.erase(pairs.begin(), pairs.end() - 3);
    return detail::jackknife([&](int skip) {
        double acc = 0.0;
        for (auto [j, k] : pairs) {
            double a = static_cast<double>(s.count(k, SurvivorStats::kSurv, skip)) /
                       static_cast<double>(s.count(j, SurvivorStats::kSurv, skip));
            acc += -std::log(a) / r;
        }
        return acc / static_cast<double>(pairs.size());
    });
}

namespace detail {

// Survivors at or below z; the straddling bin contributes linearly.
inline double count_below(const SurvivorStats& s, std::size_t j, double z, int skip) {
    double c = 0.0;
    for (std::size_t b = 0; b < s.bins(); ++b) {
        const double lo = s.bin_edges[b], hi = s.bin_edges[b + 1];
        if (lo >= z) break;
        const double n = static_cast<double>(s.count(j, SurvivorStats::kBins + b, skip));
        c += hi <= z ? n : n * (z - lo) / (hi - lo);
    }
    return c;
}

}  // namespace detail

/// Negated least-squares slope of log P(X_t ≤ z | survival to t) against t.
inline Estimate estimate_escape_rate(const SurvivorStats& s, double z, double min_count = 10.0) {
    if (!(z > s.bin_edges.front()))
        throw Error(ErrorKind::InvalidArgument, "z must exceed the first bin edge");
    std::vector<std::size_t> use;
    for (std::size_t j = 0; j < s.times(); ++j)
        if (s.record_times[j] > 0.0 && detail::count_below(s, j, z, -1) >= min_count) use.push_back(j);
    if (use.size() < 3)
        throw Error(ErrorKind::InsufficientSurvivors, "fewer than 3 record times with survivors below z");
    return detail::jackknife([&](int skip) {
        double st = 0, sy = 0, stt = 0, sty = 0;
        for (std::size_t j : use) {
            double below = detail::count_below(s, j, z, skip);
            double surv = static_cast<double>(s.count(j, SurvivorStats::kSurv, skip));
            double y = std::log(std::max(below, 0.5) / surv);
            double t = s.record_times[j];
            st += t;
            sy += y;
            stt += t * t;
            sty += t * y;
        }
        const double n = static_cast<double>(use.size());
        return -(n * sty - st * sy) / (n * stt - st * st);
    });
}

/// Total-variation distance between the in-range survivor histogram and the
/// density's bin masses renormalized on the histogram support, per record time.
inline std::vector<double> compare_qsd(const SurvivorStats& s, const SampledDensity& q) {
    const double lo = s.bin_edges.front(), hi = s.bin_edges.back();
    const double support = q.mass(lo, hi);
    std::vector<double> tv(s.times(), 1.0);
    if (!(support > 0.0)) return tv;
    for (std::size_t j = 0; j < s.times(); ++j) {
        double in_range = 0.0;
        for (std::size_t b = 0; b < s.bins(); ++b) in_range += static_cast<double>(s.histogram(j, b));
        if (in_range == 0.0) continue;
        double d = 0.0;
        for (std::size_t b = 0; b < s.bins(); ++b) {
            double p = static_cast<double>(s.histogram(j, b)) / in_range;
            double qm = q.mass(s.bin_edges[b], s.bin_edges[b + 1]) / support;
            d += std::fabs(p - qm);
        }
        tv[j] = 0.5 * d;
    }
    return tv;
}

}  // namespace qsd
