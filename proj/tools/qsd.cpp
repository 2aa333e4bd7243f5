// qsd: command-line front end for classification, spectral quantities,
// simulation and the h-transform of killed diffusions on (0, ∞).

#include "qsd/io.hpp"
#include "qsd/montecarlo.hpp"
#include "qsd/spectral.hpp"
#include "qsd/verdict.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace {

using qsd::io::json;

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kUndetermined = 2;
constexpr int kInternal = 3;
constexpr std::uint64_t kTvMinSurvivors = 1000;

int exit_code(qsd::ErrorKind k) {
    switch (k) {
        case qsd::ErrorKind::ParseError:
        case qsd::ErrorKind::EvalError:
        case qsd::ErrorKind::InvalidArgument:
        case qsd::ErrorKind::PreconditionViolated: return kUsage;
        case qsd::ErrorKind::InconclusiveTail:
        case qsd::ErrorKind::NoConvergence:
        case qsd::ErrorKind::NotNormalizable:
        case qsd::ErrorKind::InsufficientSurvivors: return kUndetermined;
        case qsd::ErrorKind::QuadratureFailure:
        case qsd::ErrorKind::IntegratorFailure: return kInternal;
    }
    return kInternal;
}

struct Options {
    std::string model;
    std::string out;
    std::string plot;
    std::string phi;
    std::string format = "csv";
    std::optional<double> tol;
    std::uint64_t paths = 100000;
    double t = 8.0;
    double dt = 1e-3;
    std::uint64_t seed = 1;
    std::size_t bins = 100;
    double z = 2.0;
    double x0 = 1.0;
    double r = 1.0;
    double rel_tol = 0.5;
    double abs_tol = 0.05;
    std::vector<double> record_times;
};

void write_text(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw qsd::Error(qsd::ErrorKind::InvalidArgument, "cannot write " + path);
    f << text;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void require_out_for_plot(const Options& o) {
    if (!o.plot.empty() && o.out.empty())
        throw qsd::Error(qsd::ErrorKind::InvalidArgument, "--plot needs --out so the script can reference the data file");
}

struct Loaded {
    qsd::io::ModelSpec spec;
    qsd::DiffusionModel model;
    qsd::SpectralOptions spectral;
};

Loaded load(const Options& o) {
    Loaded l;
    l.spec = qsd::io::load_spec(o.model);
    if (o.tol) l.spec.tol = *o.tol;
    l.model = qsd::io::build_model(l.spec);
    l.spectral = qsd::io::spectral_options(l.spec);
    return l;
}

qsd::VerdictOptions verdict_options(const Loaded& l) {
    qsd::VerdictOptions v;
    v.spectral = l.spectral;
    return v;
}

std::vector<double> default_record_times(double t_final) {
    std::vector<double> out;
    const int n = std::max(2, static_cast<int>(std::floor(2.0 * t_final + 1e-9)));
    for (int i = 1; i <= n; ++i) out.push_back(t_final * i / n);
    return out;
}

qsd::SimConfig sim_config(const Options& o) {
    qsd::SimConfig c;
    c.paths = o.paths;
    c.t_final = o.t;
    c.dt = o.dt;
    c.seed = o.seed;
    c.initial = {{o.x0, 1.0}};
    c.bin_count = o.bins;
    c.record_times = o.record_times.empty() ? default_record_times(o.t) : o.record_times;
    return c;
}

int run_classify(const Options& o) {
    Loaded l = load(o);
    qsd::Verdict v = qsd::decide(l.model, verdict_options(l));
    write_json(o.out, qsd::io::to_json(v));
    return v.outcome == qsd::Outcome::Undetermined ? kUndetermined : kOk;
}

int run_eigen(const Options& o) {
    Loaded l = load(o);
    qsd::EigenResult e = qsd::lambda0(l.model, l.spectral);
    write_json(o.out, qsd::io::to_json(e));
    if (!o.phi.empty()) write_text(o.phi, qsd::io::phi_csv(e));
    return kOk;
}

int run_qsd(const Options& o) {
    require_out_for_plot(o);
    Loaded l = load(o);
    qsd::SampledDensity d = qsd::qsd_density(qsd::lambda0(l.model, l.spectral));
    write_text(o.out, qsd::io::density_csv(d));
    if (!o.plot.empty())
        write_text(o.plot, "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'x'\nset ylabel 'density'\n"
                           "plot '" + o.out + "' using 1:2 with lines title 'quasistationary density'\n");
    return kOk;
}

int run_simulate(const Options& o) {
    if (o.format != "csv" && o.format != "json")
        throw qsd::Error(qsd::ErrorKind::InvalidArgument, "--format must be csv or json");
    require_out_for_plot(o);
    Loaded l = load(o);
    qsd::SurvivorStats s = qsd::simulate(l.model, sim_config(o));
    for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
    if (o.format == "json")
        write_json(o.out, qsd::io::to_json(s));
    else
        write_text(o.out, qsd::io::stats_csv(s));
    if (!o.plot.empty()) {
        if (o.format != "csv")
            throw qsd::Error(qsd::ErrorKind::InvalidArgument, "--plot needs --format csv");
        write_text(o.plot, "set datafile separator ','\nset key autotitle columnhead\nset xlabel 't'\n"
                           "set ylabel 'P(survival)'\nset logscale y\n"
                           "plot '" + o.out + "' using 1:3 with linespoints title 'survival probability'\n");
    }
    return kOk;
}

struct Check {
    std::string name;
    bool pass;
    json detail;
};

bool agrees(double est, double se, double ref, const Options& o) {
    return std::fabs(est - ref) <= 3.0 * se + o.rel_tol * std::fabs(ref) + o.abs_tol;
}

int run_verify(const Options& o) {
    Loaded l = load(o);
    qsd::Verdict v = qsd::decide(l.model, verdict_options(l));
    json report;
    report["verdict"] = qsd::io::to_json(v);
    if (v.outcome == qsd::Outcome::Undetermined) {
        report["agreement"] = nullptr;
        report["reason"] = "verdict is undetermined; nothing to verify";
        write_json(o.out, report);
        return kUndetermined;
    }

    qsd::SimConfig cfg = sim_config(o);
    if (v.qsd) {
        // Bins over the bulk of the predicted limit law.
        const auto& q = *v.qsd;
        double hi = q.grid.back();
        for (std::size_t i = 0; i < q.grid.size(); ++i)
            if (q.cdf[i] >= 0.999 * q.cdf.back()) {
                hi = q.grid[i];
                break;
            }
        cfg.bin_edges.clear();
        for (std::size_t i = 0; i <= o.bins; ++i) cfg.bin_edges.push_back(hi * static_cast<double>(i) / o.bins);
    }
    qsd::SurvivorStats s = qsd::simulate(l.model, cfg);
    for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";

    std::vector<Check> checks;
    try {
        auto eta = qsd::estimate_mortality(s, o.r);
        checks.push_back({"mortality_rate", agrees(eta.value, eta.std_error, v.mortality_rate, o),
                          {{"estimate", qsd::io::number(eta.value)},
                           {"std_error", qsd::io::number(eta.std_error)},
                           {"predicted", qsd::io::number(v.mortality_rate)}}});
    } catch (const qsd::Error& e) {
        if (e.kind() != qsd::ErrorKind::InsufficientSurvivors) throw;
        checks.push_back({"mortality_rate", false, {{"error", e.what()}}});
    }
    if (v.outcome == qsd::Outcome::Escapes) {
        try {
            auto esc = qsd::estimate_escape_rate(s, o.z);
            checks.push_back({"escape_rate", agrees(esc.value, esc.std_error, v.escape_rate, o),
                              {{"estimate", qsd::io::number(esc.value)},
                               {"std_error", qsd::io::number(esc.std_error)},
                               {"predicted", qsd::io::number(v.escape_rate)}}});
        } catch (const qsd::Error& e) {
            if (e.kind() != qsd::ErrorKind::InsufficientSurvivors) throw;
            checks.push_back({"escape_rate", false, {{"error", e.what()}}});
        }
    }
    if (v.qsd) {
        std::vector<double> tv = qsd::compare_qsd(s, *v.qsd);
        // The distance should shrink between the first and last record times
        // that keep enough survivors for a stable histogram.
        std::vector<std::size_t> usable;
        for (std::size_t j = 0; j < s.times(); ++j)
            if (s.survivors(j) >= kTvMinSurvivors) usable.push_back(j);
        // Sampling noise alone gives E[tv] up to sqrt(K / (2πN)); allow that much.
        bool down = false;
        double slack = 0.0;
        if (usable.size() >= 2) {
            const double n_last = static_cast<double>(s.survivors(usable.back()));
            slack = std::sqrt(static_cast<double>(s.bins()) / (2.0 * std::numbers::pi * n_last));
            down = tv[usable.back()] <= tv[usable.front()] + slack;
        }
        json series = json::array();
        for (std::size_t j : usable) series.push_back({{"t", s.record_times[j]}, {"tv", qsd::io::number(tv[j])}});
        checks.push_back({"tv_trend", down, {{"tv", series}, {"noise_allowance", slack}, {"expected", "decreasing"}}});
    }

    bool all = true;
    json agreement = json::array();
    for (const auto& c : checks) {
        all = all && c.pass;
        json item = {{"check", c.name}, {"pass", c.pass}};
        for (auto it = c.detail.begin(); it != c.detail.end(); ++it) item[it.key()] = it.value();
        agreement.push_back(item);
    }
    report["simulation"] = {{"paths", cfg.paths}, {"t_final", cfg.t_final}, {"dt", cfg.dt}, {"seed", cfg.seed},
                            {"rel_tol", o.rel_tol}, {"abs_tol", o.abs_tol}};
    report["agreement"] = agreement;
    report["agrees"] = all;
    write_json(o.out, report);
    return all ? kOk : kUndetermined;
}

int run_htransform(const Options& o) {
    Loaded l = load(o);
    qsd::HTransform h = qsd::htransform_details(l.model);
    write_json(o.out, qsd::io::to_json(qsd::io::spec_from_htransform(l.spec, h)));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quasistationary convergence versus escape for killed diffusions on (0, inf)"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--model", o.model, "model file (JSON)")->required();
        sub->add_option("--out", o.out, "output file (default: standard output)");
        sub->add_option("--tol", o.tol, "eigenvalue tolerance");
    };
    auto add_sim = [&](CLI::App* sub) {
        sub->add_option("--paths", o.paths, "number of simulated paths")->check(CLI::PositiveNumber);
        sub->add_option("--t", o.t, "final time")->check(CLI::PositiveNumber);
        sub->add_option("--dt", o.dt, "time step")->check(CLI::PositiveNumber);
        sub->add_option("--seed", o.seed, "random seed");
        sub->add_option("--bins", o.bins, "number of histogram bins")->check(CLI::PositiveNumber);
        sub->add_option("--z", o.z, "level for the escape-rate fit");
        sub->add_option("--x0", o.x0, "starting point")->check(CLI::PositiveNumber);
        sub->add_option("--record-times", o.record_times, "comma-separated observation times")->delimiter(',');
    };

    auto* classify = app.add_subcommand("classify", "decide convergence or escape; writes the verdict as JSON");
    add_common(classify);
    auto* eigen = app.add_subcommand("eigen", "bottom of the spectrum and eigenfunction masses as JSON");
    add_common(eigen);
    eigen->add_option("--phi", o.phi, "write eigenfunction samples as CSV");
    auto* qsdc = app.add_subcommand("qsd", "quasistationary density as CSV");
    add_common(qsdc);
    qsdc->add_option("--plot", o.plot, "write a gnuplot script for the CSV");
    auto* sim = app.add_subcommand("simulate", "Monte Carlo survivor statistics");
    add_common(sim);
    add_sim(sim);
    sim->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sim->add_option("--plot", o.plot, "write a gnuplot script for the CSV");
    auto* verify = app.add_subcommand("verify", "check the verdict against a simulation");
    add_common(verify);
    add_sim(verify);
    verify->add_option("--r", o.r, "lag for the mortality estimate")->check(CLI::PositiveNumber);
    verify->add_option("--rel-tol", o.rel_tol, "relative agreement tolerance")->check(CLI::NonNegativeNumber);
    verify->add_option("--abs-tol", o.abs_tol, "absolute agreement tolerance")->check(CLI::NonNegativeNumber);
    auto* htr = app.add_subcommand("htransform", "condition a transient model on absorption; writes a model file");
    add_common(htr);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*classify) return run_classify(o);
        if (*eigen) return run_eigen(o);
        if (*qsdc) return run_qsd(o);
        if (*sim) return run_simulate(o);
        if (*verify) return run_verify(o);
        if (*htr) return run_htransform(o);
    } catch (const qsd::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternal;
    }
    return kInternal;
}
