#include "screening/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/core.h>

#include "screening/client.hpp"
#include "screening/composer.hpp"
#include "screening/errors.hpp"
#include "screening/experiment.hpp"
#include "screening/noise_math.hpp"
#include "screening/report.hpp"
#include "screening/run_config.hpp"
#include "screening/trace_analysis.hpp"

namespace screening::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

class UsageError : public Error {
public:
    using Error::Error;
};

struct Globals {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::optional<std::string> out_dir;
    std::vector<std::string> overrides;
    bool json = false;
};

/// Resolved settings for one run. Every value read through take() is written back, so
/// the snapshot lists defaults too.
class Context {
public:
    Context(const Globals& g, std::string command, std::ostream& out, std::ostream& err)
        : command_(std::move(command)), json_(g.json), out_(out), err_(err),
          started_(std::chrono::system_clock::now()) {
        if (g.config) cfg_ = RunConfig::load(*g.config);
        for (const auto& o : g.overrides) cfg_.apply_override(o);
        if (g.seed) cfg_.set("seed", *g.seed);
        if (g.workers) cfg_.set("workers", *g.workers);
        if (g.out_dir) cfg_.set("out_dir", *g.out_dir);
        seed_ = take<std::uint64_t>("seed", 0);
        workers_ = take<unsigned>("workers", 1);
        if (workers_ == 0) throw UsageError("workers must be at least 1");
        out_dir_ = take<std::string>("out_dir", "out");
    }

    template <class T>
    T take(const std::string& key, T fallback) {
        T v = cfg_.get<T>(key, std::move(fallback));
        cfg_.set(key, json(v));
        return v;
    }
    template <class T>
    std::optional<T> take_optional(const std::string& key) {
        if (!cfg_.has(key)) return std::nullopt;
        return cfg_.get<T>(key, T{});
    }
    /// CLI flag beats config key beats fallback.
    template <class T>
    T pick(const std::optional<T>& flag, const std::string& key, T fallback) {
        if (flag) cfg_.set(key, json(*flag));
        return take<T>(key, std::move(fallback));
    }
    const json* node(const std::string& key) const { return cfg_.find(key); }
    void set(const std::string& key, json v) { cfg_.set(key, std::move(v)); }

    std::uint64_t seed() const { return seed_; }
    unsigned workers() const { return workers_; }
    fs::path out_dir() const { return out_dir_; }
    bool json_mode() const { return json_; }
    std::ostream& out() { return out_; }
    void warn(const std::string& msg) { err_ << "warning: " << msg << '\n'; }

    fs::path prepare_out_dir() {
        fs::create_directories(out_dir_);
        return out_dir_;
    }

    /// resolved_config.toml leaves out the worker count and the output directory, which
    /// never change results; they go to the run_meta.json sidecar with the timestamps.
    void write_snapshot_and_meta(json extra = json::object()) {
        auto root = cfg_.root();
        root.erase("workers");
        root.erase("out_dir");
        RunConfig clean = RunConfig::parse(std::string{}, cfg_.source());
        for (const auto& [k, v] : root.items()) clean.set(k, v);
        std::ofstream(fs::path(out_dir_) / "resolved_config.toml", std::ios::binary) << clean.to_toml();

        const auto now = std::chrono::system_clock::now();
        auto stamp = [](std::chrono::system_clock::time_point tp) {
            return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(tp)));
        };
        json meta{{"command", command_},
                  {"version", kVersion},
                  {"started_at", stamp(started_)},
                  {"finished_at", stamp(now)},
                  {"elapsed_seconds", std::chrono::duration<double>(now - started_).count()},
                  {"workers", workers_},
                  {"out_dir", out_dir_}};
        for (const auto& [k, v] : extra.items()) meta[k] = v;
        std::ofstream(fs::path(out_dir_) / "run_meta.json", std::ios::binary) << meta.dump(2) << '\n';
    }

private:
    RunConfig cfg_;
    std::string command_;
    bool json_;
    std::ostream& out_;
    std::ostream& err_;
    std::chrono::system_clock::time_point started_;
    std::uint64_t seed_ = 0;
    unsigned workers_ = 1;
    std::string out_dir_;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << text;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

struct BoundsFlags {
    std::optional<double> delta, sigma, noise_bound, delta_prob, solution_count, length, epsilon, noise_std;
};

int cmd_bounds(Context& ctx, const BoundsFlags& f) {
    const double epsilon = ctx.pick(f.epsilon, "bounds.epsilon", 0.1);
    const double m = ctx.pick(f.noise_bound, "bounds.noise_bound", 4.0);
    const double delta_prob = ctx.pick(f.delta_prob, "bounds.delta_prob", std::exp(-1.0));
    const double n_solutions = ctx.pick(f.solution_count, "bounds.solution_count", 1.0);
    const double length = ctx.pick(f.length, "bounds.length", 1600.0);
    if (!(delta_prob > 0.0 && delta_prob < 1.0)) throw UsageError("--delta-prob must lie strictly between 0 and 1");
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw UsageError("--epsilon must lie strictly between 0 and 0.5");
    if (!(m > 0.0)) throw UsageError("--noise-bound must be positive");
    if (!(n_solutions >= 1.0)) throw UsageError("--solution-count must be at least 1");
    if (!(length >= 0.0)) throw UsageError("--length must be non-negative");

    double delta, sigma;
    std::string source = "given";
    const auto noise_std = f.noise_std ? f.noise_std : ctx.take_optional<double>("bounds.noise_std");
    if (noise_std) {
        if (!(*noise_std > 0.0)) throw UsageError("--noise-std must be positive");
        ctx.set("bounds.noise_std", *noise_std);
        const auto model = NoiseModel::truncated_gaussian(*noise_std, m);
        delta = delta_estimate(epsilon, model).value;
        sigma = sigma_estimate(epsilon, model).value;
        source = "quadrature, " + model.describe();
    } else {
        delta = ctx.pick(f.delta, "bounds.delta", 0.2);
        sigma = ctx.pick(f.sigma, "bounds.sigma", 1.5);
        if (delta < 0.0 || sigma < 0.0) throw UsageError("--delta and --sigma must be non-negative");
    }
    if (delta == 0.0 || sigma == 0.0)
        throw BoundVacuous(fmt::format("bound vacuous: Delta = {} and sigma = {}; both must be positive", delta, sigma));
    const auto stats = RenormStats::make(epsilon, delta, sigma, m);
    const auto params = BoundParams::make(delta_prob, n_solutions, std::max(1.0, length));

    const double scale = bennett_length_scale(stats);
    const double lemma = lemma1_length_threshold(stats, delta_prob);
    const double theorem = theorem1_length_threshold(stats, params);
    const double coef = solution_count_exponent(stats);
    const double log_factor = log_hardness_bound_factor(stats, length);
    const double log_count = log_max_solution_count(stats, length, delta_prob);

    if (ctx.json_mode()) {
        json j{{"premises",
                {{"epsilon", epsilon},
                 {"delta", delta},
                 {"sigma", sigma},
                 {"noise_bound", m},
                 {"delta_prob", delta_prob},
                 {"solution_count", n_solutions},
                 {"length", length},
                 {"source", source}}},
               {"length_scale", scale},
               {"lemma_threshold", lemma},
               {"theorem_threshold", theorem},
               {"solution_count_exponent", coef},
               {"bound_factor",
                {{"length", length}, {"log_value", log_factor}, {"value", finite_or_null(std::exp(log_factor))},
                 {"text", report::exp_of_log(log_factor)}}},
               {"max_solution_count",
                {{"length", length}, {"log_value", log_count}, {"value", finite_or_null(std::exp(log_count))},
                 {"text", report::exp_of_log(log_count)}}},
               {"notes", json::array({"lemma_threshold is often quoted rounded to about 200 tokens for the "
                                      "default premises"})}};
        ctx.out() << j.dump(2) << '\n';
        return kOk;
    }
    auto& o = ctx.out();
    o << "premises (" << source << ")\n";
    o << fmt::format("  epsilon = {}  Delta = {}  sigma = {}  M = {}\n", report::num(epsilon), report::num(delta),
                     report::num(sigma), report::num(m));
    o << fmt::format("  delta = {}  N = {}  L = {}\n", report::num(delta_prob), report::num(n_solutions),
                     report::num(length));
    o << fmt::format("length scale M^2/(sigma^2 h(3 Delta M/(4 sigma^2)))  {:.4f} tokens per nat\n", scale);
    o << fmt::format("single-solution length threshold                     {:.4f} tokens [1]\n", lemma);
    o << fmt::format("length threshold for N solutions                     {:.4f} tokens\n", theorem);
    o << fmt::format("complexity gap factor e^(Delta L/4) at L             {}\n", report::exp_of_log(log_factor));
    o << fmt::format("solution-count exponent coefficient                  {:.9f}\n", coef);
    o << fmt::format("max admissible solution count at L                   {}\n", report::exp_of_log(log_count));
    o << "[1] often quoted rounded to about 200 tokens for the default premises.\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

ChainSpec chain_from(Context& ctx) {
    ChainSpec c;
    c.vocab_size = ctx.take<std::size_t>("simulate.chain.vocab_size", c.vocab_size);
    c.schedule = parse_schedule(ctx.take<std::string>("simulate.chain.schedule", to_string(c.schedule)));
    c.prob = ctx.take<double>("simulate.chain.prob", c.prob);
    c.prob_low = ctx.take<double>("simulate.chain.prob_low", c.prob_low);
    c.prob_high = ctx.take<double>("simulate.chain.prob_high", c.prob_high);
    c.validate();
    return c;
}

NoiseModel noise_from(Context& ctx, const std::string& key) {
    const json* n = ctx.node(key);
    auto model = n ? NoiseModel::from_json(*n) : NoiseModel::degenerate_zero();
    ctx.set(key, model.to_json());
    return model;
}

/// Synthetic paired traces (and optionally pass rates) for exercising `analyze`.
int simulate_traces(Context& ctx) {
    TraceDatasetConfig tc;
    tc.master_seed = ctx.seed();
    tc.n_pairs = ctx.take<std::size_t>("simulate.traces.n_pairs", tc.n_pairs);
    tc.min_part_len = ctx.take<std::size_t>("simulate.traces.min_part_len", tc.min_part_len);
    tc.max_part_len = ctx.take<std::size_t>("simulate.traces.max_part_len", tc.max_part_len);
    tc.skip_prefix = ctx.take<std::size_t>("simulate.traces.skip_prefix", tc.skip_prefix);
    tc.layout = parse_layout(ctx.take<std::string>("simulate.layout", to_string(tc.layout)));
    tc.chain = chain_from(ctx);
    tc.noise = noise_from(ctx, "simulate.noise");
    const auto n_samples = ctx.take<std::uint64_t>("simulate.traces.pass_rate_samples", 0);
    SamplerConfig sampler;
    sampler.temperature = ctx.take<double>("simulate.traces.temperature", sampler.temperature);
    sampler.nucleus_p = ctx.take<double>("simulate.traces.nucleus_p", sampler.nucleus_p);

    const auto steps = synthesize_trace_dataset(tc);
    const auto dir = ctx.prepare_out_dir();
    trace::write_jsonl(dir / "traces.jsonl", steps);
    std::size_t n_records = 0;
    if (n_samples > 0) {
        const auto records = synthesize_pass_rate_dataset(tc, n_samples, sampler, ctx.workers());
        trace::write_pass_rates(dir / "pass_rates.csv", records);
        n_records = records.size();
    }
    ctx.write_snapshot_and_meta();
    if (ctx.json_mode())
        ctx.out() << json{{"pairs", tc.n_pairs}, {"trace_steps", steps.size()}, {"pass_rate_records", n_records},
                          {"out_dir", dir.string()}}
                         .dump(2)
                  << '\n';
    else
        ctx.out() << fmt::format("simulate: {} pairs, {} trace steps, {} pass-rate records -> {}\n", tc.n_pairs,
                                 steps.size(), n_records, dir.string());
    return kOk;
}

int cmd_simulate(Context& ctx) {
    const auto mode = ctx.take<std::string>("simulate.mode", "sweep");
    if (mode == "traces") return simulate_traces(ctx);
    ExperimentConfig ec;
    ec.master_seed = ctx.seed();
    ec.workers = ctx.workers();
    ec.n_seeds = ctx.take<std::uint64_t>("simulate.n_seeds", 100);
    ec.delta_prob = ctx.take<double>("simulate.delta_prob", 0.05);
    ec.epsilon = ctx.take_optional<double>("simulate.epsilon");
    const bool svg = ctx.take<bool>("simulate.svg", true);
    if (ec.n_seeds == 0) throw DomainError("simulate.n_seeds must be at least 1");

    std::vector<ExperimentRow> rows;
    NoiseModel noise = NoiseModel::degenerate_zero();
    double epsilon = 0.1;
    std::size_t solution_count = 1;
    if (mode == "sweep") {
        SweepConfig sw;
        sw.lengths = ctx.take<std::vector<std::size_t>>("simulate.lengths", sw.lengths);
        sw.chain = chain_from(ctx);
        sw.noise = noise = noise_from(ctx, "simulate.noise");
        sw.correlation = parse_correlation(ctx.take<std::string>("simulate.correlation", to_string(sw.correlation)));
        sw.layout = parse_layout(ctx.take<std::string>("simulate.layout", to_string(sw.layout)));
        sw.weights = parse_weights(ctx.take<std::string>("simulate.weights", to_string(sw.weights)));
        epsilon = ec.epsilon.value_or(sw.chain.min_margin());
        ec.epsilon = epsilon;
        rows = run_length_sweep(sw, ec);
    } else if (mode == "composite") {
        const auto file = ctx.take<std::string>("simulate.composite_file", "");
        if (file.empty()) throw DomainError("simulate.composite_file is required in composite mode");
        std::ifstream is(file);
        if (!is) throw SchemaError(file, 0, "cannot open composite spec");
        json spec;
        try {
            spec = json::parse(is);
        } catch (const json::parse_error& e) {
            throw SchemaError(file, 0, e.what());
        }
        auto composite = ScreenedComposite::from_json(spec);
        if (ctx.node("simulate.noise")) composite.noise = noise_from(ctx, "simulate.noise");
        noise = composite.noise;
        solution_count = composite.correct_set().size();
        epsilon = ec.epsilon.value_or(0.1);
        ec.epsilon = epsilon;
        rows = run_screening_experiment(composite, ec);
    } else {
        throw DomainError("simulate.mode must be \"sweep\", \"composite\" or \"traces\"");
    }
    ctx.set("simulate.epsilon", epsilon);

    const auto summary = summarize(rows, noise, epsilon, ec.delta_prob, solution_count);
    const auto dir = ctx.prepare_out_dir();
    experiment_csv(rows).write(dir / "experiment.csv");
    write_text(dir / "summary.json", summary.to_json().dump(2) + "\n");
    if (svg && summary.by_length.size() >= 1) {
        report::SvgChart chart{"Mean log complexity ratio versus total length", "L1 + L2 (tokens)",
                               "mean ln(N composite / N1 N2)", {}, false};
        report::SvgSeries mean{"simulated mean", {}, {}, report::SvgSeries::Style::points};
        report::SvgSeries trend{"Delta L", {}, {}, report::SvgSeries::Style::line};
        report::SvgSeries floor{"Delta L / 4", {}, {}, report::SvgSeries::Style::line};
        for (const auto& ls : summary.by_length) {
            const double l = static_cast<double>(ls.L_total);
            mean.x.push_back(l);
            mean.y.push_back(ls.mean_log_ratio);
            trend.x.push_back(l);
            trend.y.push_back(summary.delta_theory * l);
            floor.x.push_back(l);
            floor.y.push_back(summary.delta_theory * l / 4.0);
        }
        chart.series = {mean, trend, floor};
        chart.write(dir / "log_ratio_vs_length.svg");
    }
    ctx.write_snapshot_and_meta();

    if (ctx.json_mode()) {
        ctx.out() << json{{"rows", rows.size()}, {"out_dir", dir.string()}, {"summary", summary.to_json()}}.dump(2)
                  << '\n';
        return kOk;
    }
    auto& o = ctx.out();
    o << fmt::format("simulate: {} rows -> {}\n", rows.size(), (dir / "experiment.csv").string());
    o << fmt::format("noise {}  epsilon = {}  Delta = {}  sigma = {}  M = {}\n", noise.describe(),
                     report::num(epsilon), report::num(summary.delta_theory), report::num(summary.sigma_theory),
                     report::num(summary.noise_bound));
    if (summary.vacuous_reason) o << "bounds not evaluated: " << *summary.vacuous_reason << '\n';
    o << fmt::format("{:>8} {:>6} {:>14} {:>10} {:>11} {:>11}\n", "L", "seeds", "mean ln ratio", "se",
                     "floor frac", "lemma viol");
    for (const auto& ls : summary.by_length)
        o << fmt::format("{:>8} {:>6} {:>14.6f} {:>10.6f} {:>11.4f} {:>11.4f}\n", ls.L_total, ls.n,
                         ls.mean_log_ratio, ls.se_log_ratio, ls.floor_fraction, ls.lemma_violation_rate);
    if (summary.slope_fit)
        o << fmt::format("slope of ln ratio vs L: {:.6f} +/- {:.6f} (Delta = {:.6f}, Delta/4 = {:.6f})\n",
                         summary.slope_fit->slope, summary.slope_fit->slope_se, summary.delta_theory,
                         summary.delta_theory / 4.0);
    if (summary.premise_violations > 0)
        o << fmt::format("steps outside the confidence floor: {}\n", summary.premise_violations);
    return kOk;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AnalyzeFlags {
    std::vector<std::string> traces, pass_rates;
    std::optional<std::size_t> min_overlap, resamples;
    std::optional<double> min_pass_rate;
};

std::vector<std::string> take_paths(Context& ctx, const std::vector<std::string>& flag, const std::string& key) {
    if (!flag.empty()) ctx.set(key, flag);
    return ctx.take<std::vector<std::string>>(key, {});
}

int cmd_analyze(Context& ctx, const AnalyzeFlags& f) {
    using report::num;
    const auto trace_files = take_paths(ctx, f.traces, "analyze.traces");
    const auto rate_files = take_paths(ctx, f.pass_rates, "analyze.pass_rates");
    const auto min_overlap = ctx.pick(f.min_overlap, "analyze.min_overlap", std::size_t{5});
    const auto resamples = ctx.pick(f.resamples, "analyze.resamples", std::size_t{1000});
    const auto min_pass_rate = ctx.pick(f.min_pass_rate, "analyze.min_pass_rate", 0.1);
    const bool apply_skip = ctx.take<bool>("analyze.apply_skip", true);
    const bool symmetrize = ctx.take<bool>("analyze.symmetrize", false);
    const double hist_bound = ctx.take<double>("analyze.hist_bound", 6.0);
    const auto hist_bins = ctx.take<std::size_t>("analyze.hist_bins", 48);
    const double outside_bound = ctx.take<double>("analyze.outside_bound", 4.0);
    const auto eps_grid = ctx.take<std::vector<double>>("analyze.epsilon_grid", analysis::default_epsilon_grid());
    const auto cdf_grid = ctx.take<std::vector<double>>("analyze.cdf_grid", analysis::default_cdf_grid());
    const bool svg = ctx.take<bool>("analyze.svg", true);

    std::vector<fs::path> paths(trace_files.begin(), trace_files.end());
    const auto steps = trace::read_jsonl_files(paths, ctx.workers());
    std::vector<trace::PassRateRecord> records;
    for (const auto& p : rate_files) {
        auto r = trace::read_pass_rates(fs::path(p));
        records.insert(records.end(), r.begin(), r.end());
    }
    if (steps.empty() && records.empty()) ctx.warn("no trace steps and no pass-rate records; writing empty tables");

    const auto dir = ctx.prepare_out_dir();
    json diag = json::object();

    // Noise extraction, histogram, assumption checks and Delta/sigma curves.
    const auto extraction = analysis::extract_noise(steps, min_overlap);
    auto xs = extraction.xs();
    diag["noise_extraction"] = {{"steps", extraction.steps.size()},
                                {"skipped_overlap", extraction.skipped_overlap},
                                {"unmatched", extraction.unmatched}};
    report::CsvTable hist{{"bin_low", "bin_high", "count", "density"}, {}};
    if (!xs.empty()) {
        const auto bins = analysis::histogram(xs, -hist_bound, hist_bound, hist_bins);
        for (const auto& b : bins)
            hist.rows.push_back({num(b.low), num(b.high), std::to_string(b.count),
                                 num(static_cast<double>(b.count) / (static_cast<double>(xs.size()) * (b.high - b.low)))});
    }
    hist.write(dir / "noise_hist.csv");

    report::CsvTable ds{{"epsilon", "delta", "delta_ci_low", "delta_ci_high", "sigma", "sigma_ci_low", "sigma_ci_high"},
                        {}};
    std::vector<analysis::DeltaSigmaPoint> curve;
    if (xs.size() >= 30) {
        diag["assumptions"] = analysis::assumption_diagnostics(xs, outside_bound).to_json();
        curve = analysis::empirical_delta_sigma(xs, eps_grid, resamples, ctx.seed(), symmetrize);
        for (const auto& p : curve)
            ds.rows.push_back({num(p.epsilon), num(p.delta), num(p.delta_ci.low), num(p.delta_ci.high), num(p.sigma),
                               num(p.sigma_ci.low), num(p.sigma_ci.high)});
    } else {
        diag["assumptions"] = nullptr;
        if (!steps.empty())
            ctx.warn(fmt::format("only {} noise samples; at least 30 are needed for diagnostics", xs.size()));
    }
    ds.write(dir / "delta_sigma.csv");

    // Length regression.
    const auto seqs = analysis::sequence_log_ratios(steps, apply_skip);
    report::CsvTable seq_table{{"pair_id", "length", "log_ratio"}, {}};
    for (const auto& s : seqs) seq_table.rows.push_back({s.pair_id, num(s.length), num(s.log_ratio)});
    seq_table.write(dir / "sequences.csv");
    report::CsvTable reg{{"n_pairs", "slope", "intercept", "slope_se", "slope_ci_low", "slope_ci_high", "resamples"},
                         {}};
    std::optional<analysis::RegressionResult> fit;
    if (!seqs.empty()) {
        try {
            fit = analysis::length_regression(seqs, resamples, ctx.seed());
            reg.rows.push_back({std::to_string(fit->fit.n), num(fit->fit.slope), num(fit->fit.intercept),
                                num(fit->fit.slope_se), num(fit->slope_ci.low), num(fit->slope_ci.high),
                                std::to_string(fit->resamples)});
        } catch (const DomainError& e) {
            ctx.warn(std::string("length regression skipped: ") + e.what());
        }
    }
    reg.write(dir / "regression.csv");

    // Hardness CDF over eligible problems.
    const auto eligible = analysis::filter_problems(records, min_pass_rate);
    const std::set<std::string> keep(eligible.begin(), eligible.end());
    std::vector<trace::PassRateRecord> kept;
    std::set<std::string> all_ids;
    for (const auto& r : records) {
        all_ids.insert(r.problem_id);
        if (keep.count(r.problem_id)) kept.push_back(r);
    }
    std::vector<std::string> excluded;
    for (const auto& id : all_ids)
        if (!keep.count(id)) excluded.push_back(id);
    report::CsvTable cdf{{"threshold", "cdf"}, {}};
    report::CsvTable ratios{{"problem_id", "ratio", "censored"}, {}};
    analysis::HardnessCdf hc;
    if (!kept.empty()) {
        hc = analysis::hardness_cdf(kept, cdf_grid);
        for (const auto& r : hc.ratios) ratios.rows.push_back({r.problem_id, num(r.ratio), r.censored ? "1" : "0"});
        if (!hc.ratios.empty())
            for (const auto& p : hc.table) cdf.rows.push_back({num(p.threshold), num(p.cdf)});
    }
    cdf.write(dir / "cdf.csv");
    ratios.write(dir / "ratios.csv");
    diag["pass_rates"] = {{"problems", all_ids.size()},
                          {"eligible", eligible.size()},
                          {"excluded_low_pass_rate", excluded},
                          {"skipped_zero_pass", hc.skipped}};
    diag["regression"] = fit ? json{{"n_pairs", fit->fit.n}, {"slope", fit->fit.slope},
                                    {"slope_ci", {fit->slope_ci.low, fit->slope_ci.high}}}
                             : json(nullptr);
    write_text(dir / "diagnostics.json", diag.dump(2) + "\n");

    if (svg) {
        using Style = report::SvgSeries::Style;
        if (!hc.ratios.empty()) {
            report::SvgSeries s{"CDF", {}, {}, Style::step};
            for (const auto& p : hc.table) {
                s.x.push_back(p.threshold);
                s.y.push_back(p.cdf);
            }
            report::SvgChart{"CDF of the complexity ratio", "N(composite) / (N1 N2)", "fraction of problems", {s}, true}
                .write(dir / "cdf.svg");
        }
        if (fit) {
            report::SvgSeries pts{"pairs", {}, {}, Style::points}, line{"OLS fit", {}, {}, Style::line};
            double lo = seqs.front().length, hi = lo;
            for (const auto& s : seqs) {
                pts.x.push_back(s.length);
                pts.y.push_back(s.log_ratio);
                lo = std::min(lo, s.length);
                hi = std::max(hi, s.length);
            }
            line.x = {lo, hi};
            line.y = {fit->fit.intercept + fit->fit.slope * lo, fit->fit.intercept + fit->fit.slope * hi};
            report::SvgChart{"Log probability ratio versus length", "scored tokens", "ln P standalone - ln P composite",
                             {pts, line}, false}
                .write(dir / "regression.svg");
        }
        if (!xs.empty()) {
            report::SvgSeries s{"density", {}, {}, Style::step};
            for (const auto& row : hist.rows) {
                s.x.push_back(std::stod(row[0]));
                s.y.push_back(std::stod(row[3]));
            }
            report::SvgChart{"Weighted logit noise X", "X", "density", {s}, false}.write(dir / "noise_hist.svg");
        }
        if (!curve.empty()) {
            report::SvgSeries d{"Delta", {}, {}, Style::line}, sg{"sigma", {}, {}, Style::line};
            for (const auto& p : curve) {
                d.x.push_back(p.epsilon);
                d.y.push_back(p.delta);
                sg.x.push_back(p.epsilon);
                sg.y.push_back(p.sigma);
            }
            report::SvgChart{"Renormalizing term: mean and standard deviation", "epsilon", "value", {d, sg}, false}
                .write(dir / "delta_sigma.svg");
        }
    }
    ctx.write_snapshot_and_meta();

    if (ctx.json_mode()) {
        ctx.out() << json{{"out_dir", dir.string()}, {"diagnostics", diag}}.dump(2) << '\n';
        return kOk;
    }
    auto& o = ctx.out();
    o << fmt::format("analyze: {} trace steps, {} pass-rate records -> {}\n", steps.size(), records.size(),
                     dir.string());
    o << fmt::format("noise samples {} (skipped for overlap {}, unmatched {})\n", xs.size(), extraction.skipped_overlap,
                     extraction.unmatched);
    if (fit)
        o << fmt::format("length regression: slope {:.6f} [{:.6f}, {:.6f}] over {} pairs\n", fit->fit.slope,
                         fit->slope_ci.low, fit->slope_ci.high, fit->fit.n);
    if (!hc.ratios.empty())
        o << fmt::format("hardness ratios: {} problems ({} excluded by pass rate, {} zero-pass)\n", hc.ratios.size(),
                         excluded.size(), hc.skipped.size());
    return kOk;
}

// ---------------------------------------------------------------------------
// compose
// ---------------------------------------------------------------------------

struct ComposeFlags {
    std::optional<std::string> problems, tmpl, pairing, pairs_file;
    std::optional<std::size_t> max_tests;
};

std::vector<std::pair<std::string, std::string>> read_pair_list(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw SchemaError(path, 0, "cannot open pair list");
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    for (std::size_t n = 1; std::getline(is, line); ++n) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || (n == 1 && line == "first,second")) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
            throw SchemaError(path, n, "expected first,second");
        out.emplace_back(line.substr(0, comma), line.substr(comma + 1));
    }
    return out;
}

// Bad option values are usage errors, not input-schema errors.
template <class F>
auto as_usage(F&& f) {
    try {
        return f();
    } catch (const DomainError& e) {
        throw UsageError(e.what());
    }
}

int cmd_compose(Context& ctx, const ComposeFlags& f) {
    const auto problems_path = ctx.pick(f.problems, "compose.problems", std::string{});
    if (problems_path.empty()) throw UsageError("compose needs --problems (or compose.problems)");
    const auto tmpl = as_usage([&] { return composer::parse_template(ctx.pick(f.tmpl, "compose.template", std::string{"product"})); });
    composer::ComposeOptions opt;
    opt.max_tests = ctx.pick(f.max_tests, "compose.max_tests", opt.max_tests);
    opt.seed = ctx.seed();
    composer::Pairing pairing;
    const auto pairs_file = ctx.pick(f.pairs_file, "compose.pairs_file", std::string{});
    if (!pairs_file.empty()) {
        pairing.kind = composer::Pairing::Kind::explicit_list;
        pairing.pairs = read_pair_list(pairs_file);
    } else {
        pairing = as_usage([&] { return composer::Pairing::parse(ctx.pick(f.pairing, "compose.pairing", std::string{"adjacent"})); });
    }

    const auto dataset = composer::read_problems(fs::path(problems_path));
    const auto result = composer::batch_compose(dataset, pairing, tmpl, opt);
    const auto dir = ctx.prepare_out_dir();
    composer::write_composites(dir / "composites.jsonl", result.composites);
    report::CsvTable skipped{{"first", "second", "reason"}, {}};
    for (const auto& s : result.skipped) skipped.rows.push_back({s.first, s.second, s.reason});
    skipped.write(dir / "skipped.csv");
    ctx.write_snapshot_and_meta();

    if (ctx.json_mode()) {
        json sk = json::array();
        for (const auto& s : result.skipped) sk.push_back({{"first", s.first}, {"second", s.second}, {"reason", s.reason}});
        ctx.out() << json{{"composites", result.composites.size()}, {"skipped", sk}, {"out_dir", dir.string()}}.dump(2)
                  << '\n';
        return kOk;
    }
    ctx.out() << fmt::format("compose: {} problems, template {} -> {} composites, {} pairs skipped\n", dataset.size(),
                             composer::to_string(tmpl), result.composites.size(), result.skipped.size());
    for (const auto& s : result.skipped) ctx.out() << fmt::format("  skipped ({}, {}): {}\n", s.first, s.second, s.reason);
    return kOk;
}

// ---------------------------------------------------------------------------
// record
// ---------------------------------------------------------------------------

struct RecordFlags {
    std::optional<std::string> base_url, model, auth_env, prompts, pairs, verdicts;
    std::optional<std::uint64_t> n_samples;
    std::optional<unsigned> concurrency;
    std::optional<int> max_retries;
    std::optional<double> timeout, backoff_base;
    std::optional<std::size_t> limit, skip_prefix;
    bool resume = false;
};

int cmd_record(Context& ctx, const RecordFlags& f) {
    client::EndpointConfig ec;
    ec.base_url = ctx.pick(f.base_url, "record.base_url", ec.base_url);
    ec.model_name = ctx.pick(f.model, "record.model_name", ec.model_name);
    ec.temperature = ctx.take<double>("record.temperature", ec.temperature);
    ec.top_p = ctx.take<double>("record.top_p", ec.top_p);
    ec.n_samples = ctx.pick(f.n_samples, "record.n_samples", ec.n_samples);
    ec.logprobs_top_k = ctx.take<std::size_t>("record.logprobs_top_k", ec.logprobs_top_k);
    ec.timeout_s = ctx.pick(f.timeout, "record.timeout_s", ec.timeout_s);
    ec.max_retries = ctx.pick(f.max_retries, "record.max_retries", ec.max_retries);
    ec.auth_env = ctx.pick(f.auth_env, "record.auth_env", ec.auth_env);
    ec.max_tokens = ctx.take<std::size_t>("record.max_tokens", ec.max_tokens);
    ec.concurrency = ctx.pick(f.concurrency, "record.concurrency", ec.concurrency);
    ec.backoff_base_s = ctx.pick(f.backoff_base, "record.backoff_base_s", ec.backoff_base_s);
    ec.backoff_factor = ctx.take<double>("record.backoff_factor", ec.backoff_factor);
    ec.seed = ctx.seed();
    const auto prompts_path = ctx.pick(f.prompts, "record.prompts", std::string{});
    const auto pairs_path = ctx.pick(f.pairs, "record.pairs", std::string{});
    const auto verdicts_path = ctx.pick(f.verdicts, "record.verdicts", std::string{});
    const auto skip_prefix = ctx.pick(f.skip_prefix, "record.skip_prefix", std::size_t{10});
    if (prompts_path.empty() && pairs_path.empty()) throw UsageError("record needs --prompts and/or --pairs");
    try {
        ec.validate();
    } catch (const DomainError& e) {
        throw UsageError(e.what());
    }

    const auto dir = ctx.prepare_out_dir();
    if (!f.resume && !prompts_path.empty() && !client::read_manifest(dir).empty())
        throw UsageError("output directory already holds a manifest; pass --resume to continue it");

    const client::CompletionsClient cl(ec);
    json per_prompt = json::array();
    std::size_t failed = 0, completed = 0, already = 0;
    if (!prompts_path.empty()) {
        const auto prompts = client::read_prompts(prompts_path);
        for (const auto& p : prompts) {
            const auto outcome = client::sample_solutions(cl, p, dir, f.limit);
            failed += outcome.failed;
            completed += outcome.completed;
            already += outcome.already_done;
            per_prompt.push_back({{"problem_id", p.problem_id},
                                  {"kind", trace::to_string(p.kind)},
                                  {"requested", outcome.requested},
                                  {"already_done", outcome.already_done},
                                  {"completed", outcome.completed},
                                  {"failed", outcome.failed},
                                  {"errors", outcome.errors}});
        }
        std::optional<fs::path> verdicts;
        if (!verdicts_path.empty()) verdicts = verdicts_path;
        trace::write_pass_rates(dir / "pass_rates.csv", client::judge_manifest(client::read_manifest(dir), prompts, verdicts));
    }
    std::size_t scored_pairs = 0;
    if (!pairs_path.empty()) {
        // On resume, pairs already present in scored.jsonl are kept and not scored again.
        std::vector<trace::TraceStep> all;
        std::set<std::string> done;
        if (f.resume && fs::exists(dir / "scored.jsonl")) {
            all = trace::read_jsonl(dir / "scored.jsonl");
            for (const auto& s : all) done.insert(s.pair_id);
        }
        for (const auto& pair : client::read_pairs(pairs_path)) {
            if (done.count(pair.pair_id)) continue;
            auto steps = client::score_pair(cl, pair, skip_prefix);
            all.insert(all.end(), std::make_move_iterator(steps.begin()), std::make_move_iterator(steps.end()));
            ++scored_pairs;
        }
        trace::write_jsonl(dir / "scored.jsonl", all);
    }
    ctx.write_snapshot_and_meta({{"endpoint", ec.to_json()}, {"requests", cl.attempts()}, {"prompts", per_prompt}});

    if (ctx.json_mode()) {
        ctx.out() << json{{"completed", completed}, {"already_done", already}, {"failed", failed},
                          {"scored_pairs", scored_pairs}, {"out_dir", dir.string()}}
                         .dump(2)
                  << '\n';
    } else {
        ctx.out() << fmt::format("record: {} new samples, {} already present, {} failed, {} pairs scored -> {}\n",
                                 completed, already, failed, scored_pairs, dir.string());
    }
    return failed > 0 ? kPartialFailure : kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Screening-noise simulator and trace analysis toolkit", "screening"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    Globals g;
    app.add_option("--config", g.config, "Run configuration file (TOML subset)");
    app.add_option("--seed", g.seed, "Master seed");
    app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out-dir", g.out_dir, "Output directory");
    app.add_option("--set", g.overrides, "Override a config key: key=value (repeatable)");
    app.add_flag("--json", g.json, "Machine-readable output on stdout");

    BoundsFlags bf;
    auto* bounds = app.add_subcommand("bounds", "Length thresholds and complexity-gap bounds");
    bounds->add_option("--delta", bf.delta, "Mean renormalizing term Delta");
    bounds->add_option("--sigma", bf.sigma, "Standard deviation of the renormalizing term");
    bounds->add_option("--noise-bound", bf.noise_bound, "Noise bound M");
    bounds->add_option("--delta-prob", bf.delta_prob, "Failure probability delta in (0, 1) [default e^-1]");
    bounds->add_option("--solution-count", bf.solution_count, "Number of solutions N");
    bounds->add_option("--length", bf.length, "Total solution length L for the gap factor");
    bounds->add_option("--epsilon", bf.epsilon, "Confidence floor epsilon in (0, 0.5)");
    bounds->add_option("--noise-std", bf.noise_std, "Derive Delta and sigma from a truncated Gaussian of this std");

    auto* simulate = app.add_subcommand("simulate", "Run a screening experiment from the config");

    AnalyzeFlags af;
    auto* analyze = app.add_subcommand("analyze", "Analyze trace and pass-rate files");
    analyze->add_option("--traces", af.traces, "Trace JSONL files");
    analyze->add_option("--pass-rates", af.pass_rates, "Pass-rate CSV files");
    analyze->add_option("--min-overlap", af.min_overlap, "Shared top-k tokens required per step");
    analyze->add_option("--resamples", af.resamples, "Bootstrap resamples");
    analyze->add_option("--min-pass-rate", af.min_pass_rate, "Standalone pass-rate filter");

    ComposeFlags cf;
    auto* compose = app.add_subcommand("compose", "Build composite problems from a problem dataset");
    compose->add_option("--problems", cf.problems, "Problem JSONL file");
    compose->add_option("--template", cf.tmpl, "bool_gate, product or sequential_io");
    compose->add_option("--pairing", cf.pairing, "adjacent, random or random:<seed>");
    compose->add_option("--pairs-file", cf.pairs_file, "Explicit pair list (first,second per line)");
    compose->add_option("--max-tests", cf.max_tests, "Cap on combined tests per composite");

    RecordFlags rf;
    auto* record = app.add_subcommand("record", "Record samples and scored traces from a completions endpoint");
    record->add_option("--base-url", rf.base_url, "Endpoint base URL (http://host:port/v1)");
    record->add_option("--model", rf.model, "Model name sent with each request");
    record->add_option("--auth-env", rf.auth_env, "Environment variable holding the bearer token");
    record->add_option("--prompts", rf.prompts, "Prompt JSONL file to sample");
    record->add_option("--pairs", rf.pairs, "Pair JSONL file to score");
    record->add_option("--verdicts", rf.verdicts, "External verdict CSV");
    record->add_option("--n-samples", rf.n_samples, "Samples per prompt");
    record->add_option("--concurrency", rf.concurrency, "Concurrent requests");
    record->add_option("--max-retries", rf.max_retries, "Retries per request");
    record->add_option("--timeout", rf.timeout, "Request timeout in seconds");
    record->add_option("--backoff-base", rf.backoff_base, "First retry delay in seconds");
    record->add_option("--limit", rf.limit, "Cap on new requests per prompt");
    record->add_option("--skip-prefix", rf.skip_prefix, "Leading tokens per part flagged as skipped");
    record->add_flag("--resume", rf.resume, "Continue an existing manifest");

    for (auto* sub : {bounds, simulate, analyze, compose, record}) sub->fallthrough();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kOk : kUsage;
    }

    const auto* sub = app.get_subcommands().front();
    try {
        Context ctx(g, sub->get_name(), out, err);
        if (sub == bounds) return cmd_bounds(ctx, bf);
        if (sub == simulate) return cmd_simulate(ctx);
        if (sub == analyze) return cmd_analyze(ctx, af);
        if (sub == compose) return cmd_compose(ctx, cf);
        return cmd_record(ctx, rf);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const SchemaError& e) {
        err << "input error: " << e.what() << '\n';
        return kSchema;
    } catch (const BoundVacuous& e) {
        err << "premise error: " << e.what() << '\n';
        return kPremise;
    } catch (const EnumerationGuard& e) {
        err << "premise error: " << e.what() << '\n';
        return kPremise;
    } catch (const NetworkError& e) {
        err << "network error: " << e.what() << '\n';
        return kNetwork;
    } catch (const UnsupportedEndpoint& e) {
        err << "endpoint error: " << e.what() << '\n';
        return kNetwork;
    } catch (const DomainError& e) {
        err << "invalid input: " << e.what() << '\n';
        return kSchema;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }
}

}  // namespace screening::cli
