#include "screening/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/core.h>

#include "screening/errors.hpp"

namespace screening {

namespace {

constexpr double kSlack = 1e-9;

template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
    }
    if (error) std::rethrow_exception(error);
}

double theory_delta(const NoiseModel& noise, double epsilon) {
    if (noise.is_degenerate()) return 0.0;
    return delta_estimate(epsilon, noise).value;
}

ExperimentRow compute_row(const ScreenedComposite& composite, std::uint64_t master_seed, std::uint64_t realization,
                          std::uint64_t seed, double epsilon, double delta_theory) {
    const ScreenedModel model(composite, master_seed, realization);
    const auto correct = composite.correct_set();
    const Sequence reference = composite.reference_solution();
    const Token term = model.terminator();

    ExperimentRow row;
    row.seed = seed;
    row.L_total = composite.min_total_len();
    row.log_n_composite = enumerate_complexity(model, correct).log_value;
    // N1 N2 equals the complexity of the noise-free chained model over the same correct set;
    // summing the same way as the composite keeps zero-noise ratios exactly 1.
    row.log_n_product = enumerate_complexity(model.standalone(), correct).log_value;
    row.log_ratio = row.log_n_composite - row.log_n_product;

    double renorm_sum = 0.0;
    std::size_t renorm_steps = 0;
    row.step_log_ratio.reserve(reference.size());
    for (const auto& rec : model.trace(reference)) {
        const std::size_t c = rec.correct_token_index;
        const double p0 = rec.probs_standalone[c];
        const double p1 = rec.probs_composite[c];
        row.step_log_ratio.push_back(std::log(p0) - std::log(p1));
        if (p0 > 0.0 && p0 < 1.0) {
            if (p0 < epsilon - 1e-12 || p0 > 1.0 - epsilon + 1e-12) ++row.premise_violations;
            if (rec.weighted_noise_x && static_cast<Token>(c) != term) {
                renorm_sum += renorm_term(p0, *rec.weighted_noise_x);
                ++renorm_steps;
            }
        }
    }
    for (double v : row.step_log_ratio) row.reference_log_ratio += v;
    row.delta_hat = renorm_steps ? renorm_sum / static_cast<double>(renorm_steps) : 0.0;

    const double floor = delta_theory * static_cast<double>(row.L_total) / 4.0;
    row.lemma_violation = row.reference_log_ratio < floor - kSlack;
    row.theorem_violation = row.log_ratio < floor - kSlack;
    return row;
}

}  // namespace

std::string to_string(ProbSchedule s) {
    switch (s) {
        case ProbSchedule::fixed: return "fixed";
        case ProbSchedule::alternate: return "alternate";
        case ProbSchedule::uniform: return "uniform";
    }
    return "?";
}

ProbSchedule parse_schedule(const std::string& s) {
    if (s == "fixed") return ProbSchedule::fixed;
    if (s == "alternate") return ProbSchedule::alternate;
    if (s == "uniform") return ProbSchedule::uniform;
    throw DomainError("unknown probability schedule \"" + s + "\"");
}

void ChainSpec::validate() const {
    if (vocab_size < 3 || vocab_size > 27) throw DomainError("chain vocab_size must lie in [3, 27]");
    if (schedule == ProbSchedule::uniform) {
        if (!(prob_low > 0.0 && prob_low <= prob_high && prob_high < 1.0))
            throw DomainError("chain probabilities need 0 < prob_low <= prob_high < 1");
    } else if (!(prob > 0.0 && prob < 1.0)) {
        throw DomainError("chain prob must lie in (0, 1)");
    }
}

double ChainSpec::min_margin() const {
    if (schedule == ProbSchedule::uniform) return std::min(prob_low, 1.0 - prob_high);
    return std::min(prob, 1.0 - prob);
}

ToyProblem make_chain_problem(std::string id, std::size_t length, const ChainSpec& spec, RngStream& rng) {
    spec.validate();
    if (length == 0) throw DomainError("chain length must be positive");
    const std::size_t letters = spec.vocab_size - 1;
    std::vector<std::string> vocab;
    for (std::size_t i = 0; i < letters; ++i) vocab.emplace_back(1, static_cast<char>('a' + i));
    vocab.emplace_back("$");

    PositionalRule rule;
    Sequence reference;
    for (std::size_t t = 0; t < length; ++t) {
        double p = spec.prob;
        if (spec.schedule == ProbSchedule::alternate && t % 2 == 1) p = 1.0 - spec.prob;
        if (spec.schedule == ProbSchedule::uniform) p = spec.prob_low + (spec.prob_high - spec.prob_low) * rng.uniform();
        const auto c = static_cast<Token>(rng.below(letters));
        std::vector<double> d(spec.vocab_size, (1.0 - p) / static_cast<double>(letters - 1));
        d[static_cast<std::size_t>(c)] = p;
        d.back() = 0.0;
        rule.dists.push_back(std::move(d));
        reference.push_back(c);
    }
    reference.push_back(static_cast<Token>(letters));
    auto lm = std::make_shared<const ToyLM>(std::move(vocab), "$", length, std::move(rule));
    return ToyProblem::make(std::move(id), std::move(lm), {std::move(reference)});
}

// ---------------------------------------------------------------------------

std::vector<ExperimentRow> run_screening_experiment(const ScreenedComposite& composite, const ExperimentConfig& cfg) {
    composite.validate();
    const double epsilon = cfg.epsilon.value_or(0.1);
    const double delta = theory_delta(composite.noise, epsilon);
    std::vector<ExperimentRow> rows(cfg.n_seeds);
    parallel_for(rows.size(), cfg.workers, [&](std::size_t s) {
        rows[s] = compute_row(composite, cfg.master_seed, s, s, epsilon, delta);
    });
    return rows;
}

std::vector<ExperimentRow> run_length_sweep(const SweepConfig& sweep, const ExperimentConfig& cfg) {
    sweep.chain.validate();
    for (auto L : sweep.lengths)
        if (L < 2) throw DomainError("sweep lengths must be at least 2");
    const double epsilon = cfg.epsilon.value_or(sweep.chain.min_margin());
    const double delta = theory_delta(sweep.noise, epsilon);
    const std::size_t per_length = cfg.n_seeds;
    std::vector<ExperimentRow> rows(sweep.lengths.size() * per_length);
    parallel_for(rows.size(), cfg.workers, [&](std::size_t idx) {
        const std::size_t L = sweep.lengths[idx / per_length];
        const std::uint64_t s = idx % per_length;
        RngStream rng(cfg.master_seed, stream_id({tag("chain"), L, s}));
        RngStream r1 = rng.substream(1), r2 = rng.substream(2);
        ScreenedComposite c{make_chain_problem(fmt::format("chain-{}-{}-a", L, s), L / 2, sweep.chain, r1),
                            make_chain_problem(fmt::format("chain-{}-{}-b", L, s), L - L / 2, sweep.chain, r2),
                            sweep.noise,
                            sweep.correlation,
                            sweep.layout,
                            sweep.weights};
        rows[idx] = compute_row(c, cfg.master_seed, stream_id({tag("sweep"), L, s}), s, epsilon, delta);
    });
    return rows;
}

ExperimentSummary summarize(const std::vector<ExperimentRow>& rows, const NoiseModel& noise, double epsilon,
                            double delta_prob, std::size_t solution_count) {
    ExperimentSummary sum;
    sum.epsilon = epsilon;
    sum.delta_prob = delta_prob;
    sum.noise_bound = noise.bound();
    sum.conformance = noise.conformance();
    std::optional<RenormStats> rs;
    if (noise.is_degenerate()) {
        sum.vacuous_reason = "noise model is degenerate";
    } else {
        sum.delta_theory = delta_estimate(epsilon, noise).value;
        sum.sigma_theory = sigma_estimate(epsilon, noise).value;
        try {
            rs = RenormStats::make(epsilon, sum.delta_theory, sum.sigma_theory, sum.noise_bound);
        } catch (const Error& e) {
            sum.vacuous_reason = e.what();
        }
    }

    std::map<std::size_t, std::vector<const ExperimentRow*>> groups;
    for (const auto& r : rows) {
        groups[r.L_total].push_back(&r);
        sum.premise_violations += r.premise_violations;
    }
    for (const auto& [L, members] : groups) {
        LengthSummary ls;
        ls.L_total = L;
        ls.n = members.size();
        std::vector<double> lr;
        std::size_t floor_ok = 0, lemma_bad = 0, theorem_bad = 0;
        const double floor = sum.delta_theory * static_cast<double>(L) / 4.0;
        for (const auto* r : members) {
            lr.push_back(r->log_ratio);
            floor_ok += r->log_ratio >= floor - kSlack;
            lemma_bad += r->lemma_violation;
            theorem_bad += r->theorem_violation;
        }
        const double n = static_cast<double>(ls.n);
        ls.mean_log_ratio = stats::mean(lr);
        ls.se_log_ratio = ls.n > 1 ? std::sqrt(stats::variance(lr) / n) : 0.0;
        ls.floor_fraction = floor_ok / n;
        ls.lemma_violation_rate = lemma_bad / n;
        ls.theorem_violation_rate = theorem_bad / n;
        if (rs) {
            try {
                ls.lemma_threshold = lemma1_length_threshold(*rs, delta_prob);
                ls.theorem_threshold = theorem1_length_threshold(
                    *rs, BoundParams::make(delta_prob, static_cast<double>(solution_count), static_cast<double>(L)));
                ls.above_lemma_threshold = static_cast<double>(L) >= *ls.lemma_threshold;
                ls.above_theorem_threshold = static_cast<double>(L) >= *ls.theorem_threshold;
            } catch (const Error& e) {
                sum.vacuous_reason = e.what();
            }
        }
        sum.by_length.push_back(ls);
    }
    if (groups.size() >= 2) {
        std::vector<double> x, y;
        for (const auto& r : rows) {
            x.push_back(static_cast<double>(r.L_total));
            y.push_back(r.log_ratio);
        }
        sum.slope_fit = stats::ols(x, y);
    }
    return sum;
}

nlohmann::json ExperimentSummary::to_json() const {
    nlohmann::json j;
    j["epsilon"] = epsilon;
    j["delta_prob"] = delta_prob;
    j["delta_theory"] = delta_theory;
    j["sigma_theory"] = sigma_theory;
    j["noise_bound"] = noise_bound;
    j["bounds_vacuous"] = vacuous_reason ? nlohmann::json(*vacuous_reason) : nlohmann::json(nullptr);
    j["conformance"] = {{"symmetric", conformance.symmetric},
                        {"bounded", conformance.bounded},
                        {"continuous", conformance.continuous},
                        {"notes", conformance.notes}};
    j["premise_violations"] = premise_violations;
    auto& arr = j["by_length"] = nlohmann::json::array();
    for (const auto& ls : by_length) {
        nlohmann::json e{{"L_total", ls.L_total},
                         {"n", ls.n},
                         {"mean_log_ratio", ls.mean_log_ratio},
                         {"se_log_ratio", ls.se_log_ratio},
                         {"floor_fraction", ls.floor_fraction},
                         {"lemma_violation_rate", ls.lemma_violation_rate},
                         {"theorem_violation_rate", ls.theorem_violation_rate},
                         {"above_lemma_threshold", ls.above_lemma_threshold},
                         {"above_theorem_threshold", ls.above_theorem_threshold}};
        e["lemma_threshold"] = ls.lemma_threshold ? nlohmann::json(*ls.lemma_threshold) : nlohmann::json(nullptr);
        e["theorem_threshold"] = ls.theorem_threshold ? nlohmann::json(*ls.theorem_threshold) : nlohmann::json(nullptr);
        arr.push_back(std::move(e));
    }
    if (slope_fit)
        j["slope"] = {{"slope", slope_fit->slope}, {"slope_se", slope_fit->slope_se}, {"intercept", slope_fit->intercept}};
    else
        j["slope"] = nullptr;
    return j;
}

report::CsvTable experiment_csv(const std::vector<ExperimentRow>& rows) {
    report::CsvTable t;
    t.header = {"seed", "L_total", "N_composite", "N_product", "log_ratio", "delta_hat", "premise_violations"};
    for (const auto& r : rows)
        t.rows.push_back({std::to_string(r.seed), std::to_string(r.L_total), report::exp_of_log(r.log_n_composite),
                          report::exp_of_log(r.log_n_product), report::num(r.log_ratio), report::num(r.delta_hat),
                          std::to_string(r.premise_violations)});
    return t;
}

std::vector<trace::PassRateRecord> simulate_pass_rates(const ScreenedComposite& composite,
                                                       const std::string& problem_id, std::uint64_t master_seed,
                                                       std::uint64_t realization, std::uint64_t n_samples,
                                                       const SamplerConfig& sampler, unsigned workers) {
    const ScreenedModel model(composite, master_seed, realization);
    const auto correct = composite.correct_set();
    auto seed_for = [&](const char* what) { return stream_id({master_seed, tag(what), realization}); };
    const auto e1 = mc_complexity(*composite.first.lm, composite.first.correct_set, n_samples, sampler,
                                  seed_for("pass-1"), workers);
    const auto e2 = mc_complexity(*composite.second.lm, composite.second.correct_set, n_samples, sampler,
                                  seed_for("pass-2"), workers);
    const auto ec = mc_complexity(model, correct, n_samples, sampler, seed_for("pass-c"), workers);
    return {{problem_id, trace::PassKind::standalone_1, e1.n_samples, e1.n_correct},
            {problem_id, trace::PassKind::standalone_2, e2.n_samples, e2.n_correct},
            {problem_id, trace::PassKind::composite, ec.n_samples, ec.n_correct}};
}

// ---------------------------------------------------------------------------

std::vector<trace::TraceStep> synthesize_pair_traces(const ScreenedComposite& composite, const std::string& pair_id,
                                                     std::uint64_t master_seed, std::uint64_t realization,
                                                     std::size_t skip_prefix, double offset_scale) {
    const ScreenedModel model(composite, master_seed, realization);
    const Sequence ref = composite.reference_solution();
    const Token term = model.terminator();
    const std::size_t first_len = composite.first.correct_set.front().size();  // includes its terminator
    RngStream offsets(master_seed, stream_id({tag("trace-offset"), realization}));

    std::vector<trace::TraceStep> stand, comp;
    std::uint64_t index = 0;
    for (std::size_t t = 0; t < ref.size(); ++t) {
        if (ref[t] == term) continue;
        const std::span<const Token> prefix(ref.data(), t);
        const auto p = model.standalone().next_probs(prefix);
        const auto lq = model.next_log_probs(prefix);
        offsets.seek(2 * t);
        const double off_s = offset_scale * (2.0 * offsets.uniform() - 1.0);
        const double off_c = offset_scale * (2.0 * offsets.uniform() - 1.0);
        const std::size_t part_pos = t < first_len ? t : t - first_len;

        auto make = [&](trace::Variant v, auto logit_of) {
            trace::TraceStep s;
            s.pair_id = pair_id;
            s.variant = v;
            s.step_index = index;
            s.correct_token_id = ref[t];
            for (std::size_t i = 0; i < p.size(); ++i)
                if (p[i] > 0.0) s.topk.emplace_back(static_cast<std::int64_t>(i), logit_of(i));
            std::stable_sort(s.topk.begin(), s.topk.end(),
                             [](const auto& a, const auto& b) { return a.second > b.second; });
            s.chosen_token_id = s.topk.front().first;
            s.skip_prefix_flag = part_pos < skip_prefix;
            return s;
        };
        stand.push_back(make(trace::Variant::standalone, [&](std::size_t i) { return std::log(p[i]) + off_s; }));
        comp.push_back(make(trace::Variant::composite, [&](std::size_t i) { return lq[i] + off_c; }));
        ++index;
    }
    stand.insert(stand.end(), comp.begin(), comp.end());
    return stand;
}

ScreenedComposite trace_dataset_composite(const TraceDatasetConfig& cfg, std::size_t i) {
    if (cfg.min_part_len == 0 || cfg.min_part_len > cfg.max_part_len)
        throw DomainError("trace dataset needs 0 < min_part_len <= max_part_len");
    RngStream rng(cfg.master_seed, stream_id({tag("trace-pair"), i}));
    const std::size_t span = cfg.max_part_len - cfg.min_part_len + 1;
    const std::size_t l1 = cfg.min_part_len + rng.below(span);
    const std::size_t l2 = cfg.min_part_len + rng.below(span);
    RngStream r1 = rng.substream(1), r2 = rng.substream(2);
    const std::string id = trace_dataset_pair_id(i);
    return ScreenedComposite{make_chain_problem(id + "-a", l1, cfg.chain, r1),
                             make_chain_problem(id + "-b", l2, cfg.chain, r2),
                             cfg.noise,
                             NoiseCorrelation::iid_per_step,
                             cfg.layout,
                             WeightSource::standalone};
}

std::string trace_dataset_pair_id(std::size_t i) { return fmt::format("pair-{:04d}", i); }

std::vector<trace::TraceStep> synthesize_trace_dataset(const TraceDatasetConfig& cfg) {
    std::vector<trace::TraceStep> out;
    for (std::size_t i = 0; i < cfg.n_pairs; ++i) {
        const auto c = trace_dataset_composite(cfg, i);
        auto steps = synthesize_pair_traces(c, trace_dataset_pair_id(i), cfg.master_seed, i, cfg.skip_prefix);
        out.insert(out.end(), std::make_move_iterator(steps.begin()), std::make_move_iterator(steps.end()));
    }
    return out;
}

std::vector<trace::PassRateRecord> synthesize_pass_rate_dataset(const TraceDatasetConfig& cfg, std::uint64_t n_samples,
                                                                const SamplerConfig& sampler, unsigned workers) {
    std::vector<trace::PassRateRecord> out;
    for (std::size_t i = 0; i < cfg.n_pairs; ++i) {
        const auto c = trace_dataset_composite(cfg, i);
        auto r = simulate_pass_rates(c, trace_dataset_pair_id(i), cfg.master_seed, i, n_samples, sampler, workers);
        out.insert(out.end(), r.begin(), r.end());
    }
    return out;
}

}  // namespace screening
