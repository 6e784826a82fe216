#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "screening/errors.hpp"
#include "screening/experiment.hpp"
#include "screening/stats.hpp"

using namespace screening;
using Catch::Matchers::WithinAbs;

namespace {

ScreenedComposite chain_composite(std::size_t l1, std::size_t l2, const ChainSpec& spec, NoiseModel noise,
                                  NoiseLayout layout, std::uint64_t seed = 1) {
    RngStream rng(seed, tag("test-chain"));
    return ScreenedComposite{make_chain_problem("a", l1, spec, rng), make_chain_problem("b", l2, spec, rng),
                             std::move(noise), NoiseCorrelation::iid_per_step, layout};
}

std::vector<double> log_ratios(const std::vector<ExperimentRow>& rows) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.log_ratio);
    return v;
}

}  // namespace

TEST_CASE("chain problems follow their schedule") {
    ChainSpec spec;
    spec.vocab_size = 4;
    spec.schedule = ProbSchedule::alternate;
    spec.prob = 0.2;
    RngStream rng(3, 3);
    const auto p = make_chain_problem("c", 6, spec, rng);
    CHECK(p.min_solution_len == 6);
    CHECK(p.solution_count() == 1);
    const auto& y = p.correct_set.front();
    CHECK(y.size() == 7);
    for (std::size_t t = 0; t < 6; ++t) {
        const auto probs = p.lm->next_probs(std::span(y).first(t));
        CHECK_THAT(probs[y[t]], WithinAbs(t % 2 == 0 ? 0.2 : 0.8, 1e-15));
        CHECK(probs[p.lm->terminator()] == 0.0);
    }
    CHECK_THAT(spec.min_margin(), WithinAbs(0.2, 1e-15));
    spec.vocab_size = 40;
    CHECK_THROWS_AS(spec.validate(), DomainError);
}

TEST_CASE("zero noise gives ratio one for every seed") {
    ChainSpec spec;
    spec.schedule = ProbSchedule::uniform;
    const auto c = chain_composite(8, 9, spec, NoiseModel::degenerate_zero(), NoiseLayout::independent);
    ExperimentConfig cfg;
    cfg.n_seeds = 20;
    for (const auto& r : run_screening_experiment(c, cfg)) {
        CHECK(r.log_ratio == 0.0);
        CHECK(r.L_total == 17);
    }
}

TEST_CASE("two-point noise at p = 0.5 accumulates 100 Delta over 100 tokens") {
    ChainSpec spec;
    spec.vocab_size = 3;
    spec.prob = 0.5;
    const auto c = chain_composite(50, 50, spec, NoiseModel::two_point(std::log(3.0)), NoiseLayout::reference_solution);
    ExperimentConfig cfg;
    cfg.n_seeds = 400;
    cfg.epsilon = 0.49;
    const auto xs = log_ratios(run_screening_experiment(c, cfg));
    const double m = stats::mean(xs);
    const double se = std::sqrt(stats::variance(xs) / double(xs.size()));
    CHECK(std::abs(m - 14.38410362258905) < 3.0 * se);
}

TEST_CASE("bound violations above the lemma threshold stay rare") {
    ChainSpec spec;
    spec.vocab_size = 3;
    spec.schedule = ProbSchedule::uniform;
    spec.prob_low = 0.1;
    spec.prob_high = 0.9;
    SweepConfig sweep;
    sweep.lengths = {1600};
    sweep.chain = spec;
    sweep.noise = NoiseModel::truncated_gaussian(1.5, 4.0);
    sweep.layout = NoiseLayout::reference_solution;
    ExperimentConfig cfg;
    cfg.n_seeds = 200;
    cfg.epsilon = 0.1;
    cfg.workers = 2;
    const auto rows = run_length_sweep(sweep, cfg);
    const auto s = summarize(rows, sweep.noise, 0.1, 0.05);
    REQUIRE(s.by_length.size() == 1);
    CHECK(s.by_length[0].above_lemma_threshold);
    CHECK(s.by_length[0].lemma_violation_rate <= 0.05 + 2.0 * std::sqrt(0.05 * 0.95 / 200.0));
    CHECK(s.premise_violations == 0);
}

TEST_CASE("sweeps are identical for any worker count") {
    SweepConfig sweep;
    sweep.lengths = {10, 30};
    sweep.chain.schedule = ProbSchedule::uniform;
    sweep.noise = NoiseModel::uniform(3.0);
    ExperimentConfig cfg;
    cfg.n_seeds = 25;
    cfg.master_seed = 99;
    std::string first;
    for (unsigned w : {1u, 3u, 8u}) {
        cfg.workers = w;
        const auto csv = experiment_csv(run_length_sweep(sweep, cfg)).str();
        if (first.empty()) first = csv;
        CHECK(csv == first);
    }
}

TEST_CASE("experiment csv has the fixed column order") {
    SweepConfig sweep;
    sweep.lengths = {6};
    ExperimentConfig cfg;
    cfg.n_seeds = 2;
    const auto csv = experiment_csv(run_length_sweep(sweep, cfg)).str();
    CHECK(csv.rfind("seed,L_total,N_composite,N_product,log_ratio,delta_hat,premise_violations\n", 0) == 0);
}

TEST_CASE("zero-noise summary reports vacuous bounds instead of failing") {
    SweepConfig sweep;
    sweep.lengths = {10, 20};
    ExperimentConfig cfg;
    cfg.n_seeds = 5;
    const auto s = summarize(run_length_sweep(sweep, cfg), sweep.noise, 0.1, 0.05);
    CHECK(s.vacuous_reason.has_value());
    REQUIRE(s.slope_fit.has_value());
    CHECK(s.slope_fit->slope == 0.0);
}

TEST_CASE("synthetic trace datasets pair every standalone step with a composite step") {
    TraceDatasetConfig cfg;
    cfg.n_pairs = 4;
    cfg.min_part_len = 12;
    cfg.max_part_len = 20;
    cfg.noise = NoiseModel::uniform(2.0);
    const auto steps = synthesize_trace_dataset(cfg);
    std::size_t standalone = 0, composite = 0, skipped = 0;
    for (const auto& s : steps) {
        (s.variant == trace::Variant::standalone ? standalone : composite)++;
        skipped += s.skip_prefix_flag;
    }
    CHECK(standalone == composite);
    CHECK(skipped == 2 * 4 * 2 * 10);
    CHECK(trace_dataset_pair_id(3) == "pair-0003");
    CHECK(synthesize_trace_dataset(cfg).size() == steps.size());
}
