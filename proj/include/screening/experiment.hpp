#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "screening/noise_math.hpp"
#include "screening/report.hpp"
#include "screening/screening_sim.hpp"
#include "screening/stats.hpp"
#include "screening/trace.hpp"

namespace screening {

// ---------------------------------------------------------------------------
// Chain problems: one correct sequence of fixed length, reference token chosen at random
// per position, correct-token probability set by a schedule.
// ---------------------------------------------------------------------------

enum class ProbSchedule { fixed, alternate, uniform };
std::string to_string(ProbSchedule s);
ProbSchedule parse_schedule(const std::string& s);

struct ChainSpec {
    std::size_t vocab_size = 3;  ///< including the terminator "$"; at most 27
    ProbSchedule schedule = ProbSchedule::fixed;
    double prob = 0.5;  ///< fixed value, or the even-position value for alternate (odd gets 1 - prob)
    double prob_low = 0.1;
    double prob_high = 0.9;

    void validate() const;
    /// Smallest min(p, 1 - p) the schedule can produce.
    double min_margin() const;
};

/// Tokens "a", "b", ... plus terminator "$". Position t puts probability p_t on the
/// reference token, spreads 1 - p_t evenly over the other letters and gives the
/// terminator zero until the length is reached.
ToyProblem make_chain_problem(std::string id, std::size_t length, const ChainSpec& spec, RngStream& rng);

// ---------------------------------------------------------------------------
// Screening experiments
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    std::uint64_t master_seed = 0;
    std::uint64_t n_seeds = 100;
    unsigned workers = 1;
    /// Confidence floor for the bounds; derived from the chain schedule when absent.
    std::optional<double> epsilon;
    double delta_prob = 0.05;
};

struct ExperimentRow {
    std::uint64_t seed = 0;
    std::size_t L_total = 0;
    double log_n_composite = 0.0;
    double log_n_product = 0.0;
    double log_ratio = 0.0;            ///< ln(N_composite / N_product)
    double reference_log_ratio = 0.0;  ///< ln P_prod(y) - ln P_comp(y) for the reference solution
    double delta_hat = 0.0;            ///< mean realized renormalizing term along the reference
    std::size_t premise_violations = 0;
    bool lemma_violation = false;
    bool theorem_violation = false;
    std::vector<double> step_log_ratio;  ///< per reference step ln(P0 / P0')
};

struct LengthSummary {
    std::size_t L_total = 0;
    std::size_t n = 0;
    double mean_log_ratio = 0.0;
    double se_log_ratio = 0.0;
    double floor_fraction = 0.0;  ///< seeds whose log-ratio reaches Delta L / 4
    double lemma_violation_rate = 0.0;
    double theorem_violation_rate = 0.0;
    std::optional<double> lemma_threshold;
    std::optional<double> theorem_threshold;
    bool above_lemma_threshold = false;
    bool above_theorem_threshold = false;
};

struct ExperimentSummary {
    double epsilon = 0.1;
    double delta_prob = 0.05;
    double delta_theory = 0.0;  ///< Delta(epsilon, noise) by quadrature
    double sigma_theory = 0.0;
    double noise_bound = 0.0;
    std::optional<std::string> vacuous_reason;  ///< set when the bounds cannot be evaluated
    ConformanceReport conformance;
    std::vector<LengthSummary> by_length;
    std::optional<stats::LinearFit> slope_fit;  ///< log-ratio vs L over all seeds
    std::size_t premise_violations = 0;

    nlohmann::json to_json() const;
};

/// n_seeds noise realizations of one composite; seed s uses realization s.
std::vector<ExperimentRow> run_screening_experiment(const ScreenedComposite& composite, const ExperimentConfig& cfg);

struct SweepConfig {
    std::vector<std::size_t> lengths{20, 40, 80, 160};  ///< L_total; split evenly across the parts
    ChainSpec chain;
    NoiseModel noise = NoiseModel::degenerate_zero();
    NoiseCorrelation correlation = NoiseCorrelation::iid_per_step;
    NoiseLayout layout = NoiseLayout::independent;
    WeightSource weights = WeightSource::standalone;
};

/// For every length and seed, draws fresh chain problems and one noise realization.
/// Rows come in canonical (length, seed) order whatever the worker count.
std::vector<ExperimentRow> run_length_sweep(const SweepConfig& sweep, const ExperimentConfig& cfg);

ExperimentSummary summarize(const std::vector<ExperimentRow>& rows, const NoiseModel& noise, double epsilon,
                            double delta_prob, std::size_t solution_count = 1);

/// Columns seed, L_total, N_composite, N_product, log_ratio, delta_hat, premise_violations.
report::CsvTable experiment_csv(const std::vector<ExperimentRow>& rows);

/// Pass-rate records (standalone_1, standalone_2, composite) from n_samples decodes each.
std::vector<trace::PassRateRecord> simulate_pass_rates(const ScreenedComposite& composite,
                                                       const std::string& problem_id, std::uint64_t master_seed,
                                                       std::uint64_t realization, std::uint64_t n_samples,
                                                       const SamplerConfig& sampler, unsigned workers = 1);

// ---------------------------------------------------------------------------
// Paired trace synthesis
// ---------------------------------------------------------------------------

/// Standalone and composite trace steps along the reference solution (terminators
/// excluded). Logits are log-probabilities of all nonzero tokens plus a random
/// per-step offset in [-offset_scale, offset_scale], so consumers must not rely on
/// absolute logit values. The first `skip_prefix` tokens of each part are flagged.
std::vector<trace::TraceStep> synthesize_pair_traces(const ScreenedComposite& composite, const std::string& pair_id,
                                                     std::uint64_t master_seed, std::uint64_t realization,
                                                     std::size_t skip_prefix = 10, double offset_scale = 3.0);

struct TraceDatasetConfig {
    std::size_t n_pairs = 50;
    std::size_t min_part_len = 15;
    std::size_t max_part_len = 80;
    std::size_t skip_prefix = 10;
    ChainSpec chain;
    NoiseModel noise = NoiseModel::degenerate_zero();
    NoiseLayout layout = NoiseLayout::reference_solution;
    std::uint64_t master_seed = 0;
};

std::string trace_dataset_pair_id(std::size_t i);
/// The composite behind pair i: chain parts with lengths uniform in [min, max].
ScreenedComposite trace_dataset_composite(const TraceDatasetConfig& cfg, std::size_t i);

/// Pairs "pair-0000", "pair-0001", ...; pair i uses noise realization i.
std::vector<trace::TraceStep> synthesize_trace_dataset(const TraceDatasetConfig& cfg);
/// Standalone and composite pass rates for every pair, with problem ids equal to pair ids.
std::vector<trace::PassRateRecord> synthesize_pass_rate_dataset(const TraceDatasetConfig& cfg, std::uint64_t n_samples,
                                                                const SamplerConfig& sampler, unsigned workers = 1);

}  // namespace screening
