#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "screening/stats.hpp"
#include "screening/trace.hpp"

namespace screening::analysis {

// ---------------------------------------------------------------------------
// Noise extraction
// ---------------------------------------------------------------------------

struct StepNoise {
    std::string pair_id;
    std::uint64_t step_index = 0;
    std::vector<std::pair<std::int64_t, double>> token_noise;  ///< shared top-k, standalone order
    double x = 0.0;  ///< probability-weighted noise of the incorrect tokens relative to the correct one
    bool skip_prefix = false;
};

/// Median-centers both logit vectors over the shared top-k, differences them and
/// weights the result with the standalone probabilities renormalized over the shared
/// set. Returns nullopt when fewer than `min_overlap` tokens are shared or the correct
/// token is missing from either side.
std::optional<StepNoise> extract_step_noise(const trace::TraceStep& standalone, const trace::TraceStep& composite,
                                            std::size_t min_overlap = 5);

struct NoiseExtraction {
    std::vector<StepNoise> steps;  ///< ordered by (pair_id, step_index)
    std::size_t skipped_overlap = 0;
    std::size_t unmatched = 0;  ///< steps present in only one variant

    std::vector<double> xs() const;
};

/// Pairs standalone/composite steps by (pair_id, step_index) and extracts each.
NoiseExtraction extract_noise(const std::vector<trace::TraceStep>& steps, std::size_t min_overlap = 5);

// ---------------------------------------------------------------------------
// Noise assumption diagnostics
// ---------------------------------------------------------------------------

struct AssumptionReport {
    std::size_t n = 0;
    double m_hat_max = 0.0;
    double m_hat_p99 = 0.0;
    double mean = 0.0;
    double mean_abs = 0.0;
    double skewness = 0.0;
    double symmetry_statistic = 0.0;
    double symmetry_p_value = 1.0;
    double fraction_outside = 0.0;  ///< |X| > outside_bound
    double outside_bound = 4.0;
    bool degenerate = false;

    nlohmann::json to_json() const;
};

/// Needs at least 30 samples. Symmetry is a two-sample KS test of the first half of
/// the samples against the negated second half, which keeps the two samples independent.
AssumptionReport assumption_diagnostics(std::span<const double> xs, double outside_bound = 4.0);

// ---------------------------------------------------------------------------
// Delta / sigma curves
// ---------------------------------------------------------------------------

struct DeltaSigmaPoint {
    double epsilon = 0.0;
    double delta = 0.0;
    stats::Interval delta_ci{0.0, 0.0};
    double sigma = 0.0;
    stats::Interval sigma_ci{0.0, 0.0};
};

std::vector<double> default_epsilon_grid();

/// Plug-in mean and standard deviation of log(eps + (1 - eps) e^X) per grid point with
/// 95% percentile bootstrap intervals. With `symmetrize`, every sample also contributes
/// its negation, which makes the curve symmetric under eps -> 1 - eps.
std::vector<DeltaSigmaPoint> empirical_delta_sigma(std::span<const double> xs, std::span<const double> eps_grid,
                                                   std::size_t resamples = 1000, std::uint64_t seed = 0,
                                                   bool symmetrize = false);

// ---------------------------------------------------------------------------
// Length regression
// ---------------------------------------------------------------------------

struct SequenceRecord {
    std::string pair_id;
    double length = 0.0;     ///< scored steps after the skipped prefix
    double log_ratio = 0.0;  ///< log P_standalone - log P_composite over those steps
};

/// One record per pair, ordered by pair_id. Steps missing from either variant, or
/// whose correct token is absent from a recorded top-k, are left out.
std::vector<SequenceRecord> sequence_log_ratios(const std::vector<trace::TraceStep>& steps, bool apply_skip = true);

struct RegressionResult {
    stats::LinearFit fit;
    stats::Interval slope_ci{0.0, 0.0};
    std::size_t resamples = 0;
};

/// OLS of log-ratio on length with a percentile bootstrap over pairs. Needs at least
/// 3 records and two distinct lengths.
RegressionResult length_regression(std::span<const SequenceRecord> records, std::size_t resamples = 1000,
                                   std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Hardness CDF
// ---------------------------------------------------------------------------

struct HardnessRatio {
    std::string problem_id;
    double ratio = 1.0;  ///< N_composite / (N_1 N_2); a lower bound when censored
    bool censored = false;
};

struct CdfPoint {
    double threshold = 0.0;
    double cdf = 0.0;
};

struct HardnessCdf {
    std::vector<HardnessRatio> ratios;  ///< ordered by problem_id
    std::vector<CdfPoint> table;
    std::vector<std::string> skipped;   ///< problems with a zero-pass standalone part
};

std::vector<double> default_cdf_grid();

/// (n_c / c_c) (c_1 / n_1) (c_2 / n_2), with n_c / 3 in place of n_c / c_c when c_c = 0.
double complexity_ratio(std::uint64_t n1, std::uint64_t c1, std::uint64_t n2, std::uint64_t c2, std::uint64_t nc,
                        std::uint64_t cc);

/// Fraction of values <= each grid point.
std::vector<CdfPoint> empirical_cdf(std::span<const double> values, std::span<const double> grid);

/// Throws DomainError when a problem lacks one of its three records or repeats one.
HardnessCdf hardness_cdf(const std::vector<trace::PassRateRecord>& records, std::span<const double> grid);
HardnessCdf hardness_cdf(const std::vector<trace::PassRateRecord>& records);

/// Problems whose two standalone pass rates are both >= threshold, in first-seen order.
std::vector<std::string> filter_problems(const std::vector<trace::PassRateRecord>& records, double threshold = 0.1);

// ---------------------------------------------------------------------------

struct HistogramBin {
    double low, high;
    std::size_t count;
};
std::vector<HistogramBin> histogram(std::span<const double> xs, double low, double high, std::size_t bins);

}  // namespace screening::analysis
