#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "screening/rng.hpp"

namespace screening::stats {

struct Interval {
    double low;
    double high;
    bool contains(double x) const { return low <= x && x <= high; }
};

/// Wilson score interval for a binomial proportion k/n.
Interval wilson(std::uint64_t successes, std::uint64_t trials, double z = 1.959963984540054);

double mean(std::span<const double> xs);
/// Population (1/n) variance when `sample` is false, unbiased (1/(n-1)) otherwise.
double variance(std::span<const double> xs, bool sample = true);
double skewness(std::span<const double> xs);
/// Type-7 (linear interpolation) quantile; q in [0, 1]. Copies and sorts.
double quantile(std::span<const double> xs, double q);
double quantile_sorted(std::span<const double> sorted, double q);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;  ///< classical OLS standard error
    double residual_ss = 0.0;
    std::size_t n = 0;
};

/// Ordinary least squares y = intercept + slope x. Throws DomainError if fewer than
/// 2 points or all x are equal.
LinearFit ols(std::span<const double> x, std::span<const double> y);

/// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1} e^{-2 k^2 lambda^2}.
double kolmogorov_survival(double lambda);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the Stephens small-sample correction.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// One-sample KS statistic sup |F_n - F| against a continuous distribution function.
template <class Cdf>
double ks_one_sample_statistic(std::vector<double> xs, Cdf&& cdf);

/// Percentile bootstrap of an arbitrary statistic over index resamples.
/// `stat(indices)` receives a resample of [0, n). Resample r uses stream substream(r),
/// so results do not depend on evaluation order.
template <class Stat>
std::vector<double> bootstrap(std::size_t n, std::size_t resamples, const RngStream& base, Stat&& stat);

}  // namespace screening::stats

#include "screening/stats_impl.hpp"
