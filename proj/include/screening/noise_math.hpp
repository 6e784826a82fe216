#pragma once

#include <cstdint>
#include <variant>

#include "screening/noise_models.hpp"

namespace screening {

/// log(epsilon + (1 - epsilon) e^x): the per-step log-factor by which noise X
/// shrinks a token of probability epsilon. Throws DomainError unless 0 < epsilon < 1.
double renorm_term(double epsilon, double x);

/// renorm_term(p, x) + renorm_term(p, -x), evaluated independently as
/// log(1 + p(1-p)(e^x + e^-x - 2)) = log1p(4 p(1-p) sinh^2(x/2)).
double renorm_pair(double p, double x);

/// Bennett rate function h(x) = (1+x) ln(1+x) - x, for x >= 0.
double bennett_h(double x);

/// P / (P + (1-P) e^X): correct-token probability after a step with weighted noise X.
double apply_step_noise(double p_correct, double noise_x);

struct Estimate {
    double value = 0.0;
    double error = 0.0;  ///< quadrature error estimate or Monte Carlo standard error
};

struct QuadratureMethod {
    double abs_tol = 1e-10;
};
struct MonteCarloMethod {
    std::uint64_t n = 1'000'000;
    std::uint64_t seed = 0;
};
using EstimationMethod = std::variant<QuadratureMethod, MonteCarloMethod>;

/// Delta(epsilon, X) = E[renorm_term(epsilon, X)].
Estimate delta_estimate(double epsilon, const NoiseModel& model, EstimationMethod method = QuadratureMethod{});
/// sigma(epsilon, X) = sd[renorm_term(epsilon, X)] (the standard deviation, not the variance).
Estimate sigma_estimate(double epsilon, const NoiseModel& model, EstimationMethod method = QuadratureMethod{});

/// (epsilon, Delta, sigma^2, M) bundle consumed by the length bounds.
struct RenormStats {
    double epsilon;
    double delta;
    double sigma_sq;
    double noise_bound;

    /// Validates 0 < epsilon < 0.5, delta >= 0, 0 <= sigma_sq <= M^2, M > 0.
    static RenormStats make(double epsilon, double delta, double sigma, double noise_bound);
    /// Delta and sigma by quadrature, M = model.bound().
    static RenormStats from_model(double epsilon, const NoiseModel& model);

    double sigma() const;
};

struct BoundParams {
    double delta_prob;            ///< failure probability, in (0, 1)
    double solution_count = 1.0;  ///< N >= 1
    double min_len = 1.0;         ///< L1 + L2 >= 1

    static BoundParams make(double delta_prob, double solution_count, double min_len);
};

/// The tokens-per-nat scale M^2 / (sigma^2 h(3 Delta M / (4 sigma^2))).
/// Throws BoundVacuous when Delta or sigma is zero.
double bennett_length_scale(const RenormStats& stats);

/// Length above which the composite-vs-product probability bound holds w.p. 1 - delta.
double lemma1_length_threshold(const RenormStats& stats, double delta_prob);
/// As above with the union bound over `params.solution_count` solutions.
double theorem1_length_threshold(const RenormStats& stats, const BoundParams& params);

/// e^{Delta L / 4}, the guaranteed multiplicative gap in generation complexity.
double hardness_bound_factor(const RenormStats& stats, double total_len);
double log_hardness_bound_factor(const RenormStats& stats, double total_len);

/// (sigma^2 / M^2) h(3 Delta M / (4 sigma^2)): growth rate of the admissible solution count.
double solution_count_exponent(const RenormStats& stats);
/// delta * exp(L * solution_count_exponent); may overflow to +inf for very long L.
double max_solution_count(const RenormStats& stats, double total_len, double delta_prob);
double log_max_solution_count(const RenormStats& stats, double total_len, double delta_prob);

}  // namespace screening
