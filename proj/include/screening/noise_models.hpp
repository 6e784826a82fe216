#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "screening/quadrature.hpp"
#include "screening/rng.hpp"

namespace screening {

/// Which clauses of the noise assumption (continuous, symmetric, bounded) a model meets.
struct ConformanceReport {
    bool symmetric = true;
    bool bounded = true;
    bool continuous = true;
    std::vector<std::string> notes;

    bool conforming() const { return symmetric && bounded && continuous; }
};

/// Symmetric, bounded distribution over logit-noise values.
///
/// Immutable after construction. Sampling uses a caller-owned RngStream, so the
/// same model can be sampled from many threads with distinct streams.
class NoiseModel {
public:
    struct TruncatedGaussian {
        double stddev;
        double bound;
    };
    struct Uniform {
        double bound;
    };
    struct TwoPoint {
        double magnitude;
    };
    struct ScaledEmpirical {
        std::vector<double> magnitudes;  ///< |x| after scaling into [0, bound]
        double bound;
        double scale;            ///< factor applied to the raw samples (1 when none needed)
        bool raw_asymmetric;     ///< raw input failed a symmetry screen before symmetrization
    };
    struct DegenerateZero {};

    using Kind = std::variant<TruncatedGaussian, Uniform, TwoPoint, ScaledEmpirical, DegenerateZero>;

    static NoiseModel truncated_gaussian(double stddev, double bound);
    static NoiseModel uniform(double bound);
    static NoiseModel two_point(double magnitude);
    /// Symmetrized empirical law: each raw sample x contributes +|x'| and -|x'| with
    /// equal weight, where x' = x * scale and scale shrinks the sample into [-bound, bound]
    /// only when its largest magnitude exceeds bound.
    static NoiseModel scaled_empirical(std::vector<double> raw_samples, double bound);
    static NoiseModel degenerate_zero();

    const Kind& kind() const noexcept { return kind_; }
    std::string kind_name() const;
    std::string describe() const;

    /// M, the support bound. Zero for the degenerate model.
    double bound() const noexcept;
    bool is_degenerate() const noexcept;
    /// True for models with a density (truncated Gaussian, uniform).
    bool has_density() const noexcept;

    double sample(RngStream& rng) const;
    std::vector<double> sample_vector(std::size_t n, RngStream& rng) const;

    /// Density on the support; only meaningful when has_density().
    double density(double x) const;
    /// Distribution function. Exact for every kind, including atoms.
    double cdf(double x) const;
    double variance() const;

    /// E[g(X)]: adaptive quadrature for densities, exact weighted sums for atomic laws.
    QuadratureResult expect(const std::function<double(double)>& g, double abs_tol = 1e-10) const;

    ConformanceReport conformance() const;

    nlohmann::json to_json() const;
    /// Accepts {"kind": "truncated_gaussian", "std": s, "bound": M} and the analogous
    /// forms for "uniform", "two_point" (magnitude), "scaled_empirical" (samples, bound)
    /// and "degenerate_zero". Throws DomainError on bad parameters.
    static NoiseModel from_json(const nlohmann::json& j);

private:
    explicit NoiseModel(Kind k) : kind_(std::move(k)) {}
    Kind kind_;
};

/// Per-token i.i.d. noise vector, one draw per vocabulary entry.
std::vector<double> sample_noise_vector(const NoiseModel& model, std::size_t vocab_size,
                                        RngStream& rng);

ConformanceReport conformance_check(const NoiseModel& model);

}  // namespace screening
