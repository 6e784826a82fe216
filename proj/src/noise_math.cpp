#include "screening/noise_math.hpp"

#include <cmath>

#include <fmt/core.h>

#include "screening/errors.hpp"

namespace screening {

namespace {

void require_open_unit(double p, const char* what) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError(fmt::format("{} must lie in (0, 1), got {}", what, p));
}

struct Moments {
    double mean = 0.0;
    double m2 = 0.0;  // central second moment
    double m4 = 0.0;  // central fourth moment
    std::uint64_t n = 0;
};

Moments mc_moments(double epsilon, const NoiseModel& model, const MonteCarloMethod& mc) {
    if (mc.n == 0) throw DomainError("monte carlo estimate needs n >= 1");
    RngStream rng(mc.seed, tag("renorm-mc"));
    std::vector<double> f(mc.n);
    double sum = 0.0;
    for (auto& v : f) {
        v = renorm_term(epsilon, model.sample(rng));
        sum += v;
    }
    Moments m;
    m.n = mc.n;
    m.mean = sum / static_cast<double>(mc.n);
    for (double v : f) {
        const double d = v - m.mean;
        m.m2 += d * d;
        m.m4 += d * d * d * d;
    }
    m.m2 /= static_cast<double>(mc.n);
    m.m4 /= static_cast<double>(mc.n);
    return m;
}

}  // namespace

double renorm_term(double epsilon, double x) {
    require_open_unit(epsilon, "epsilon");
    if (!std::isfinite(x)) throw DomainError("renorm_term: noise value must be finite");
    if (x <= 0.0) return std::log1p((1.0 - epsilon) * std::expm1(x));
    return x + std::log1p(epsilon * std::expm1(-x));
}

double renorm_pair(double p, double x) {
    require_open_unit(p, "p");
    const double s = std::sinh(0.5 * x);
    return std::log1p(4.0 * p * (1.0 - p) * s * s);
}

double bennett_h(double x) {
    if (!(x >= 0.0)) throw DomainError(fmt::format("bennett_h: argument must be >= 0, got {}", x));
    return (1.0 + x) * std::log1p(x) - x;
}

double apply_step_noise(double p_correct, double noise_x) {
    require_open_unit(p_correct, "correct-token probability");
    return std::exp(std::log(p_correct) - renorm_term(p_correct, noise_x));
}

Estimate delta_estimate(double epsilon, const NoiseModel& model, EstimationMethod method) {
    require_open_unit(epsilon, "epsilon");
    if (model.is_degenerate()) return {0.0, 0.0};
    if (const auto* q = std::get_if<QuadratureMethod>(&method)) {
        const auto r = model.expect([&](double x) { return renorm_term(epsilon, x); }, q->abs_tol);
        return {r.value, r.error};
    }
    const auto m = mc_moments(epsilon, model, std::get<MonteCarloMethod>(method));
    return {m.mean, std::sqrt(m.m2 / static_cast<double>(m.n))};
}

Estimate sigma_estimate(double epsilon, const NoiseModel& model, EstimationMethod method) {
    require_open_unit(epsilon, "epsilon");
    if (model.is_degenerate()) return {0.0, 0.0};
    if (const auto* q = std::get_if<QuadratureMethod>(&method)) {
        const auto mean = model.expect([&](double x) { return renorm_term(epsilon, x); }, q->abs_tol);
        // Central second moment directly, so no cancellation between E[f^2] and E[f]^2.
        const auto var = model.expect(
            [&](double x) {
                const double d = renorm_term(epsilon, x) - mean.value;
                return d * d;
            },
            q->abs_tol);
        const double sd = std::sqrt(std::max(0.0, var.value));
        const double err = sd > 0.0 ? var.error / (2.0 * sd) : std::sqrt(var.error);
        return {sd, err};
    }
    const auto m = mc_moments(epsilon, model, std::get<MonteCarloMethod>(method));
    const double sd = std::sqrt(m.m2);
    const double n = static_cast<double>(m.n);
    const double se = sd > 0.0 ? std::sqrt(std::max(0.0, m.m4 - m.m2 * m.m2) / n) / (2.0 * sd) : 0.0;
    return {sd, se};
}

RenormStats RenormStats::make(double epsilon, double delta, double sigma, double noise_bound) {
    if (!(epsilon > 0.0 && epsilon < 0.5))
        throw DomainError(fmt::format("epsilon must lie in (0, 0.5), got {}", epsilon));
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw DomainError(fmt::format("Delta must be >= 0, got {}", delta));
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError(fmt::format("sigma must be >= 0, got {}", sigma));
    if (!(noise_bound > 0.0) || !std::isfinite(noise_bound))
        throw DomainError(fmt::format("noise bound M must be positive, got {}", noise_bound));
    if (sigma > noise_bound) throw DomainError(fmt::format("sigma {} exceeds the noise bound {}", sigma, noise_bound));
    return RenormStats{epsilon, delta, sigma * sigma, noise_bound};
}

RenormStats RenormStats::from_model(double epsilon, const NoiseModel& model) {
    if (model.is_degenerate())
        throw BoundVacuous("degenerate noise model: Delta = sigma = 0, the length bounds are vacuous");
    const auto d = delta_estimate(epsilon, model);
    const auto s = sigma_estimate(epsilon, model);
    return make(epsilon, d.value, s.value, model.bound());
}

double RenormStats::sigma() const { return std::sqrt(sigma_sq); }

BoundParams BoundParams::make(double delta_prob, double solution_count, double min_len) {
    require_open_unit(delta_prob, "failure probability delta");
    if (!(solution_count >= 1.0)) throw DomainError("solution count N must be >= 1");
    if (!(min_len >= 1.0)) throw DomainError("minimal solution length must be >= 1");
    return BoundParams{delta_prob, solution_count, min_len};
}

double bennett_length_scale(const RenormStats& s) {
    if (s.delta <= 0.0) throw BoundVacuous("Delta = 0: no length threshold exists (bound vacuous)");
    if (s.sigma_sq <= 0.0) throw BoundVacuous("sigma = 0: no length threshold exists (bound vacuous)");
    const double M = s.noise_bound;
    const double arg = 3.0 * s.delta * M / (4.0 * s.sigma_sq);
    return M * M / (s.sigma_sq * bennett_h(arg));
}

double lemma1_length_threshold(const RenormStats& stats, double delta_prob) {
    require_open_unit(delta_prob, "failure probability delta");
    return bennett_length_scale(stats) * std::log(1.0 / delta_prob);
}

double theorem1_length_threshold(const RenormStats& stats, const BoundParams& params) {
    require_open_unit(params.delta_prob, "failure probability delta");
    if (!(params.solution_count >= 1.0)) throw DomainError("solution count N must be >= 1");
    return bennett_length_scale(stats) * std::log(params.solution_count / params.delta_prob);
}

double log_hardness_bound_factor(const RenormStats& stats, double total_len) {
    if (!(total_len >= 0.0)) throw DomainError("total length must be >= 0");
    return stats.delta * total_len / 4.0;
}

double hardness_bound_factor(const RenormStats& stats, double total_len) {
    return std::exp(log_hardness_bound_factor(stats, total_len));
}

double solution_count_exponent(const RenormStats& s) { return 1.0 / bennett_length_scale(s); }

double log_max_solution_count(const RenormStats& stats, double total_len, double delta_prob) {
    require_open_unit(delta_prob, "failure probability delta");
    if (!(total_len >= 0.0)) throw DomainError("total length must be >= 0");
    return std::log(delta_prob) + total_len * solution_count_exponent(stats);
}

double max_solution_count(const RenormStats& stats, double total_len, double delta_prob) {
    return std::exp(log_max_solution_count(stats, total_len, delta_prob));
}

}  // namespace screening
