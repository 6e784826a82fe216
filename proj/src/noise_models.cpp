#include "screening/noise_models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <fmt/core.h>

#include "screening/errors.hpp"

namespace screening {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const boost::math::normal& std_normal() {
    static const boost::math::normal n(0.0, 1.0);
    return n;
}

double phi_cdf(double z) { return boost::math::cdf(std_normal(), z); }

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v))
        throw DomainError(fmt::format("noise model: {} must be positive and finite, got {}", what, v));
}

}  // namespace

NoiseModel NoiseModel::truncated_gaussian(double stddev, double bound) {
    require_positive(stddev, "std");
    require_positive(bound, "bound");
    return NoiseModel(TruncatedGaussian{stddev, bound});
}

NoiseModel NoiseModel::uniform(double bound) {
    require_positive(bound, "bound");
    return NoiseModel(Uniform{bound});
}

NoiseModel NoiseModel::two_point(double magnitude) {
    require_positive(magnitude, "magnitude");
    return NoiseModel(TwoPoint{magnitude});
}

NoiseModel NoiseModel::scaled_empirical(std::vector<double> raw, double bound) {
    require_positive(bound, "bound");
    if (raw.empty()) throw DomainError("noise model: scaled_empirical needs at least one sample");
    double max_abs = 0.0, sum = 0.0, sum_sq = 0.0;
    long long positives = 0, negatives = 0;
    for (double x : raw) {
        if (!std::isfinite(x)) throw DomainError("noise model: non-finite empirical sample");
        max_abs = std::max(max_abs, std::abs(x));
        sum += x;
        sum_sq += x * x;
        positives += x > 0.0;
        negatives += x < 0.0;
    }
    const double n = static_cast<double>(raw.size());
    const double mean = sum / n;
    const double var = std::max(0.0, sum_sq / n - mean * mean);
    const bool mean_off = var > 0.0 && std::abs(mean) > 3.0 * std::sqrt(var / n);
    const bool sign_off =
        std::abs(static_cast<double>(positives - negatives)) > 3.0 * std::sqrt(static_cast<double>(positives + negatives));
    const bool one_sided = (positives == 0) != (negatives == 0);

    const double scale = max_abs > bound ? bound / max_abs : 1.0;
    std::vector<double> mags;
    mags.reserve(raw.size());
    for (double x : raw) mags.push_back(std::min(bound, std::abs(x) * scale));
    std::sort(mags.begin(), mags.end());
    return NoiseModel(ScaledEmpirical{std::move(mags), bound, scale, mean_off || sign_off || one_sided});
}

NoiseModel NoiseModel::degenerate_zero() { return NoiseModel(DegenerateZero{}); }

std::string NoiseModel::kind_name() const {
    return std::visit(overloaded{
                          [](const TruncatedGaussian&) { return std::string("truncated_gaussian"); },
                          [](const Uniform&) { return std::string("uniform"); },
                          [](const TwoPoint&) { return std::string("two_point"); },
                          [](const ScaledEmpirical&) { return std::string("scaled_empirical"); },
                          [](const DegenerateZero&) { return std::string("degenerate_zero"); },
                      },
                      kind_);
}

std::string NoiseModel::describe() const {
    return std::visit(
        overloaded{
            [](const TruncatedGaussian& g) { return fmt::format("truncated_gaussian(std={}, bound={})", g.stddev, g.bound); },
            [](const Uniform& u) { return fmt::format("uniform(bound={})", u.bound); },
            [](const TwoPoint& t) { return fmt::format("two_point(magnitude={})", t.magnitude); },
            [](const ScaledEmpirical& e) {
                return fmt::format("scaled_empirical(n={}, bound={}, scale={})", e.magnitudes.size(), e.bound, e.scale);
            },
            [](const DegenerateZero&) { return std::string("degenerate_zero"); },
        },
        kind_);
}

double NoiseModel::bound() const noexcept {
    return std::visit(overloaded{
                          [](const TruncatedGaussian& g) { return g.bound; },
                          [](const Uniform& u) { return u.bound; },
                          [](const TwoPoint& t) { return t.magnitude; },
                          [](const ScaledEmpirical& e) { return e.bound; },
                          [](const DegenerateZero&) { return 0.0; },
                      },
                      kind_);
}

bool NoiseModel::is_degenerate() const noexcept {
    if (std::holds_alternative<DegenerateZero>(kind_)) return true;
    if (const auto* e = std::get_if<ScaledEmpirical>(&kind_)) return e->magnitudes.back() == 0.0;
    return false;
}

bool NoiseModel::has_density() const noexcept {
    return std::holds_alternative<TruncatedGaussian>(kind_) || std::holds_alternative<Uniform>(kind_);
}

double NoiseModel::sample(RngStream& rng) const {
    return std::visit(
        overloaded{
            [&](const TruncatedGaussian& g) {
                // Inverse-CDF on the truncated range: one uniform per draw, no rejection loop.
                const double lo = phi_cdf(-g.bound / g.stddev);
                const double hi = phi_cdf(g.bound / g.stddev);
                const double u = lo + rng.uniform_open() * (hi - lo);
                const double z = boost::math::quantile(std_normal(), std::clamp(u, lo, hi));
                return std::clamp(g.stddev * z, -g.bound, g.bound);
            },
            [&](const Uniform& u) { return u.bound * (2.0 * rng.uniform() - 1.0); },
            [&](const TwoPoint& t) { return (rng.next_u64() >> 63) ? t.magnitude : -t.magnitude; },
            [&](const ScaledEmpirical& e) {
                const double m = e.magnitudes[rng.below(e.magnitudes.size())];
                return (rng.next_u64() >> 63) ? m : -m;
            },
            [](const DegenerateZero&) { return 0.0; },
        },
        kind_);
}

std::vector<double> NoiseModel::sample_vector(std::size_t n, RngStream& rng) const {
    std::vector<double> out(n);
    for (auto& v : out) v = sample(rng);
    return out;
}

double NoiseModel::density(double x) const {
    return std::visit(overloaded{
                          [&](const TruncatedGaussian& g) {
                              if (std::abs(x) > g.bound) return 0.0;
                              const double z = phi_cdf(g.bound / g.stddev) - phi_cdf(-g.bound / g.stddev);
                              const double t = x / g.stddev;
                              return std::exp(-0.5 * t * t) / (g.stddev * std::sqrt(2.0 * M_PI) * z);
                          },
                          [&](const Uniform& u) { return std::abs(x) > u.bound ? 0.0 : 0.5 / u.bound; },
                          [](const auto&) { return 0.0; },
                      },
                      kind_);
}

double NoiseModel::cdf(double x) const {
    return std::visit(
        overloaded{
            [&](const TruncatedGaussian& g) {
                if (x <= -g.bound) return 0.0;
                if (x >= g.bound) return 1.0;
                const double lo = phi_cdf(-g.bound / g.stddev);
                const double hi = phi_cdf(g.bound / g.stddev);
                return (phi_cdf(x / g.stddev) - lo) / (hi - lo);
            },
            [&](const Uniform& u) { return std::clamp((x + u.bound) / (2.0 * u.bound), 0.0, 1.0); },
            [&](const TwoPoint& t) { return x < -t.magnitude ? 0.0 : (x < t.magnitude ? 0.5 : 1.0); },
            [&](const ScaledEmpirical& e) {
                // Atoms at +-m with weight 1/(2n) each.
                const auto& m = e.magnitudes;
                const double n = static_cast<double>(m.size());
                double below = 0.0;
                if (x < 0.0) {
                    // count of -m_i <= x  <=>  m_i >= -x
                    below = static_cast<double>(m.end() - std::lower_bound(m.begin(), m.end(), -x));
                } else {
                    below = n + static_cast<double>(std::upper_bound(m.begin(), m.end(), x) - m.begin());
                }
                return below / (2.0 * n);
            },
            [&](const DegenerateZero&) { return x < 0.0 ? 0.0 : 1.0; },
        },
        kind_);
}

double NoiseModel::variance() const {
    return expect([](double x) { return x * x; }).value;
}

QuadratureResult NoiseModel::expect(const std::function<double(double)>& g, double abs_tol) const {
    return std::visit(
        overloaded{
            [&](const TruncatedGaussian& tg) {
                const double zero[] = {0.0};
                const double mass = phi_cdf(tg.bound / tg.stddev) - phi_cdf(-tg.bound / tg.stddev);
                const double norm = 1.0 / (tg.stddev * std::sqrt(2.0 * M_PI) * mass);
                return integrate(
                    [&](double x) {
                        const double t = x / tg.stddev;
                        return g(x) * norm * std::exp(-0.5 * t * t);
                    },
                    -tg.bound, tg.bound, abs_tol, zero);
            },
            [&](const Uniform& u) {
                const double zero[] = {0.0};
                auto r = integrate([&](double x) { return g(x); }, -u.bound, u.bound, abs_tol * 2.0 * u.bound, zero);
                r.value /= 2.0 * u.bound;
                r.error /= 2.0 * u.bound;
                return r;
            },
            [&](const TwoPoint& t) {
                return QuadratureResult{0.5 * (g(t.magnitude) + g(-t.magnitude)), 0.0, 0};
            },
            [&](const ScaledEmpirical& e) {
                double s = 0.0;
                for (double m : e.magnitudes) s += g(m) + g(-m);
                return QuadratureResult{s / (2.0 * static_cast<double>(e.magnitudes.size())), 0.0, 0};
            },
            [&](const DegenerateZero&) { return QuadratureResult{g(0.0), 0.0, 0}; },
        },
        kind_);
}

ConformanceReport NoiseModel::conformance() const {
    ConformanceReport r;
    std::visit(overloaded{
                   [](const TruncatedGaussian&) {},
                   [](const Uniform&) {},
                   [&](const TwoPoint&) {
                       r.continuous = false;
                       r.notes.push_back("two-point law has atoms; admitted for closed-form checks only");
                   },
                   [&](const ScaledEmpirical& e) {
                       r.continuous = false;
                       r.notes.push_back(fmt::format("discrete empirical law with {} symmetrized atoms", 2 * e.magnitudes.size()));
                       if (e.raw_asymmetric)
                           r.notes.push_back("raw input was asymmetric; symmetry holds only after symmetrization");
                       if (e.scale != 1.0)
                           r.notes.push_back(fmt::format("raw samples rescaled by {} to fit the bound", e.scale));
                   },
                   [&](const DegenerateZero&) {
                       r.continuous = false;
                       r.bounded = true;
                       r.notes.push_back("point mass at zero; renormalizing term is identically zero");
                   },
               },
               kind_);
    return r;
}

nlohmann::json NoiseModel::to_json() const {
    return std::visit(
        overloaded{
            [](const TruncatedGaussian& g) {
                return nlohmann::json{{"kind", "truncated_gaussian"}, {"std", g.stddev}, {"bound", g.bound}};
            },
            [](const Uniform& u) { return nlohmann::json{{"kind", "uniform"}, {"bound", u.bound}}; },
            [](const TwoPoint& t) { return nlohmann::json{{"kind", "two_point"}, {"magnitude", t.magnitude}}; },
            [](const ScaledEmpirical& e) {
                return nlohmann::json{{"kind", "scaled_empirical"}, {"samples", e.magnitudes}, {"bound", e.bound}};
            },
            [](const DegenerateZero&) { return nlohmann::json{{"kind", "degenerate_zero"}}; },
        },
        kind_);
}

NoiseModel NoiseModel::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind")) throw DomainError("noise model: expected an object with a \"kind\"");
    const auto kind = j.at("kind").get<std::string>();
    auto num = [&](const char* key) {
        if (!j.contains(key) || !j.at(key).is_number())
            throw DomainError(fmt::format("noise model {}: missing numeric field \"{}\"", kind, key));
        return j.at(key).get<double>();
    };
    if (kind == "truncated_gaussian") return truncated_gaussian(num("std"), num("bound"));
    if (kind == "uniform") return uniform(num("bound"));
    if (kind == "two_point") return two_point(num("magnitude"));
    if (kind == "scaled_empirical") {
        if (!j.contains("samples") || !j.at("samples").is_array())
            throw DomainError("noise model scaled_empirical: missing \"samples\" array");
        return scaled_empirical(j.at("samples").get<std::vector<double>>(), num("bound"));
    }
    if (kind == "degenerate_zero") return degenerate_zero();
    throw DomainError("noise model: unknown kind \"" + kind + "\"");
}

std::vector<double> sample_noise_vector(const NoiseModel& model, std::size_t vocab_size, RngStream& rng) {
    if (vocab_size < 2) throw DomainError("noise vector: vocabulary size must be >= 2");
    return model.sample_vector(vocab_size, rng);
}

ConformanceReport conformance_check(const NoiseModel& model) { return model.conformance(); }

}  // namespace screening
