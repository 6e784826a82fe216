#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "screening/noise_models.hpp"
#include "screening/rng.hpp"
#include "screening/toy_lm.hpp"

namespace screening {

// ---------------------------------------------------------------------------
// Single decoding step
// ---------------------------------------------------------------------------

/// softmax(log probs + noise). Zero-probability tokens stay exactly zero.
std::vector<double> screened_step_dist(std::span<const double> standalone_probs, std::span<const double> noise);

/// Probability-weighted mean over incorrect tokens of (noise_i - noise_correct).
/// Returns nullopt when the incorrect tokens carry no probability mass.
std::optional<double> weighted_noise_x(std::span<const double> probs, std::span<const double> noise,
                                       std::size_t correct);

struct DecodeStepRecord {
    std::size_t step_index = 0;
    std::vector<double> probs_standalone;
    std::vector<double> probs_composite;
    std::vector<double> noise_vector;
    std::size_t correct_token_index = 0;
    std::optional<double> weighted_noise_x;  ///< nullopt when P_correct = 1 (step skipped)
};

// ---------------------------------------------------------------------------
// Composite models
// ---------------------------------------------------------------------------

enum class NoiseCorrelation { iid_per_step, frozen_per_sequence };

/// How a noise draw reaches the logits.
///  - independent: one i.i.d. draw per vocabulary token.
///  - reference_solution: one draw per step, added to the logit of the token the
///    reference solution (first correct member of each part) holds at that position.
///    The weighted noise X then has exactly the model's law (up to sign, which is
///    immaterial for symmetric models).
enum class NoiseLayout { independent, reference_solution };

/// Which distribution weights the incorrect tokens in the weighted noise X.
enum class WeightSource { standalone, composite };

std::string to_string(NoiseCorrelation c);
std::string to_string(NoiseLayout l);
std::string to_string(WeightSource w);
NoiseCorrelation parse_correlation(const std::string& s);
NoiseLayout parse_layout(const std::string& s);
WeightSource parse_weights(const std::string& s);

/// Noise-free chaining: the first LM until its terminator, then the second LM.
/// P(y1 + y2) = P1(y1) P2(y2) exactly.
class ComposedModel final : public SequenceModel {
public:
    ComposedModel(std::shared_ptr<const ToyLM> first, std::shared_ptr<const ToyLM> second);

    std::size_t vocab_size() const override { return first_->vocab_size(); }
    Token terminator() const override { return first_->terminator(); }
    std::size_t max_sequence_tokens() const override {
        return first_->max_sequence_tokens() + second_->max_sequence_tokens();
    }
    std::vector<double> next_log_probs(std::span<const Token> prefix) const override;
    bool is_complete(std::span<const Token> prefix) const override;
    std::vector<double> next_probs(std::span<const Token> prefix) const;

private:
    std::shared_ptr<const ToyLM> first_, second_;
};

struct ScreenedComposite {
    ToyProblem first;
    ToyProblem second;
    NoiseModel noise = NoiseModel::degenerate_zero();
    NoiseCorrelation correlation = NoiseCorrelation::iid_per_step;
    NoiseLayout layout = NoiseLayout::independent;
    WeightSource weights = WeightSource::standalone;

    /// Validates that both parts share one vocabulary and terminator.
    void validate() const;
    /// {y1 + y2 : y1 in first.correct_set, y2 in second.correct_set}, in row-major order.
    std::vector<Sequence> correct_set() const;
    Sequence reference_solution() const;
    std::size_t min_total_len() const { return first.min_solution_len + second.min_solution_len; }

    nlohmann::json to_json() const;
    static ScreenedComposite from_json(const nlohmann::json& j);
};

/// One noise realization of a screened composite. The noise at decoding step t is a
/// function of (master seed, realization, t) only, never of the prefix, so the result
/// is a proper autoregressive distribution whose probabilities can be enumerated.
class ScreenedModel final : public SequenceModel {
public:
    ScreenedModel(const ScreenedComposite& composite, std::uint64_t master_seed, std::uint64_t realization);

    std::size_t vocab_size() const override { return base_.vocab_size(); }
    Token terminator() const override { return base_.terminator(); }
    std::size_t max_sequence_tokens() const override { return base_.max_sequence_tokens(); }
    std::vector<double> next_log_probs(std::span<const Token> prefix) const override;
    bool is_complete(std::span<const Token> prefix) const override { return base_.is_complete(prefix); }

    const ComposedModel& standalone() const { return base_; }
    std::vector<double> noise_at(std::size_t step) const;
    DecodeStepRecord step_record(std::span<const Token> prefix, Token correct) const;
    /// Step records along a full sequence (one per token, terminators included).
    std::vector<DecodeStepRecord> trace(std::span<const Token> sequence) const;

private:
    const ScreenedComposite* composite_;
    ComposedModel base_;
    Sequence reference_;
    std::uint64_t seed_;
    std::uint64_t realization_;
};

// ---------------------------------------------------------------------------
// Generation complexity
// ---------------------------------------------------------------------------

enum class EstimateMethod { exact_enumeration, monte_carlo, product };

struct ComplexityEstimate {
    double value = 1.0;      ///< N(P, x); a lower bound when censored
    double log_value = 0.0;  ///< ln N, finite even when value overflows
    EstimateMethod method = EstimateMethod::exact_enumeration;
    std::optional<double> ci_low, ci_high;  ///< Monte Carlo only; ci_high absent when censored
    std::uint64_t n_samples = 0;
    std::uint64_t n_correct = 0;
    bool censored = false;

    nlohmann::json to_json() const;
};

std::string to_string(EstimateMethod m);

/// Exact N = 1 / sum_{y in correct} P(y), by chain-rule summation over the correct set.
/// Throws EnumerationGuard when the set exceeds `guard` members.
ComplexityEstimate enumerate_complexity(const SequenceModel& model, std::span<const Sequence> correct_set,
                                        double guard = 1e8);
ComplexityEstimate enumerate_complexity(const ToyProblem& problem);

struct SamplerConfig {
    double temperature = 1.0;
    double nucleus_p = 0.95;
};

/// Temperature-scaled, top-p truncated next-token distribution.
std::vector<double> nucleus_dist(std::span<const double> log_probs, const SamplerConfig& cfg);

/// Autoregressive sample; one uniform draw per step from `rng`.
Sequence sample_decode(const SequenceModel& model, std::span<const Token> context, const SamplerConfig& cfg,
                       RngStream& rng);

/// n samples, sample i drawn from stream (seed, i). value = n / n_correct with a Wilson
/// 95% interval on the pass rate inverted to an interval on N. Zero successes give a
/// censored rule-of-three lower bound n / 3.
ComplexityEstimate mc_complexity(const SequenceModel& model, std::span<const Sequence> correct_set,
                                 std::uint64_t n_samples, const SamplerConfig& cfg, std::uint64_t seed,
                                 unsigned workers = 1);

ComplexityEstimate complexity_from_counts(std::uint64_t n_samples, std::uint64_t n_correct);

/// Product of two component complexities (the multi-agent cost). Intervals multiply
/// endpoint-wise; a censored component censors the product.
ComplexityEstimate multi_agent_complexity(const ComplexityEstimate& a, const ComplexityEstimate& b);
ComplexityEstimate multi_agent_complexity(const ToyProblem& p1, const ToyProblem& p2);

}  // namespace screening
