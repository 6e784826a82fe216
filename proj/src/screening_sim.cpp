#include "screening/screening_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

#include <fmt/core.h>

#include "screening/errors.hpp"
#include "screening/stats.hpp"

namespace screening {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> v) {
    double m = kNegInf;
    for (double x : v) m = std::max(m, x);
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

std::vector<double> softmax_log(std::span<const double> logits) {
    const double lse = log_sum_exp(logits);
    std::vector<double> p(logits.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = logits[i] == kNegInf ? 0.0 : std::exp(logits[i] - lse);
    return p;
}

std::ptrdiff_t first_terminator(std::span<const Token> prefix, Token term) {
    const auto it = std::find(prefix.begin(), prefix.end(), term);
    return it == prefix.end() ? -1 : it - prefix.begin();
}

}  // namespace

std::vector<double> screened_step_dist(std::span<const double> probs, std::span<const double> noise) {
    if (probs.size() != noise.size()) throw DomainError("screened_step_dist: probs and noise differ in length");
    std::vector<double> logits(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!std::isfinite(noise[i])) throw DomainError("screened_step_dist: noise must be finite");
        logits[i] = probs[i] > 0.0 ? std::log(probs[i]) + noise[i] : kNegInf;
    }
    return softmax_log(logits);
}

std::optional<double> weighted_noise_x(std::span<const double> probs, std::span<const double> noise,
                                       std::size_t correct) {
    if (probs.size() < 2 || probs.size() != noise.size() || correct >= probs.size())
        throw DomainError("weighted_noise_x: need >= 2 tokens, matching lengths and a valid correct index");
    double mass = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (i == correct) continue;
        mass += probs[i];
        acc += probs[i] * (noise[i] - noise[correct]);
    }
    if (!(mass > 0.0)) return std::nullopt;
    return acc / mass;
}

std::string to_string(NoiseCorrelation c) {
    return c == NoiseCorrelation::iid_per_step ? "iid_per_step" : "frozen_per_sequence";
}
std::string to_string(NoiseLayout l) { return l == NoiseLayout::independent ? "independent" : "reference_solution"; }
std::string to_string(WeightSource w) { return w == WeightSource::standalone ? "standalone" : "composite"; }

NoiseCorrelation parse_correlation(const std::string& s) {
    if (s == "iid_per_step") return NoiseCorrelation::iid_per_step;
    if (s == "frozen_per_sequence") return NoiseCorrelation::frozen_per_sequence;
    throw DomainError("unknown noise correlation \"" + s + "\"");
}
NoiseLayout parse_layout(const std::string& s) {
    if (s == "independent") return NoiseLayout::independent;
    if (s == "reference_solution") return NoiseLayout::reference_solution;
    throw DomainError("unknown noise layout \"" + s + "\"");
}
WeightSource parse_weights(const std::string& s) {
    if (s == "standalone") return WeightSource::standalone;
    if (s == "composite") return WeightSource::composite;
    throw DomainError("unknown weight source \"" + s + "\"");
}

// ---------------------------------------------------------------------------

ComposedModel::ComposedModel(std::shared_ptr<const ToyLM> first, std::shared_ptr<const ToyLM> second)
    : first_(std::move(first)), second_(std::move(second)) {
    if (first_->vocab() != second_->vocab() || first_->terminator() != second_->terminator())
        throw DomainError("composite parts must share one vocabulary and terminator");
}

std::vector<double> ComposedModel::next_probs(std::span<const Token> prefix) const {
    const auto cut = first_terminator(prefix, terminator());
    if (cut < 0) return first_->next_probs(prefix);
    return second_->next_probs(prefix.subspan(static_cast<std::size_t>(cut) + 1));
}

std::vector<double> ComposedModel::next_log_probs(std::span<const Token> prefix) const {
    auto p = next_probs(prefix);
    for (auto& v : p) v = v > 0.0 ? std::log(v) : kNegInf;
    return p;
}

bool ComposedModel::is_complete(std::span<const Token> prefix) const {
    return std::count(prefix.begin(), prefix.end(), terminator()) >= 2;
}

void ScreenedComposite::validate() const {
    ComposedModel(first.lm, second.lm);
}

std::vector<Sequence> ScreenedComposite::correct_set() const {
    std::vector<Sequence> out;
    out.reserve(first.correct_set.size() * second.correct_set.size());
    for (const auto& a : first.correct_set)
        for (const auto& b : second.correct_set) {
            Sequence s = a;
            s.insert(s.end(), b.begin(), b.end());
            out.push_back(std::move(s));
        }
    return out;
}

Sequence ScreenedComposite::reference_solution() const {
    Sequence s = first.correct_set.front();
    s.insert(s.end(), second.correct_set.front().begin(), second.correct_set.front().end());
    return s;
}

nlohmann::json ScreenedComposite::to_json() const {
    return {{"first", first.to_json()},
            {"second", second.to_json()},
            {"noise", noise.to_json()},
            {"correlation", to_string(correlation)},
            {"layout", to_string(layout)},
            {"weights", to_string(weights)}};
}

ScreenedComposite ScreenedComposite::from_json(const nlohmann::json& j) {
    try {
        ScreenedComposite c{ToyProblem::from_json(j.at("first")), ToyProblem::from_json(j.at("second"))};
        if (j.contains("noise")) c.noise = NoiseModel::from_json(j.at("noise"));
        if (j.contains("correlation")) c.correlation = parse_correlation(j.at("correlation").get<std::string>());
        if (j.contains("layout")) c.layout = parse_layout(j.at("layout").get<std::string>());
        if (j.contains("weights")) c.weights = parse_weights(j.at("weights").get<std::string>());
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("composite spec: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

ScreenedModel::ScreenedModel(const ScreenedComposite& composite, std::uint64_t master_seed, std::uint64_t realization)
    : composite_(&composite),
      base_(composite.first.lm, composite.second.lm),
      reference_(composite.reference_solution()),
      seed_(master_seed),
      realization_(realization) {}

std::vector<double> ScreenedModel::noise_at(std::size_t step) const {
    const std::uint64_t slot = composite_->correlation == NoiseCorrelation::frozen_per_sequence ? 0 : step;
    RngStream rng(seed_, stream_id({tag("screen-noise"), realization_, slot}));
    if (composite_->layout == NoiseLayout::independent)
        return sample_noise_vector(composite_->noise, vocab_size(), rng);
    std::vector<double> v(vocab_size(), 0.0);
    const double z = composite_->noise.sample(rng);
    if (step < reference_.size()) v[static_cast<std::size_t>(reference_[step])] = z;
    return v;
}

std::vector<double> ScreenedModel::next_log_probs(std::span<const Token> prefix) const {
    if (composite_->noise.is_degenerate()) return base_.next_log_probs(prefix);
    const auto p = base_.next_probs(prefix);
    const auto noise = noise_at(prefix.size());
    std::vector<double> logits(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) logits[i] = p[i] > 0.0 ? std::log(p[i]) + noise[i] : kNegInf;
    const double lse = log_sum_exp(logits);
    for (auto& l : logits)
        if (l != kNegInf) l -= lse;
    return logits;
}

DecodeStepRecord ScreenedModel::step_record(std::span<const Token> prefix, Token correct) const {
    DecodeStepRecord r;
    r.step_index = prefix.size();
    r.probs_standalone = base_.next_probs(prefix);
    r.noise_vector = noise_at(prefix.size());
    r.probs_composite = screened_step_dist(r.probs_standalone, r.noise_vector);
    r.correct_token_index = static_cast<std::size_t>(correct);
    const auto& weights =
        composite_->weights == WeightSource::standalone ? r.probs_standalone : r.probs_composite;
    r.weighted_noise_x = weighted_noise_x(weights, r.noise_vector, r.correct_token_index);
    return r;
}

std::vector<DecodeStepRecord> ScreenedModel::trace(std::span<const Token> sequence) const {
    std::vector<DecodeStepRecord> out;
    out.reserve(sequence.size());
    for (std::size_t t = 0; t < sequence.size(); ++t) out.push_back(step_record(sequence.first(t), sequence[t]));
    return out;
}

// ---------------------------------------------------------------------------

std::string to_string(EstimateMethod m) {
    switch (m) {
        case EstimateMethod::exact_enumeration: return "exact_enumeration";
        case EstimateMethod::monte_carlo: return "monte_carlo";
        case EstimateMethod::product: return "product";
    }
    return "?";
}

nlohmann::json ComplexityEstimate::to_json() const {
    nlohmann::json j{{"value", std::isfinite(value) ? nlohmann::json(value) : nlohmann::json(nullptr)},
                     {"log_value", log_value},
                     {"method", to_string(method)},
                     {"censored", censored}};
    if (method == EstimateMethod::monte_carlo) {
        j["n_samples"] = n_samples;
        j["n_correct"] = n_correct;
    }
    if (ci_low) j["ci_low"] = *ci_low;
    if (ci_low || ci_high) j["ci_high"] = ci_high ? nlohmann::json(*ci_high) : nlohmann::json(nullptr);
    return j;
}

ComplexityEstimate enumerate_complexity(const SequenceModel& model, std::span<const Sequence> correct_set,
                                        double guard) {
    if (static_cast<double>(correct_set.size()) > guard)
        throw EnumerationGuard(fmt::format("correct set of {} sequences exceeds the guard", correct_set.size()));
    if (correct_set.empty()) throw DomainError("enumerate_complexity: empty correct set");
    std::vector<double> lps;
    lps.reserve(correct_set.size());
    for (const auto& s : correct_set) lps.push_back(sequence_log_prob(model, s));
    const double log_mass = log_sum_exp(lps);
    ComplexityEstimate e;
    e.method = EstimateMethod::exact_enumeration;
    e.log_value = -log_mass;
    e.value = std::exp(e.log_value);
    return e;
}

ComplexityEstimate enumerate_complexity(const ToyProblem& problem) {
    return enumerate_complexity(*problem.lm, problem.correct_set);
}

std::vector<double> nucleus_dist(std::span<const double> log_probs, const SamplerConfig& cfg) {
    if (!(cfg.temperature > 0.0)) throw DomainError("temperature must be positive");
    if (!(cfg.nucleus_p > 0.0 && cfg.nucleus_p <= 1.0)) throw DomainError("nucleus p must lie in (0, 1]");
    std::vector<double> scaled(log_probs.begin(), log_probs.end());
    for (auto& v : scaled)
        if (v != kNegInf) v /= cfg.temperature;
    auto p = softmax_log(scaled);
    if (cfg.nucleus_p >= 1.0) return p;

    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    double cum = 0.0;
    std::size_t keep = 0;
    while (keep < order.size()) {
        cum += p[order[keep++]];
        if (cum >= cfg.nucleus_p) break;
    }
    std::vector<double> out(p.size(), 0.0);
    for (std::size_t i = 0; i < keep; ++i) out[order[i]] = p[order[i]] / cum;
    return out;
}

Sequence sample_decode(const SequenceModel& model, std::span<const Token> context, const SamplerConfig& cfg,
                       RngStream& rng) {
    Sequence prefix(context.begin(), context.end());
    const std::size_t start = prefix.size();
    while (!model.is_complete(prefix)) {
        const auto p = nucleus_dist(model.next_log_probs(prefix), cfg);
        const double u = rng.uniform();
        double cum = 0.0;
        std::size_t pick = p.size();
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i] <= 0.0) continue;
            cum += p[i];
            pick = i;
            if (u < cum) break;
        }
        prefix.push_back(static_cast<Token>(pick));
    }
    return Sequence(prefix.begin() + static_cast<std::ptrdiff_t>(start), prefix.end());
}

ComplexityEstimate complexity_from_counts(std::uint64_t n, std::uint64_t k) {
    if (n == 0) throw DomainError("complexity estimate needs at least one sample");
    if (k > n) throw DomainError("more correct samples than samples");
    ComplexityEstimate e;
    e.method = EstimateMethod::monte_carlo;
    e.n_samples = n;
    e.n_correct = k;
    const auto ci = stats::wilson(k, n);
    if (k == 0) {
        e.censored = true;
        e.value = static_cast<double>(n) / 3.0;
        e.ci_low = e.value;
    } else {
        e.value = static_cast<double>(n) / static_cast<double>(k);
        e.ci_low = 1.0 / ci.high;
        e.ci_high = 1.0 / ci.low;
    }
    e.log_value = std::log(e.value);
    return e;
}

ComplexityEstimate mc_complexity(const SequenceModel& model, std::span<const Sequence> correct_set,
                                 std::uint64_t n_samples, const SamplerConfig& cfg, std::uint64_t seed,
                                 unsigned workers) {
    if (n_samples == 0) throw DomainError("mc_complexity needs n_samples >= 1");
    const std::set<Sequence> correct(correct_set.begin(), correct_set.end());
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n_samples)));
    std::vector<std::uint64_t> hits(workers, 0);
    auto run = [&](unsigned w) {
        for (std::uint64_t i = w; i < n_samples; i += workers) {
            RngStream rng(seed, stream_id({tag("decode"), i}));
            hits[w] += correct.count(sample_decode(model, {}, cfg, rng));
        }
    };
    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
    }
    return complexity_from_counts(n_samples, std::accumulate(hits.begin(), hits.end(), std::uint64_t{0}));
}

ComplexityEstimate multi_agent_complexity(const ComplexityEstimate& a, const ComplexityEstimate& b) {
    ComplexityEstimate e;
    const bool exact = a.method == EstimateMethod::exact_enumeration && b.method == EstimateMethod::exact_enumeration;
    e.method = exact ? EstimateMethod::exact_enumeration : EstimateMethod::product;
    e.log_value = a.log_value + b.log_value;
    e.value = a.value * b.value;
    e.censored = a.censored || b.censored;
    if (!exact) {
        const double alo = a.ci_low.value_or(a.value), blo = b.ci_low.value_or(b.value);
        e.ci_low = alo * blo;
        if (!e.censored) e.ci_high = a.ci_high.value_or(a.value) * b.ci_high.value_or(b.value);
    }
    e.n_samples = a.n_samples + b.n_samples;
    e.n_correct = a.n_correct + b.n_correct;
    return e;
}

ComplexityEstimate multi_agent_complexity(const ToyProblem& p1, const ToyProblem& p2) {
    return multi_agent_complexity(enumerate_complexity(p1), enumerate_complexity(p2));
}

}  // namespace screening
