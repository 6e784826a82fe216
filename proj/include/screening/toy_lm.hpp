#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace screening {

using Token = int;
using Sequence = std::vector<Token>;

/// An autoregressive distribution over terminator-ended token sequences.
class SequenceModel {
public:
    virtual ~SequenceModel() = default;

    virtual std::size_t vocab_size() const = 0;
    virtual Token terminator() const = 0;
    /// Upper bound on the number of tokens (terminators included) in a complete sequence.
    virtual std::size_t max_sequence_tokens() const = 0;
    /// Natural-log next-token probabilities; -inf marks impossible tokens.
    virtual std::vector<double> next_log_probs(std::span<const Token> prefix) const = 0;
    /// True once the prefix is a complete sequence.
    virtual bool is_complete(std::span<const Token> prefix) const = 0;
};

/// Per-position distributions: dists[t] applies to prefixes of length t; the last
/// entry is reused for longer prefixes.
struct PositionalRule {
    std::vector<std::vector<double>> dists;
};

/// Order-k Markov rule keyed by the last k tokens (fewer at the start of a sequence).
/// Contexts missing from the table use `fallback`, which may be empty when the table
/// covers every reachable context.
struct MarkovRule {
    std::size_t order = 1;
    std::map<Sequence, std::vector<double>> table;
    std::vector<double> fallback;
};

using NextTokenRule = std::variant<PositionalRule, MarkovRule>;

/// Exactly-enumerable toy language model. The terminator is forced (probability 1)
/// once a prefix holds max_len tokens, so every sequence halts.
class ToyLM final : public SequenceModel {
public:
    /// Validates the rule: every vector has |vocab| entries, is non-negative and sums to 1
    /// within 1e-12. Throws DomainError otherwise.
    ToyLM(std::vector<std::string> vocab, std::string terminator, std::size_t max_len, NextTokenRule rule);

    std::size_t vocab_size() const override { return vocab_.size(); }
    Token terminator() const override { return terminator_; }
    std::size_t max_sequence_tokens() const override { return max_len_ + 1; }
    std::vector<double> next_log_probs(std::span<const Token> prefix) const override;
    bool is_complete(std::span<const Token> prefix) const override;

    /// Linear-space next-token probabilities (exact copies of the table entries).
    std::vector<double> next_probs(std::span<const Token> prefix) const;

    std::size_t max_len() const noexcept { return max_len_; }
    const std::vector<std::string>& vocab() const noexcept { return vocab_; }
    const NextTokenRule& rule() const noexcept { return rule_; }

    Token token(const std::string& name) const;
    const std::string& token_name(Token t) const;
    /// Parses a JSON sequence: an array of token names, or a string split into
    /// single-character tokens when every vocabulary entry is one character.
    Sequence parse_sequence(const nlohmann::json& j) const;
    std::string format_sequence(std::span<const Token> seq) const;

    nlohmann::json to_json() const;
    static ToyLM from_json(const nlohmann::json& j);

private:
    const std::vector<double>& rule_probs(std::span<const Token> prefix) const;

    std::vector<std::string> vocab_;
    Token terminator_;
    std::size_t max_len_;
    NextTokenRule rule_;
    std::vector<double> forced_stop_;
};

/// A problem with an explicitly declared set of correct solutions.
struct ToyProblem {
    std::string problem_id;
    std::shared_ptr<const ToyLM> lm;
    std::vector<Sequence> correct_set;
    std::size_t min_solution_len = 0;  ///< non-terminator tokens in the shortest member

    /// Validates: non-empty correct set, members unique, each ends with (and contains exactly
    /// one) terminator and fits max_len.
    static ToyProblem make(std::string id, std::shared_ptr<const ToyLM> lm, std::vector<Sequence> correct);

    std::size_t solution_count() const { return correct_set.size(); }

    nlohmann::json to_json() const;
    static ToyProblem from_json(const nlohmann::json& j);
};

/// Number of non-terminator tokens in a sequence.
std::size_t solution_length(std::span<const Token> seq, Token terminator);

/// Chain-rule log-probability of `sequence` following `context`.
/// Throws DomainError for tokens outside the vocabulary.
double sequence_log_prob(const SequenceModel& model, std::span<const Token> sequence,
                         std::span<const Token> context = {});

/// Every complete sequence of the model with positive probability, in lexicographic order.
/// Throws EnumerationGuard when vocab^max_tokens exceeds `guard`.
std::vector<Sequence> enumerate_sequences(const SequenceModel& model, double guard = 1e8);

}  // namespace screening
