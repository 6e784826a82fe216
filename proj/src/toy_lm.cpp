#include "screening/toy_lm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/core.h>

#include "screening/errors.hpp"

namespace screening {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void validate_dist(const std::vector<double>& p, std::size_t vocab, const std::string& where) {
    if (p.size() != vocab)
        throw DomainError(fmt::format("{}: distribution has {} entries, vocabulary has {}", where, p.size(), vocab));
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError(where + ": probabilities must be finite and >= 0");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw DomainError(fmt::format("{}: probabilities sum to {:.17g}, not 1", where, sum));
}

}  // namespace

ToyLM::ToyLM(std::vector<std::string> vocab, std::string terminator, std::size_t max_len, NextTokenRule rule)
    : vocab_(std::move(vocab)), max_len_(max_len), rule_(std::move(rule)) {
    if (vocab_.size() < 2) throw DomainError("toy LM: vocabulary needs at least two tokens");
    if (max_len_ == 0) throw DomainError("toy LM: max_len must be positive");
    std::set<std::string> seen(vocab_.begin(), vocab_.end());
    if (seen.size() != vocab_.size()) throw DomainError("toy LM: duplicate vocabulary entries");
    const auto it = std::find(vocab_.begin(), vocab_.end(), terminator);
    if (it == vocab_.end()) throw DomainError("toy LM: terminator \"" + terminator + "\" not in vocabulary");
    terminator_ = static_cast<Token>(it - vocab_.begin());
    forced_stop_.assign(vocab_.size(), 0.0);
    forced_stop_[terminator_] = 1.0;

    if (const auto* pos = std::get_if<PositionalRule>(&rule_)) {
        if (pos->dists.empty()) throw DomainError("toy LM: positional rule has no distributions");
        for (std::size_t t = 0; t < pos->dists.size(); ++t)
            validate_dist(pos->dists[t], vocab_.size(), fmt::format("toy LM position {}", t));
    } else {
        const auto& mk = std::get<MarkovRule>(rule_);
        for (const auto& [ctx, p] : mk.table) {
            if (ctx.size() > mk.order) throw DomainError("toy LM: Markov context longer than the order");
            for (Token t : ctx)
                if (t < 0 || static_cast<std::size_t>(t) >= vocab_.size() || t == terminator_)
                    throw DomainError("toy LM: Markov context holds an invalid token");
            validate_dist(p, vocab_.size(), "toy LM context \"" + format_sequence(ctx) + "\"");
        }
        if (!mk.fallback.empty()) validate_dist(mk.fallback, vocab_.size(), "toy LM fallback");
    }
}

const std::vector<double>& ToyLM::rule_probs(std::span<const Token> prefix) const {
    if (prefix.size() >= max_len_) return forced_stop_;
    if (const auto* pos = std::get_if<PositionalRule>(&rule_))
        return pos->dists[std::min(prefix.size(), pos->dists.size() - 1)];
    const auto& mk = std::get<MarkovRule>(rule_);
    const std::size_t k = std::min(mk.order, prefix.size());
    const Sequence key(prefix.end() - static_cast<std::ptrdiff_t>(k), prefix.end());
    if (auto it = mk.table.find(key); it != mk.table.end()) return it->second;
    if (mk.fallback.empty())
        throw DomainError("toy LM: no distribution for context \"" + format_sequence(key) + "\"");
    return mk.fallback;
}

std::vector<double> ToyLM::next_probs(std::span<const Token> prefix) const {
    for (Token t : prefix) {
        if (t < 0 || static_cast<std::size_t>(t) >= vocab_.size())
            throw DomainError(fmt::format("toy LM: token id {} outside the vocabulary", t));
        if (t == terminator_) throw DomainError("toy LM: prefix continues past the terminator");
    }
    return rule_probs(prefix);
}

std::vector<double> ToyLM::next_log_probs(std::span<const Token> prefix) const {
    auto p = next_probs(prefix);
    for (auto& v : p) v = v > 0.0 ? std::log(v) : kNegInf;
    return p;
}

bool ToyLM::is_complete(std::span<const Token> prefix) const {
    return !prefix.empty() && prefix.back() == terminator_;
}

Token ToyLM::token(const std::string& name) const {
    const auto it = std::find(vocab_.begin(), vocab_.end(), name);
    if (it == vocab_.end()) throw DomainError("token \"" + name + "\" outside the vocabulary");
    return static_cast<Token>(it - vocab_.begin());
}

const std::string& ToyLM::token_name(Token t) const {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_.size())
        throw DomainError(fmt::format("token id {} outside the vocabulary", t));
    return vocab_[t];
}

Sequence ToyLM::parse_sequence(const nlohmann::json& j) const {
    Sequence out;
    if (j.is_string()) {
        const bool single = std::all_of(vocab_.begin(), vocab_.end(), [](const auto& v) { return v.size() == 1; });
        if (!single) throw DomainError("sequence strings need single-character vocabulary entries; use an array");
        for (char c : j.get<std::string>()) out.push_back(token(std::string(1, c)));
    } else if (j.is_array()) {
        for (const auto& e : j) out.push_back(token(e.get<std::string>()));
    } else {
        throw DomainError("sequence must be a string or an array of token names");
    }
    return out;
}

std::string ToyLM::format_sequence(std::span<const Token> seq) const {
    const bool single = std::all_of(vocab_.begin(), vocab_.end(), [](const auto& v) { return v.size() == 1; });
    std::string s;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (!single && i > 0) s += ' ';
        s += token_name(seq[i]);
    }
    return s;
}

nlohmann::json ToyLM::to_json() const {
    nlohmann::json j{{"vocab", vocab_}, {"terminator", vocab_[terminator_]}, {"max_len", max_len_}};
    if (const auto* pos = std::get_if<PositionalRule>(&rule_)) {
        j["rule"] = {{"kind", "positional"}, {"dists", pos->dists}};
    } else {
        const auto& mk = std::get<MarkovRule>(rule_);
        nlohmann::json table = nlohmann::json::object();
        for (const auto& [ctx, p] : mk.table) {
            std::string key;
            for (std::size_t i = 0; i < ctx.size(); ++i) key += (i ? " " : "") + vocab_[ctx[i]];
            table[key] = p;
        }
        j["rule"] = {{"kind", "markov"}, {"order", mk.order}, {"table", table}};
        if (!mk.fallback.empty()) j["rule"]["fallback"] = mk.fallback;
    }
    return j;
}

ToyLM ToyLM::from_json(const nlohmann::json& j) {
    try {
        auto vocab = j.at("vocab").get<std::vector<std::string>>();
        auto term = j.at("terminator").get<std::string>();
        auto max_len = j.at("max_len").get<std::size_t>();
        const auto& r = j.at("rule");
        const auto kind = r.at("kind").get<std::string>();
        if (kind == "positional")
            return ToyLM(vocab, term, max_len, PositionalRule{r.at("dists").get<std::vector<std::vector<double>>>()});
        if (kind == "iid")
            return ToyLM(vocab, term, max_len, PositionalRule{{r.at("dist").get<std::vector<double>>()}});
        if (kind == "markov") {
            MarkovRule mk;
            mk.order = r.at("order").get<std::size_t>();
            auto index_of = [&](const std::string& name) {
                const auto it = std::find(vocab.begin(), vocab.end(), name);
                if (it == vocab.end()) throw DomainError("Markov context token \"" + name + "\" not in vocabulary");
                return static_cast<Token>(it - vocab.begin());
            };
            for (const auto& [key, p] : r.at("table").items()) {
                Sequence ctx;
                std::size_t start = 0;
                while (start < key.size()) {
                    auto end = key.find(' ', start);
                    if (end == std::string::npos) end = key.size();
                    if (end > start) ctx.push_back(index_of(key.substr(start, end - start)));
                    start = end + 1;
                }
                mk.table[ctx] = p.get<std::vector<double>>();
            }
            if (r.contains("fallback")) mk.fallback = r.at("fallback").get<std::vector<double>>();
            return ToyLM(vocab, term, max_len, std::move(mk));
        }
        throw DomainError("toy LM: unknown rule kind \"" + kind + "\"");
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("toy LM: ") + e.what());
    }
}

std::size_t solution_length(std::span<const Token> seq, Token terminator) {
    return static_cast<std::size_t>(std::count_if(seq.begin(), seq.end(), [&](Token t) { return t != terminator; }));
}

ToyProblem ToyProblem::make(std::string id, std::shared_ptr<const ToyLM> lm, std::vector<Sequence> correct) {
    if (!lm) throw DomainError("toy problem: missing language model");
    if (correct.empty()) throw DomainError("toy problem " + id + ": correct set is empty");
    std::set<Sequence> uniq(correct.begin(), correct.end());
    if (uniq.size() != correct.size()) throw DomainError("toy problem " + id + ": duplicate correct sequences");
    std::size_t shortest = std::numeric_limits<std::size_t>::max();
    for (const auto& s : correct) {
        if (s.empty() || s.back() != lm->terminator())
            throw DomainError("toy problem " + id + ": correct sequence must end with the terminator");
        if (std::count(s.begin(), s.end(), lm->terminator()) != 1)
            throw DomainError("toy problem " + id + ": terminator inside a correct sequence");
        if (s.size() > lm->max_sequence_tokens())
            throw DomainError("toy problem " + id + ": correct sequence longer than max_len");
        for (Token t : s) lm->token_name(t);
        shortest = std::min(shortest, s.size() - 1);
    }
    ToyProblem p;
    p.problem_id = std::move(id);
    p.lm = std::move(lm);
    p.correct_set = std::move(correct);
    p.min_solution_len = shortest;
    return p;
}

nlohmann::json ToyProblem::to_json() const {
    nlohmann::json set = nlohmann::json::array();
    for (const auto& s : correct_set) {
        nlohmann::json arr = nlohmann::json::array();
        for (Token t : s) arr.push_back(lm->token_name(t));
        set.push_back(arr);
    }
    return {{"problem_id", problem_id}, {"lm", lm->to_json()}, {"correct_set", set}};
}

ToyProblem ToyProblem::from_json(const nlohmann::json& j) {
    try {
        auto lm = std::make_shared<const ToyLM>(ToyLM::from_json(j.at("lm")));
        std::vector<Sequence> correct;
        for (const auto& s : j.at("correct_set")) correct.push_back(lm->parse_sequence(s));
        return make(j.at("problem_id").get<std::string>(), lm, std::move(correct));
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("toy problem: ") + e.what());
    }
}

double sequence_log_prob(const SequenceModel& model, std::span<const Token> sequence, std::span<const Token> context) {
    Sequence prefix(context.begin(), context.end());
    double lp = 0.0;
    for (Token t : sequence) {
        if (t < 0 || static_cast<std::size_t>(t) >= model.vocab_size())
            throw DomainError(fmt::format("sequence token {} outside the vocabulary", t));
        if (model.is_complete(prefix)) return kNegInf;
        const auto logp = model.next_log_probs(prefix);
        lp += logp[t];
        if (lp == kNegInf) return lp;
        prefix.push_back(t);
    }
    return lp;
}

std::vector<Sequence> enumerate_sequences(const SequenceModel& model, double guard) {
    const double leaves =
        static_cast<double>(model.max_sequence_tokens()) * std::log(static_cast<double>(model.vocab_size()));
    if (leaves > std::log(guard))
        throw EnumerationGuard(fmt::format("enumeration of {}^{} sequences exceeds the guard {:g}", model.vocab_size(),
                                           model.max_sequence_tokens(), guard));
    std::vector<Sequence> out;
    Sequence prefix;
    // Iterative DFS over positive-probability branches.
    std::vector<std::vector<double>> stack_lp;
    std::vector<std::size_t> next_tok;
    stack_lp.push_back(model.next_log_probs(prefix));
    next_tok.push_back(0);
    while (!stack_lp.empty()) {
        auto& i = next_tok.back();
        const auto& lp = stack_lp.back();
        if (i >= lp.size()) {
            stack_lp.pop_back();
            next_tok.pop_back();
            if (!prefix.empty()) prefix.pop_back();
            continue;
        }
        const Token t = static_cast<Token>(i++);
        if (lp[t] == kNegInf) continue;
        prefix.push_back(t);
        if (model.is_complete(prefix)) {
            out.push_back(prefix);
            prefix.pop_back();
            continue;
        }
        stack_lp.push_back(model.next_log_probs(prefix));
        next_tok.push_back(0);
    }
    return out;
}

}  // namespace screening
