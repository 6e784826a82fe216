#include "screening/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include <fmt/core.h>

#include "screening/errors.hpp"

namespace screening::trace {

std::string to_string(Variant v) { return v == Variant::standalone ? "standalone" : "composite"; }

bool TraceStep::complete() const {
    return std::any_of(topk.begin(), topk.end(), [&](const auto& e) { return e.first == correct_token_id; });
}

double TraceStep::correct_logit() const {
    for (const auto& [id, logit] : topk)
        if (id == correct_token_id) return logit;
    return -std::numeric_limits<double>::infinity();
}

double TraceStep::correct_log_prob() const {
    if (topk.empty()) return -std::numeric_limits<double>::infinity();
    const double m = topk.front().second;
    double s = 0.0;
    for (const auto& e : topk) s += std::exp(e.second - m);
    return correct_logit() - (m + std::log(s));
}

nlohmann::json TraceStep::to_json() const {
    nlohmann::json tk = nlohmann::json::array();
    for (const auto& [id, logit] : topk) tk.push_back({id, logit});
    return nlohmann::json{{"pair_id", pair_id},
                          {"variant", to_string(variant)},
                          {"step_index", step_index},
                          {"correct_token_id", correct_token_id},
                          {"topk", tk},
                          {"chosen_token_id", chosen_token_id},
                          {"skip_prefix_flag", skip_prefix_flag}};
}

TraceStep TraceStep::from_json(const nlohmann::json& j, const std::string& source, std::size_t line) {
    auto fail = [&](const std::string& what) { return SchemaError(source, line, what); };
    if (!j.is_object()) throw fail("expected a JSON object");
    auto field = [&](const char* key) -> const nlohmann::json& {
        if (!j.contains(key)) throw fail(std::string("missing field \"") + key + "\"");
        return j.at(key);
    };
    auto integer = [&](const char* key) {
        const auto& v = field(key);
        if (!v.is_number_integer()) throw fail(std::string("field \"") + key + "\" must be an integer");
        return v.get<std::int64_t>();
    };
    TraceStep s;
    if (!field("pair_id").is_string()) throw fail("field \"pair_id\" must be a string");
    s.pair_id = j.at("pair_id").get<std::string>();
    const auto& var = field("variant");
    if (var == "standalone") s.variant = Variant::standalone;
    else if (var == "composite") s.variant = Variant::composite;
    else throw fail("field \"variant\" must be \"standalone\" or \"composite\"");
    const auto idx = integer("step_index");
    if (idx < 0) throw fail("field \"step_index\" must be >= 0");
    s.step_index = static_cast<std::uint64_t>(idx);
    s.correct_token_id = integer("correct_token_id");
    s.chosen_token_id = integer("chosen_token_id");
    const auto& flag = field("skip_prefix_flag");
    if (!flag.is_boolean()) throw fail("field \"skip_prefix_flag\" must be a boolean");
    s.skip_prefix_flag = flag.get<bool>();
    const auto& tk = field("topk");
    if (!tk.is_array()) throw fail("field \"topk\" must be an array");
    for (const auto& e : tk) {
        std::int64_t id;
        double logit;
        if (e.is_array() && e.size() == 2 && e[0].is_number_integer() && e[1].is_number()) {
            id = e[0].get<std::int64_t>();
            logit = e[1].get<double>();
        } else if (e.is_object() && e.contains("token_id") && e.contains("logit") && e["token_id"].is_number_integer() &&
                   e["logit"].is_number()) {
            id = e["token_id"].get<std::int64_t>();
            logit = e["logit"].get<double>();
        } else {
            throw fail("topk entries must be [token_id, logit] pairs");
        }
        if (!std::isfinite(logit)) throw fail("topk logits must be finite");
        s.topk.emplace_back(id, logit);
    }
    for (std::size_t i = 1; i < s.topk.size(); ++i)
        if (s.topk[i].second > s.topk[i - 1].second) throw fail("topk must be sorted by descending logit");
    return s;
}

std::string to_jsonl_line(const TraceStep& s) {
    // Fixed key order (declaration order), independent of the JSON library's map ordering.
    nlohmann::json tk = nlohmann::json::array();
    for (const auto& [id, logit] : s.topk) tk.push_back({id, logit});
    std::string out = "{\"pair_id\":" + nlohmann::json(s.pair_id).dump();
    out += ",\"variant\":\"" + to_string(s.variant) + "\"";
    out += ",\"step_index\":" + std::to_string(s.step_index);
    out += ",\"correct_token_id\":" + std::to_string(s.correct_token_id);
    out += ",\"topk\":" + tk.dump();
    out += ",\"chosen_token_id\":" + std::to_string(s.chosen_token_id);
    out += std::string(",\"skip_prefix_flag\":") + (s.skip_prefix_flag ? "true" : "false") + "}";
    return out;
}

void write_jsonl(std::ostream& os, const std::vector<TraceStep>& steps) {
    for (const auto& s : steps) os << to_jsonl_line(s) << '\n';
}

void write_jsonl(const std::filesystem::path& path, const std::vector<TraceStep>& steps) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    write_jsonl(os, steps);
}

std::vector<TraceStep> read_jsonl(std::istream& is, const std::string& source) {
    std::vector<TraceStep> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw SchemaError(source, lineno, std::string("invalid JSON: ") + e.what());
        }
        out.push_back(TraceStep::from_json(j, source, lineno));
    }
    return out;
}

std::vector<TraceStep> read_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw SchemaError(path.string(), 0, "cannot open file");
    return read_jsonl(is, path.string());
}

std::vector<TraceStep> read_jsonl_files(const std::vector<std::filesystem::path>& paths, unsigned workers) {
    std::vector<std::vector<TraceStep>> parts(paths.size());
    std::vector<std::exception_ptr> errors(paths.size());
    auto load = [&](std::size_t i) {
        try {
            parts[i] = read_jsonl(paths[i]);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    workers = std::max(1u, workers);
    if (workers == 1 || paths.size() < 2) {
        for (std::size_t i = 0; i < paths.size(); ++i) load(i);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < paths.size(); i += workers) load(i);
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<TraceStep> out;
    for (auto& p : parts) std::move(p.begin(), p.end(), std::back_inserter(out));
    return out;
}

std::string to_string(PassKind k) {
    switch (k) {
        case PassKind::standalone_1: return "standalone_1";
        case PassKind::standalone_2: return "standalone_2";
        case PassKind::composite: return "composite";
    }
    return "?";
}

PassKind parse_pass_kind(const std::string& s) {
    if (s == "standalone_1") return PassKind::standalone_1;
    if (s == "standalone_2") return PassKind::standalone_2;
    if (s == "composite") return PassKind::composite;
    throw DomainError("unknown pass-rate kind \"" + s + "\"");
}

void write_pass_rates(std::ostream& os, const std::vector<PassRateRecord>& records) {
    os << kPassRateHeader << '\n';
    for (const auto& r : records)
        os << r.problem_id << ',' << to_string(r.kind) << ',' << r.n_samples << ',' << r.n_correct << '\n';
}

void write_pass_rates(const std::filesystem::path& path, const std::vector<PassRateRecord>& records) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    write_pass_rates(os, records);
}

std::vector<PassRateRecord> read_pass_rates(std::istream& is, const std::string& source) {
    std::vector<PassRateRecord> out;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header) {
            if (line != kPassRateHeader)
                throw SchemaError(source, lineno, std::string("expected header \"") + kPassRateHeader + "\"");
            header = true;
            continue;
        }
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(c);
        if (cols.size() != 4) throw SchemaError(source, lineno, "expected 4 columns");
        PassRateRecord r;
        r.problem_id = cols[0];
        if (r.problem_id.empty()) throw SchemaError(source, lineno, "empty problem_id");
        try {
            r.kind = parse_pass_kind(cols[1]);
            std::size_t used = 0;
            r.n_samples = std::stoull(cols[2], &used);
            if (used != cols[2].size()) throw std::invalid_argument("n_samples");
            r.n_correct = std::stoull(cols[3], &used);
            if (used != cols[3].size()) throw std::invalid_argument("n_correct");
        } catch (const std::exception& e) {
            throw SchemaError(source, lineno, std::string("bad field: ") + e.what());
        }
        if (r.n_samples == 0) throw SchemaError(source, lineno, "n_samples must be positive");
        if (r.n_correct > r.n_samples) throw SchemaError(source, lineno, "n_correct exceeds n_samples");
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<PassRateRecord> read_pass_rates(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw SchemaError(path.string(), 0, "cannot open file");
    return read_pass_rates(is, path.string());
}

}  // namespace screening::trace
