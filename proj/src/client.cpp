#include "screening/client.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/core.h>
#include <httplib.h>

#include "screening/errors.hpp"
#include "screening/rng.hpp"

namespace screening::client {

namespace {

std::uint64_t hash_text(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
    return h;
}

std::string error_message(const httplib::Result& res) {
    try {
        const auto j = nlohmann::json::parse(res->body);
        if (j.contains("error")) {
            const auto& e = j["error"];
            if (e.is_object() && e.contains("message")) return e["message"].get<std::string>();
            return e.dump();
        }
    } catch (const nlohmann::json::exception&) {
    }
    return res->body.substr(0, 200);
}

struct OffsetStep {
    trace::TraceStep step;
    std::size_t offset;
};

std::vector<OffsetStep> steps_with_offsets(const nlohmann::json& choice, const std::string& pair_id,
                                           trace::Variant variant, std::size_t from_offset, std::uint64_t first_index,
                                           bool sampled) {
    const auto& lp = choice.at("logprobs");
    if (lp.is_null()) throw UnsupportedEndpoint("endpoint returned no logprobs");
    const auto& tokens = lp.at("tokens");
    const auto& tops = lp.at("top_logprobs");
    const auto& offsets = lp.at("text_offset");
    std::vector<OffsetStep> out;
    std::uint64_t index = first_index;
    for (std::size_t j = 0; j < tokens.size(); ++j) {
        const auto off = offsets.at(j).get<std::size_t>();
        if (off < from_offset || tops.at(j).is_null()) continue;
        trace::TraceStep s;
        s.pair_id = pair_id;
        s.variant = variant;
        s.step_index = index++;
        s.correct_token_id = token_id(tokens.at(j).get<std::string>());
        for (const auto& [tok, logit] : tops.at(j).items()) s.topk.emplace_back(token_id(tok), logit.get<double>());
        std::sort(s.topk.begin(), s.topk.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        if (s.topk.empty()) throw UnsupportedEndpoint("endpoint returned empty top_logprobs");
        s.chosen_token_id = sampled ? s.correct_token_id : s.topk.front().first;
        out.push_back({std::move(s), off});
    }
    return out;
}

std::string entry_file(const std::string& problem, trace::PassKind kind, std::uint64_t i) {
    return fmt::format("traces/{}__{}__{}.jsonl", problem, trace::to_string(kind), i);
}

std::mutex manifest_mutex;

}  // namespace

void EndpointConfig::validate() const {
    if (base_url.rfind("http://", 0) != 0) throw DomainError("base_url must start with http://");
    if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw DomainError("top_p must lie in (0, 1]");
    if (n_samples == 0) throw DomainError("n_samples must be at least 1");
    if (max_retries < 0) throw DomainError("max_retries must be non-negative");
    if (concurrency == 0) throw DomainError("concurrency must be at least 1");
    if (!(timeout_s > 0.0)) throw DomainError("timeout must be positive");
}

nlohmann::json EndpointConfig::to_json() const {
    return {{"base_url", base_url},         {"model_name", model_name},   {"temperature", temperature},
            {"top_p", top_p},               {"n_samples", n_samples},     {"logprobs_top_k", logprobs_top_k},
            {"timeout_s", timeout_s},       {"max_retries", max_retries}, {"auth_env", auth_env},
            {"max_tokens", max_tokens},     {"concurrency", concurrency}, {"backoff_base_s", backoff_base_s},
            {"backoff_factor", backoff_factor}, {"seed", seed}};
}

CompletionsClient::CompletionsClient(EndpointConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto slash = cfg_.base_url.find('/', 7);
    host_ = cfg_.base_url.substr(0, slash);
    std::string prefix = slash == std::string::npos ? "" : cfg_.base_url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    path_ = prefix + "/completions";
    sleep = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
}

nlohmann::json CompletionsClient::complete(const nlohmann::json& request) const {
    httplib::Client cli(host_);
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!cfg_.auth_env.empty())
        if (const char* token = std::getenv(cfg_.auth_env.c_str()); token && *token)
            headers.emplace("Authorization", std::string("Bearer ") + token);

    const std::string body = request.dump();
    RngStream jitter(cfg_.seed, stream_id({tag("backoff"), hash_text(body)}));
    auto backoff = [&](int attempt) {
        return cfg_.backoff_base_s * std::pow(cfg_.backoff_factor, attempt) * (1.0 + 0.5 * jitter.uniform());
    };
    std::string last_error;
    bool transport = false;
    for (int attempt = 0;; ++attempt) {
        ++attempts_;
        auto res = cli.Post(path_, headers, body, "application/json");
        double wait = -1.0;
        transport = !res;
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
        } else if (res->status == 200) {
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                throw Error(std::string("endpoint returned invalid JSON: ") + e.what());
            }
        } else if (res->status == 429) {
            last_error = "HTTP 429: " + error_message(res);
            if (res->has_header("Retry-After")) {
                try {
                    wait = std::max(0.0, std::stod(res->get_header_value("Retry-After")));
                } catch (const std::exception&) {
                }
            }
        } else if (res->status >= 500) {
            last_error = fmt::format("HTTP {}: {}", res->status, error_message(res));
        } else {
            const std::string msg = fmt::format("HTTP {}: {}", res->status, error_message(res));
            if (request.value("echo", false)) throw UnsupportedEndpoint("endpoint rejected prompt echo (" + msg + ")");
            throw Error(msg);
        }
        if (attempt >= cfg_.max_retries)
            throw NetworkError(fmt::format("{} after {} attempts", last_error, attempt + 1), transport);
        sleep(wait >= 0.0 ? wait : backoff(attempt));
    }
}

std::int64_t token_id(const std::string& token) {
    if (token.rfind("token_id:", 0) == 0) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(token.substr(9), &used);
            if (used == token.size() - 9 && v >= 0) return v;
        } catch (const std::exception&) {
        }
    }
    return static_cast<std::int64_t>(hash_text(token) & 0x7fffffffULL);
}

std::vector<trace::TraceStep> choice_to_steps(const nlohmann::json& choice, const std::string& pair_id,
                                              trace::Variant variant, std::size_t from_offset,
                                              std::uint64_t first_index, bool sampled) {
    std::vector<trace::TraceStep> out;
    for (auto& os : steps_with_offsets(choice, pair_id, variant, from_offset, first_index, sampled))
        out.push_back(std::move(os.step));
    return out;
}

// ---------------------------------------------------------------------------

PromptRecord PromptRecord::from_json(const nlohmann::json& j) {
    try {
        PromptRecord p;
        p.problem_id = j.at("problem_id").get<std::string>();
        p.kind = trace::parse_pass_kind(j.at("kind").get<std::string>());
        p.prompt = j.at("prompt").get<std::string>();
        if (j.contains("correct_solutions")) p.correct_solutions = j["correct_solutions"].get<std::vector<std::string>>();
        if (p.problem_id.empty() || p.problem_id.find_first_of("/\\") != std::string::npos)
            throw DomainError("problem_id must be non-empty and free of path separators");
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("prompt record: ") + e.what());
    }
}

namespace {

template <class T>
std::vector<T> read_jsonl_records(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw SchemaError(path.string(), 0, "cannot open file");
    std::vector<T> out;
    std::string line;
    for (std::size_t n = 1; std::getline(is, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(T::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(path.string(), n, e.what());
        } catch (const DomainError& e) {
            throw SchemaError(path.string(), n, e.what());
        }
    }
    return out;
}

}  // namespace

std::vector<PromptRecord> read_prompts(const std::filesystem::path& path) {
    return read_jsonl_records<PromptRecord>(path);
}

nlohmann::ordered_json ManifestEntry::to_json() const {
    nlohmann::ordered_json j;
    j["problem_id"] = problem_id;
    j["kind"] = trace::to_string(kind);
    j["sample_index"] = sample_index;
    j["text"] = text;
    j["trace_file"] = trace_file;
    return j;
}

ManifestEntry ManifestEntry::from_json(const nlohmann::json& j) {
    try {
        return {j.at("problem_id").get<std::string>(), trace::parse_pass_kind(j.at("kind").get<std::string>()),
                j.at("sample_index").get<std::uint64_t>(), j.at("text").get<std::string>(),
                j.at("trace_file").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("manifest entry: ") + e.what());
    }
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& out_dir) {
    const auto path = out_dir / "manifest.jsonl";
    if (!std::filesystem::exists(path)) return {};
    return read_jsonl_records<ManifestEntry>(path);
}

namespace {

void rewrite_manifest_sorted(const std::filesystem::path& out_dir) {
    auto entries = read_manifest(out_dir);
    auto key = [](const ManifestEntry& e) { return std::tuple(e.problem_id, static_cast<int>(e.kind), e.sample_index); };
    std::stable_sort(entries.begin(), entries.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
    entries.erase(std::unique(entries.begin(), entries.end(), [&](const auto& a, const auto& b) { return key(a) == key(b); }),
                  entries.end());
    const auto tmp = out_dir / "manifest.jsonl.tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        for (const auto& e : entries) os << e.to_json().dump() << '\n';
    }
    std::filesystem::rename(tmp, out_dir / "manifest.jsonl");
}

}  // namespace

SampleOutcome sample_solutions(const CompletionsClient& client, const PromptRecord& prompt,
                               const std::filesystem::path& out_dir, std::optional<std::size_t> limit) {
    const auto& cfg = client.config();
    std::filesystem::create_directories(out_dir / "traces");
    std::set<std::uint64_t> done;
    for (const auto& e : read_manifest(out_dir))
        if (e.problem_id == prompt.problem_id && e.kind == prompt.kind) done.insert(e.sample_index);

    SampleOutcome outcome;
    outcome.requested = cfg.n_samples;
    std::vector<std::uint64_t> todo;
    for (std::uint64_t i = 0; i < cfg.n_samples; ++i) {
        if (done.count(i))
            ++outcome.already_done;
        else
            todo.push_back(i);
    }
    if (limit && todo.size() > *limit) todo.resize(*limit);

    const auto variant =
        prompt.kind == trace::PassKind::composite ? trace::Variant::composite : trace::Variant::standalone;
    std::atomic<std::size_t> next{0};
    std::mutex outcome_mutex;
    bool only_transport_errors = true;
    std::atomic<bool> unreachable{false};
    auto worker = [&] {
        for (std::size_t k = next++; k < todo.size() && !unreachable; k = next++) {
            const std::uint64_t i = todo[k];
            const std::string id = fmt::format("{}__{}__{}", prompt.problem_id, trace::to_string(prompt.kind), i);
            try {
                nlohmann::json req{{"model", cfg.model_name},
                                   {"prompt", prompt.prompt},
                                   {"max_tokens", cfg.max_tokens},
                                   {"temperature", cfg.temperature},
                                   {"top_p", cfg.top_p},
                                   {"n", 1},
                                   {"logprobs", cfg.logprobs_top_k},
                                   {"seed", stream_id({cfg.seed, hash_text(id)}) & 0x7fffffffULL}};
                const auto resp = client.complete(req);
                const auto& choice = resp.at("choices").at(0);
                const auto steps = choice_to_steps(choice, id, variant, 0, 0, true);
                const std::string file = entry_file(prompt.problem_id, prompt.kind, i);
                trace::write_jsonl(out_dir / file, steps);
                ManifestEntry e{prompt.problem_id, prompt.kind, i, choice.at("text").get<std::string>(), file};
                {
                    std::lock_guard lock(manifest_mutex);
                    std::ofstream os(out_dir / "manifest.jsonl", std::ios::app | std::ios::binary);
                    os << e.to_json().dump() << '\n';
                }
                std::lock_guard lock(outcome_mutex);
                ++outcome.completed;
            } catch (const std::exception& e) {
                std::lock_guard lock(outcome_mutex);
                ++outcome.failed;
                outcome.errors.push_back(fmt::format("{}: {}", id, e.what()));
                const auto* net = dynamic_cast<const NetworkError*>(&e);
                if (!net || !net->transport())
                    only_transport_errors = false;
                else if (outcome.completed == 0)
                    unreachable = true;  // no connection and nothing has succeeded yet: stop early
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const unsigned n = std::max(1u, std::min<unsigned>(cfg.concurrency, static_cast<unsigned>(todo.size())));
        for (unsigned w = 0; w < n; ++w) pool.emplace_back(worker);
    }
    rewrite_manifest_sorted(out_dir);
    std::sort(outcome.errors.begin(), outcome.errors.end());
    if (outcome.completed == 0 && outcome.failed > 0 && only_transport_errors)
        throw NetworkError("endpoint unreachable: " + outcome.errors.front(), true);
    return outcome;
}

std::vector<trace::PassRateRecord> judge_manifest(const std::vector<ManifestEntry>& manifest,
                                                  const std::vector<PromptRecord>& prompts,
                                                  const std::optional<std::filesystem::path>& verdicts) {
    using Key = std::pair<std::string, int>;
    std::map<Key, const PromptRecord*> by_key;
    for (const auto& p : prompts) by_key[{p.problem_id, static_cast<int>(p.kind)}] = &p;

    std::map<std::tuple<std::string, int, std::uint64_t>, bool> external;
    if (verdicts) {
        std::ifstream is(*verdicts);
        if (!is) throw SchemaError(verdicts->string(), 0, "cannot open verdict file");
        std::string line;
        std::getline(is, line);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line != "problem_id,kind,sample_index,verdict")
            throw SchemaError(verdicts->string(), 1, "expected header problem_id,kind,sample_index,verdict");
        for (std::size_t n = 2; std::getline(is, line); ++n) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::vector<std::string> cells;
            std::stringstream ss(line);
            for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
            if (cells.size() != 4) throw SchemaError(verdicts->string(), n, "expected 4 columns");
            try {
                const auto kind = static_cast<int>(trace::parse_pass_kind(cells[1]));
                const auto& v = cells[3];
                bool pass;
                if (v == "pass" || v == "1" || v == "true") pass = true;
                else if (v == "fail" || v == "0" || v == "false") pass = false;
                else throw DomainError("verdict must be pass/fail");
                external[{cells[0], kind, std::stoull(cells[2])}] = pass;
            } catch (const std::exception& e) {
                throw SchemaError(verdicts->string(), n, e.what());
            }
        }
    }

    std::map<Key, std::pair<std::uint64_t, std::uint64_t>> counts;
    for (const auto& e : manifest) {
        const Key k{e.problem_id, static_cast<int>(e.kind)};
        auto& [n, c] = counts[k];
        ++n;
        const auto ext = external.find({e.problem_id, k.second, e.sample_index});
        if (ext != external.end()) {
            c += ext->second;
        } else if (const auto it = by_key.find(k); it != by_key.end()) {
            const auto& sols = it->second->correct_solutions;
            c += std::find(sols.begin(), sols.end(), e.text) != sols.end();
        }
    }
    std::vector<trace::PassRateRecord> out;
    for (const auto& [k, nc] : counts)
        out.push_back({k.first, static_cast<trace::PassKind>(k.second), nc.first, nc.second});
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<OffsetStep> score_with_offsets(const CompletionsClient& client, const std::string& prompt,
                                           const std::string& solution, const std::string& pair_id,
                                           trace::Variant variant, std::uint64_t first_index) {
    const auto& cfg = client.config();
    nlohmann::json req{{"model", cfg.model_name},    {"prompt", prompt + solution}, {"max_tokens", 0},
                       {"temperature", 1.0},         {"echo", true},                {"logprobs", cfg.logprobs_top_k},
                       {"seed", cfg.seed & 0x7fffffffULL}};
    const auto resp = client.complete(req);
    const auto& choice = resp.at("choices").at(0);
    if (!choice.contains("logprobs") || choice["logprobs"].is_null())
        throw UnsupportedEndpoint("endpoint returned no prompt logprobs for an echo request");
    return steps_with_offsets(choice, pair_id, variant, prompt.size(), first_index, false);
}

}  // namespace

std::vector<trace::TraceStep> score_sequence(const CompletionsClient& client, const std::string& prompt,
                                             const std::string& solution, const std::string& pair_id,
                                             trace::Variant variant, std::uint64_t first_index) {
    std::vector<trace::TraceStep> out;
    for (auto& os : score_with_offsets(client, prompt, solution, pair_id, variant, first_index))
        out.push_back(std::move(os.step));
    return out;
}

PairRecord PairRecord::from_json(const nlohmann::json& j) {
    try {
        PairRecord p;
        p.pair_id = j.at("pair_id").get<std::string>();
        for (const auto& part : j.at("parts"))
            p.parts.push_back({part.at("prompt").get<std::string>(), part.at("solution").get<std::string>()});
        if (p.parts.size() != 2) throw DomainError("a pair needs exactly two parts");
        p.composite_prompt = j.at("composite_prompt").get<std::string>();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("pair record: ") + e.what());
    }
}

std::vector<PairRecord> read_pairs(const std::filesystem::path& path) { return read_jsonl_records<PairRecord>(path); }

std::vector<trace::TraceStep> score_pair(const CompletionsClient& client, const PairRecord& pair,
                                         std::size_t skip_prefix) {
    std::vector<trace::TraceStep> out;
    std::uint64_t index = 0;
    for (const auto& part : pair.parts) {
        auto steps = score_with_offsets(client, part.prompt, part.solution, pair.pair_id, trace::Variant::standalone, index);
        for (std::size_t j = 0; j < steps.size(); ++j) {
            steps[j].step.skip_prefix_flag = j < skip_prefix;
            out.push_back(std::move(steps[j].step));
        }
        index += steps.size();
    }
    const std::string& s1 = pair.parts[0].solution;
    auto comp = score_with_offsets(client, pair.composite_prompt, s1 + pair.parts[1].solution, pair.pair_id,
                                   trace::Variant::composite, 0);
    const std::size_t boundary = pair.composite_prompt.size() + s1.size();
    std::size_t first_part = 0;
    for (const auto& c : comp) first_part += c.offset < boundary;
    for (std::size_t j = 0; j < comp.size(); ++j) {
        comp[j].step.skip_prefix_flag = j < first_part ? j < skip_prefix : j - first_part < skip_prefix;
        out.push_back(std::move(comp[j].step));
    }
    return out;
}

}  // namespace screening::client
