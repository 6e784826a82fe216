#include "screening/stub_server.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>

#include <fmt/core.h>
#include <httplib.h>

#include "screening/errors.hpp"
#include "screening/rng.hpp"
#include "screening/screening_sim.hpp"

namespace screening::stub {

namespace {

/// Uniform in [-1, 1] from a hash of the parts.
double hashed_unit(std::initializer_list<std::uint64_t> parts) {
    const std::uint64_t h = mix64(stream_id(parts));
    return 2.0 * static_cast<double>(h >> 11) * 0x1.0p-53 - 1.0;
}

std::uint64_t hash_text(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
    return h;
}

struct Token {
    std::string text;
    std::size_t offset;
    bool scored;           ///< false for the prompt head
    std::size_t vocab_id;  ///< valid when scored
};

}  // namespace

std::vector<std::string> vocabulary(const StubConfig& cfg) {
    std::vector<std::string> v;
    for (char c : cfg.alphabet) v.emplace_back(1, c);
    v.emplace_back(".");
    return v;
}

std::vector<double> injected_noise(const StubConfig& cfg, std::size_t pos) {
    std::vector<double> n(cfg.alphabet.size() + 1);
    for (std::size_t i = 0; i < n.size(); ++i)
        n[i] = cfg.noise_amplitude * hashed_unit({tag("stub-noise"), pos, i});
    return n;
}

std::vector<std::size_t> declared_lengths(std::string_view prompt) {
    std::vector<std::size_t> out;
    const auto at = prompt.rfind(kLengthsMarker);
    if (at == std::string_view::npos) return out;
    auto rest = prompt.substr(at + kLengthsMarker.size());
    rest = rest.substr(0, rest.find('\n'));
    std::size_t v = 0;
    bool in_number = false;
    for (char c : rest) {
        if (c >= '0' && c <= '9') {
            v = v * 10 + static_cast<std::size_t>(c - '0');
            in_number = true;
        } else if (c == ' ' || c == '\t' || c == '\r') {
            if (in_number) out.push_back(v);
            v = 0;
            in_number = false;
        } else {
            throw HttpError{400, "malformed lengths line"};
        }
    }
    if (in_number) out.push_back(v);
    if (out.empty() || std::find(out.begin(), out.end(), std::size_t{0}) != out.end())
        throw HttpError{400, "malformed lengths line"};
    return out;
}

std::vector<double> next_log_probs(const StubConfig& cfg, std::string_view solution_prefix, bool composite,
                                   std::span<const std::size_t> part_lengths) {
    const std::size_t k = cfg.alphabet.size();
    const std::size_t pos = solution_prefix.size();
    std::vector<std::size_t> parts(part_lengths.begin(), part_lengths.end());
    if (parts.empty()) parts.assign(composite ? 2 : 1, cfg.solution_len);
    // Each part starts from a fresh context, as it would in its own prompt.
    std::size_t start = 0, total = 0;
    for (std::size_t len : parts) {
        if (pos >= total) start = total;
        total += len;
    }
    const std::string_view part = solution_prefix.substr(start);
    std::string ctx = "^^";
    ctx += part.substr(part.size() >= 2 ? part.size() - 2 : 0);
    ctx = ctx.substr(ctx.size() - 2);
    const std::uint64_t ch = hash_text(ctx);
    const std::size_t preferred = pos >= total ? k : static_cast<std::size_t>(mix64(ch) % k);

    std::vector<double> logits(k + 1);
    for (std::size_t i = 0; i <= k; ++i) {
        logits[i] = hashed_unit({tag("stub-jitter"), ch, i}) + (i == preferred ? cfg.bias : 0.0);
        if (i == k && preferred != k) logits[i] -= 3.0;
    }
    if (composite) {
        const auto noise = injected_noise(cfg, pos);
        for (std::size_t i = 0; i <= k; ++i) logits[i] += noise[i];
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double l : logits) s += std::exp(l - m);
    const double lse = m + std::log(s);
    for (auto& l : logits) l -= lse;
    return logits;
}

nlohmann::ordered_json handle_completion(const StubConfig& cfg, const nlohmann::json& req) {
    auto bad = [](const std::string& m) { return HttpError{400, m}; };
    std::string prompt;
    std::size_t max_tokens = 16, n = 1;
    double temperature = 1.0, top_p = 1.0;
    bool echo = false;
    std::size_t top_k = 0;
    std::uint64_t seed = 0;
    try {
        const auto& p = req.at("prompt");
        prompt = p.is_array() ? p.at(0).get<std::string>() : p.get<std::string>();
        max_tokens = req.value("max_tokens", std::size_t{16});
        n = req.value("n", std::size_t{1});
        temperature = req.value("temperature", 1.0);
        top_p = req.value("top_p", 1.0);
        echo = req.value("echo", false);
        if (req.contains("logprobs") && !req["logprobs"].is_null()) top_k = req["logprobs"].get<std::size_t>();
        seed = req.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw bad(std::string("invalid request: ") + e.what());
    }
    if (echo && !cfg.echo_supported) throw bad("echo is not supported by this endpoint");
    if (n == 0 || n > 128) throw bad("n must lie in [1, 128]");
    if (!(temperature > 0.0) || !(top_p > 0.0 && top_p <= 1.0)) throw bad("invalid temperature or top_p");

    const auto vocab = vocabulary(cfg);
    const bool composite = prompt.find(kCompositeMarker) != std::string::npos;
    const auto lengths = declared_lengths(prompt);
    const auto marker = prompt.rfind(kSolutionMarker);
    const std::size_t sol_start = marker == std::string::npos ? prompt.size() : marker + kSolutionMarker.size();
    const std::string prompt_solution = prompt.substr(sol_start);

    std::vector<Token> prompt_tokens;
    if (sol_start > 0) prompt_tokens.push_back({prompt.substr(0, sol_start), 0, false, 0});
    for (std::size_t i = 0; i < prompt_solution.size(); ++i) {
        const auto pos = cfg.alphabet.find(prompt_solution[i]);
        if (pos == std::string::npos)
            throw bad(fmt::format("character '{}' is outside the stub vocabulary", prompt_solution[i]));
        prompt_tokens.push_back({std::string(1, prompt_solution[i]), sol_start + i, true, pos});
    }

    auto top_entries = [&](const std::vector<double>& lp) {
        std::vector<std::size_t> order(lp.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lp[a] > lp[b]; });
        nlohmann::ordered_json top = nlohmann::ordered_json::object();
        for (std::size_t r = 0; r < std::min(top_k, lp.size()); ++r) top[vocab[order[r]]] = lp[order[r]];
        return top;
    };

    nlohmann::ordered_json choices = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < n; ++c) {
        nlohmann::ordered_json tokens = nlohmann::ordered_json::array(), token_lps = nlohmann::ordered_json::array(),
                               tops = nlohmann::ordered_json::array(), offsets = nlohmann::ordered_json::array();
        std::string text;
        std::string solution;
        if (echo) {
            for (const auto& t : prompt_tokens) {
                tokens.push_back(t.text);
                offsets.push_back(t.offset);
                if (!t.scored) {
                    token_lps.push_back(nullptr);
                    tops.push_back(nullptr);
                } else {
                    const auto lp = next_log_probs(cfg, solution, composite, lengths);
                    token_lps.push_back(lp[t.vocab_id]);
                    tops.push_back(top_entries(lp));
                }
                if (t.scored) solution += t.text;
            }
            text = prompt;
        } else {
            solution = prompt_solution;
        }
        RngStream rng(seed, stream_id({tag("stub-sample"), hash_text(prompt), c}));
        std::string finish = "length";
        for (std::size_t step = 0; step < max_tokens; ++step) {
            const auto lp = next_log_probs(cfg, solution, composite, lengths);
            const auto p = nucleus_dist(lp, SamplerConfig{temperature, top_p});
            const double u = rng.uniform();
            double cum = 0.0;
            std::size_t pick = p.size() - 1;
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (p[i] <= 0.0) continue;
                cum += p[i];
                pick = i;
                if (u < cum) break;
            }
            if (pick == vocab.size() - 1) {
                finish = "stop";
                break;
            }
            const std::size_t offset = (echo ? prompt.size() : 0) + (solution.size() - prompt_solution.size());
            tokens.push_back(vocab[pick]);
            token_lps.push_back(lp[pick]);
            tops.push_back(top_entries(lp));
            offsets.push_back(offset);
            text += vocab[pick];
            solution += vocab[pick];
        }
        nlohmann::ordered_json choice;
        choice["text"] = text;
        choice["index"] = c;
        if (top_k > 0 || echo)
            choice["logprobs"] = {{"tokens", tokens},
                                  {"token_logprobs", token_lps},
                                  {"top_logprobs", tops},
                                  {"text_offset", offsets}};
        else
            choice["logprobs"] = nullptr;
        choice["finish_reason"] = finish;
        choices.push_back(std::move(choice));
    }
    nlohmann::ordered_json resp;
    resp["id"] = fmt::format("cmpl-stub-{:016x}", stream_id({hash_text(prompt), seed}));
    resp["object"] = "text_completion";
    resp["created"] = 0;
    resp["model"] = req.value("model", "stub");
    resp["choices"] = std::move(choices);
    return resp;
}

// ---------------------------------------------------------------------------

struct StubServer::Impl {
    httplib::Server server;
};

StubServer::StubServer(StubConfig cfg) : cfg_(std::move(cfg)), impl_(std::make_unique<Impl>()) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        const std::size_t k = ++requests_;
        if (k <= static_cast<std::size_t>(cfg_.fail_first)) {
            res.status = 503;
            res.set_content(R"({"error":{"message":"temporarily unavailable"}})", "application/json");
            return;
        }
        if (k <= static_cast<std::size_t>(cfg_.fail_first + cfg_.rate_limit_first)) {
            res.status = 429;
            res.set_header("Retry-After", "0");
            res.set_content(R"({"error":{"message":"rate limited"}})", "application/json");
            return;
        }
        try {
            const auto body = nlohmann::json::parse(req.body);
            res.set_content(handle_completion(cfg_, body).dump(), "application/json");
        } catch (const HttpError& e) {
            res.status = e.status;
            res.set_content(nlohmann::json{{"error", {{"message", e.message}}}}.dump(), "application/json");
        } catch (const nlohmann::json::exception& e) {
            res.status = 400;
            res.set_content(nlohmann::json{{"error", {{"message", e.what()}}}}.dump(), "application/json");
        }
    };
    impl_->server.Post("/v1/completions", handler);
    impl_->server.Post("/completions", handler);
}

StubServer::~StubServer() { stop(); }

int StubServer::bind() {
    if (cfg_.port == 0) {
        port_ = impl_->server.bind_to_any_port(cfg_.host);
    } else {
        if (!impl_->server.bind_to_port(cfg_.host, cfg_.port)) port_ = -1;
        else port_ = cfg_.port;
    }
    if (port_ <= 0) throw NetworkError(fmt::format("stub server cannot bind {}:{}", cfg_.host, cfg_.port));
    return port_;
}

int StubServer::start() {
    bind();
    thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port_;
}

void StubServer::run() {
    bind();
    impl_->server.listen_after_bind();
}

void StubServer::stop() {
    if (impl_) impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

std::string StubServer::base_url() const { return fmt::format("http://{}:{}/v1", cfg_.host, port_); }

}  // namespace screening::stub
