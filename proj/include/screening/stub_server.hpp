#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

namespace screening::stub {

/// Deterministic stand-in for an OpenAI-compatible completions endpoint.
///
/// Tokens are single characters of `alphabet` plus the end token ".". The solution is the
/// text after the last "### Solution\n" in the prompt. Next-token logits depend on the
/// last two solution characters: one preferred character gets `bias`, every token gets a
/// hashed jitter in [-1, 1], and the end token is preferred once the solution holds
/// `solution_len` characters. Composite prompts expect two parts of `solution_len`
/// characters, each starting from a fresh context. A prompt line "### Lengths: a [b]"
/// overrides the part lengths. Prompts containing
/// "### Composite" also get hashed uniform noise in [-noise_amplitude, noise_amplitude]
/// per (solution position, token), which is the ground truth a noise extraction should recover.
struct StubConfig {
    std::string host = "127.0.0.1";
    int port = 0;  ///< 0 picks a free port
    std::string alphabet = "abcdefgh";
    std::size_t solution_len = 6;
    double bias = 4.5;
    double noise_amplitude = 1.5;
    bool echo_supported = true;
    int fail_first = 0;        ///< answer the first N requests with 503
    int rate_limit_first = 0;  ///< answer the first N requests with 429 and Retry-After: 0
};

inline constexpr std::string_view kSolutionMarker = "### Solution\n";
inline constexpr std::string_view kCompositeMarker = "### Composite";
inline constexpr std::string_view kLengthsMarker = "### Lengths:";

/// Vocabulary: alphabet characters followed by ".".
std::vector<std::string> vocabulary(const StubConfig& cfg);
/// Part lengths declared by a "### Lengths:" line; empty when there is none.
/// Throws HttpError for a malformed line.
std::vector<std::size_t> declared_lengths(std::string_view prompt);
/// Log-probabilities over vocabulary() after `solution_prefix`. Empty `part_lengths`
/// means one part (two for composites) of cfg.solution_len characters.
std::vector<double> next_log_probs(const StubConfig& cfg, std::string_view solution_prefix, bool composite,
                                   std::span<const std::size_t> part_lengths = {});
/// The injected composite noise at solution position `pos` (zero for standalone prompts).
std::vector<double> injected_noise(const StubConfig& cfg, std::size_t pos);

struct HttpError {
    int status;
    std::string message;
};

/// Builds the response body for a completions request. Throws HttpError for bad requests.
nlohmann::ordered_json handle_completion(const StubConfig& cfg, const nlohmann::json& request);

class StubServer {
public:
    explicit StubServer(StubConfig cfg);
    ~StubServer();
    StubServer(const StubServer&) = delete;
    StubServer& operator=(const StubServer&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    int start();
    /// Serves on the calling thread until stop() (used by the standalone binary).
    void run();
    void stop();

    int port() const { return port_; }
    std::string base_url() const;
    std::size_t request_count() const { return requests_.load(); }

private:
    int bind();

    StubConfig cfg_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<std::size_t> requests_{0};
};

}  // namespace screening::stub
