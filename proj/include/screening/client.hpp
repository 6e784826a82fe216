#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "screening/trace.hpp"

namespace screening::client {

struct EndpointConfig {
    std::string base_url = "http://127.0.0.1:8000/v1";  ///< completions live at base_url + "/completions"
    std::string model_name = "default";
    double temperature = 1.0;
    double top_p = 0.95;
    std::uint64_t n_samples = 200;
    std::size_t logprobs_top_k = 20;
    double timeout_s = 60.0;
    int max_retries = 5;
    std::string auth_env;  ///< name of the environment variable holding the bearer token
    std::size_t max_tokens = 1024;
    unsigned concurrency = 4;
    double backoff_base_s = 1.0;
    double backoff_factor = 2.0;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;  ///< never includes the token itself
};

/// POSTs completions requests with retries: transport errors and 5xx back off
/// exponentially with jitter, 429 waits for Retry-After when given.
class CompletionsClient {
public:
    explicit CompletionsClient(EndpointConfig cfg);

    /// Throws NetworkError once retries are exhausted, UnsupportedEndpoint when the
    /// endpoint rejects an echo request, Error for other 4xx answers.
    nlohmann::json complete(const nlohmann::json& request) const;

    const EndpointConfig& config() const { return cfg_; }
    std::size_t attempts() const { return attempts_; }

    /// Sleep hook, replaceable in tests.
    std::function<void(double seconds)> sleep;

private:
    EndpointConfig cfg_;
    std::string host_;
    std::string path_;
    mutable std::size_t attempts_ = 0;
};

/// "token_id:N" maps to N; other token strings to a stable 31-bit hash.
std::int64_t token_id(const std::string& token);

struct Completion {
    std::string text;
    std::vector<trace::TraceStep> steps;
};

/// Converts one completions choice into trace steps. Steps before `from_offset` (text
/// offset) are dropped; the rest are numbered from `first_index`. The recorded token is
/// the correct token; the chosen token is the recorded one when `sampled`, else the top-1.
std::vector<trace::TraceStep> choice_to_steps(const nlohmann::json& choice, const std::string& pair_id,
                                              trace::Variant variant, std::size_t from_offset,
                                              std::uint64_t first_index = 0, bool sampled = false);

// ---------------------------------------------------------------------------
// Sampling with a resumable manifest
// ---------------------------------------------------------------------------

struct PromptRecord {
    std::string problem_id;
    trace::PassKind kind = trace::PassKind::standalone_1;
    std::string prompt;
    std::vector<std::string> correct_solutions;  ///< exact-match judge; may be empty

    static PromptRecord from_json(const nlohmann::json& j);
};

std::vector<PromptRecord> read_prompts(const std::filesystem::path& path);

struct SampleOutcome {
    std::size_t requested = 0;
    std::size_t already_done = 0;
    std::size_t completed = 0;
    std::size_t failed = 0;
    std::vector<std::string> errors;
};

/// Samples cfg.n_samples completions for `prompt` into out_dir. Sample i is stored in
/// traces/<problem>__<kind>__<i>.jsonl and logged in manifest.jsonl, which is
/// rewritten in (problem, kind, index) order at the end. Samples listed in the manifest
/// are not requested again. `limit` caps the number of new requests (interruption test).
SampleOutcome sample_solutions(const CompletionsClient& client, const PromptRecord& prompt,
                               const std::filesystem::path& out_dir,
                               std::optional<std::size_t> limit = std::nullopt);

struct ManifestEntry {
    std::string problem_id;
    trace::PassKind kind = trace::PassKind::standalone_1;
    std::uint64_t sample_index = 0;
    std::string text;
    std::string trace_file;

    nlohmann::ordered_json to_json() const;
    static ManifestEntry from_json(const nlohmann::json& j);
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& out_dir);

/// Pass rates from the manifest: exact match against each prompt's correct_solutions,
/// unless `verdicts` (problem_id,kind,sample_index,verdict CSV) supplies a verdict.
std::vector<trace::PassRateRecord> judge_manifest(const std::vector<ManifestEntry>& manifest,
                                                  const std::vector<PromptRecord>& prompts,
                                                  const std::optional<std::filesystem::path>& verdicts = std::nullopt);

// ---------------------------------------------------------------------------
// Teacher-forced scoring
// ---------------------------------------------------------------------------

/// Per-step logprobs of `solution` following `prompt`, via echo with max_tokens = 0.
std::vector<trace::TraceStep> score_sequence(const CompletionsClient& client, const std::string& prompt,
                                             const std::string& solution, const std::string& pair_id,
                                             trace::Variant variant, std::uint64_t first_index = 0);

struct ScorePart {
    std::string prompt;
    std::string solution;
};

struct PairRecord {
    std::string pair_id;
    std::vector<ScorePart> parts;  ///< exactly two
    std::string composite_prompt;

    static PairRecord from_json(const nlohmann::json& j);
};

std::vector<PairRecord> read_pairs(const std::filesystem::path& path);

/// Standalone steps (part 1 then part 2, indices contiguous) followed by composite steps
/// of the concatenated solution; the first `skip_prefix` tokens of each part are flagged.
std::vector<trace::TraceStep> score_pair(const CompletionsClient& client, const PairRecord& pair,
                                         std::size_t skip_prefix = 10);

}  // namespace screening::client
