#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace screening::trace {

enum class Variant { standalone, composite };
std::string to_string(Variant v);

/// One decoding step of a recorded solution: the top-k logits the model produced,
/// the token the solution actually holds, and whether the step sits in the skipped
/// prefix of its part.
struct TraceStep {
    std::string pair_id;
    Variant variant = Variant::standalone;
    std::uint64_t step_index = 0;
    std::int64_t correct_token_id = 0;
    std::vector<std::pair<std::int64_t, double>> topk;  ///< (token id, logit), descending by logit
    std::int64_t chosen_token_id = 0;
    bool skip_prefix_flag = false;

    /// False when the correct token is missing from the recorded top-k.
    bool complete() const;
    double correct_logit() const;
    /// log P(correct) restricted to the recorded top-k.
    double correct_log_prob() const;

    nlohmann::json to_json() const;
    /// Throws SchemaError(source, line, ...) on any field problem.
    static TraceStep from_json(const nlohmann::json& j, const std::string& source = "<trace>", std::size_t line = 0);
};

/// One JSON object per line, keys in the declared field order.
std::string to_jsonl_line(const TraceStep& s);
void write_jsonl(std::ostream& os, const std::vector<TraceStep>& steps);
void write_jsonl(const std::filesystem::path& path, const std::vector<TraceStep>& steps);
/// Blank lines are ignored; the first malformed line raises SchemaError naming it.
std::vector<TraceStep> read_jsonl(std::istream& is, const std::string& source);
std::vector<TraceStep> read_jsonl(const std::filesystem::path& path);
/// Reads several files (in parallel when workers > 1); output keeps the path order.
std::vector<TraceStep> read_jsonl_files(const std::vector<std::filesystem::path>& paths, unsigned workers = 1);

enum class PassKind { standalone_1, standalone_2, composite };
std::string to_string(PassKind k);
PassKind parse_pass_kind(const std::string& s);

struct PassRateRecord {
    std::string problem_id;
    PassKind kind = PassKind::standalone_1;
    std::uint64_t n_samples = 0;
    std::uint64_t n_correct = 0;

    double pass_rate() const { return static_cast<double>(n_correct) / static_cast<double>(n_samples); }
};

inline constexpr const char* kPassRateHeader = "problem_id,kind,n_samples,n_correct";

void write_pass_rates(std::ostream& os, const std::vector<PassRateRecord>& records);
void write_pass_rates(const std::filesystem::path& path, const std::vector<PassRateRecord>& records);
std::vector<PassRateRecord> read_pass_rates(std::istream& is, const std::string& source);
std::vector<PassRateRecord> read_pass_rates(const std::filesystem::path& path);

}  // namespace screening::trace
