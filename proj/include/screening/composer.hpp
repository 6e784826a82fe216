#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace screening::composer {

enum class OutputKind { boolean, integer, text };
std::string to_string(OutputKind k);
OutputKind parse_output_kind(const std::string& s);

struct TestCase {
    std::string input;
    std::string expected_output;
};

struct ProblemRecord {
    std::string problem_id;
    std::string description;
    std::string signature;  ///< empty for stdin/stdout problems
    std::vector<TestCase> tests;
    OutputKind output_kind = OutputKind::text;

    /// Non-empty tests, outputs consistent with output_kind, id free of ",()".
    void validate() const;
    bool io_style() const { return signature.empty(); }

    nlohmann::ordered_json to_json() const;
    static ProblemRecord from_json(const nlohmann::json& j);
};

enum class Template { bool_gate, product, sequential_io };
std::string to_string(Template t);
Template parse_template(const std::string& s);

struct CompositeRecord {
    std::string composite_id;
    Template template_kind = Template::product;
    std::pair<ProblemRecord, ProblemRecord> parts;
    std::string description;
    std::vector<TestCase> tests;

    nlohmann::ordered_json to_json() const;
    static CompositeRecord from_json(const nlohmann::json& j);
};

/// Instruction wording for a template, with {first} and {second} placeholders.
const std::string& template_text(Template t);

/// "True"/"true"/"False"/"false".
bool parse_bool_output(const std::string& s);
/// Decimal product of two integers of any length.
std::string multiply_decimal(const std::string& a, const std::string& b);
/// The template's rule for combining part inputs into the composite input.
std::string combine_inputs(const std::string& in1, const std::string& in2);
/// The template's rule for combining part outputs into the composite expected output.
std::string combine_outputs(Template t, const std::string& out1, const std::string& out2);

/// Empty when the pair satisfies the template's preconditions, else the reason.
std::string ineligibility(const ProblemRecord& p1, const ProblemRecord& p2, Template t);

struct ComposeOptions {
    std::size_t max_tests = 20;
    std::uint64_t seed = 0;
};

/// Throws DomainError when the template does not fit the parts.
CompositeRecord compose(const ProblemRecord& p1, const ProblemRecord& p2, Template t, const ComposeOptions& opt = {});

struct Pairing {
    enum class Kind { adjacent, random, explicit_list } kind = Kind::adjacent;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> pairs;  ///< explicit_list only

    static Pairing parse(const std::string& s);  ///< "adjacent", "random" or "random:<seed>"
};

struct SkippedPair {
    std::string first, second, reason;
};

struct BatchResult {
    std::vector<CompositeRecord> composites;
    std::vector<SkippedPair> skipped;
};

BatchResult batch_compose(const std::vector<ProblemRecord>& dataset, const Pairing& pairing, Template t,
                          const ComposeOptions& opt = {});

std::vector<ProblemRecord> read_problems(std::istream& is, const std::string& source);
std::vector<ProblemRecord> read_problems(const std::filesystem::path& path);
std::vector<CompositeRecord> read_composites(const std::filesystem::path& path);
void write_composites(std::ostream& os, const std::vector<CompositeRecord>& records);
void write_composites(const std::filesystem::path& path, const std::vector<CompositeRecord>& records);

}  // namespace screening::composer
