#include "screening/composer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

#include <fmt/core.h>

#include "screening/errors.hpp"
#include "screening/rng.hpp"

namespace screening::composer {

namespace {

#include "composer_templates.inc"

bool is_integer(const std::string& s) {
    std::size_t i = (!s.empty() && s[0] == '-') ? 1 : 0;
    if (i >= s.size()) return false;
    return std::all_of(s.begin() + static_cast<std::ptrdiff_t>(i), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool is_bool(const std::string& s) { return s == "True" || s == "true" || s == "False" || s == "false"; }

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) s.replace(pos, from.size(), to);
    return s;
}

std::string part_text(const ProblemRecord& p) {
    return p.signature.empty() ? p.description : p.description + "\nSignature: " + p.signature;
}

}  // namespace

std::string to_string(OutputKind k) {
    switch (k) {
        case OutputKind::boolean: return "boolean";
        case OutputKind::integer: return "integer";
        case OutputKind::text: return "text";
    }
    return "?";
}

OutputKind parse_output_kind(const std::string& s) {
    if (s == "boolean") return OutputKind::boolean;
    if (s == "integer") return OutputKind::integer;
    if (s == "text") return OutputKind::text;
    throw DomainError("unknown output_kind \"" + s + "\"");
}

std::string to_string(Template t) {
    switch (t) {
        case Template::bool_gate: return "bool_gate";
        case Template::product: return "product";
        case Template::sequential_io: return "sequential_io";
    }
    return "?";
}

Template parse_template(const std::string& s) {
    if (s == "bool_gate") return Template::bool_gate;
    if (s == "product") return Template::product;
    if (s == "sequential_io") return Template::sequential_io;
    throw DomainError("unknown template \"" + s + "\"");
}

const std::string& template_text(Template t) {
    static const std::string texts[] = {kBoolGateText, kProductText, kSequentialIoText};
    return texts[static_cast<std::size_t>(t)];
}

void ProblemRecord::validate() const {
    if (problem_id.empty()) throw DomainError("problem_id is empty");
    if (problem_id.find_first_of(",()") != std::string::npos)
        throw DomainError("problem_id \"" + problem_id + "\" contains one of ,()");
    if (tests.empty()) throw DomainError("problem " + problem_id + " has no tests");
    for (const auto& t : tests) {
        if (output_kind == OutputKind::boolean && !is_bool(t.expected_output))
            throw DomainError("problem " + problem_id + ": \"" + t.expected_output + "\" is not a boolean output");
        if (output_kind == OutputKind::integer && !is_integer(t.expected_output))
            throw DomainError("problem " + problem_id + ": \"" + t.expected_output + "\" is not an integer output");
    }
}

nlohmann::ordered_json ProblemRecord::to_json() const {
    nlohmann::ordered_json j;
    j["problem_id"] = problem_id;
    j["description"] = description;
    j["signature"] = signature;
    j["tests"] = nlohmann::ordered_json::array();
    for (const auto& t : tests) j["tests"].push_back({{"input", t.input}, {"expected_output", t.expected_output}});
    j["output_kind"] = to_string(output_kind);
    return j;
}

ProblemRecord ProblemRecord::from_json(const nlohmann::json& j) {
    ProblemRecord p;
    try {
        p.problem_id = j.at("problem_id").get<std::string>();
        p.description = j.at("description").get<std::string>();
        p.signature = j.value("signature", "");
        for (const auto& t : j.at("tests"))
            p.tests.push_back({t.at("input").get<std::string>(), t.at("expected_output").get<std::string>()});
        p.output_kind = parse_output_kind(j.at("output_kind").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("problem record: ") + e.what());
    }
    p.validate();
    return p;
}

nlohmann::ordered_json CompositeRecord::to_json() const {
    nlohmann::ordered_json j;
    j["composite_id"] = composite_id;
    j["template"] = to_string(template_kind);
    j["parts"] = {parts.first.to_json(), parts.second.to_json()};
    j["description"] = description;
    j["tests"] = nlohmann::ordered_json::array();
    for (const auto& t : tests) j["tests"].push_back({{"input", t.input}, {"expected_output", t.expected_output}});
    return j;
}

CompositeRecord CompositeRecord::from_json(const nlohmann::json& j) {
    try {
        CompositeRecord c;
        c.composite_id = j.at("composite_id").get<std::string>();
        c.template_kind = parse_template(j.at("template").get<std::string>());
        const auto& parts = j.at("parts");
        if (!parts.is_array() || parts.size() != 2) throw DomainError("composite record needs exactly two parts");
        c.parts = {ProblemRecord::from_json(parts[0]), ProblemRecord::from_json(parts[1])};
        c.description = j.at("description").get<std::string>();
        for (const auto& t : j.at("tests"))
            c.tests.push_back({t.at("input").get<std::string>(), t.at("expected_output").get<std::string>()});
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("composite record: ") + e.what());
    }
}

bool parse_bool_output(const std::string& s) {
    if (s == "True" || s == "true") return true;
    if (s == "False" || s == "false") return false;
    throw DomainError("\"" + s + "\" is not a boolean output");
}

std::string multiply_decimal(const std::string& a, const std::string& b) {
    if (!is_integer(a) || !is_integer(b)) throw DomainError("multiply_decimal needs integer strings");
    const bool neg = (a[0] == '-') != (b[0] == '-');
    const std::string x = a[0] == '-' ? a.substr(1) : a, y = b[0] == '-' ? b.substr(1) : b;
    std::vector<int> digits(x.size() + y.size(), 0);
    for (std::size_t i = x.size(); i-- > 0;)
        for (std::size_t j = y.size(); j-- > 0;) {
            const std::size_t pos = i + j + 1;
            const int sum = (x[i] - '0') * (y[j] - '0') + digits[pos];
            digits[pos] = sum % 10;
            digits[pos - 1] += sum / 10;
        }
    std::string out;
    for (int d : digits)
        if (!(out.empty() && d == 0)) out.push_back(static_cast<char>('0' + d));
    if (out.empty()) return "0";
    return neg ? "-" + out : out;
}

std::string combine_inputs(const std::string& in1, const std::string& in2) {
    if (in1.empty() || in1.back() == '\n') return in1 + in2;
    return in1 + "\n" + in2;
}

std::string combine_outputs(Template t, const std::string& out1, const std::string& out2) {
    switch (t) {
        case Template::bool_gate: return parse_bool_output(out1) ? out2 : "-1";
        case Template::product: return multiply_decimal(out1, out2);
        case Template::sequential_io: {
            std::string first = out1;
            while (!first.empty() && first.back() == '\n') first.pop_back();
            return first + "\n" + out2;
        }
    }
    throw DomainError("unknown template");
}

std::string ineligibility(const ProblemRecord& p1, const ProblemRecord& p2, Template t) {
    if (p1.problem_id == p2.problem_id) return "a problem cannot be composed with itself";
    switch (t) {
        case Template::bool_gate:
            if (p1.output_kind != OutputKind::boolean) return "bool_gate needs a boolean first part";
            break;
        case Template::product:
            if (p1.output_kind != OutputKind::integer || p2.output_kind != OutputKind::integer)
                return "product needs two integer parts";
            break;
        case Template::sequential_io:
            if (!p1.io_style() || !p2.io_style()) return "sequential_io needs two stdin/stdout parts";
            break;
    }
    return {};
}

CompositeRecord compose(const ProblemRecord& p1, const ProblemRecord& p2, Template t, const ComposeOptions& opt) {
    p1.validate();
    p2.validate();
    if (const auto why = ineligibility(p1, p2, t); !why.empty()) throw DomainError(why);
    if (opt.max_tests == 0) throw DomainError("max_tests must be positive");

    CompositeRecord c;
    c.composite_id = fmt::format("{}({},{})", to_string(t), p1.problem_id, p2.problem_id);
    c.template_kind = t;
    c.parts = {p1, p2};
    c.description = "### Composite task\n" +
                    replace_all(replace_all(template_text(t), "{first}", part_text(p1)), "{second}", part_text(p2));

    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t i = 0; i < p1.tests.size(); ++i)
        for (std::size_t j = 0; j < p2.tests.size(); ++j) cells.emplace_back(i, j);
    if (cells.size() > opt.max_tests) {
        RngStream rng(opt.seed, stream_id({tag("test-pairing"), tag(c.composite_id.c_str())}));
        for (std::size_t k = cells.size() - 1; k > 0; --k) std::swap(cells[k], cells[rng.below(k + 1)]);
        cells.resize(opt.max_tests);
        std::sort(cells.begin(), cells.end());
    }
    for (const auto& [i, j] : cells) {
        const auto& a = p1.tests[i];
        const auto& b = p2.tests[j];
        c.tests.push_back({combine_inputs(a.input, b.input), combine_outputs(t, a.expected_output, b.expected_output)});
    }
    return c;
}

Pairing Pairing::parse(const std::string& s) {
    Pairing p;
    if (s == "adjacent") return p;
    if (s == "random" || s.rfind("random:", 0) == 0) {
        p.kind = Kind::random;
        if (s.size() > 7) {
            try {
                std::size_t used = 0;
                p.seed = std::stoull(s.substr(7), &used);
                if (used != s.size() - 7) throw std::invalid_argument(s);
            } catch (const std::exception&) {
                throw DomainError("bad pairing seed in \"" + s + "\"");
            }
        }
        return p;
    }
    throw DomainError("unknown pairing \"" + s + "\" (expected adjacent, random or random:<seed>)");
}

BatchResult batch_compose(const std::vector<ProblemRecord>& dataset, const Pairing& pairing, Template t,
                          const ComposeOptions& opt) {
    BatchResult out;
    std::vector<std::pair<std::string, std::string>> pairs;
    if (pairing.kind == Pairing::Kind::explicit_list) {
        pairs = pairing.pairs;
    } else {
        std::vector<std::size_t> order(dataset.size());
        std::iota(order.begin(), order.end(), 0);
        if (pairing.kind == Pairing::Kind::random && order.size() > 1) {
            RngStream rng(pairing.seed, tag("pairing"));
            for (std::size_t k = order.size() - 1; k > 0; --k) std::swap(order[k], order[rng.below(k + 1)]);
        }
        for (std::size_t k = 0; k + 1 < order.size(); k += 2)
            pairs.emplace_back(dataset[order[k]].problem_id, dataset[order[k + 1]].problem_id);
    }
    std::map<std::string, const ProblemRecord*> by_id;
    for (const auto& p : dataset) by_id.emplace(p.problem_id, &p);
    for (const auto& [a, b] : pairs) {
        const auto ia = by_id.find(a), ib = by_id.find(b);
        if (ia == by_id.end() || ib == by_id.end()) {
            out.skipped.push_back({a, b, "unknown problem id"});
            continue;
        }
        if (auto why = ineligibility(*ia->second, *ib->second, t); !why.empty()) {
            out.skipped.push_back({a, b, std::move(why)});
            continue;
        }
        try {
            out.composites.push_back(compose(*ia->second, *ib->second, t, opt));
        } catch (const DomainError& e) {
            out.skipped.push_back({a, b, e.what()});
        }
    }
    return out;
}

std::vector<ProblemRecord> read_problems(std::istream& is, const std::string& source) {
    std::vector<ProblemRecord> out;
    std::string line;
    for (std::size_t n = 1; std::getline(is, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(ProblemRecord::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(source, n, e.what());
        } catch (const DomainError& e) {
            throw SchemaError(source, n, e.what());
        }
    }
    return out;
}

std::vector<ProblemRecord> read_problems(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw SchemaError(path.string(), 0, "cannot open file");
    return read_problems(is, path.string());
}

std::vector<CompositeRecord> read_composites(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw SchemaError(path.string(), 0, "cannot open file");
    std::vector<CompositeRecord> out;
    std::string line;
    for (std::size_t n = 1; std::getline(is, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(CompositeRecord::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(path.string(), n, e.what());
        } catch (const DomainError& e) {
            throw SchemaError(path.string(), n, e.what());
        }
    }
    return out;
}

void write_composites(std::ostream& os, const std::vector<CompositeRecord>& records) {
    for (const auto& r : records) os << r.to_json().dump() << '\n';
}

void write_composites(const std::filesystem::path& path, const std::vector<CompositeRecord>& records) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    write_composites(os, records);
}

}  // namespace screening::composer
