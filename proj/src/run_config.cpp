#include "screening/run_config.hpp"

#include <cctype>
#include <cmath>
#include <limits>
#include <fstream>
#include <sstream>

#include <fmt/core.h>

namespace screening {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_key(const std::string& dotted) {
    std::vector<std::string> parts;
    std::stringstream ss(dotted);
    for (std::string p; std::getline(ss, p, '.');) parts.push_back(trim(p));
    return parts;
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    return true;
}

/// Drops a trailing comment that sits outside string literals.
std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_str && c == '\\') {
            ++i;
            continue;
        }
        if (c == '"') in_str = !in_str;
        if (c == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

struct ValueParser {
    const std::string& s;
    std::size_t pos = 0;
    const std::string& source;
    std::size_t line;

    [[noreturn]] void fail(const std::string& what) const { throw SchemaError(source, line, what); }

    void skip_ws() {
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    }

    nlohmann::json value() {
        skip_ws();
        if (pos >= s.size()) fail("missing value");
        if (s[pos] == '"') return string();
        if (s[pos] == '[') return array();
        const auto end = s.find_first_of(",] \t", pos);
        const std::string tok = s.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        pos += tok.size();
        if (tok == "true") return true;
        if (tok == "false") return false;
        if (tok == "inf" || tok == "+inf") return std::numeric_limits<double>::infinity();
        if (tok == "-inf") return -std::numeric_limits<double>::infinity();
        std::string clean;
        for (char c : tok)
            if (c != '_') clean.push_back(c);
        try {
            std::size_t used = 0;
            if (clean.find_first_of(".eE") == std::string::npos) {
                const long long v = std::stoll(clean, &used);
                if (used == clean.size()) return v;
            } else {
                const double v = std::stod(clean, &used);
                if (used == clean.size()) return v;
            }
        } catch (const std::exception&) {
        }
        fail("cannot parse value \"" + tok + "\"");
    }

    nlohmann::json string() {
        std::string out;
        for (++pos; pos < s.size(); ++pos) {
            const char c = s[pos];
            if (c == '"') {
                ++pos;
                return out;
            }
            if (c == '\\') {
                if (++pos >= s.size()) break;
                switch (s[pos]) {
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    case '"': out.push_back('"'); break;
                    case '\\': out.push_back('\\'); break;
                    default: fail(fmt::format("unknown escape \\{}", s[pos]));
                }
                continue;
            }
            out.push_back(c);
        }
        fail("unterminated string");
    }

    nlohmann::json array() {
        nlohmann::json arr = nlohmann::json::array();
        ++pos;
        skip_ws();
        if (pos < s.size() && s[pos] == ']') {
            ++pos;
            return arr;
        }
        while (true) {
            arr.push_back(value());
            skip_ws();
            if (pos >= s.size()) fail("unterminated array");
            if (s[pos] == ']') {
                ++pos;
                return arr;
            }
            if (s[pos] != ',') fail("expected ',' in array");
            ++pos;
            skip_ws();
            if (pos < s.size() && s[pos] == ']') {
                ++pos;
                return arr;
            }
        }
    }
};

void put(nlohmann::json& root, const std::vector<std::string>& path, nlohmann::json value, const std::string& source,
         std::size_t line, bool allow_replace) {
    nlohmann::json* node = &root;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        auto& child = (*node)[path[i]];
        if (child.is_null()) child = nlohmann::json::object();
        if (!child.is_object()) throw SchemaError(source, line, "key " + path[i] + " is not a table");
        node = &child;
    }
    if (!allow_replace && node->contains(path.back()))
        throw SchemaError(source, line, "duplicate key " + path.back());
    (*node)[path.back()] = std::move(value);
}

std::string format_value(const nlohmann::json& v) {
    if (v.is_string()) return nlohmann::json(v.get<std::string>()).dump();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
        std::string s = fmt::format("{}", d);
        if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
        return s;
    }
    if (v.is_array()) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_value(v[i]);
        return s + "]";
    }
    return "\"\"";
}

void emit_table(std::string& out, const nlohmann::json& table, const std::string& prefix) {
    for (const auto& [k, v] : table.items())
        if (!v.is_object()) out += k + " = " + format_value(v) + "\n";
    for (const auto& [k, v] : table.items())
        if (v.is_object()) {
            const std::string name = prefix.empty() ? k : prefix + "." + k;
            out += "\n[" + name + "]\n";
            emit_table(out, v, name);
        }
}

}  // namespace

nlohmann::json RunConfig::parse_value(const std::string& text, const std::string& source, std::size_t line) {
    const std::string t = trim(text);
    ValueParser p{t, 0, source, line};
    auto v = p.value();
    p.skip_ws();
    if (p.pos != t.size()) p.fail("trailing characters after value");
    return v;
}

RunConfig RunConfig::parse(std::istream& is, const std::string& source) {
    RunConfig cfg;
    cfg.source_ = source;
    std::vector<std::string> section;
    std::string raw;
    for (std::size_t n = 1; std::getline(is, raw); ++n) {
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) throw SchemaError(source, n, "malformed section header");
            section = split_key(line.substr(1, line.size() - 2));
            for (const auto& k : section)
                if (!valid_key(k)) throw SchemaError(source, n, "bad section name \"" + k + "\"");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw SchemaError(source, n, "expected key = value");
        auto path = section;
        for (const auto& k : split_key(trim(line.substr(0, eq)))) {
            if (!valid_key(k)) throw SchemaError(source, n, "bad key \"" + k + "\"");
            path.push_back(k);
        }
        put(cfg.root_, path, parse_value(line.substr(eq + 1), source, n), source, n, false);
    }
    return cfg;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& source) {
    std::istringstream is(text);
    return parse(is, source);
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw SchemaError(path.string(), 0, "cannot open config file");
    return parse(is, path.string());
}

const nlohmann::json* RunConfig::find(const std::string& dotted_key) const {
    const nlohmann::json* node = &root_;
    for (const auto& k : split_key(dotted_key)) {
        if (!node->is_object()) return nullptr;
        const auto it = node->find(k);
        if (it == node->end()) return nullptr;
        node = &*it;
    }
    return node;
}

void RunConfig::set(const std::string& dotted_key, nlohmann::json value) {
    put(root_, split_key(dotted_key), std::move(value), source_, 0, true);
}

void RunConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw DomainError("override \"" + assignment + "\" is not key=value");
    const std::string key = trim(assignment.substr(0, eq)), text = trim(assignment.substr(eq + 1));
    for (const auto& k : split_key(key))
        if (!valid_key(k)) throw DomainError("bad override key \"" + key + "\"");
    nlohmann::json v;
    try {
        v = parse_value(text, "<override>");
    } catch (const SchemaError&) {
        v = text;
    }
    set(key, std::move(v));
}

std::string RunConfig::to_toml() const {
    std::string out;
    emit_table(out, root_, "");
    return out;
}

}  // namespace screening
