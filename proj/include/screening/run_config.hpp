#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "screening/errors.hpp"

namespace screening {

/// Run configuration read from a TOML subset: `[section]` / `[a.b]` headers,
/// `key = value` lines and `#` comments. Values are basic strings, booleans,
/// integers, floats and single-line arrays of those. Stored as a JSON tree.
class RunConfig {
public:
    static RunConfig parse(std::istream& is, const std::string& source = "<config>");
    static RunConfig parse(const std::string& text, const std::string& source = "<config>");
    static RunConfig load(const std::filesystem::path& path);

    /// Parses one TOML value ("1.5", "\"x\"", "[1, 2]", "true").
    static nlohmann::json parse_value(const std::string& text, const std::string& source = "<value>",
                                      std::size_t line = 0);

    const nlohmann::json* find(const std::string& dotted_key) const;
    bool has(const std::string& dotted_key) const { return find(dotted_key) != nullptr; }
    void set(const std::string& dotted_key, nlohmann::json value);
    /// Applies "key=value" (value in TOML syntax; bare words are taken as strings).
    void apply_override(const std::string& assignment);

    template <class T>
    T get(const std::string& dotted_key, T fallback) const {
        const auto* v = find(dotted_key);
        if (!v) return fallback;
        try {
            return v->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw SchemaError(source_, 0, "key " + dotted_key + " has the wrong type");
        }
    }
    std::string get_string(const std::string& dotted_key, const std::string& fallback) const {
        return get<std::string>(dotted_key, fallback);
    }

    const nlohmann::json& root() const { return root_; }
    const std::string& source() const { return source_; }

    /// Canonical TOML text: top-level scalars first, then sections in key order.
    std::string to_toml() const;

private:
    nlohmann::json root_ = nlohmann::json::object();
    std::string source_ = "<config>";
};

}  // namespace screening
