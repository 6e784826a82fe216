#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace screening {

/// Base for every error raised by the toolkit. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of the operation (epsilon not in (0,1), x < 0, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// The bound's premises fail (Delta = 0 or sigma = 0), so no finite length threshold exists.
class BoundVacuous : public Error {
public:
    using Error::Error;
};

/// Exact enumeration would exceed the leaf-sequence guard.
class EnumerationGuard : public Error {
public:
    using Error::Error;
};

/// Malformed input file. `line` is 1-based; 0 when the error is not tied to a line.
class SchemaError : public Error {
public:
    SchemaError(std::string source, std::size_t line, const std::string& what)
        : Error(line == 0 ? source + ": " + what
                          : source + ":" + std::to_string(line) + ": " + what),
          source_(std::move(source)), line_(line) {}

    const std::string& source() const noexcept { return source_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string source_;
    std::size_t line_;
};

class NetworkError : public Error {
public:
    explicit NetworkError(const std::string& what, bool transport = false) : Error(what), transport_(transport) {}

    /// True when the last attempt got no HTTP response at all.
    bool transport() const noexcept { return transport_; }

private:
    bool transport_;
};

/// The endpoint answered but lacks a capability we need (e.g. prompt echo with logprobs).
class UnsupportedEndpoint : public Error {
public:
    using Error::Error;
};

}  // namespace screening
