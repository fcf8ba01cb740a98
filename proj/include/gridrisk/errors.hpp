#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gridrisk {

// Base class for all recoverable errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input text. Carries line/field context where known.
class ParseError : public Error {
public:
    ParseError(const std::string& message, int line = -1, const std::string& field = "")
        : Error(format(message, line, field)), line_(line), field_(field) {}

    int line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    static std::string format(const std::string& message, int line, const std::string& field) {
        std::string out = "parse error";
        if (line >= 0) out += " at line " + std::to_string(line);
        if (!field.empty()) out += " (field '" + field + "')";
        out += ": " + message;
        return out;
    }

    int line_;
    std::string field_;
};

// Structurally valid input that breaks a model invariant. Collects every
// breach found so callers see the full list at once.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> breaches)
        : Error(join(breaches)), breaches_(std::move(breaches)) {}
    explicit ValidationError(const std::string& breach)
        : ValidationError(std::vector<std::string>{breach}) {}

    const std::vector<std::string>& breaches() const { return breaches_; }

private:
    static std::string join(const std::vector<std::string>& breaches) {
        std::string out = "validation failed:";
        for (const auto& b : breaches) out += "\n  - " + b;
        return out;
    }

    std::vector<std::string> breaches_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

} // namespace gridrisk
