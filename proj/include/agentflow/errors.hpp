#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace agentflow {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed document text. Line and column are 1-based; 0 means unknown.
class SyntaxError : public Error {
public:
    SyntaxError(const std::string& message, std::size_t line, std::size_t column)
        : Error(format(message, line, column)), line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    static std::string format(const std::string& message, std::size_t line, std::size_t column) {
        if (line == 0) return "syntax error: " + message;
        return "syntax error at line " + std::to_string(line) + ", column " +
               std::to_string(column) + ": " + message;
    }

    std::size_t line_;
    std::size_t column_;
};

class MissingFieldError : public Error {
public:
    explicit MissingFieldError(std::string field)
        : Error("missing required field '" + field + "'"), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// Well-formed JSON whose shape does not match the expected document
// (unknown key, wrong value type, bad enum literal).
class SchemaError : public Error {
public:
    using Error::Error;
};

class StorageError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace agentflow
