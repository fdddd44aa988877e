#pragma once

#include <stdexcept>
#include <string>

namespace drivesql {

/// Input that violates a schema, contract or invariant. CLI exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable or unwritable file. CLI exit code 2.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class ArgumentError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class LookupError : public ValidationError {
public:
    LookupError(std::string table, std::string id)
        : ValidationError("no " + table + " record with id '" + id + "'"),
          table_(std::move(table)), id_(std::move(id)) {}

    const std::string& table() const noexcept { return table_; }
    const std::string& id() const noexcept { return id_; }

private:
    std::string table_;
    std::string id_;
};

class TemplateError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// A metric with nothing to score (no pairs, empty corpus).
class UndefinedScoreError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

}  // namespace drivesql
