#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mcopf {

/// Malformed JSON input (bad syntax, wrong encoding).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& message) : std::runtime_error(message) {}
};

/// Structurally valid JSON that does not match the case schema.
class SchemaError : public std::runtime_error {
public:
    SchemaError(std::string field, const std::string& message)
        : std::runtime_error(message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// A network cannot be reduced to a balanced single-conductor equivalent.
class NotBalanceable : public std::runtime_error {
public:
    NotBalanceable(std::string entity, const std::string& message)
        : std::runtime_error(message), entity_(std::move(entity)) {}
    const std::string& entity() const { return entity_; }

private:
    std::string entity_;
};

/// Solution and network shapes disagree (wrong case paired with a solution).
class DimensionMismatch : public std::runtime_error {
public:
    explicit DimensionMismatch(const std::string& message) : std::runtime_error(message) {}
};

/// Linear network solve on a floating (ungrounded, unreferenced) system.
class SingularSystem : public std::runtime_error {
public:
    explicit SingularSystem(const std::string& message) : std::runtime_error(message) {}
};

/// Exhaustive search found no candidate satisfying all constraints.
class NoFeasibleCandidate : public std::runtime_error {
public:
    explicit NoFeasibleCandidate(const std::string& message) : std::runtime_error(message) {}
};

/// Raised when converting a case whose network fails validation.
class CaseValidationError : public std::runtime_error {
public:
    CaseValidationError(std::vector<std::string> violations, const std::string& message)
        : std::runtime_error(message), violations_(std::move(violations)) {}
    const std::vector<std::string>& violations() const { return violations_; }

private:
    std::vector<std::string> violations_;
};

}  // namespace mcopf
