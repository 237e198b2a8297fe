#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ctha {

/// Dimension or layout mismatch between operands.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Input outside an operation's domain (empty matrix, nonpositive time scale, ...).
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Malformed textual input; carries the byte offset of the first offending byte.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t byte_offset)
        : std::runtime_error(what), byte_offset_(byte_offset) {}

    std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::size_t byte_offset_ = 0;
};

/// A caller- or hook-supplied contract was broken (verifier outside [0,1],
/// conflicting survivors handed to compose, ...). Distinct from invalid user
/// input: reaching this is a bug in the calling code, and the CLI maps it to
/// exit code 3.
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

}  // namespace ctha
