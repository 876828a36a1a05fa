#ifndef TBN_ERROR_HPP
#define TBN_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tbn {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed text input (model file, evidence stream, plan file).
class ParseError : public Error {
public:
    ParseError(std::size_t line, std::size_t column, const std::string& what)
        : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
          line_(line), column_(column) {}

    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

// A model that violates a structural rule required by the requested operation.
class ModelError : public Error {
public:
    using Error::Error;
};

// Dimension or argument mismatch in factor arithmetic.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Total probability mass collapsed below the underflow guard.
class ImpossibleEvidence : public Error {
public:
    using Error::Error;
};

// A table would exceed the configured entry cap.
class CapacityError : public Error {
public:
    CapacityError(const std::string& what, std::vector<std::string> culprits = {})
        : Error(what), culprits_(std::move(culprits)) {}

    const std::vector<std::string>& culprits() const { return culprits_; }

private:
    std::vector<std::string> culprits_;
};

// Corrupt or inconsistent evaluation plan.
class PlanError : public Error {
public:
    using Error::Error;
};

} // namespace tbn

#endif // TBN_ERROR_HPP
