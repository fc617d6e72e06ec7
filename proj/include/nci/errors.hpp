// Exception hierarchy shared by every nci module.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nci {

/// Root of all errors raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Bad arguments or malformed objects (violated preconditions).
class InvalidArgument : public Error {
  public:
    using Error::Error;
};

/// Fields or points from different charts were combined.
class ChartMismatch : public Error {
  public:
    using Error::Error;
};

/// An iterative kernel failed to converge; carries the residual it stopped at.
class ConvergenceError : public Error {
  public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

  private:
    double residual_;
};

/// ODE integration failed: step budget exhausted or the state blew up.
class IntegrationError : public Error {
  public:
    enum class Kind { StepLimit, Blowup };
    IntegrationError(const std::string& what, Kind kind, double last_time)
        : Error(what), kind_(kind), last_time_(last_time) {}
    Kind kind() const noexcept { return kind_; }
    double last_valid_time() const noexcept { return last_time_; }

  private:
    Kind kind_;
    double last_time_;
};

/// Lattice basis is degenerate, or fewer than r independent returns were found.
class LatticeError : public Error {
  public:
    explicit LatticeError(const std::string& what,
                          std::vector<std::vector<double>> partial = {})
        : Error(what), partial_(std::move(partial)) {}
    /// Return vectors found before giving up (may be empty).
    const std::vector<std::vector<double>>& partial_basis() const noexcept { return partial_; }

  private:
    std::vector<std::vector<double>> partial_;
};

/// The flow never came back within the search horizon.
class NoPeriodFound : public Error {
  public:
    using Error::Error;
};

/// Rejection sampling never produced enough accepted points.
class SamplerExhausted : public Error {
  public:
    using Error::Error;
};

/// A point lies outside the regular locus of a system (e.g. degenerate spectrum).
class RegularityError : public Error {
  public:
    using Error::Error;
};

/// Angle variable is undefined at the given point (singular set).
class AngleUndefined : public Error {
  public:
    using Error::Error;
};

/// Syntax error in the expression language.
class ParseError : public Error {
  public:
    ParseError(const std::string& message, std::size_t offset, std::vector<std::string> expected = {})
        : Error(message + " at offset " + std::to_string(offset)), message_(message),
          offset_(offset), expected_(std::move(expected)) {}
    std::size_t offset() const noexcept { return offset_; }
    const std::vector<std::string>& expected() const noexcept { return expected_; }
    const std::string& message() const noexcept { return message_; }

  private:
    std::string message_;
    std::size_t offset_;
    std::vector<std::string> expected_;
};

/// Identifier that is neither a declared variable nor a known function.
class UndeclaredVariable : public ParseError {
  public:
    UndeclaredVariable(const std::string& name, std::size_t offset)
        : ParseError("undeclared variable '" + name + "'", offset), name_(name) {}
    const std::string& name() const noexcept { return name_; }

  private:
    std::string name_;
};

/// Expression evaluated outside its domain (log of non-positive, division by zero, ...).
class DomainError : public Error {
  public:
    DomainError(const std::string& what, std::size_t offset)
        : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

  private:
    std::size_t offset_;
};

/// System configuration failed validation.
class ConfigError : public Error {
  public:
    using Error::Error;
};

} // namespace nci
