#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Core>

namespace eegoc {

enum class ErrorKind {
  Parameter,      // invalid numeric parameter (epsilon <= 0, radii, ...)
  Parse,          // malformed input file
  Unsupported,    // valid input that uses a feature we do not implement
  Validation,     // structural invariant violated
  Location,       // electrode cannot be located in the mesh
  Singular,       // factorization hit a zero pivot
  Convergence,    // iterative solver did not reach tolerance
  Resource,       // size cap exceeded
  Compatibility,  // pure-Neumann solvability condition violated
  Usage,          // caller violated a documented precondition
  Domain,         // point outside the domain of a function
  Dimension,      // size mismatch between operands
  EmptyBoundary,  // no faces with the requested tag
  Io,             // file could not be opened or written
};

inline constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Location: return "location";
    case ErrorKind::Singular: return "singular";
    case ErrorKind::Convergence: return "convergence";
    case ErrorKind::Resource: return "resource";
    case ErrorKind::Compatibility: return "compatibility";
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::EmptyBoundary: return "empty-boundary";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Parse failure carrying the 1-based line number of the offending input.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Iterative solve that stopped short of the tolerance. Keeps the best iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd best, double residual)
      : Error(ErrorKind::Convergence, what),
        best_(std::move(best)),
        residual_(residual) {}

  [[nodiscard]] const Eigen::VectorXd& best_iterate() const noexcept { return best_; }
  [[nodiscard]] double relative_residual() const noexcept { return residual_; }

 private:
  Eigen::VectorXd best_;
  double residual_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace eegoc
