#pragma once

#include <stdexcept>
#include <string>

namespace cret {

/// Base of every error thrown by the library. `category()` is a short
/// machine-parseable token that the CLI prints before the message.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

/// Shape or range violation in the arguments of an operation.
struct InvalidInput : Error {
  explicit InvalidInput(const std::string& w) : Error("invalid_input", w) {}
};

/// Input that is well-formed but mathematically degenerate (zero vector, ...).
struct DegenerateInput : Error {
  explicit DegenerateInput(const std::string& w) : Error("degenerate_input", w) {}
};

/// Non-finite values encountered while optimizing.
struct TrainingAbort : Error {
  explicit TrainingAbort(const std::string& w) : Error("training_abort", w) {}
};

/// Misuse of a stateful API (tape reuse, empty buffer, ...).
struct ProtocolError : Error {
  explicit ProtocolError(const std::string& w) : Error("protocol_error", w) {}
};

/// Breach of the continual-learning stream contract.
struct ContractViolation : Error {
  explicit ContractViolation(const std::string& w) : Error("contract_violation", w) {}
};

/// Malformed file contents.
struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error("parse_error", w) {}
};

/// Artifacts that cannot be used together (dim or script mismatch).
struct Incompatible : Error {
  explicit Incompatible(const std::string& w) : Error("incompatible", w) {}
};

/// Filesystem failures.
struct IoError : Error {
  explicit IoError(const std::string& w) : Error("io_error", w) {}
};

}  // namespace cret
