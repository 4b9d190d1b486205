#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace nilwalk {

// Inconsistent objects combined together (mismatched algebras, shapes, walks).
struct StructuralError : std::logic_error {
  using std::logic_error::logic_error;
};

// Argument outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PreconditionError : std::logic_error {
  using std::logic_error::logic_error;
};

struct UnsupportedError : std::logic_error {
  using std::logic_error::logic_error;
};

// Invalid input document or object. `pointer` is a JSON pointer into the
// offending spec when one is known, otherwise empty.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string pointer, const std::string& message)
      : std::runtime_error(pointer.empty() ? message : pointer + ": " + message),
        pointer_(std::move(pointer)) {}

  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

struct StochasticityError : ValidationError {
  using ValidationError::ValidationError;
};

struct InversePairingError : ValidationError {
  using ValidationError::ValidationError;
};

struct ReducibilityError : ValidationError {
  using ValidationError::ValidationError;
};

struct AlgebraError : ValidationError {
  using ValidationError::ValidationError;
};

struct DegenerateWalkError : NumericalError {
  using NumericalError::NumericalError;
};

}  // namespace nilwalk
