#pragma once

#include <stdexcept>
#include <string>

namespace minnorm {

// Error buckets; the CLI maps them to exit codes 2 (input), 3 (assumption),
// 4 (numerical).
enum class ErrorKind { Input, Assumption, Numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Malformed caller input: shape mismatches, non-finite values, bad index sets.
struct InvalidInput : Error {
  explicit InvalidInput(const std::string& w) : Error(ErrorKind::Input, w) {}
};

// The design's regime does not admit the requested shortcut.
struct RegimeMismatch : Error {
  explicit RegimeMismatch(const std::string& w)
      : Error(ErrorKind::Assumption, w) {}
};

// A named structural assumption (full column rank, full row rank, or the
// column-split rank condition) fails for the requested operation.
struct AssumptionViolated : Error {
  explicit AssumptionViolated(const std::string& w)
      : Error(ErrorKind::Assumption, w) {}
};

// Treatment vector is constant, so no treatment contrast exists.
struct ConstantTreatment : Error {
  explicit ConstantTreatment(const std::string& w)
      : Error(ErrorKind::Assumption, w) {}
};

// Competitor matrix is not a left/right inverse of the design.
struct NotAValidInverse : Error {
  explicit NotAValidInverse(const std::string& w)
      : Error(ErrorKind::Assumption, w) {}
};

// Leverage H_ii is numerically 1 in the tall regime; the leave-one-out
// denominators vanish and no finite shortcut exists.
struct LeverageOne : Error {
  explicit LeverageOne(const std::string& w)
      : Error(ErrorKind::Numerical, w) {}
};

// The principal submatrix a leave-k-out correction must invert is singular.
struct SingularSubmatrix : Error {
  explicit SingularSubmatrix(const std::string& w)
      : Error(ErrorKind::Numerical, w) {}
};

// A variance-estimator trace denominator is numerically zero.
struct ZeroDegreesOfFreedom : Error {
  explicit ZeroDegreesOfFreedom(const std::string& w)
      : Error(ErrorKind::Numerical, w) {}
};

// The rank-one pseudoinverse update's preconditions do not hold; the caller
// must recompute from scratch.
struct LemmaConditionsNotMet : Error {
  explicit LemmaConditionsNotMet(const std::string& w)
      : Error(ErrorKind::Numerical, w) {}
};

// Generic numerical guard (division by a value below div_tol, failed redraws).
struct NumericalFailure : Error {
  explicit NumericalFailure(const std::string& w)
      : Error(ErrorKind::Numerical, w) {}
};

}  // namespace minnorm
