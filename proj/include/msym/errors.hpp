#pragma once

#include <stdexcept>
#include <string>

namespace msym {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MSYM_DEFINE_ERROR(Name)      \
  class Name : public Error {        \
   public:                           \
    using Error::Error;              \
  }

MSYM_DEFINE_ERROR(SingularMetric);
MSYM_DEFINE_ERROR(DomainError);
MSYM_DEFINE_ERROR(ShapeError);
MSYM_DEFINE_ERROR(IndexError);
MSYM_DEFINE_ERROR(NonRegular);
MSYM_DEFINE_ERROR(WrongEnergyKind);
MSYM_DEFINE_ERROR(NonDifferentiable);
MSYM_DEFINE_ERROR(MissingMultiplier);
MSYM_DEFINE_ERROR(SingularSaddle);
MSYM_DEFINE_ERROR(ConfigError);

#undef MSYM_DEFINE_ERROR

/// Raised when Newton fails to reach tolerance; carries the failing step.
class NewtonDiverged : public Error {
 public:
  NewtonDiverged(const std::string& what, long step, double residual)
      : Error(what), step_(step), residual_(residual) {}
  long step() const { return step_; }
  double residual() const { return residual_; }

 private:
  long step_;
  double residual_;
};

}  // namespace msym
