#pragma once

#include <stdexcept>
#include <string>

namespace fbeuler {

// Typed failures raised by the numerical kernels. The CLI maps them to exit
// codes; tests assert on the concrete types.

#define FBEULER_DEFINE_ERROR(Name)                          \
  struct Name : std::runtime_error {                        \
    explicit Name(const std::string& msg)                   \
        : std::runtime_error(std::string(#Name ": ") + msg) {} \
  }

FBEULER_DEFINE_ERROR(SingularJacobian);
FBEULER_DEFINE_ERROR(DegenerateNormal);
FBEULER_DEFINE_ERROR(VarianceMismatch);
FBEULER_DEFINE_ERROR(SolverDiverged);
FBEULER_DEFINE_ERROR(SingularMetric);
FBEULER_DEFINE_ERROR(BoundaryTraceNonzero);
FBEULER_DEFINE_ERROR(GridTooLarge);
FBEULER_DEFINE_ERROR(GridTooCoarse);
FBEULER_DEFINE_ERROR(CflViolation);
FBEULER_DEFINE_ERROR(NonlinearSolveFailed);
FBEULER_DEFINE_ERROR(NonlinearDiverged);
FBEULER_DEFINE_ERROR(FrameMismatch);
FBEULER_DEFINE_ERROR(StiffnessFailure);
FBEULER_DEFINE_ERROR(PhysicalConditionViolated);
FBEULER_DEFINE_ERROR(IterationStalled);
FBEULER_DEFINE_ERROR(HypothesisViolated);
FBEULER_DEFINE_ERROR(InverseRefused);
FBEULER_DEFINE_ERROR(ConfigInvalid);
FBEULER_DEFINE_ERROR(IoFailure);

#undef FBEULER_DEFINE_ERROR

}  // namespace fbeuler
