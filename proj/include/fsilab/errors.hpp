// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fsilab {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define FSILAB_ERROR(Name)                                 \
    class Name : public Error {                            \
    public:                                                \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
    }

FSILAB_ERROR(PreconditionViolation);
FSILAB_ERROR(EmptyDomain);
FSILAB_ERROR(MeshFailure);
FSILAB_ERROR(UnsupportedDegree);
FSILAB_ERROR(QuadratureFailure);
FSILAB_ERROR(SaddleSolveFailure);
FSILAB_ERROR(LinearSolveFailure);
FSILAB_ERROR(EigSolveFailure);
FSILAB_ERROR(NonConvergedState);
FSILAB_ERROR(IllConditionedFit);
FSILAB_ERROR(BasisMismatch);
FSILAB_ERROR(TensorTooLarge);
FSILAB_ERROR(StepperDiverged);
FSILAB_ERROR(InvalidEigenvector);
FSILAB_ERROR(FDInconclusive);
FSILAB_ERROR(ConfigError);

#undef FSILAB_ERROR

/// Newton failure; carries the last iterate so callers can inspect or restart.
class NewtonDiverged : public Error {
public:
    NewtonDiverged(const std::string& what, Eigen::VectorXd last, double residual)
        : Error("NewtonDiverged: " + what), last_iterate(std::move(last)), last_residual(residual) {}
    Eigen::VectorXd last_iterate;
    double last_residual;
};

class ContinuationStalled : public Error {
public:
    ContinuationStalled(const std::string& what, double last_good, std::vector<double> trace)
        : Error("ContinuationStalled: " + what), last_good_lambda(last_good),
          bisection_trace(std::move(trace)) {}
    double last_good_lambda;
    std::vector<double> bisection_trace;
};

}  // namespace fsilab
