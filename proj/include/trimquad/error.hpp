#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace trimquad {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input data: malformed files, invalid knot vectors, inconsistent setups.
/// The CLI maps these to exit code 2.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Failure of a numerical procedure on otherwise valid input (exit code 3).
class NumericalError : public Error {
public:
    using Error::Error;
};

class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class InvalidKnotVector : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class InvalidRefinement : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class UnsupportedContinuity : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class MalformedTrim : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class UnknownProblem : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// A trimmed element whose curve layout the cell partition cannot represent.
/// Refining the mesh usually separates the offending curve pieces.
class UnsupportedTrimTopology : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class InvertedCell : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class GeometryError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class SolverError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NonConvergence : public NumericalError {
public:
    NonConvergence(const std::string& what, double residual)
        : NumericalError(what + " (residual " + format(residual) + ")"), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    static std::string format(double r) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3e", r);
        return buf;
    }

    double residual_;
};

}  // namespace trimquad
