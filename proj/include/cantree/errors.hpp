#pragma once

#include <stdexcept>
#include <string>

namespace cantree {

// Base of every error raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A numeric parameter lies outside its admissible range.
struct ParameterViolation : Error {
    using Error::Error;
};

// An argument violates a structural precondition (e.g. too deep, bad digit).
struct PreconditionViolation : Error {
    using Error::Error;
};

struct NoParent : PreconditionViolation {
    NoParent() : PreconditionViolation("the root has no parent") {}
};

// Two boundary cells coincide, so their distance is below resolution.
struct SameCell : Error {
    SameCell() : Error("addresses lie in the same cell") {}
};

struct NotAnUpperGradient : Error {
    using Error::Error;
};

// Smoothness exponent outside the admissible interval for an operator.
struct RegimeViolation : ParameterViolation {
    using ParameterViolation::ParameterViolation;
};

struct ResolutionInsufficient : Error {
    using Error::Error;
};

struct ConditionFailure : Error {
    using Error::Error;
};

struct Unsupported : Error {
    using Error::Error;
};

struct SchemaMismatch : Error {
    using Error::Error;
};

struct TooFewTriples : Error {
    using Error::Error;
};

}  // namespace cantree
