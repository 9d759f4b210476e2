#pragma once

#include <stdexcept>
#include <string>

namespace circme {

/// Invalid argument or precondition violation (bad angle, negative kappa, lambda out of range).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Numerical failure: nonconvergent quadrature, overflowing deconvolution factor, etc.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Local fit has no usable neighbourhood (vanishing local-linear denominator).
class DegenerateNeighborhood : public NumericError {
public:
    using NumericError::NumericError;
};

/// Circular mean requested for a sample whose resultant vanishes.
class UndefinedMean : public DomainError {
public:
    using DomainError::DomainError;
};

/// Bandwidth selection could not produce a usable loss (e.g. a fold with no defined prediction).
class SelectionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or unusable input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace circme
