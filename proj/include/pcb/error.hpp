#pragma once

#include <stdexcept>
#include <string>

namespace pcb {

/// Shape or extent mismatch between operands.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// User-supplied input violates a documented contract (CLI exit code 2).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A metric whose denominator is zero; never reported as 0.
class UndefinedMetricError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File or format level failure while reading or writing artifacts.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace pcb
