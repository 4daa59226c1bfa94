#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cpal {

// Input or configuration rejected before any computation ran.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Computation produced non-finite values or an internal algorithm failed
// (singular system with no usable fallback, QR sweep cap, ...).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Iteration budget exhausted; carries the best iterate seen so the caller
// can inspect how close the solve got.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::vector<double> best, double residual)
        : std::runtime_error(what), best_iterate(std::move(best)), best_residual(residual) {}

    std::vector<double> best_iterate;
    double best_residual;
};

// A greedy strict-pure construction whose self-confirmation check failed;
// signals the tree is outside the regime the construction assumes.
class ConstructionInvalid : public std::runtime_error {
public:
    explicit ConstructionInvalid(const std::string& what) : std::runtime_error(what) {}
};

} // namespace cpal
