#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace cpal {

// Row-major dense square matrix, sized for the handful of classes a tree has.
struct Matrix {
    std::size_t n = 0;
    std::vector<double> a;

    Matrix() = default;
    explicit Matrix(std::size_t size) : n(size), a(size * size, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return a[i * n + j]; }
    double at(std::size_t i, std::size_t j) const { return a[i * n + j]; }
};

// Solve A x = b by LU with partial pivoting; false when a pivot is
// numerically zero. A and b are clobbered; x lands in b.
bool lu_solve(Matrix A, std::vector<double>& b);

// Eigenvalues of a general real matrix: Householder reduction to upper
// Hessenberg, then complex Wilkinson-shifted QR with deflation. Sorted by
// real part descending (ties by imaginary part descending). Throws
// NumericError if the sweep budget (100 n^2) is exhausted.
std::vector<std::complex<double>> eigenvalues(const Matrix& A);

} // namespace cpal
