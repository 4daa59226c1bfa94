#pragma once

#include <complex>
#include <vector>

#include "cpal/dynamics.hpp"
#include "cpal/linalg.hpp"
#include "cpal/tree.hpp"

namespace cpal {

// Jacobian of the averaged dynamics g(v) - v at a point. Every row sums to
// -1 identically, so -1 is always an eigenvalue (eigenvector of ones).
Matrix jacobian(const Valuations& v, const ReducedTree& t, double beta);

double row_sum_defect(const Matrix& J);

// Sign (-1, 0, +1) of each off-diagonal Jacobian entry with the common
// positive scale factored out in log space. The double entries of jacobian()
// underflow to +0 when beta times the valuation spread is large; these signs
// stay exact there. Diagonal positions are reported as 0.
std::vector<std::vector<int>> offdiagonal_signs(const Valuations& v, const ReducedTree& t,
                                                double beta);

struct GershgorinDisc {
    double center = 0.0; // diagonal entry
    double radius = 0.0; // sum of absolute off-diagonals in the row
};

enum class Verdict { stable, unstable, marginal };

const char* verdict_name(Verdict v);

struct StabilityReport {
    Matrix jac;
    std::vector<std::complex<double>> eigs; // sorted by real part descending
    double spectral_abscissa = 0.0;
    Verdict verdict = Verdict::marginal; // by spectral abscissa, band 1e-8
    std::vector<GershgorinDisc> discs;
    bool discs_cover_spectrum = false;
    bool cooperative = false; // all off-diagonal entries strictly positive
    bool irreducible = false; // influence digraph (|J_sk| > 1e-12) strongly connected
    double row_sum_defect = 0.0;
    double residual = 0.0;        // sup-norm of g(v) - v at the point
    bool residual_warning = false; // residual > 1e-8: point is not an equilibrium
};

StabilityReport stability_report(const Valuations& v, const ReducedTree& t, double beta);

} // namespace cpal
