#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "cpal/linalg.hpp"
#include "cpal/rng.hpp"

using cpal::CounterRng;
using cpal::Matrix;
using cd = std::complex<double>;

namespace {

Matrix random_matrix(CounterRng& rng, std::size_t n, double scale) {
    Matrix A(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) A.at(i, j) = rng.uniform(-scale, scale);
    return A;
}

// Characteristic polynomial coefficients by the Faddeev-LeVerrier recursion:
// p(x) = x^n + c[0] x^(n-1) + ... + c[n-1]. Independent of any eigenvalue
// machinery, so it serves as an oracle for the QR path.
std::vector<double> charpoly(const Matrix& A) {
    std::size_t n = A.n;
    Matrix M(n);
    for (std::size_t i = 0; i < n; ++i) M.at(i, i) = 1.0;
    std::vector<double> c(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        Matrix AM(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t l = 0; l < n; ++l) s += A.at(i, l) * M.at(l, j);
                AM.at(i, j) = s;
            }
        double tr = 0.0;
        for (std::size_t i = 0; i < n; ++i) tr += AM.at(i, i);
        c[k] = -tr / static_cast<double>(k + 1);
        M = AM;
        for (std::size_t i = 0; i < n; ++i) M.at(i, i) += c[k];
    }
    return c;
}

cd poly_eval(const std::vector<double>& c, cd x) {
    cd v = 1.0;
    for (double ck : c) v = v * x + ck;
    return v;
}

// Durand-Kerner simultaneous root iteration on a monic polynomial.
std::vector<cd> dk_roots(const std::vector<double>& c) {
    std::size_t n = c.size();
    std::vector<cd> r(n);
    cd w(0.4, 0.9), p(1.0, 0.0);
    for (std::size_t i = 0; i < n; ++i) { p *= w; r[i] = p; }
    for (int iter = 0; iter < 2000; ++iter) {
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cd den(1.0, 0.0);
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) den *= r[i] - r[j];
            cd delta = poly_eval(c, r[i]) / den;
            r[i] -= delta;
            worst = std::max(worst, std::abs(delta) / (1.0 + std::abs(r[i])));
        }
        if (worst < 1e-14) break;
    }
    return r;
}

// Greedy nearest matching between the computed spectrum and the oracle roots.
double match_distance(std::vector<cd> got, std::vector<cd> want) {
    REQUIRE(got.size() == want.size());
    double worst = 0.0;
    std::vector<bool> used(want.size(), false);
    for (const cd& g : got) {
        double best = 1e300;
        std::size_t bi = 0;
        for (std::size_t i = 0; i < want.size(); ++i) {
            if (used[i]) continue;
            double d = std::abs(g - want[i]);
            if (d < best) { best = d; bi = i; }
        }
        used[bi] = true;
        worst = std::max(worst, best);
    }
    return worst;
}

} // namespace

TEST_SUITE("linalg") {

TEST_CASE("lu_solve recovers a planted solution") {
    CounterRng rng(11, 0);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 1 + trial % 6;
        Matrix A = random_matrix(rng, n, 2.0);
        for (std::size_t i = 0; i < n; ++i) A.at(i, i) += static_cast<double>(n) + 1.0;
        std::vector<double> x(n), b(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) x[i] = rng.uniform(-5.0, 5.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) b[i] += A.at(i, j) * x[j];
        REQUIRE(cpal::lu_solve(A, b));
        for (std::size_t i = 0; i < n; ++i) CHECK(b[i] == doctest::Approx(x[i]).epsilon(1e-10));
    }
}

TEST_CASE("lu_solve rejects singular systems") {
    Matrix Z(3);
    std::vector<double> b{1.0, 2.0, 3.0};
    CHECK_FALSE(cpal::lu_solve(Z, b));

    Matrix R(3); // rank one
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) R.at(i, j) = (i + 1.0) * (j + 2.0);
    std::vector<double> b2{1.0, 1.0, 1.0};
    CHECK_FALSE(cpal::lu_solve(R, b2));
}

TEST_CASE("diagonal and triangular spectra are the diagonal") {
    Matrix D(3);
    D.at(0, 0) = 3.0; D.at(1, 1) = 1.0; D.at(2, 2) = -2.0;
    auto eig = cpal::eigenvalues(D);
    REQUIRE(eig.size() == 3);
    CHECK(eig[0] == cd(3.0, 0.0));
    CHECK(std::abs(eig[1] - cd(1.0, 0.0)) < 1e-12);
    CHECK(std::abs(eig[2] - cd(-2.0, 0.0)) < 1e-12);

    Matrix T(4);
    double diag[4] = {2.5, -0.5, 4.0, 0.25};
    for (std::size_t i = 0; i < 4; ++i) {
        T.at(i, i) = diag[i];
        for (std::size_t j = i + 1; j < 4; ++j) T.at(i, j) = 1.0 + static_cast<double>(i + j);
    }
    auto eigt = cpal::eigenvalues(T);
    std::vector<cd> want{cd(4.0, 0), cd(2.5, 0), cd(0.25, 0), cd(-0.5, 0)};
    CHECK(match_distance(eigt, want) < 1e-10);
}

TEST_CASE("rotation matrix gives a pure imaginary pair") {
    Matrix R(2);
    R.at(0, 1) = 1.0; R.at(1, 0) = -1.0;
    auto eig = cpal::eigenvalues(R);
    REQUIRE(eig.size() == 2);
    CHECK(std::abs(eig[0] - cd(0.0, 1.0)) < 1e-12);
    CHECK(std::abs(eig[1] - cd(0.0, -1.0)) < 1e-12);
}

TEST_CASE("defective repeated eigenvalue") {
    Matrix J(2);
    J.at(0, 0) = 2.0; J.at(0, 1) = 1.0; J.at(1, 1) = 2.0;
    auto eig = cpal::eigenvalues(J);
    REQUIRE(eig.size() == 2);
    // A defective pair is only determined to about sqrt(machine epsilon).
    CHECK(std::abs(eig[0] - cd(2.0, 0.0)) < 1e-6);
    CHECK(std::abs(eig[1] - cd(2.0, 0.0)) < 1e-6);
}

TEST_CASE("random spectra match characteristic polynomial roots") {
    CounterRng rng(23, 0);
    for (int trial = 0; trial < 60; ++trial) {
        std::size_t n = 2 + trial % 6;
        Matrix A = random_matrix(rng, n, 2.0);
        auto eig = cpal::eigenvalues(A);
        auto roots = dk_roots(charpoly(A));
        CHECK(match_distance(eig, roots) < 2e-6);

        double tr = 0.0, sum_re = 0.0, sum_im = 0.0;
        for (std::size_t i = 0; i < n; ++i) tr += A.at(i, i);
        for (const cd& l : eig) { sum_re += l.real(); sum_im += l.imag(); }
        CHECK(sum_re == doctest::Approx(tr).epsilon(1e-9));
        CHECK(std::abs(sum_im) < 1e-9);
    }
}

TEST_CASE("spectrum is sorted by real part, then imaginary part, descending") {
    CounterRng rng(31, 0);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix A = random_matrix(rng, 6, 1.5);
        auto eig = cpal::eigenvalues(A);
        for (std::size_t i = 1; i < eig.size(); ++i) {
            bool ordered = eig[i - 1].real() > eig[i].real() ||
                           (eig[i - 1].real() == eig[i].real() && eig[i - 1].imag() >= eig[i].imag());
            CHECK(ordered);
        }
    }
}

TEST_CASE("near-identical diagonal with tiny couplings stays convergent") {
    // Regression: the shifted QR iteration used to cycle on this matrix
    // because the trace/determinant discriminant cancels to zero in doubles.
    Matrix A(2);
    A.at(0, 0) = -1.0; A.at(0, 1) = -1.38879e-9;
    A.at(1, 0) = -1.73599e-10; A.at(1, 1) = -1.0;
    auto eig = cpal::eigenvalues(A);
    REQUIRE(eig.size() == 2);
    double split = std::sqrt(A.at(0, 1) * A.at(1, 0)); // real since the product is positive
    CHECK(std::abs(eig[0] - cd(-1.0 + split, 0.0)) < 1e-13);
    CHECK(std::abs(eig[1] - cd(-1.0 - split, 0.0)) < 1e-13);
}

TEST_CASE("denormal couplings do not overflow the reduction") {
    // Regression: Householder scaling; an unscaled reflector norm underflows
    // and 2/norm^2 becomes infinite.
    Matrix A(3);
    for (std::size_t i = 0; i < 3; ++i) A.at(i, i) = -1.0;
    A.at(0, 1) = 3.3e-302; A.at(1, 0) = 2.0e-138;
    A.at(1, 2) = 4.4e-161; A.at(2, 1) = 5.9e-320;
    auto eig = cpal::eigenvalues(A);
    REQUIRE(eig.size() == 3);
    for (const cd& l : eig) CHECK(std::abs(l - cd(-1.0, 0.0)) < 1e-10);
}

TEST_CASE("tiny sizes") {
    Matrix one(1);
    one.at(0, 0) = 5.0;
    auto eig = cpal::eigenvalues(one);
    REQUIRE(eig.size() == 1);
    CHECK(eig[0] == cd(5.0, 0.0));

    Matrix empty(0);
    CHECK(cpal::eigenvalues(empty).empty());
}

} // TEST_SUITE
