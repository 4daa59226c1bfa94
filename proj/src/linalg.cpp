#include "cpal/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "cpal/errors.hpp"

namespace cpal {

bool lu_solve(Matrix A, std::vector<double>& b) {
    const std::size_t n = A.n;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(A.at(r, col)) > std::abs(A.at(piv, col))) piv = r;
        if (std::abs(A.at(piv, col)) < 1e-300) return false;
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(A.at(piv, j), A.at(col, j));
            std::swap(b[piv], b[col]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            double f = A.at(r, col) / A.at(col, col);
            if (f == 0.0) continue;
            for (std::size_t j = col; j < n; ++j) A.at(r, j) -= f * A.at(col, j);
            b[r] -= f * b[col];
        }
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= A.at(i, j) * b[j];
        b[i] = s / A.at(i, i);
    }
    return true;
}

namespace {

using cd = std::complex<double>;

// Householder similarity transform to upper Hessenberg form.
void hessenberg(Matrix& A) {
    const std::size_t n = A.n;
    if (n < 3) return;
    std::vector<double> v(n);
    for (std::size_t k = 0; k + 2 < n; ++k) {
        // Work with the column scaled by its largest entry: the reflector only
        // depends on the direction, and scaling keeps 2/vnorm2 representable
        // even when the raw column is denormal.
        double colmax = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) colmax = std::max(colmax, std::abs(A.at(i, k)));
        if (colmax == 0.0) continue;
        double norm2 = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) {
            v[i] = A.at(i, k) / colmax;
            norm2 += v[i] * v[i];
        }
        double alpha = std::sqrt(norm2);
        if (v[k + 1] > 0) alpha = -alpha;
        double vnorm2 = norm2 - 2.0 * alpha * v[k + 1] + alpha * alpha;
        if (vnorm2 <= 0.0) continue;
        v[k + 1] -= alpha;
        double beta = 2.0 / vnorm2;
        // A <- P A with P = I - beta v v^T
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k + 1; i < n; ++i) s += v[i] * A.at(i, j);
            s *= beta;
            for (std::size_t i = k + 1; i < n; ++i) A.at(i, j) -= s * v[i];
        }
        // A <- A P
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) s += A.at(i, j) * v[j];
            s *= beta;
            for (std::size_t j = k + 1; j < n; ++j) A.at(i, j) -= s * v[j];
        }
    }
}

// Eigenvalues of [[a,b],[c,d]] as mean +/- root. This form avoids the
// cancellation in tr^2 - 4 det when the diagonal entries nearly coincide.
std::pair<cd, cd> eig2x2(cd a, cd b, cd c, cd d) {
    cd mean = 0.5 * (a + d);
    cd p = 0.5 * (a - d);
    cd root = std::sqrt(p * p + b * c);
    return {mean + root, mean - root};
}

// Eigenvalue of [[a,b],[c,d]] closest to d.
cd wilkinson_shift(cd a, cd b, cd c, cd d) {
    auto [l1, l2] = eig2x2(a, b, c, d);
    return std::abs(l1 - d) < std::abs(l2 - d) ? l1 : l2;
}

} // namespace

std::vector<std::complex<double>> eigenvalues(const Matrix& A0) {
    const std::size_t n = A0.n;
    std::vector<cd> eig(n);
    if (n == 0) return {};
    if (n == 1) return {cd(A0.at(0, 0), 0.0)};

    Matrix Ar = A0;
    hessenberg(Ar);
    std::vector<cd> H(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            H[i * n + j] = cd(Ar.at(i, j), 0.0);
    auto h = [&](std::size_t i, std::size_t j) -> cd& { return H[i * n + j]; };

    double scale = 0.0;
    for (const cd& x : H) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) scale = 1.0;
    const double eps = 2.2e-16;
    const long max_sweeps = 100L * static_cast<long>(n) * static_cast<long>(n);
    long sweeps = 0;
    long stalled = 0;

    std::size_t m = n - 1; // high end of the active window
    while (true) {
        // Deflate converged subdiagonals from the bottom.
        while (m > 0) {
            double off = std::abs(h(m, m - 1));
            double local = std::abs(h(m - 1, m - 1)) + std::abs(h(m, m));
            if (off <= eps * std::max(local, scale)) {
                h(m, m - 1) = 0.0;
                eig[m] = h(m, m);
                --m;
                stalled = 0;
            } else {
                break;
            }
        }
        if (m == 0) {
            eig[0] = h(0, 0);
            break;
        }
        // Active window [l..m]: stop at the first negligible interior subdiagonal.
        std::size_t l = m;
        while (l > 0) {
            double off = std::abs(h(l, l - 1));
            double local = std::abs(h(l - 1, l - 1)) + std::abs(h(l, l));
            if (off <= eps * std::max(local, scale)) { h(l, l - 1) = 0.0; break; }
            --l;
        }

        if (m - l == 1) {
            // A decoupled 2x2 window has closed-form eigenvalues; iterating on it
            // can cycle when both candidates sit at equal distance from h(m, m).
            auto [l1, l2] = eig2x2(h(l, l), h(l, m), h(m, l), h(m, m));
            eig[m] = l2;
            eig[l] = l1;
            if (l == 0) break;
            m = l - 1;
            stalled = 0;
            continue;
        }

        if (++sweeps > max_sweeps)
            throw NumericError("eigenvalue QR iteration exceeded its sweep budget");
        cd mu = wilkinson_shift(h(m - 1, m - 1), h(m - 1, m), h(m, m - 1), h(m, m));
        if (++stalled > 20) {
            // Exceptional shift to break symmetric cycling.
            mu += cd(std::abs(h(m, m - 1)) + std::abs(h(m - 1, m - 1)), 0.0) * 0.75;
            stalled = 0;
        }

        // One implicit QR step on the window: H - mu I = QR, H <- RQ + mu I,
        // with Q a product of Givens rotations acting on adjacent rows.
        std::vector<cd> cs(m), sn(m);
        for (std::size_t i = l; i < m + 1; ++i) h(i, i) -= mu;
        for (std::size_t k = l; k < m; ++k) {
            cd x = h(k, k), y = h(k + 1, k);
            double r = std::hypot(std::abs(x), std::abs(y));
            if (r == 0.0) { cs[k] = 1.0; sn[k] = 0.0; continue; }
            cs[k] = x / r;
            sn[k] = y / r;
            for (std::size_t j = k; j <= m; ++j) {
                cd t1 = h(k, j), t2 = h(k + 1, j);
                h(k, j) = std::conj(cs[k]) * t1 + std::conj(sn[k]) * t2;
                h(k + 1, j) = -sn[k] * t1 + cs[k] * t2;
            }
        }
        for (std::size_t k = l; k < m; ++k) {
            std::size_t top = l;
            for (std::size_t i = top; i <= std::min(k + 2, m); ++i) {
                cd t1 = h(i, k), t2 = h(i, k + 1);
                h(i, k) = t1 * cs[k] + t2 * sn[k];
                h(i, k + 1) = -t1 * std::conj(sn[k]) + t2 * std::conj(cs[k]);
            }
        }
        for (std::size_t i = l; i < m + 1; ++i) h(i, i) += mu;
    }

    std::sort(eig.begin(), eig.end(), [](const cd& a, const cd& b) {
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() > b.imag();
    });
    return eig;
}

} // namespace cpal
