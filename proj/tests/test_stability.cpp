#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "cpal/dynamics.hpp"
#include "cpal/equilibrium.hpp"
#include "cpal/errors.hpp"
#include "cpal/linalg.hpp"
#include "cpal/repro.hpp"
#include "cpal/rng.hpp"
#include "cpal/stability.hpp"
#include "cpal/tree.hpp"

using namespace cpal;

namespace {

Valuations random_box_point(const PayoffBox& box, CounterRng& rng) {
    Valuations v(box.lo.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(box.lo[i], box.hi[i]);
    return v;
}

} // namespace

TEST_SUITE("stability") {

TEST_CASE("zero temperature gives exactly minus identity") {
    CounterRng rng(41, 0);
    ReducedTree t = repro::random_reduced_tree(rng, 4, true, 2);
    Matrix J = jacobian({0.1, 0.2, 0.3, 0.4}, t, 0.0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(J.at(i, j) == (i == j ? -1.0 : 0.0));
}

TEST_CASE("rows sum to minus one identically") {
    CounterRng rng(43, 0);
    int points = 0;
    for (int ti = 0; ti < 10; ++ti) {
        ReducedTree t = repro::random_reduced_tree(rng, 2 + ti % 4, true, 2);
        PayoffBox box = payoff_box(t);
        for (int k = 0; k < 25; ++k) {
            Valuations v = random_box_point(box, rng);
            for (double beta : {0.0, 1.0, 37.0, 1000.0}) {
                Matrix J = jacobian(v, t, beta);
                ++points;
                for (std::size_t s = 0; s < J.n; ++s) {
                    double row = 0.0;
                    for (std::size_t c = 0; c < J.n; ++c) row += J.at(s, c);
                    CHECK(std::abs(row + 1.0) < 1e-9);
                }
                CHECK(row_sum_defect(J) < 1e-9);
            }
        }
    }
    CHECK(points == 1000);
}

TEST_CASE("analytic jacobian matches finite differences") {
    CounterRng rng(47, 0);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 2 + trial % 3;
        ReducedTree t = repro::random_reduced_tree(rng, n, true, 2);
        PayoffBox box = payoff_box(t);
        Valuations v = random_box_point(box, rng);
        double beta = rng.uniform(0.0, 20.0);
        Matrix J = jacobian(v, t, beta);
        double scale = 1.0;
        for (double x : J.a) scale = std::max(scale, std::abs(x));
        const double h = 1e-6;
        for (std::size_t k = 0; k < n; ++k) {
            Valuations vp = v, vm = v;
            vp[k] += h;
            vm[k] -= h;
            Valuations fp = mean_field_rhs(vp, t, beta);
            Valuations fm = mean_field_rhs(vm, t, beta);
            for (std::size_t s = 0; s < n; ++s) {
                double fd = (fp[s] - fm[s]) / (2.0 * h);
                CHECK(std::abs(fd - J.at(s, k)) / scale < 1e-5);
            }
        }
    }
}

TEST_CASE("mixed interior point is a saddle, sharp points are sinks") {
    ReducedTree tree00 = reduce(repro::three_state_tree(0.0, 0.0));
    double mixed = 1.0 - 1.0 / std::sqrt(3.0);

    Equilibrium saddle = solve_fixed_point({mixed + 0.01, mixed - 0.01}, tree00, 50.0);
    StabilityReport rep = stability_report(saddle.v_star, tree00, 50.0);
    CHECK(rep.verdict == Verdict::unstable);
    CHECK(rep.spectral_abscissa > 1.0);
    CHECK_FALSE(rep.residual_warning);
    CHECK(rep.discs_cover_spectrum);

    Equilibrium sink = solve_fixed_point({1.2, 0.1}, tree00, 50.0);
    StabilityReport rep2 = stability_report(sink.v_star, tree00, 50.0);
    CHECK(rep2.verdict == Verdict::stable);
    CHECK(rep2.spectral_abscissa < 0.0);

    ReducedTree tree10 = reduce(repro::three_state_tree(1.0, 0.0));
    Equilibrium lone = solve_fixed_point({1.5, 0.0}, tree10, 50.0);
    CHECK(stability_report(lone.v_star, tree10, 50.0).verdict == Verdict::stable);
}

TEST_CASE("sharp-limit spectrum collapses to minus one") {
    ReducedTree tree00 = reduce(repro::three_state_tree(0.0, 0.0));
    Equilibrium eq = solve_fixed_point({1.2, 0.1}, tree00, 200.0);
    StabilityReport rep = stability_report(eq.v_star, tree00, 200.0);
    for (const auto& lam : rep.eigs)
        CHECK(std::hypot(lam.real() + 1.0, lam.imag()) < 0.05);
}

TEST_CASE("high-payoff deep states make the system cooperative") {
    ReducedTree tree33 = reduce(repro::three_state_tree(3.0, 3.0));
    Equilibrium eq = solve_fixed_point({2.5, 2.5}, tree33, 50.0);
    StabilityReport rep = stability_report(eq.v_star, tree33, 50.0);
    CHECK(rep.cooperative);
    CHECK(rep.irreducible);
    CHECK(rep.verdict == Verdict::stable);
    CHECK(rep.discs_cover_spectrum);
    for (const auto& d : rep.discs) CHECK(d.center < 0.0);

    // Shifting the one-class states far up keeps every off-diagonal strictly
    // positive over the whole box and pins the abscissa at or below -1.
    ReducedTree lifted = shift_unary_payoffs(tree33, 100.0);
    PayoffBox box = payoff_box(lifted);
    CounterRng rng(53, 0);
    for (int k = 0; k < 20; ++k) {
        Valuations v = random_box_point(box, rng);
        auto sgn = offdiagonal_signs(v, lifted, 50.0);
        CHECK(sgn[0][1] == 1);
        CHECK(sgn[1][0] == 1);
        auto eig = eigenvalues(jacobian(v, lifted, 50.0));
        CHECK(eig.front().real() <= -1.0 + 1e-9);
    }
}

TEST_CASE("cooperative flow preserves componentwise order") {
    ReducedTree tree33 = reduce(repro::three_state_tree(3.0, 3.0));
    PayoffBox box = payoff_box(tree33);
    Trajectory low = integrate({box.lo[0], box.lo[1]}, tree33, 50.0, 20.0, 0.05);
    Trajectory high = integrate({box.hi[0], box.hi[1]}, tree33, 50.0, 20.0, 0.05);
    REQUIRE(low.values.size() == high.values.size());
    for (std::size_t i = 0; i < low.values.size(); ++i)
        for (std::size_t s = 0; s < 2; ++s)
            CHECK(low.values[i][s] <= high.values[i][s] + 1e-9);
}

TEST_CASE("off-diagonal signs agree with the jacobian when nothing underflows") {
    CounterRng rng(59, 0);
    for (int trial = 0; trial < 15; ++trial) {
        ReducedTree t = repro::random_reduced_tree(rng, 2 + trial % 3, true, 2);
        PayoffBox box = payoff_box(t);
        Valuations v = random_box_point(box, rng);
        double beta = rng.uniform(0.5, 10.0);
        Matrix J = jacobian(v, t, beta);
        auto sgn = offdiagonal_signs(v, t, beta);
        for (std::size_t i = 0; i < J.n; ++i)
            for (std::size_t j = 0; j < J.n; ++j) {
                if (i == j) continue;
                int js = (J.at(i, j) > 0.0) - (J.at(i, j) < 0.0);
                CHECK(sgn[i][j] == js);
            }
    }
}

TEST_CASE("off-diagonal signs survive where the jacobian underflows to zero") {
    ReducedTree lifted = shift_unary_payoffs(reduce(repro::three_state_tree(3.0, 3.0)), 100.0);
    PayoffBox box = payoff_box(lifted);
    Valuations v{box.lo[0], box.hi[1]}; // spread valuations: beta*(v_L+v_R) drowns the doubles
    Matrix J = jacobian(v, lifted, 50.0);
    auto sgn = offdiagonal_signs(v, lifted, 50.0);
    CHECK(J.at(0, 1) == 0.0);
    CHECK(sgn[0][1] == 1);
    CHECK(sgn[1][0] == 1);

    auto zero = offdiagonal_signs(v, lifted, 0.0);
    CHECK(zero[0][1] == 0);
    CHECK(zero[1][0] == 0);
}

TEST_CASE("decoupled sharp choices break irreducibility") {
    ReducedTree tree00 = reduce(repro::three_state_tree(0.0, 0.0));
    Equilibrium eq = solve_fixed_point({1.2, 0.1}, tree00, 1000.0);
    StabilityReport rep = stability_report(eq.v_star, tree00, 1000.0);
    CHECK_FALSE(rep.irreducible);
    CHECK_FALSE(rep.cooperative);
    CHECK(rep.verdict == Verdict::stable);
}

TEST_CASE("residual warning flags points away from equilibrium") {
    ReducedTree tree00 = reduce(repro::three_state_tree(0.0, 0.0));
    StabilityReport rep = stability_report({1.7, 0.9}, tree00, 50.0);
    CHECK(rep.residual_warning);
    CHECK(rep.residual > 1e-8);

    Equilibrium eq = solve_fixed_point({1.2, 0.1}, tree00, 50.0);
    CHECK_FALSE(stability_report(eq.v_star, tree00, 50.0).residual_warning);
}

TEST_CASE("report bookkeeping") {
    ReducedTree tree00 = reduce(repro::three_state_tree(0.0, 0.0));
    StabilityReport rep = stability_report({1.0, 0.5}, tree00, 10.0);
    REQUIRE(rep.eigs.size() == 2);
    CHECK(rep.jac.n == 2);
    CHECK(rep.spectral_abscissa == rep.eigs.front().real());
    for (std::size_t i = 1; i < rep.eigs.size(); ++i)
        CHECK(rep.eigs[i - 1].real() >= rep.eigs[i].real());
    REQUIRE(rep.discs.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(rep.discs[i].center == rep.jac.at(i, i));
        double r = 0.0;
        for (std::size_t j = 0; j < 2; ++j)
            if (j != i) r += std::abs(rep.jac.at(i, j));
        CHECK(rep.discs[i].radius == r);
    }

    CHECK_THROWS_AS(jacobian({1.0}, tree00, 10.0), ValidationError);
    double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(jacobian({1.0, 0.5}, tree00, inf), ValidationError);
    CHECK_THROWS_AS(offdiagonal_signs({1.0}, tree00, 10.0), ValidationError);
}

} // TEST_SUITE
