#include "cpal/repro.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>

#include "cpal/dynamics.hpp"
#include "cpal/equilibrium.hpp"
#include "cpal/errors.hpp"
#include "cpal/stability.hpp"
#include "cpal/util.hpp"

namespace cpal::repro {

namespace {

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

double sup_dist(const Valuations& a, const Valuations& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

const Rational kThird{1, 3};

} // namespace

RawTree trading_tree() {
    RawTree t;
    t.classes = {"apples", "citrus"};
    t.states = {
        {"market1", kThird.to_double(), kThird,
         {{"apples1", "apples", 3.0}, {"limes1", "citrus", 2.0}}},
        {"market2", kThird.to_double(), kThird,
         {{"lemons2", "citrus", 3.0}, {"limes2", "citrus", 1.0}}},
        {"market3", kThird.to_double(), kThird,
         {{"lemons3", "citrus", 4.0}, {"apples3", "apples", 1.0}}},
    };
    return t;
}

RawTree three_state_tree(double z2, double z3) {
    RawTree t;
    t.classes = {"L", "R"};
    t.states = {
        {"w1", kThird.to_double(), kThird, {{"L1", "L", 2.0}, {"R1", "R", 1.0}}},
        {"w2", kThird.to_double(), kThird, {{"L2", "L", z2}}},
        {"w3", kThird.to_double(), kThird, {{"R3", "R", z3}}},
    };
    return t;
}

ReducedTree random_reduced_tree(CounterRng& rng, std::size_t n_classes, bool all_binary,
                                int extra_states) {
    ReducedTree t;
    for (std::size_t i = 0; i < n_classes; ++i) t.classes.push_back("c" + std::to_string(i));

    std::vector<std::vector<std::size_t>> supports;
    for (std::size_t i = 0; i < n_classes; ++i) supports.push_back({i});
    if (all_binary)
        for (std::size_t i = 0; i < n_classes; ++i)
            for (std::size_t j = i + 1; j < n_classes; ++j) supports.push_back({i, j});
    for (int e = 0; e < extra_states; ++e) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n_classes; ++i)
            if (rng.uniform01() < 0.5) members.push_back(i);
        if (members.size() < 2) continue;
        if (std::find(supports.begin(), supports.end(), members) == supports.end())
            supports.push_back(members);
    }

    double total = 0.0;
    std::vector<double> mass(supports.size());
    for (std::size_t i = 0; i < supports.size(); ++i) {
        mass[i] = rng.uniform(0.5, 1.5);
        total += mass[i];
    }
    for (std::size_t i = 0; i < supports.size(); ++i) {
        ReducedState st;
        st.members = supports[i];
        st.prob = mass[i] / total;
        for (std::size_t m = 0; m < st.members.size(); ++m)
            st.payoffs.push_back(rng.uniform01());
        t.states.push_back(std::move(st));
    }
    // Make the probabilities sum to 1 exactly enough for validation.
    double sum = 0.0;
    for (const auto& st : t.states) sum += st.prob;
    t.states.back().prob += 1.0 - sum;
    t.validate();
    return t;
}

ReducedTree random_two_class_tree(CounterRng& rng) {
    ReducedTree t;
    t.classes = {"L", "R"};
    double m0 = rng.uniform(0.2, 1.0), m1 = rng.uniform(0.2, 1.0), m2 = rng.uniform(0.2, 1.0);
    double total = m0 + m1 + m2;
    ReducedState s_l{{0}, m0 / total, std::nullopt, {rng.uniform01()}};
    ReducedState s_r{{1}, m1 / total, std::nullopt, {rng.uniform01()}};
    ReducedState s_lr{{0, 1}, m2 / total, std::nullopt, {rng.uniform01(), rng.uniform01()}};
    s_lr.prob += 1.0 - (s_l.prob + s_r.prob + s_lr.prob);
    t.states = {s_l, s_r, s_lr};
    t.validate();
    return t;
}

namespace {

struct Battery {
    unsigned threads;
    double z2_override;
    std::vector<CheckResult> results;

    ReducedTree tree00, tree33, tree10;
    std::vector<Equilibrium> eqs00_b50;

    void add(const std::string& name, bool pass, const std::string& measured,
             const std::string& expected) {
        results.push_back({name, pass, measured, expected});
    }
};

// Exact sharp-choice targets for the benchmark family, from the closed-form
// indifference solutions.
const double kSqrt3 = std::sqrt(3.0);

void check_reduction(Battery& b) {
    ReducedTree r = reduce(trading_tree());
    double err = std::numeric_limits<double>::infinity();
    bool shape = r.n_classes() == 2 && r.states.size() == 2;
    if (shape) {
        const ReducedState* both = nullptr;
        const ReducedState* lone = nullptr;
        for (const auto& st : r.states)
            (st.members.size() == 2 ? both : lone) = &st;
        shape = both && lone && lone->members == std::vector<std::size_t>{1};
        if (shape) {
            err = std::abs(both->prob - 2.0 / 3.0);
            err = std::max(err, std::abs(both->payoffs[0] - 2.0)); // apples
            err = std::max(err, std::abs(both->payoffs[1] - 3.0)); // citrus
            err = std::max(err, std::abs(lone->prob - 1.0 / 3.0));
            err = std::max(err, std::abs(lone->payoffs[0] - 2.0));
        }
    }
    b.add("reduction-exactness", shape && err <= 1e-12,
          shape ? "max abs error " + fmt(err) : "wrong reduced shape",
          "two states, values exact to 1e-12");
}

// Matches each target to exactly one found equilibrium within tol.
bool match_targets(const std::vector<Equilibrium>& eqs, const std::vector<Valuations>& targets,
                   double tol, double& worst) {
    worst = 0.0;
    if (eqs.size() != targets.size()) return false;
    std::vector<bool> used(eqs.size(), false);
    for (const auto& tg : targets) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_i = eqs.size();
        for (std::size_t i = 0; i < eqs.size(); ++i) {
            if (used[i]) continue;
            double d = sup_dist(eqs[i].v_star, tg);
            if (d < best) { best = d; best_i = i; }
        }
        if (best_i == eqs.size() || best > tol) return false;
        used[best_i] = true;
        worst = std::max(worst, best);
    }
    return true;
}

void check_multiplicity(Battery& b) {
    const double mixed = 1.0 - 1.0 / kSqrt3;
    std::vector<Valuations> targets = {{1.0, 0.0}, {0.0, 0.5}, {mixed, mixed}};

    b.eqs00_b50 = find_all(b.tree00, 50.0);
    double worst50 = 0.0;
    bool ok50 = match_targets(b.eqs00_b50, targets, 0.05, worst50);

    auto eqs1000 = find_all(b.tree00, 1000.0);
    double worst1000 = 0.0;
    bool ok1000 = match_targets(eqs1000, targets, 0.005, worst1000);

    bool stab_ok = ok50 && ok1000;
    if (stab_ok) {
        for (const auto& eqs : {b.eqs00_b50, eqs1000}) {
            for (const auto& eq : eqs) {
                StabilityReport rep = stability_report(eq.v_star, b.tree00, eq.beta);
                bool is_mixed = sup_dist(eq.v_star, targets[2]) < 0.1;
                if (is_mixed ? rep.verdict != Verdict::unstable : rep.verdict != Verdict::stable)
                    stab_ok = false;
            }
        }
    }
    b.add("three-equilibria-multiplicity", ok50 && ok1000 && stab_ok,
          std::string("counts ") + std::to_string(b.eqs00_b50.size()) + ", worst match " +
              fmt(worst50) + " (b=50) / " + fmt(worst1000) + " (b=1000)" +
              (stab_ok ? ", verdicts as predicted" : ", wrong verdict"),
          "3 solutions within 0.05 / 0.005; two stable, mixed unstable");
}

void check_global_convergence(Battery& b) {
    const Valuations limit = {2.0 + 1.0 / kSqrt3, 2.0 + 1.0 / kSqrt3};
    auto eqs = find_all(b.tree33, 50.0);
    bool unique_ok = eqs.size() == 1 && sup_dist(eqs[0].v_star, limit) <= 0.05;
    if (!unique_ok) {
        b.add("global-convergence-unique", false,
              "find_all returned " + std::to_string(eqs.size()) + " solutions",
              "1 solution within 0.05, ODE 1e-3 by t=50, sim mean error < 0.05");
        return;
    }
    const Valuations& vstar = eqs[0].v_star;

    PayoffBox box = payoff_box(b.tree33);
    std::vector<Valuations> ics = {
        {box.lo[0], box.lo[1]}, {box.lo[0], box.hi[1]}, {box.hi[0], box.lo[1]}, {box.hi[0], box.hi[1]}};
    CounterRng rng(0x33u, 1u);
    while (ics.size() < 20) {
        ics.push_back({rng.uniform(box.lo[0], box.hi[0]), rng.uniform(box.lo[1], box.hi[1])});
    }
    std::vector<double> ode_err(ics.size());
    parallel_for(ics.size(), b.threads, [&](std::size_t i) {
        Trajectory traj = integrate(ics[i], b.tree33, 50.0, 50.0, 0.01);
        ode_err[i] = sup_dist(traj.values.back(), vstar);
    });
    double worst_ode = *std::max_element(ode_err.begin(), ode_err.end());

    SimConfig cfg;
    cfg.beta = 50.0;
    cfg.horizon = 100000;
    cfg.rule = StepRule::harmonic;
    cfg.seed = 0x33u;
    cfg.record_every = cfg.horizon;
    Valuations v0 = {0.5 * (box.lo[0] + box.hi[0]), 0.5 * (box.lo[1] + box.hi[1])};
    std::vector<double> sim_err(100);
    parallel_for(sim_err.size(), b.threads, [&](std::size_t run) {
        Trajectory traj = simulate(v0, cfg, b.tree33, nullptr, run);
        sim_err[run] = sup_dist(traj.values.back(), limit);
    });
    double mean_err = 0.0;
    for (double e : sim_err) mean_err += e;
    mean_err /= static_cast<double>(sim_err.size());

    bool pass = worst_ode <= 1e-3 && mean_err < 0.05;
    b.add("global-convergence-unique", pass,
          "worst ODE error " + fmt(worst_ode) + ", sim mean error " + fmt(mean_err),
          "ODE <= 1e-3 by t=50 from 20 starts; 100-seed mean error < 0.05");
}

void check_asymmetric_unique(Battery& b) {
    auto eqs = find_all(b.tree10, 50.0);
    double d = eqs.size() == 1 ? sup_dist(eqs[0].v_star, {1.5, 0.0})
                               : std::numeric_limits<double>::infinity();
    bool stable = false;
    if (eqs.size() == 1) {
        StabilityReport rep = stability_report(eqs[0].v_star, b.tree10, 50.0);
        stable = rep.verdict == Verdict::stable;
    }
    b.add("asymmetric-unique", eqs.size() == 1 && d <= 0.05 && stable,
          std::to_string(eqs.size()) + " solution(s), distance " + fmt(d) +
              (stable ? ", stable" : ", not stable"),
          "1 stable solution within 0.05 of (1.5, 0)");
}

void check_mixed_closed_forms(Battery& b) {
    MixedLimit m31 = mixed_limit_solve(b.tree00);
    MixedLimit m32 = mixed_limit_solve(b.tree33);
    double err = std::abs(m31.q - (2.0 - kSqrt3));
    err = std::max(err, std::abs(m31.value - (1.0 - 1.0 / kSqrt3)));
    err = std::max(err, std::abs(m32.q - (kSqrt3 - 1.0)));
    err = std::max(err, std::abs(m32.value - (2.0 + 1.0 / kSqrt3)));
    b.add("mixed-limit-closed-forms", err <= 1e-12, "max abs error " + fmt(err),
          "q and value match closed forms to 1e-12");
}

void check_sharp_limit_spectrum(Battery& b) {
    struct Case { const ReducedTree* t; Valuations start; };
    std::vector<Case> cases = {{&b.tree00, {1.0, 0.0}}, {&b.tree00, {0.0, 0.5}}, {&b.tree10, {1.5, 0.0}}};
    double worst = 0.0;
    bool pass = true;
    for (const auto& c : cases) {
        Equilibrium eq = solve_fixed_point(c.start, *c.t, 200.0);
        if (!eq.strict_pure) pass = false;
        StabilityReport rep = stability_report(eq.v_star, *c.t, 200.0);
        for (const auto& lam : rep.eigs)
            worst = std::max(worst, std::hypot(lam.real() + 1.0, lam.imag()));
    }
    b.add("sharp-limit-identity-spectrum", pass && worst < 0.05,
          "max |eig + 1| = " + fmt(worst), "all eigenvalues within 0.05 of -1 at beta=200");
}

void check_cooperative_regime(Battery& b) {
    std::vector<ReducedTree> trees = {b.tree33};
    CounterRng tree_rng(0x77u, 0u);
    for (int k = 0; k < 20; ++k)
        trees.push_back(shift_unary_payoffs(random_reduced_tree(tree_rng, 3, true, 2), 100.0));

    std::vector<int> worst_sign(trees.size());
    std::vector<double> worst_abscissa(trees.size());
    parallel_for(trees.size(), b.threads, [&](std::size_t ti) {
        const ReducedTree& t = trees[ti];
        PayoffBox box = payoff_box(t);
        CounterRng rng(0x77u, 100 + ti);
        int min_sign = 1;
        double max_absc = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < 100; ++k) {
            Valuations v(t.n_classes());
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(box.lo[i], box.hi[i]);
            auto sgn = offdiagonal_signs(v, t, 50.0);
            for (std::size_t i = 0; i < sgn.size(); ++i)
                for (std::size_t j = 0; j < sgn.size(); ++j)
                    if (i != j) min_sign = std::min(min_sign, sgn[i][j]);
            max_absc = std::max(max_absc, eigenvalues(jacobian(v, t, 50.0)).front().real());
        }
        worst_sign[ti] = min_sign;
        worst_abscissa[ti] = max_absc;
    });
    int min_sign = *std::min_element(worst_sign.begin(), worst_sign.end());
    double max_absc = *std::max_element(worst_abscissa.begin(), worst_abscissa.end());
    b.add("cooperative-regime-spectra", min_sign > 0 && max_absc <= -1.0 + 1e-9,
          "min off-diagonal sign " + std::to_string(min_sign) + ", max abscissa " + fmt(max_absc),
          "all off-diagonal signs positive and abscissa <= -1 + 1e-9 at 100 points per tree");
}

void check_pure_enumeration(Battery& b) {
    CounterRng rng(0x88u, 0u);
    bool pass = true;
    std::string measured;
    for (int inst = 0; inst < 3 && pass; ++inst) {
        ReducedTree t;
        t.classes = {"a", "b", "c"};
        const Rational seventh{1, 7};
        for (std::size_t mask = 1; mask < 8; ++mask) {
            ReducedState st;
            for (std::size_t i = 0; i < 3; ++i)
                if ((mask >> i) & 1) st.members.push_back(i);
            st.prob = seventh.to_double();
            st.prob_exact = seventh;
            for (std::size_t m = 0; m < st.members.size(); ++m)
                st.payoffs.push_back(rng.uniform01());
            t.states.push_back(std::move(st));
        }
        t.validate();
        ReducedTree shifted = shift_unary_payoffs(t, -100.0);

        auto ves = enumerate_pure_VE(shifted);
        if (ves.size() != 6 ||
            !std::all_of(ves.begin(), ves.end(), [](const PureVE& v) { return v.strict; })) {
            pass = false;
            measured = "instance " + std::to_string(inst) + ": " + std::to_string(ves.size()) +
                       " pure limits";
            break;
        }
        double worst = 0.0;
        for (const auto& ve : ves) {
            Equilibrium eq = solve_fixed_point(ve.valuations, shifted, 1000.0);
            worst = std::max(worst, sup_dist(eq.v_star, ve.valuations));
            if (!eq.strict_pure) pass = false;
        }
        if (worst > 0.02) pass = false;
        if (measured.empty() || pass)
            measured = "6 strict pure limits x3 instances, worst solver gap " + fmt(worst);
    }
    b.add("pure-limit-enumeration", pass, measured,
          "exactly 6 strict pure limits; each within 0.02 of a beta=1000 solution");
}

void check_jacobian_agreement(Battery& b) {
    const int cases = 200;
    std::vector<double> rel_err(cases), defect(cases);
    std::vector<bool> covered(cases, false);
    parallel_for(cases, b.threads, [&](std::size_t ci) {
        CounterRng rng(0x99u, ci);
        std::size_t n = 2 + static_cast<std::size_t>(rng.uniform01() * 4.0);
        if (n > 5) n = 5;
        ReducedTree t = random_reduced_tree(rng, n, true, 2);
        PayoffBox box = payoff_box(t);
        Valuations v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform(box.lo[i], box.hi[i]);
        double beta = rng.uniform(0.0, 20.0);

        Matrix J = jacobian(v, t, beta);
        const double h = 1e-6;
        double scale = 1.0, worst = 0.0;
        for (const double x : J.a) scale = std::max(scale, std::abs(x));
        for (std::size_t k = 0; k < n; ++k) {
            Valuations vp = v, vm = v;
            vp[k] += h;
            vm[k] -= h;
            Valuations fp = mean_field_rhs(vp, t, beta);
            Valuations fm = mean_field_rhs(vm, t, beta);
            for (std::size_t s = 0; s < n; ++s)
                worst = std::max(worst, std::abs((fp[s] - fm[s]) / (2.0 * h) - J.at(s, k)));
        }
        rel_err[ci] = worst / scale;
        defect[ci] = row_sum_defect(J);
        covered[ci] = stability_report(v, t, beta).discs_cover_spectrum;
    });
    double worst_rel = *std::max_element(rel_err.begin(), rel_err.end());
    double worst_defect = *std::max_element(defect.begin(), defect.end());
    bool all_covered = std::all_of(covered.begin(), covered.end(), [](bool c) { return c; });
    b.add("jacobian-agreement", worst_rel < 1e-5 && worst_defect < 1e-9 && all_covered,
          "FD rel error " + fmt(worst_rel) + ", row-sum defect " + fmt(worst_defect) +
              (all_covered ? ", discs cover spectra" : ", disc coverage FAILED"),
          "rel error < 1e-5, defect < 1e-9, Gershgorin discs cover every spectrum");
}

void check_mean_agreement(Battery& b) {
    const int points = 10;
    const int draws = 100000;
    std::vector<double> worst_sigma(points, 0.0);
    std::vector<bool> ok(points, true);
    parallel_for(points, b.threads, [&](std::size_t pi) {
        CounterRng setup(0xA0u, pi);
        ReducedTree t = random_reduced_tree(setup, 2 + pi % 3, true, 2);
        PayoffBox box = payoff_box(t);
        Valuations v(t.n_classes());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = setup.uniform(box.lo[i], box.hi[i]);

        SimConfig cfg;
        cfg.beta = setup.uniform(0.0, 5.0);
        cfg.rule = StepRule::harmonic;
        cfg.seed = 0xB10u + pi;

        const std::int64_t k = 7;
        Valuations g = g_map(v, t, cfg.beta);
        std::size_t n = t.n_classes();
        std::vector<double> sum(n, 0.0), sumsq(n, 0.0);
        std::vector<long> count(n, 0);
        CounterRng rng(cfg.seed, 0u);
        for (int d = 0; d < draws; ++d) {
            Valuations w = v;
            SimEvent ev = step(w, k, cfg, t, rng);
            double x = ev.payoff - v[ev.chosen];
            sum[ev.chosen] += x;
            sumsq[ev.chosen] += x * x;
            ++count[ev.chosen];
        }
        for (std::size_t s = 0; s < n; ++s) {
            if (count[s] < 30) continue;
            double mean = sum[s] / count[s];
            double var = std::max(0.0, sumsq[s] / count[s] - mean * mean);
            double se = std::sqrt(var / count[s]);
            double target = g[s] - v[s];
            double dev = std::abs(mean - target);
            if (se == 0.0) {
                if (dev > 1e-12) ok[pi] = false;
                continue;
            }
            worst_sigma[pi] = std::max(worst_sigma[pi], dev / se);
            if (dev > 3.0 * se) ok[pi] = false;
        }
    });
    double worst = *std::max_element(worst_sigma.begin(), worst_sigma.end());
    bool pass = std::all_of(ok.begin(), ok.end(), [](bool o) { return o; });
    b.add("one-step-mean-agreement", pass, "worst deviation " + fmt(worst) + " standard errors",
          "conditional one-step mean within 3 MC standard errors at 10 states");
}

void check_scalar_reduction(Battery& b) {
    const int cases = 50;
    std::vector<bool> ok(cases, true);
    std::vector<double> worst_gap(cases, 0.0);
    parallel_for(cases, b.threads, [&](std::size_t ci) {
        CounterRng rng(0xB1u, ci);
        ReducedTree t = random_two_class_tree(rng);
        ScalarField field = reduce_1d(t, 50.0);
        auto roots = field.roots();

        FindAllOptions opts;
        auto eqs = find_all(t, 50.0, opts);
        if (roots.size() != eqs.size()) { ok[ci] = false; return; }
        std::sort(eqs.begin(), eqs.end(), [](const Equilibrium& a, const Equilibrium& e) {
            return a.v_star[0] - a.v_star[1] < e.v_star[0] - e.v_star[1];
        });
        for (std::size_t r = 0; r < roots.size(); ++r) {
            double x2d = eqs[r].v_star[0] - eqs[r].v_star[1];
            double gap = std::abs(roots[r].x - x2d);
            worst_gap[ci] = std::max(worst_gap[ci], gap);
            if (gap > 1e-6) ok[ci] = false;
            StabilityReport rep = stability_report(eqs[r].v_star, t, 50.0);
            bool stable_2d = rep.verdict == Verdict::stable;
            if (stable_2d != roots[r].stable) ok[ci] = false;
        }
    });
    bool pass = std::all_of(ok.begin(), ok.end(), [](bool o) { return o; });
    double worst = *std::max_element(worst_gap.begin(), worst_gap.end());
    b.add("scalar-reduction-consistency", pass, "worst root gap " + fmt(worst),
          "roots match valuation differences within 1e-6 with matching stability signs");
}

} // namespace

std::vector<CheckResult> run_acceptance(unsigned threads, double z2_override) {
    Battery b;
    b.threads = resolve_threads(threads);
    b.z2_override = z2_override;
    b.tree00 = reduce(three_state_tree(0.0, 0.0));
    b.tree33 = reduce(three_state_tree(3.0, 3.0));
    double z2_asym = std::isnan(z2_override) ? 1.0 : z2_override;
    b.tree10 = reduce(three_state_tree(z2_asym, 0.0));

    check_reduction(b);
    check_multiplicity(b);
    check_global_convergence(b);
    check_asymmetric_unique(b);
    check_mixed_closed_forms(b);
    check_sharp_limit_spectrum(b);
    check_cooperative_regime(b);
    check_pure_enumeration(b);
    check_jacobian_agreement(b);
    check_mean_agreement(b);
    check_scalar_reduction(b);
    return b.results;
}

} // namespace cpal::repro
