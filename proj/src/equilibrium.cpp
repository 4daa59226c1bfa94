#include "cpal/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cpal/errors.hpp"
#include "cpal/linalg.hpp"
#include "cpal/rng.hpp"
#include "cpal/stability.hpp"
#include "cpal/util.hpp"

namespace cpal {

namespace {

double sup_norm(const Valuations& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double sup_dist(const Valuations& a, const Valuations& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double tie_epsilon(const PayoffBox& box) { return 1e-6 * box.range(); }

// Partition classes into tie groups by chaining gaps below eps on the sorted
// valuations; groups come out in descending valuation order.
std::vector<std::vector<std::size_t>> tie_groups(const Valuations& v, double eps) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (v[a] != v[b]) return v[a] > v[b];
        return a < b;
    });
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (r == 0 || v[idx[r - 1]] - v[idx[r]] > eps)
            groups.emplace_back();
        groups.back().push_back(idx[r]);
    }
    for (auto& g : groups) std::sort(g.begin(), g.end());
    return groups;
}

Policy limit_policy_from_groups(const Valuations& v, const ReducedTree& t,
                                const std::vector<std::vector<std::size_t>>& groups) {
    std::vector<std::size_t> group_of(v.size());
    for (std::size_t gi = 0; gi < groups.size(); ++gi)
        for (std::size_t c : groups[gi]) group_of[c] = gi;
    Policy pol;
    pol.probs.reserve(t.states.size());
    for (const auto& st : t.states) {
        std::size_t best_group = group_of[st.members[0]];
        for (std::size_t m : st.members)
            best_group = std::min(best_group, group_of[m]);
        std::size_t count = 0;
        for (std::size_t m : st.members)
            if (group_of[m] == best_group) ++count;
        std::vector<double> probs(st.members.size(), 0.0);
        for (std::size_t pos = 0; pos < st.members.size(); ++pos)
            if (group_of[st.members[pos]] == best_group)
                probs[pos] = 1.0 / static_cast<double>(count);
        pol.probs.push_back(std::move(probs));
    }
    return pol;
}

Equilibrium classify(Valuations v, const ReducedTree& t, double beta, double residual,
                     std::int64_t iterations) {
    Equilibrium eq;
    eq.v_star = std::move(v);
    eq.beta = beta;
    eq.residual = residual;
    eq.iterations = iterations;
    eq.indifference_groups = tie_groups(eq.v_star, tie_epsilon(payoff_box(t)));
    eq.strict_pure = std::all_of(eq.indifference_groups.begin(), eq.indifference_groups.end(),
                                 [](const auto& g) { return g.size() == 1; });
    eq.limit_policy = limit_policy_from_groups(eq.v_star, t, eq.indifference_groups);
    return eq;
}

} // namespace

Equilibrium solve_fixed_point(const Valuations& v0, const ReducedTree& t, double beta,
                              const SolveOptions& opts) {
    if (v0.size() != t.n_classes())
        throw ValidationError("start vector length does not match class count");
    for (double x : v0)
        if (!std::isfinite(x)) throw ValidationError("non-finite start vector");
    if (!(beta >= 0.0) || std::isinf(beta))
        throw ValidationError("beta must be finite and nonnegative");
    if (!(opts.tol > 0.0)) throw ValidationError("tolerance must be positive");

    const std::size_t n = t.n_classes();
    PayoffBox box = payoff_box(t);
    double slack = 0.1 * std::max(box.range(), 1.0);

    Valuations v = v0;
    for (std::size_t i = 0; i < n; ++i)
        v[i] = std::clamp(v[i], box.lo[i] - slack, box.hi[i] + slack);

    Valuations best = v;
    double best_res = std::numeric_limits<double>::infinity();

    for (std::int64_t iter = 0; iter < opts.max_iter; ++iter) {
        Valuations F = mean_field_rhs(v, t, beta);
        double res = sup_norm(F);
        if (res < best_res) { best_res = res; best = v; }
        if (res < opts.tol) return classify(std::move(v), t, beta, res, iter);

        bool stepped = false;
        Matrix J = jacobian(v, t, beta);
        Valuations delta(n);
        for (std::size_t i = 0; i < n; ++i) delta[i] = -F[i];
        if (lu_solve(J, delta)) {
            // Scale back so the iterate stays inside the inflated box.
            double lam = 1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (delta[i] > 0.0)
                    lam = std::min(lam, (box.hi[i] + slack - v[i]) / delta[i]);
                else if (delta[i] < 0.0)
                    lam = std::min(lam, (box.lo[i] - slack - v[i]) / delta[i]);
            }
            if (lam > 1e-6 && std::isfinite(lam)) {
                // Backtrack on the residual norm; accept the first decrease.
                double scale = lam;
                for (int bt = 0; bt < 30; ++bt) {
                    Valuations trial(n);
                    for (std::size_t i = 0; i < n; ++i) trial[i] = v[i] + scale * delta[i];
                    double trial_res = sup_norm(mean_field_rhs(trial, t, beta));
                    if (trial_res < res) {
                        v = std::move(trial);
                        stepped = true;
                        break;
                    }
                    scale *= 0.5;
                }
            }
        }
        if (!stepped) {
            // Damped fixed-point step; g maps into the box, so this contracts
            // toward it and never leaves the inflated region.
            for (std::size_t i = 0; i < n; ++i)
                v[i] = std::clamp(v[i] + 0.5 * F[i], box.lo[i] - slack, box.hi[i] + slack);
        }
    }
    throw ConvergenceError("fixed-point solve did not reach tolerance", best, best_res);
}

std::vector<Equilibrium> find_all(const ReducedTree& t, double beta, const FindAllOptions& opts) {
    if (opts.random_starts < 0) throw ValidationError("random start count must be nonnegative");
    const std::size_t n = t.n_classes();
    PayoffBox box = payoff_box(t);

    std::vector<Valuations> starts;
    if (n <= 16) {
        for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
            Valuations v(n);
            for (std::size_t i = 0; i < n; ++i)
                v[i] = (mask >> i) & 1 ? box.hi[i] : box.lo[i];
            starts.push_back(std::move(v));
        }
    }
    {
        Valuations center(n);
        for (std::size_t i = 0; i < n; ++i) center[i] = 0.5 * (box.lo[i] + box.hi[i]);
        starts.push_back(std::move(center));
    }
    for (int k = 0; k < 9; ++k) {
        double c = box.global_lo() + (box.global_hi() - box.global_lo()) * k / 8.0;
        starts.push_back(Valuations(n, c));
    }
    CounterRng rng(opts.seed, 0x5eedu);
    for (int k = 0; k < opts.random_starts; ++k) {
        Valuations v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform(box.lo[i], box.hi[i]);
        starts.push_back(std::move(v));
    }

    std::vector<std::optional<Equilibrium>> results(starts.size());
    std::vector<std::string> failures(starts.size());
    parallel_for(starts.size(), resolve_threads(opts.threads), [&](std::size_t i) {
        try {
            results[i] = solve_fixed_point(starts[i], t, beta, opts.solve);
        } catch (const ConvergenceError& e) {
            failures[i] = e.what();
        }
    });

    std::vector<Equilibrium> found;
    for (auto& r : results)
        if (r) found.push_back(std::move(*r));
    if (found.empty()) {
        std::string why = "no start converged";
        for (const auto& f : failures)
            if (!f.empty()) { why += ": "; why += f; break; }
        throw ConvergenceError(why, Valuations(n, 0.0), std::numeric_limits<double>::infinity());
    }

    std::vector<Equilibrium> unique;
    for (auto& eq : found) {
        bool dup = false;
        for (const auto& u : unique)
            if (sup_dist(eq.v_star, u.v_star) < 1e-6) { dup = true; break; }
        if (!dup) unique.push_back(std::move(eq));
    }
    std::sort(unique.begin(), unique.end(), [](const Equilibrium& a, const Equilibrium& b) {
        return a.v_star < b.v_star;
    });
    return unique;
}

const char* path_end_name(PathEnd e) {
    switch (e) {
        case PathEnd::completed: return "completed";
        case PathEnd::solver_failure: return "solver-failure";
        case PathEnd::jump: return "jump";
    }
    return "completed";
}

Equilibrium with_limit_label(Equilibrium eq, const ReducedTree& t) {
    if (!(eq.beta > 0.0)) return eq;
    double eps = std::max(tie_epsilon(payoff_box(t)), std::log(1e6) / eq.beta);
    eq.indifference_groups = tie_groups(eq.v_star, eps);
    eq.strict_pure = std::all_of(eq.indifference_groups.begin(), eq.indifference_groups.end(),
                                 [](const auto& g) { return g.size() == 1; });
    eq.limit_policy = limit_policy_from_groups(eq.v_star, t, eq.indifference_groups);
    return eq;
}

std::vector<double> geometric_betas(double from, double to, double ratio) {
    if (!(from > 0.0) || !(to >= from) || !(ratio > 1.0))
        throw ValidationError("schedule needs 0 < from <= to and ratio > 1");
    std::vector<double> betas;
    for (double b = from; b < to * (1.0 - 1e-12); b *= ratio) betas.push_back(b);
    betas.push_back(to);
    return betas;
}

std::vector<ContinuationPath> beta_sweep(const ReducedTree& t, const std::vector<double>& betas,
                                         const std::vector<Equilibrium>& seeds,
                                         const SolveOptions& opts, unsigned threads) {
    if (betas.empty()) throw ValidationError("empty beta schedule");
    for (std::size_t i = 0; i < betas.size(); ++i) {
        if (!(betas[i] > 0.0) || std::isinf(betas[i]))
            throw ValidationError("schedule betas must be positive and finite");
        if (i > 0 && betas[i] <= betas[i - 1])
            throw ValidationError("schedule betas must be strictly increasing");
    }

    std::vector<ContinuationPath> paths(seeds.size());
    parallel_for(seeds.size(), resolve_threads(threads), [&](std::size_t pi) {
        ContinuationPath& path = paths[pi];
        Valuations warm = seeds[pi].v_star;
        std::vector<double> step_sizes;
        for (std::size_t bi = 0; bi < betas.size(); ++bi) {
            Equilibrium next;
            try {
                next = solve_fixed_point(warm, t, betas[bi], opts);
            } catch (const ConvergenceError&) {
                path.termination = PathEnd::solver_failure;
                return;
            }
            if (!path.points.empty()) {
                double d = sup_dist(next.v_star, path.points.back().v_star);
                if (step_sizes.size() >= 2) {
                    std::vector<double> sorted = step_sizes;
                    std::sort(sorted.begin(), sorted.end());
                    double median = sorted.size() % 2 == 1
                                        ? sorted[sorted.size() / 2]
                                        : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
                    if (d > std::max(10.0 * median, 1e-6)) {
                        path.termination = PathEnd::jump;
                        return;
                    }
                }
                step_sizes.push_back(d);
            }
            warm = next.v_star;
            path.points.push_back(std::move(next));
        }
        path.termination = PathEnd::completed;
        path.points.back() = with_limit_label(std::move(path.points.back()), t);
    });
    return paths;
}

namespace {

struct TwoClassData {
    double p_ii, p_jj, p_ij;
    double u_ii, u_jj, u_ij, u_ji;
};

// Extract the three-state structure of a two-class tree: both one-class
// states and the shared state must be present.
TwoClassData two_class_data(const ReducedTree& t) {
    if (t.n_classes() != 2)
        throw ValidationError("this analysis needs a two-class tree");
    TwoClassData d{};
    bool saw_i = false, saw_j = false, saw_ij = false;
    for (std::size_t si = 0; si < t.states.size(); ++si) {
        const auto& st = t.states[si];
        if (st.members == std::vector<std::size_t>{0}) {
            d.p_ii = st.prob; d.u_ii = t.payoff(si, 0); saw_i = true;
        } else if (st.members == std::vector<std::size_t>{1}) {
            d.p_jj = st.prob; d.u_jj = t.payoff(si, 0); saw_j = true;
        } else {
            d.p_ij = st.prob; d.u_ij = t.payoff(si, 0); d.u_ji = t.payoff(si, 1); saw_ij = true;
        }
    }
    if (!saw_i || !saw_j || !saw_ij)
        throw ValidationError("this analysis needs both one-class states and the shared state");
    return d;
}

} // namespace

MixedLimit mixed_limit_solve(const ReducedTree& t) {
    TwoClassData d = two_class_data(t);
    auto v_i = [&](double q) { return (d.p_ii * d.u_ii + d.p_ij * q * d.u_ij) / (d.p_ii + d.p_ij * q); };
    auto v_j = [&](double q) {
        return (d.p_jj * d.u_jj + d.p_ij * (1.0 - q) * d.u_ji) / (d.p_jj + d.p_ij * (1.0 - q));
    };
    auto h = [&](double q) { return v_i(q) - v_j(q); };

    double a = 0.0, b = 1.0;
    double ha = h(a), hb = h(b);
    if (ha == 0.0) a = b = 0.0;
    else if (hb == 0.0) a = b = 1.0;
    else if (ha * hb > 0.0)
        throw NumericError("indifference equation has no sign change on [0,1]; "
                           "no mixed limit point with shared-state mixing");
    while (b - a > 1e-14) {
        double mid = 0.5 * (a + b);
        double hm = h(mid);
        if (hm == 0.0) { a = b = mid; break; }
        if ((hm > 0.0) == (ha > 0.0)) { a = mid; ha = hm; }
        else b = mid;
    }
    MixedLimit out;
    out.q = 0.5 * (a + b);
    out.value = 0.5 * (v_i(out.q) + v_j(out.q));
    return out;
}

namespace {

// Consistent valuations for a strict preference order: each class averages
// payoffs (p-weighted) over the states where it outranks every other member.
// Returns false when some class is never chosen.
bool order_valuations(const ReducedTree& t, const std::vector<std::size_t>& order,
                      Valuations& v, std::vector<std::size_t>& choice) {
    const std::size_t n = t.n_classes();
    std::vector<std::size_t> rank(n);
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;

    choice.assign(t.states.size(), 0);
    std::vector<double> num(n, 0.0), den(n, 0.0);
    for (std::size_t si = 0; si < t.states.size(); ++si) {
        const auto& st = t.states[si];
        std::size_t best_pos = 0;
        for (std::size_t pos = 1; pos < st.members.size(); ++pos)
            if (rank[st.members[pos]] < rank[st.members[best_pos]]) best_pos = pos;
        std::size_t cls = st.members[best_pos];
        choice[si] = cls;
        num[cls] += st.prob * t.payoff(si, best_pos);
        den[cls] += st.prob;
    }
    v.assign(n, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        if (den[s] == 0.0) return false;
        v[s] = num[s] / den[s];
    }
    return true;
}

// Margin check: the chosen class must beat every other member at every state.
// ok: all margins > 0; strict: all margins >= eps.
void order_margins(const ReducedTree& t, const Valuations& v,
                   const std::vector<std::size_t>& choice, double eps, bool& ok, bool& strict) {
    ok = true;
    strict = true;
    for (std::size_t si = 0; si < t.states.size() && ok; ++si) {
        for (std::size_t m : t.states[si].members) {
            if (m == choice[si]) continue;
            double margin = v[choice[si]] - v[m];
            if (!(margin > 0.0)) { ok = false; break; }
            if (margin < eps) strict = false;
        }
    }
}

} // namespace

std::vector<PureVE> enumerate_pure_VE(const ReducedTree& t) {
    const std::size_t n = t.n_classes();
    if (n > 10)
        throw ValidationError("pure limit enumeration is factorial in the class count; "
                              "10 classes is the supported maximum");
    double eps = tie_epsilon(payoff_box(t));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<PureVE> out;
    do {
        Valuations v;
        std::vector<std::size_t> choice;
        if (!order_valuations(t, order, v, choice)) continue;
        bool ok = false, strict = false;
        order_margins(t, v, choice, eps, ok, strict);
        if (!ok) continue;
        bool dup = false;
        for (const auto& existing : out)
            if (sup_dist(existing.valuations, v) < 1e-12) { dup = true; break; }
        if (dup) continue;
        PureVE ve;
        ve.order = order;
        ve.valuations = std::move(v);
        ve.strict = strict;
        ve.choice = std::move(choice);
        out.push_back(std::move(ve));
    } while (std::next_permutation(order.begin(), order.end()));

    std::sort(out.begin(), out.end(),
              [](const PureVE& a, const PureVE& b) { return a.valuations < b.valuations; });
    return out;
}

PureVE construct_strict_pure_VE(const ReducedTree& t) {
    const std::size_t n = t.n_classes();
    SupportProfile sp = support_profile(t);
    if (!sp.has_all_unary)
        throw ValidationError("greedy construction needs every one-class state present");

    std::vector<double> unary_p(n, 0.0);
    for (const auto& st : t.states)
        if (st.members.size() == 1) unary_p[st.members[0]] = st.prob;

    std::vector<bool> removed(n, false);
    std::vector<std::size_t> order;
    for (std::size_t round = 0; round < n; ++round) {
        // Mass of remaining states containing s (states inside the remaining
        // class set only).
        std::vector<double> mass(n, 0.0);
        for (const auto& st : t.states) {
            bool inside = std::none_of(st.members.begin(), st.members.end(),
                                       [&](std::size_t m) { return removed[m]; });
            if (!inside) continue;
            for (std::size_t m : st.members) mass[m] += st.prob;
        }
        std::size_t pick = n;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < n; ++s) {
            if (removed[s]) continue;
            double ratio = unary_p[s] / mass[s];
            if (ratio < best) { best = ratio; pick = s; }
        }
        order.push_back(pick);
        removed[pick] = true;
    }

    PureVE ve;
    ve.order = order;
    if (!order_valuations(t, order, ve.valuations, ve.choice))
        throw ConstructionInvalid("constructed order leaves a class unchosen");
    bool ok = false;
    order_margins(t, ve.valuations, ve.choice, tie_epsilon(payoff_box(t)), ok, ve.strict);
    if (!ok)
        throw ConstructionInvalid("constructed order fails self-confirmation; "
                                  "one-class payoffs are not low enough for the greedy order");
    return ve;
}

ScalarField::ScalarField(const ReducedTree& t, double beta) {
    if (!(beta >= 0.0) || std::isinf(beta))
        throw ValidationError("beta must be finite and nonnegative");
    TwoClassData d = two_class_data(t);
    beta_ = beta;
    p_ii_ = d.p_ii; p_jj_ = d.p_jj; p_ij_ = d.p_ij;
    u_ii_ = d.u_ii; u_jj_ = d.u_jj; u_ij_ = d.u_ij; u_ji_ = d.u_ji;
}

double ScalarField::sigma(double x) const { return 1.0 / (1.0 + std::exp(-beta_ * x)); }

double ScalarField::g_first(double x) const {
    double s = sigma(x);
    return (p_ii_ * u_ii_ + p_ij_ * s * u_ij_) / (p_ii_ + p_ij_ * s);
}

double ScalarField::g_second(double x) const {
    double s = sigma(x);
    return (p_jj_ * u_jj_ + p_ij_ * (1.0 - s) * u_ji_) / (p_jj_ + p_ij_ * (1.0 - s));
}

double ScalarField::f(double x) const { return g_first(x) - g_second(x) - x; }

double ScalarField::fprime(double x) const {
    double s = sigma(x);
    double sprime = beta_ * s * (1.0 - s);
    double den_i = p_ii_ + p_ij_ * s;
    double den_j = p_jj_ + p_ij_ * (1.0 - s);
    return p_ij_ * sprime *
               (p_ii_ * (u_ij_ - u_ii_) / (den_i * den_i) +
                p_jj_ * (u_ji_ - u_jj_) / (den_j * den_j)) -
           1.0;
}

std::vector<ScalarField::Root> ScalarField::roots() const {
    double hi_drift = std::max(u_ii_, u_ij_) - std::min(u_jj_, u_ji_);
    double lo_drift = std::min(u_ii_, u_ij_) - std::max(u_jj_, u_ji_);
    double lo = lo_drift - 1.0, hi = hi_drift + 1.0;

    const int points = 1024;
    std::vector<double> raw;
    double prev_x = lo, prev_f = f(lo);
    if (prev_f == 0.0) raw.push_back(lo);
    for (int k = 1; k < points; ++k) {
        double x = lo + (hi - lo) * k / (points - 1);
        double fx = f(x);
        if (fx == 0.0) {
            raw.push_back(x);
        } else if (prev_f != 0.0 && (fx > 0.0) != (prev_f > 0.0)) {
            double a = prev_x, b = x, fa = prev_f;
            while (b - a > 1e-13) {
                double mid = 0.5 * (a + b);
                double fm = f(mid);
                if (fm == 0.0) { a = b = mid; break; }
                if ((fm > 0.0) == (fa > 0.0)) { a = mid; fa = fm; }
                else b = mid;
            }
            raw.push_back(0.5 * (a + b));
        }
        prev_x = x;
        prev_f = fx;
    }

    std::sort(raw.begin(), raw.end());
    std::vector<Root> out;
    for (double x : raw) {
        if (!out.empty() && std::abs(x - out.back().x) < 1e-12) continue;
        Root r;
        r.x = x;
        r.slope = fprime(x);
        r.stable = r.slope < 0.0;
        out.push_back(r);
    }
    return out;
}

ScalarField reduce_1d(const ReducedTree& t, double beta) { return ScalarField(t, beta); }

} // namespace cpal
