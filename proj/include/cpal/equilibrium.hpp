#pragma once

#include <cstdint>
#include <vector>

#include "cpal/dynamics.hpp"
#include "cpal/tree.hpp"

namespace cpal {

// Classes whose solved valuations sit within the tie tolerance of each other
// are grouped; a solution is strict-pure when every group is a singleton.
// The tie tolerance is 1e-6 times the global payoff range.
struct Equilibrium {
    Valuations v_star;
    double beta = 0.0;
    double residual = 0.0; // sup-norm of g(v*) - v*
    bool strict_pure = false;
    std::vector<std::vector<std::size_t>> indifference_groups; // descending valuation
    Policy limit_policy; // per state, uniform over members of the top tied group
    std::int64_t iterations = 0;
};

struct SolveOptions {
    double tol = 1e-12;
    std::int64_t max_iter = 100000;
};

// Newton iteration on g(v) - v with the analytic Jacobian, steps clipped to
// the payoff box inflated by 10% of its range; damped fixed-point fallback
// when the Newton step is unusable. Throws ConvergenceError (with the best
// iterate) when the budget runs out.
Equilibrium solve_fixed_point(const Valuations& v0, const ReducedTree& t, double beta,
                              const SolveOptions& opts = {});

struct FindAllOptions {
    int random_starts = 64;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    SolveOptions solve;
};

// Multistart search: box vertices, box center, a grid of fully-tied vectors
// c*ones (these reach interior mixed solutions whose basins shrink as beta
// grows), and seeded random interior points. Solutions deduplicated at 1e-6
// sup-distance and sorted lexicographically. Solver failures are swallowed
// unless every start fails.
std::vector<Equilibrium> find_all(const ReducedTree& t, double beta,
                                  const FindAllOptions& opts = {});

enum class PathEnd { completed, solver_failure, jump };

const char* path_end_name(PathEnd e);

struct ContinuationPath {
    std::vector<Equilibrium> points;
    PathEnd termination = PathEnd::completed;
};

// Warm-started continuation along an increasing beta schedule, one path per
// seed. A path stops early on solver failure or when a step exceeds
// max(10 x trailing median step, 1e-6), which flags a fold or disappearance.
std::vector<ContinuationPath> beta_sweep(const ReducedTree& t, const std::vector<double>& betas,
                                         const std::vector<Equilibrium>& seeds,
                                         const SolveOptions& opts = {}, unsigned threads = 1);

// Geometric schedule helper: from, from*ratio, ... capped to end exactly at to.
std::vector<double> geometric_betas(double from, double to, double ratio);

// Relabels a solved point with the tie width widened to ln(1e6)/beta. Along
// a branch whose limit mixes, the gap between tied classes shrinks like
// logit(q)/beta and never reaches the flat tie tolerance at finite beta; a
// gap below the widened width means the implied mixing weight is still
// inside (1e-6, 1-1e-6), so the limit ties. beta_sweep applies this to the
// last entry of completed paths, making the final classification readable as
// the limit label.
Equilibrium with_limit_label(Equilibrium eq, const ReducedTree& t);

struct MixedLimit {
    double q = 0.0;     // limit probability of the first class at the two-class state
    double value = 0.0; // common valuation of both classes
};

// Sharp-choice limit with both classes mixing at their shared state: solves
// the scalar indifference equation by bisection on q in [0,1] to 1e-14.
// Requires a two-class tree with all three states present; throws
// NumericError when the equation has no sign change (no such limit point).
MixedLimit mixed_limit_solve(const ReducedTree& t);

struct PureVE {
    std::vector<std::size_t> order;    // class indices, best first
    Valuations valuations;
    bool strict = false;               // every margin at least the tie tolerance
    std::vector<std::size_t> choice;   // per state, the class index chosen
};

// Checks every strict preference order (n! of them, guarded to n <= 10):
// computes the order's consistent valuations in closed form and accepts the
// order when those valuations reproduce its argmax at every state with
// strictly positive margin. Distinct valuation vectors reported once.
std::vector<PureVE> enumerate_pure_VE(const ReducedTree& t);

// Greedy order construction: repeatedly give the next-highest rank to the
// class minimizing p({s}) / sum of p over remaining states containing s
// (ties to the earlier class), then verify self-confirmation. Requires all
// one-class states present; throws ConstructionInvalid when the verification
// fails.
PureVE construct_strict_pure_VE(const ReducedTree& t);

// Two-class trees collapse to scalar dynamics in x = v_first - v_second.
// Exposes the collapsed drift f, its derivative, and the logistic choice
// curve; roots of f are exactly the valuation differences at equilibria, and
// sign(f') matches the transverse eigenvalue of the full system.
class ScalarField {
public:
    ScalarField(const ReducedTree& t, double beta);

    double sigma(double x) const;  // choice probability of the first class
    double g_first(double x) const;
    double g_second(double x) const;
    double f(double x) const;      // g_first - g_second - x
    double fprime(double x) const;

    struct Root {
        double x = 0.0;
        double slope = 0.0; // f'(x)
        bool stable = false;
    };
    // Bracket scan (1024 points) over the drift's invariant interval plus
    // margin 1, bisection to 1e-13 per sign change.
    std::vector<Root> roots() const;

    double beta() const { return beta_; }

private:
    double beta_;
    double p_ii_, p_jj_, p_ij_;
    double u_ii_, u_jj_, u_ij_, u_ji_;
};

ScalarField reduce_1d(const ReducedTree& t, double beta);

} // namespace cpal
