#pragma once

#include <limits>
#include <string>
#include <vector>

#include "cpal/rng.hpp"
#include "cpal/tree.hpp"

namespace cpal::repro {

// Two-good trading problem: three equally likely encounters, lemons and limes
// aggregated into one citrus class. Reduces to a two-state benchmark with
// known exact values.
RawTree trading_tree();

// Three-state benchmark family: one state offering both classes (payoffs 2
// and 1) and one single-class state per class with payoffs z2 (first class)
// and z3 (second class), each state with probability exactly 1/3.
RawTree three_state_tree(double z2, double z3);

// Random reduced tree: all one-class states, optionally all two-class states,
// plus extra random supports; masses drawn from [0.5, 1.5] and normalized,
// payoffs uniform in [0, 1].
ReducedTree random_reduced_tree(CounterRng& rng, std::size_t n_classes, bool all_binary,
                                int extra_states);

// Random two-class tree with all three states; masses from [0.2, 1] normalized.
ReducedTree random_two_class_tree(CounterRng& rng);

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string measured;
    std::string expected;
};

// Runs the full acceptance battery (deterministic seeds). z2_override, when
// finite, replaces the asymmetric benchmark's single-class payoff - a
// self-test knob that must make at least one check fail.
std::vector<CheckResult> run_acceptance(unsigned threads,
                                        double z2_override = std::numeric_limits<double>::quiet_NaN());

} // namespace cpal::repro
