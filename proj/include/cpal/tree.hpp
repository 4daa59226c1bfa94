#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cpal/rational.hpp"

namespace cpal {

// A decision problem before aggregation: a set of chance states, each holding
// the alternatives available there, with every alternative assigned to one
// similarity class. Class order as declared is the canonical index order used
// everywhere downstream.
struct Alternative {
    std::string id;
    std::string cls;
    double payoff = 0.0;
};

struct RawState {
    std::string id;
    double prob = 0.0;
    std::optional<Rational> prob_exact; // set when the file gave "a/b"
    std::vector<Alternative> alternatives;
};

struct RawTree {
    std::vector<std::string> classes;
    std::vector<RawState> states;

    std::size_t class_index(const std::string& name) const;
    void validate() const; // throws ValidationError
};

// Aggregated form: states are identified by the set of classes reachable in
// them; prob is the total mass of raw states sharing that set; payoffs[i] is
// the consistency payoff of members[i] (mass-weighted average over raw states
// of the within-class uniform mean).
struct ReducedState {
    std::vector<std::size_t> members; // class indices, strictly increasing
    double prob = 0.0;
    std::optional<Rational> prob_exact;
    std::vector<double> payoffs; // parallel to members

    bool contains(std::size_t cls) const;
    // Position of cls in members, or npos.
    std::size_t member_pos(std::size_t cls) const;
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

struct ReducedTree {
    std::vector<std::string> classes;
    std::vector<ReducedState> states;
    // Accumulated offset applied to payoffs of one-class states. Kept out of
    // the stored payoffs so shifting by z and then -z restores them bit-exactly.
    double unary_shift = 0.0;

    std::size_t n_classes() const { return classes.size(); }
    // Effective payoff of states[si].members[pos], unary shift included.
    double payoff(std::size_t si, std::size_t pos) const;
    std::size_t class_index(const std::string& name) const;
    // For each class, the (state, member position) pairs it appears in.
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> incidence() const;
    void validate() const;
    // Non-fatal diagnostics, e.g. payoff entries of two classes that are
    // exactly equal and so can produce tied valuations.
    std::vector<std::string> warnings() const;
};

struct SupportProfile {
    bool has_all_unary = false;
    bool has_all_binary = false;
    bool monotone = false;      // p(w) <= p(w') for every comparable pair present
    bool uniform_unary = false; // all present one-class states equiprobable
};

struct PayoffBox {
    std::vector<double> lo, hi; // per class, over the states it appears in

    double global_lo() const;
    double global_hi() const;
    double range() const { return global_hi() - global_lo(); }
    bool contains(const std::vector<double>& v, double slack) const;
};

ReducedTree reduce(const RawTree& raw);
ReducedTree shift_unary_payoffs(const ReducedTree& t, double z);
SupportProfile support_profile(const ReducedTree& t);
PayoffBox payoff_box(const ReducedTree& t);

// File I/O. A tree file is either raw (states carry alternatives) or reduced
// (marked "reduced": true). Probabilities may be numbers or "a/b" strings.
struct LoadedTree {
    std::optional<RawTree> raw;   // present when the file was raw
    ReducedTree reduced;          // always present (raw input is reduced on load)
};

RawTree raw_tree_from_json_text(const std::string& text);
LoadedTree load_tree_file(const std::string& path);
std::string reduced_tree_to_json_text(const ReducedTree& t);
void save_reduced_tree(const ReducedTree& t, const std::string& path);

} // namespace cpal
