#pragma once

#include <cstdint>
#include <vector>

#include "cpal/rng.hpp"
#include "cpal/tree.hpp"

namespace cpal {

using Valuations = std::vector<double>;

// Per-state choice distributions over that state's member classes
// (probs[si][pos] matches states[si].members[pos]).
struct Policy {
    std::vector<std::vector<double>> probs;
};

// Logit choice with inverse temperature beta; exponents are shifted by the
// state max so any finite beta*v is safe. beta = +inf selects the uniform
// distribution over the exact argmax set.
Policy policy(const Valuations& v, const ReducedTree& t, double beta);

enum class StepRule { harmonic, constant, power };

struct SimConfig {
    double beta = 1.0;
    std::int64_t horizon = 1000;
    StepRule rule = StepRule::harmonic;
    double alpha = 0.1;    // constant rule
    double gamma = 0.7;    // power rule: alpha_k = (k+1)^(-gamma)
    std::uint64_t seed = 0;
    std::int64_t record_every = 1;
    bool raw_mode = false; // sample payoffs from raw alternatives instead of reduced means

    void validate() const;
};

double alpha_at(const SimConfig& cfg, std::int64_t k);

struct SimEvent {
    std::int64_t k = 0;
    std::size_t state = 0;  // reduced state index
    std::size_t chosen = 0; // class index
    double payoff = 0.0;
    double alpha = 0.0;
};

struct Trajectory {
    std::vector<double> times;       // step index or continuous time
    std::vector<Valuations> values;  // one row per recorded time
    std::vector<SimEvent> events;    // discrete runs only, one per recorded step
};

// Payoff sampler for raw mode: at a reduced state, pick an underlying raw
// state by relative mass, then a uniform alternative within the chosen class.
class RawSampler {
public:
    RawSampler(const RawTree& raw, const ReducedTree& reduced);
    double sample(std::size_t state, std::size_t member_pos, CounterRng& rng) const;

private:
    struct Component {
        double weight;
        std::vector<std::vector<double>> payoffs; // per member position
    };
    std::vector<std::vector<Component>> per_state_;
};

// One learning step: draw a state, choose a class by the logit policy, pull
// its payoff toward the valuation with weight alpha_k. Touches only the
// chosen class. rng must be the trajectory's own stream.
SimEvent step(Valuations& v, std::int64_t k, const SimConfig& cfg, const ReducedTree& t,
              CounterRng& rng, const RawSampler* raw = nullptr);

// Runs horizon steps from v0 on stream (cfg.seed, stream). Records v at step 0,
// every record_every steps, and at the horizon; events are kept only for
// recorded steps so memory stays bounded on long runs.
Trajectory simulate(const Valuations& v0, const SimConfig& cfg, const ReducedTree& t,
                    const RawSampler* raw = nullptr, std::uint64_t stream = 0);

// g_s(v): expected payoff of class s conditional on s being the class chosen,
// i.e. the p*sigma-weighted average of its state payoffs. Weights are
// renormalized per class so the value is exact even when every sigma
// underflows. beta must be finite.
Valuations g_map(const Valuations& v, const ReducedTree& t, double beta);

// Right-hand side of the smooth averaged dynamics: g(v) - v.
Valuations mean_field_rhs(const Valuations& v, const ReducedTree& t, double beta);

// Classic fixed-step RK4 on the averaged dynamics; the last step is shortened
// to land exactly on t_end. Records every step. Throws NumericError on
// non-finite values.
Trajectory integrate(const Valuations& v0, const ReducedTree& t, double beta,
                     double t_end, double h = 0.01);

// CSV emission, floats with 17 significant digits so text round-trips the
// binary values. Trajectory: t,v_<class>...; events: k,omega,chosen,payoff,
// alpha with omega spelled as the state's classes joined by '+'.
void write_trajectory_csv(const Trajectory& traj, const ReducedTree& t, const std::string& path);
void write_events_csv(const Trajectory& traj, const ReducedTree& t, const std::string& path);

} // namespace cpal
