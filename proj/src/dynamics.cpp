#include "cpal/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

#include "cpal/errors.hpp"

namespace cpal {

namespace {

void check_valuations(const Valuations& v, const ReducedTree& t) {
    if (v.size() != t.n_classes())
        throw ValidationError("valuation vector length does not match class count");
    for (double x : v)
        if (!std::isfinite(x)) throw ValidationError("non-finite valuation");
}

void check_beta(double beta, bool allow_inf) {
    if (std::isnan(beta) || beta < 0.0)
        throw ValidationError("beta must be nonnegative");
    if (!allow_inf && std::isinf(beta))
        throw ValidationError("beta must be finite here");
}

std::vector<double> state_softmax(const Valuations& v, const ReducedState& st, double beta) {
    std::vector<double> probs(st.members.size());
    if (std::isinf(beta)) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t m : st.members) best = std::max(best, v[m]);
        std::size_t ties = 0;
        for (std::size_t m : st.members)
            if (v[m] == best) ++ties;
        for (std::size_t pos = 0; pos < st.members.size(); ++pos)
            probs[pos] = (v[st.members[pos]] == best) ? 1.0 / ties : 0.0;
        return probs;
    }
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t m : st.members) best = std::max(best, beta * v[m]);
    double total = 0.0;
    for (std::size_t pos = 0; pos < st.members.size(); ++pos) {
        probs[pos] = std::exp(beta * v[st.members[pos]] - best);
        total += probs[pos];
    }
    for (double& p : probs) p /= total;
    return probs;
}

} // namespace

Policy policy(const Valuations& v, const ReducedTree& t, double beta) {
    check_valuations(v, t);
    check_beta(beta, true);
    Policy pol;
    pol.probs.reserve(t.states.size());
    for (const auto& st : t.states) pol.probs.push_back(state_softmax(v, st, beta));
    return pol;
}

void SimConfig::validate() const {
    if (std::isnan(beta) || beta < 0.0 || std::isinf(beta))
        throw ValidationError("simulation beta must be finite and nonnegative");
    if (horizon < 0) throw ValidationError("horizon must be nonnegative");
    if (record_every < 1) throw ValidationError("record stride must be at least 1");
    if (rule == StepRule::constant && !(alpha > 0.0 && alpha < 1.0))
        throw ValidationError("constant step size must lie in (0,1)");
    if (rule == StepRule::power && !(gamma > 0.5 && gamma <= 1.0))
        throw ValidationError("power step exponent must lie in (0.5, 1]");
}

double alpha_at(const SimConfig& cfg, std::int64_t k) {
    switch (cfg.rule) {
        case StepRule::harmonic: return 1.0 / static_cast<double>(k + 1);
        case StepRule::constant: return cfg.alpha;
        case StepRule::power: return std::pow(static_cast<double>(k + 1), -cfg.gamma);
    }
    return 0.0;
}

RawSampler::RawSampler(const RawTree& raw, const ReducedTree& reduced) {
    per_state_.resize(reduced.states.size());
    for (const auto& rstate : raw.states) {
        std::vector<std::size_t> members;
        {
            std::vector<std::size_t> cls;
            for (const auto& alt : rstate.alternatives) cls.push_back(raw.class_index(alt.cls));
            std::sort(cls.begin(), cls.end());
            cls.erase(std::unique(cls.begin(), cls.end()), cls.end());
            members = std::move(cls);
        }
        std::size_t target = ReducedState::npos;
        for (std::size_t si = 0; si < reduced.states.size(); ++si)
            if (reduced.states[si].members == members) { target = si; break; }
        if (target == ReducedState::npos)
            throw ValidationError("raw state '" + rstate.id + "' has no matching reduced state");
        Component comp;
        comp.weight = rstate.prob;
        comp.payoffs.resize(members.size());
        for (const auto& alt : rstate.alternatives) {
            std::size_t cls = raw.class_index(alt.cls);
            std::size_t pos = reduced.states[target].member_pos(cls);
            comp.payoffs[pos].push_back(alt.payoff);
        }
        per_state_[target].push_back(std::move(comp));
    }
}

double RawSampler::sample(std::size_t state, std::size_t member_pos, CounterRng& rng) const {
    const auto& comps = per_state_[state];
    std::size_t ci = 0;
    if (comps.size() > 1) {
        std::vector<double> w(comps.size());
        for (std::size_t i = 0; i < comps.size(); ++i) w[i] = comps[i].weight;
        ci = rng.categorical(w);
    }
    const auto& pool = comps[ci].payoffs[member_pos];
    if (pool.size() == 1) return pool[0];
    std::size_t pick = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(pool.size()));
    if (pick >= pool.size()) pick = pool.size() - 1;
    return pool[pick];
}

SimEvent step(Valuations& v, std::int64_t k, const SimConfig& cfg, const ReducedTree& t,
              CounterRng& rng, const RawSampler* raw) {
    std::vector<double> state_probs(t.states.size());
    for (std::size_t si = 0; si < t.states.size(); ++si) state_probs[si] = t.states[si].prob;
    std::size_t si = rng.categorical(state_probs);
    const ReducedState& st = t.states[si];

    std::vector<double> probs = state_softmax(v, st, cfg.beta);
    std::size_t pos = rng.categorical(probs);

    double payoff;
    if (cfg.raw_mode) {
        if (!raw) throw ValidationError("raw-mode simulation needs a raw tree");
        payoff = raw->sample(si, pos, rng);
    } else {
        payoff = t.payoff(si, pos);
    }

    double a = alpha_at(cfg, k);
    std::size_t cls = st.members[pos];
    v[cls] += a * (payoff - v[cls]);

    return SimEvent{k, si, cls, payoff, a};
}

Trajectory simulate(const Valuations& v0, const SimConfig& cfg, const ReducedTree& t,
                    const RawSampler* raw, std::uint64_t stream) {
    cfg.validate();
    check_valuations(v0, t);
    if (cfg.raw_mode && !raw) throw ValidationError("raw-mode simulation needs a raw tree");

    CounterRng rng(cfg.seed, stream);
    Trajectory traj;
    Valuations v = v0;
    traj.times.push_back(0.0);
    traj.values.push_back(v);
    for (std::int64_t k = 0; k < cfg.horizon; ++k) {
        SimEvent ev = step(v, k, cfg, t, rng, raw);
        bool record = ((k + 1) % cfg.record_every == 0) || (k + 1 == cfg.horizon);
        if (record) {
            traj.times.push_back(static_cast<double>(k + 1));
            traj.values.push_back(v);
            traj.events.push_back(ev);
        }
    }
    return traj;
}

namespace {

std::string format_float(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace

void write_trajectory_csv(const Trajectory& traj, const ReducedTree& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << "t";
    for (const auto& name : t.classes) out << ",v_" << name;
    out << "\n";
    for (std::size_t row = 0; row < traj.times.size(); ++row) {
        out << format_float(traj.times[row]);
        for (double x : traj.values[row]) out << "," << format_float(x);
        out << "\n";
    }
}

void write_events_csv(const Trajectory& traj, const ReducedTree& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << "k,omega,chosen,payoff,alpha\n";
    for (const auto& ev : traj.events) {
        out << ev.k << ",";
        const auto& members = t.states[ev.state].members;
        for (std::size_t pos = 0; pos < members.size(); ++pos)
            out << (pos ? "+" : "") << t.classes[members[pos]];
        out << "," << t.classes[ev.chosen] << "," << format_float(ev.payoff) << ","
            << format_float(ev.alpha) << "\n";
    }
}

Valuations g_map(const Valuations& v, const ReducedTree& t, double beta) {
    check_valuations(v, t);
    check_beta(beta, false);
    const std::size_t n = t.n_classes();

    // log of the per-state softmax normalizer
    std::vector<double> lse(t.states.size());
    for (std::size_t si = 0; si < t.states.size(); ++si) {
        const auto& st = t.states[si];
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t m : st.members) best = std::max(best, beta * v[m]);
        double sum = 0.0;
        for (std::size_t m : st.members) sum += std::exp(beta * v[m] - best);
        lse[si] = best + std::log(sum);
    }

    auto incidence = t.incidence();
    Valuations g(n);
    for (std::size_t s = 0; s < n; ++s) {
        // Weight of state w is p(w)*sigma_s(w); rescale by the class-wise max
        // log-weight so the normalizer never underflows to zero.
        double max_log = -std::numeric_limits<double>::infinity();
        for (const auto& [si, pos] : incidence[s])
            max_log = std::max(max_log, beta * v[s] - lse[si] + std::log(t.states[si].prob));
        double num = 0.0, den = 0.0;
        for (const auto& [si, pos] : incidence[s]) {
            double w = std::exp(beta * v[s] - lse[si] + std::log(t.states[si].prob) - max_log);
            num += w * t.payoff(si, pos);
            den += w;
        }
        g[s] = num / den;
    }
    return g;
}

Valuations mean_field_rhs(const Valuations& v, const ReducedTree& t, double beta) {
    Valuations g = g_map(v, t, beta);
    for (std::size_t s = 0; s < g.size(); ++s) g[s] -= v[s];
    return g;
}

Trajectory integrate(const Valuations& v0, const ReducedTree& t, double beta,
                     double t_end, double h) {
    check_valuations(v0, t);
    check_beta(beta, false);
    if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("step size must be positive");
    if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw ValidationError("end time must be nonnegative");

    Trajectory traj;
    Valuations v = v0;
    double time = 0.0;
    traj.times.push_back(time);
    traj.values.push_back(v);

    const std::size_t n = v.size();
    auto axpy = [n](const Valuations& base, double c, const Valuations& d) {
        Valuations out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = base[i] + c * d[i];
        return out;
    };

    auto nsteps = static_cast<std::int64_t>(std::ceil(t_end / h - 1e-12));
    for (std::int64_t step_i = 1; step_i <= nsteps; ++step_i) {
        double next = std::min(h * static_cast<double>(step_i), t_end);
        double dt = next - time;
        Valuations k1 = mean_field_rhs(v, t, beta);
        Valuations k2 = mean_field_rhs(axpy(v, 0.5 * dt, k1), t, beta);
        Valuations k3 = mean_field_rhs(axpy(v, 0.5 * dt, k2), t, beta);
        Valuations k4 = mean_field_rhs(axpy(v, dt, k3), t, beta);
        for (std::size_t i = 0; i < n; ++i) {
            v[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if (!std::isfinite(v[i])) throw NumericError("integration produced a non-finite value");
        }
        time = next;
        traj.times.push_back(time);
        traj.values.push_back(v);
    }
    return traj;
}

} // namespace cpal
