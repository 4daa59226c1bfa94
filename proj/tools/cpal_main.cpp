#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cpal/dynamics.hpp"
#include "cpal/equilibrium.hpp"
#include "cpal/errors.hpp"
#include "cpal/repro.hpp"
#include "cpal/stability.hpp"
#include "cpal/tree.hpp"
#include "cpal/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string in_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    unsigned threads = 0;
    bool quiet = false;
    double z_shift = 0.0;
};

void add_common(CLI::App* cmd, CommonOpts& c, bool needs_tree) {
    cmd->set_help_flag("--help", "print this help message and exit");
    if (needs_tree)
        cmd->add_option("-i,--in", c.in_path, "input tree file (raw or reduced JSON)")->required();
    cmd->add_option("-o,--out", c.out_dir, "output directory (default: current)");
    cmd->add_option("--seed", c.seed, "random seed");
    cmd->add_option("--threads", c.threads, "worker cap (default: CPAL_THREADS, then hardware)");
    cmd->add_flag("-q,--quiet", c.quiet, "suppress summary output");
    if (needs_tree)
        cmd->add_option("--z", c.z_shift, "shift every one-class payoff by this amount after load");
}

cpal::LoadedTree load_tree(const CommonOpts& c) {
    cpal::LoadedTree lt = cpal::load_tree_file(c.in_path);
    if (c.z_shift != 0.0) lt.reduced = cpal::shift_unary_payoffs(lt.reduced, c.z_shift);
    if (!c.quiet)
        for (const auto& w : lt.reduced.warnings()) std::cerr << "warning: " << w << "\n";
    return lt;
}

std::string out_file(const CommonOpts& c, const std::string& name) {
    fs::create_directories(c.out_dir);
    return (fs::path(c.out_dir) / name).string();
}

std::vector<double> parse_vector(const std::string& text, std::size_t expect) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            v.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw cpal::ValidationError("cannot parse '" + item + "' as a number");
        }
    }
    if (v.size() != expect)
        throw cpal::ValidationError("expected " + std::to_string(expect) + " comma-separated values");
    return v;
}

std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

json equilibrium_json(const cpal::Equilibrium& eq, const cpal::ReducedTree& t) {
    json j;
    j["beta"] = eq.beta;
    j["v_star"] = eq.v_star;
    j["residual"] = eq.residual;
    j["classification"] = eq.strict_pure ? "strict-pure" : "mixed";
    json groups = json::array();
    for (const auto& g : eq.indifference_groups) {
        json names = json::array();
        for (std::size_t c : g) names.push_back(t.classes[c]);
        groups.push_back(std::move(names));
    }
    j["indifference_groups"] = std::move(groups);
    json policy = json::array();
    for (std::size_t si = 0; si < t.states.size(); ++si) {
        json entry;
        json state_names = json::array();
        json probs;
        const auto& st = t.states[si];
        for (std::size_t pos = 0; pos < st.members.size(); ++pos) {
            state_names.push_back(t.classes[st.members[pos]]);
            probs[t.classes[st.members[pos]]] = eq.limit_policy.probs[si][pos];
        }
        entry["state"] = std::move(state_names);
        entry["probs"] = std::move(probs);
        policy.push_back(std::move(entry));
    }
    j["limit_policy"] = std::move(policy);
    return j;
}

json stability_json(const cpal::StabilityReport& rep) {
    json j;
    json eigs = json::array();
    for (const auto& lam : rep.eigs) eigs.push_back(json::array({lam.real(), lam.imag()}));
    j["eigenvalues"] = std::move(eigs);
    j["spectral_abscissa"] = rep.spectral_abscissa;
    j["verdict"] = cpal::verdict_name(rep.verdict);
    json discs = json::array();
    for (const auto& d : rep.discs) discs.push_back({{"center", d.center}, {"radius", d.radius}});
    j["gershgorin"] = std::move(discs);
    j["discs_cover_spectrum"] = rep.discs_cover_spectrum;
    j["cooperative"] = rep.cooperative;
    j["irreducible"] = rep.irreducible;
    j["row_sum_defect"] = rep.row_sum_defect;
    j["residual"] = rep.residual;
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw cpal::ValidationError("cannot write '" + path + "'");
    out << text;
}

void run_reduce(const CommonOpts& c) {
    cpal::LoadedTree lt = load_tree(c);
    std::string path = out_file(c, "reduced.json");
    cpal::save_reduced_tree(lt.reduced, path);
    if (!c.quiet)
        std::cout << "reduced " << lt.reduced.states.size() << " state(s), "
                  << lt.reduced.n_classes() << " class(es) -> " << path << "\n";
}

struct SimulateOpts {
    double beta = 1.0;
    std::int64_t horizon = 1000;
    std::string rule = "harmonic";
    double alpha = 0.1;
    double gamma = 0.7;
    std::int64_t record_every = 1;
    std::string mode = "reduced";
    std::string v0_text;
};

void run_simulate(const CommonOpts& c, const SimulateOpts& s) {
    cpal::LoadedTree lt = load_tree(c);
    const cpal::ReducedTree& t = lt.reduced;

    cpal::SimConfig cfg;
    cfg.beta = s.beta;
    cfg.horizon = s.horizon;
    cfg.seed = c.seed;
    cfg.record_every = s.record_every;
    cfg.alpha = s.alpha;
    cfg.gamma = s.gamma;
    if (s.rule == "harmonic") cfg.rule = cpal::StepRule::harmonic;
    else if (s.rule == "constant") cfg.rule = cpal::StepRule::constant;
    else if (s.rule == "power") cfg.rule = cpal::StepRule::power;
    else throw cpal::ValidationError("step rule must be harmonic, constant, or power");

    std::optional<cpal::RawSampler> sampler;
    if (s.mode == "raw") {
        if (!lt.raw) throw cpal::ValidationError("raw-mode simulation needs a raw tree file");
        if (c.z_shift != 0.0)
            throw cpal::ValidationError("--z only affects reduced payoffs; raw sampling would not see it");
        cfg.raw_mode = true;
        sampler.emplace(*lt.raw, t);
    } else if (s.mode != "reduced") {
        throw cpal::ValidationError("mode must be reduced or raw");
    }

    cpal::PayoffBox box = cpal::payoff_box(t);
    cpal::Valuations v0(t.n_classes());
    for (std::size_t i = 0; i < v0.size(); ++i) v0[i] = 0.5 * (box.lo[i] + box.hi[i]);
    if (!s.v0_text.empty()) v0 = parse_vector(s.v0_text, t.n_classes());

    cpal::Trajectory traj = cpal::simulate(v0, cfg, t, sampler ? &*sampler : nullptr);
    cpal::write_trajectory_csv(traj, t, out_file(c, "trajectory.csv"));
    cpal::write_events_csv(traj, t, out_file(c, "events.csv"));
    if (!c.quiet) {
        std::cout << "simulated " << s.horizon << " step(s); final v =";
        for (double x : traj.values.back()) std::cout << " " << fmt17(x);
        std::cout << "\n";
    }
}

struct IntegrateOpts {
    double beta = 1.0;
    double t_end = 30.0;
    double h = 0.01;
    std::string v0_text;
};

void run_integrate(const CommonOpts& c, const IntegrateOpts& s) {
    cpal::LoadedTree lt = load_tree(c);
    const cpal::ReducedTree& t = lt.reduced;
    cpal::PayoffBox box = cpal::payoff_box(t);
    cpal::Valuations v0(t.n_classes());
    for (std::size_t i = 0; i < v0.size(); ++i) v0[i] = 0.5 * (box.lo[i] + box.hi[i]);
    if (!s.v0_text.empty()) v0 = parse_vector(s.v0_text, t.n_classes());

    cpal::Trajectory traj = cpal::integrate(v0, t, s.beta, s.t_end, s.h);
    cpal::write_trajectory_csv(traj, t, out_file(c, "trajectory.csv"));
    if (!c.quiet) {
        std::cout << "integrated to t=" << s.t_end << "; final v =";
        for (double x : traj.values.back()) std::cout << " " << fmt17(x);
        std::cout << "\n";
    }
}

struct SolveOpts {
    double beta = 1.0;
    int multistart = 64;
    std::string v0_text;
};

void run_solve(const CommonOpts& c, const SolveOpts& s) {
    cpal::LoadedTree lt = load_tree(c);
    const cpal::ReducedTree& t = lt.reduced;

    std::vector<cpal::Equilibrium> eqs;
    if (!s.v0_text.empty()) {
        eqs.push_back(cpal::solve_fixed_point(parse_vector(s.v0_text, t.n_classes()), t, s.beta));
    } else {
        cpal::FindAllOptions opts;
        opts.random_starts = s.multistart;
        opts.seed = c.seed;
        opts.threads = cpal::resolve_threads(c.threads);
        eqs = cpal::find_all(t, s.beta, opts);
    }

    json out = json::array();
    for (const auto& eq : eqs) {
        json j = equilibrium_json(eq, t);
        cpal::StabilityReport rep = cpal::stability_report(eq.v_star, t, s.beta);
        j["stability"] = stability_json(rep);
        out.push_back(std::move(j));
    }
    write_text(out_file(c, "equilibria.json"), out.dump(2) + "\n");
    if (!c.quiet) {
        std::cout << eqs.size() << " equilibrium(s) at beta=" << s.beta << "\n";
        for (const auto& eq : eqs) {
            std::cout << "  [" << (eq.strict_pure ? "strict-pure" : "mixed") << "] v* =";
            for (double x : eq.v_star) std::cout << " " << fmt17(x);
            cpal::StabilityReport rep = cpal::stability_report(eq.v_star, t, s.beta);
            std::cout << "  (" << cpal::verdict_name(rep.verdict) << ")\n";
        }
    }
}

struct SweepOpts {
    double from = 1.0;
    double to = 10000.0;
    double ratio = 1.5;
    int multistart = 64;
};

void run_sweep(const CommonOpts& c, const SweepOpts& s) {
    cpal::LoadedTree lt = load_tree(c);
    const cpal::ReducedTree& t = lt.reduced;
    std::vector<double> betas = cpal::geometric_betas(s.from, s.to, s.ratio);

    cpal::FindAllOptions fopts;
    fopts.random_starts = s.multistart;
    fopts.seed = c.seed;
    fopts.threads = cpal::resolve_threads(c.threads);
    std::vector<cpal::Equilibrium> seeds = cpal::find_all(t, betas.front(), fopts);

    auto paths = cpal::beta_sweep(t, betas, seeds, {}, cpal::resolve_threads(c.threads));

    json out = json::array();
    for (const auto& path : paths) {
        json jp;
        jp["termination"] = cpal::path_end_name(path.termination);
        json pts = json::array();
        for (const auto& eq : path.points) pts.push_back(equilibrium_json(eq, t));
        jp["points"] = std::move(pts);
        out.push_back(std::move(jp));
    }
    write_text(out_file(c, "sweep.json"), out.dump(2) + "\n");
    if (!c.quiet) {
        std::cout << paths.size() << " path(s) over " << betas.size() << " beta value(s)\n";
        for (const auto& path : paths) {
            std::cout << "  " << cpal::path_end_name(path.termination) << " after "
                      << path.points.size() << " point(s)";
            if (!path.points.empty()) {
                std::cout << "; final v* =";
                for (double x : path.points.back().v_star) std::cout << " " << fmt17(x);
                std::cout << " [" << (path.points.back().strict_pure ? "strict-pure" : "mixed") << "]";
            }
            std::cout << "\n";
        }
    }
}

struct StabilityOpts {
    double beta = 1.0;
    std::string v_text;
    int multistart = 64;
};

void run_stability(const CommonOpts& c, const StabilityOpts& s) {
    cpal::LoadedTree lt = load_tree(c);
    const cpal::ReducedTree& t = lt.reduced;

    std::vector<cpal::Valuations> points;
    if (!s.v_text.empty()) {
        points.push_back(parse_vector(s.v_text, t.n_classes()));
    } else {
        cpal::FindAllOptions opts;
        opts.random_starts = s.multistart;
        opts.seed = c.seed;
        opts.threads = cpal::resolve_threads(c.threads);
        for (const auto& eq : cpal::find_all(t, s.beta, opts)) points.push_back(eq.v_star);
    }

    json out = json::array();
    for (const auto& v : points) {
        cpal::StabilityReport rep = cpal::stability_report(v, t, s.beta);
        if (rep.residual_warning && !c.quiet)
            std::cerr << "warning: point has residual " << rep.residual
                      << "; it is not an equilibrium at this tolerance\n";
        json j = stability_json(rep);
        j["point"] = v;
        out.push_back(std::move(j));
    }
    write_text(out_file(c, "stability.json"), out.dump(2) + "\n");
    if (!c.quiet) {
        for (const auto& j : out)
            std::cout << j["verdict"].get<std::string>() << ", spectral abscissa "
                      << fmt17(j["spectral_abscissa"].get<double>()) << "\n";
    }
}

void run_enumerate(const CommonOpts& c) {
    cpal::LoadedTree lt = load_tree(c);
    const cpal::ReducedTree& t = lt.reduced;

    auto ves = cpal::enumerate_pure_VE(t);
    json out;
    json list = json::array();
    for (const auto& ve : ves) {
        json j;
        json order = json::array();
        for (std::size_t cls : ve.order) order.push_back(t.classes[cls]);
        j["order"] = std::move(order);
        j["valuations"] = ve.valuations;
        j["strict"] = ve.strict;
        json choice = json::array();
        for (std::size_t si = 0; si < t.states.size(); ++si)
            choice.push_back(t.classes[ve.choice[si]]);
        j["choice"] = std::move(choice);
        list.push_back(std::move(j));
    }
    out["pure_limits"] = std::move(list);

    try {
        cpal::PureVE built = cpal::construct_strict_pure_VE(t);
        json j;
        json order = json::array();
        for (std::size_t cls : built.order) order.push_back(t.classes[cls]);
        j["order"] = std::move(order);
        j["valuations"] = built.valuations;
        j["strict"] = built.strict;
        out["greedy_construction"] = std::move(j);
    } catch (const cpal::ConstructionInvalid& e) {
        out["greedy_construction"] = {{"invalid", e.what()}};
    } catch (const cpal::ValidationError& e) {
        out["greedy_construction"] = {{"unavailable", e.what()}};
    }

    write_text(out_file(c, "pure_limits.json"), out.dump(2) + "\n");
    if (!c.quiet)
        std::cout << ves.size() << " pure limit(s); see "
                  << out_file(c, "pure_limits.json") << "\n";
}

struct ReproduceOpts {
    bool as_json = false;
    double mutate_z2 = std::numeric_limits<double>::quiet_NaN();
};

int run_reproduce(const CommonOpts& c, const ReproduceOpts& r) {
    auto results = cpal::repro::run_acceptance(cpal::resolve_threads(c.threads), r.mutate_z2);
    std::size_t passed = 0;
    for (const auto& res : results)
        if (res.pass) ++passed;

    if (r.as_json) {
        json out = json::array();
        for (const auto& res : results)
            out.push_back({{"name", res.name},
                           {"pass", res.pass},
                           {"measured", res.measured},
                           {"expected", res.expected}});
        std::cout << out.dump(2) << "\n";
    } else {
        std::size_t width = 0;
        for (const auto& res : results) width = std::max(width, res.name.size());
        for (std::size_t i = 0; i < results.size(); ++i) {
            const auto& res = results[i];
            std::printf("%2zu | %-*s | %s | %s (expected: %s)\n", i + 1, static_cast<int>(width),
                        res.name.c_str(), res.pass ? "PASS" : "FAIL", res.measured.c_str(),
                        res.expected.c_str());
        }
        std::printf("%zu/%zu checks passed\n", passed, results.size());
    }
    return passed == results.size() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"coarse payoff-assessment learning toolkit"};
    app.set_help_flag("--help", "print this help message and exit");
    app.require_subcommand(1);

    CommonOpts c_reduce, c_sim, c_int, c_solve, c_sweep, c_stab, c_enum, c_repro;
    SimulateOpts sim;
    IntegrateOpts integ;
    SolveOpts solve;
    SweepOpts sweep;
    StabilityOpts stab;
    ReproduceOpts repro;

    CLI::App* cmd_reduce = app.add_subcommand("reduce", "aggregate a raw tree into class-set states");
    add_common(cmd_reduce, c_reduce, true);

    CLI::App* cmd_sim = app.add_subcommand("simulate", "run the discrete learning process");
    add_common(cmd_sim, c_sim, true);
    cmd_sim->add_option("--beta", sim.beta, "choice sharpness");
    cmd_sim->add_option("--horizon", sim.horizon, "number of steps");
    cmd_sim->add_option("--step", sim.rule, "step rule: harmonic, constant, power");
    cmd_sim->add_option("--alpha", sim.alpha, "constant step size");
    cmd_sim->add_option("--gamma", sim.gamma, "power step exponent");
    cmd_sim->add_option("--record-every", sim.record_every, "snapshot stride");
    cmd_sim->add_option("--mode", sim.mode, "payoff source: reduced or raw");
    cmd_sim->add_option("--v0", sim.v0_text, "initial valuations, comma separated");

    CLI::App* cmd_int = app.add_subcommand("integrate", "integrate the averaged dynamics");
    add_common(cmd_int, c_int, true);
    cmd_int->add_option("--beta", integ.beta, "choice sharpness");
    cmd_int->add_option("--t-end", integ.t_end, "end time");
    cmd_int->add_option("--h", integ.h, "step size");
    cmd_int->add_option("--v0", integ.v0_text, "initial valuations, comma separated");

    CLI::App* cmd_solve = app.add_subcommand("solve", "find equilibria of the averaged dynamics");
    add_common(cmd_solve, c_solve, true);
    cmd_solve->add_option("--beta", solve.beta, "choice sharpness");
    cmd_solve->add_option("--multistart", solve.multistart, "random starts beyond the fixed set");
    cmd_solve->add_option("--v0", solve.v0_text, "solve from this start only");

    CLI::App* cmd_sweep = app.add_subcommand("sweep", "continue equilibria along a beta schedule");
    add_common(cmd_sweep, c_sweep, true);
    cmd_sweep->add_option("--beta-from", sweep.from, "schedule start");
    cmd_sweep->add_option("--beta-to", sweep.to, "schedule end");
    cmd_sweep->add_option("--beta-ratio", sweep.ratio, "geometric ratio");
    cmd_sweep->add_option("--multistart", sweep.multistart, "random starts for the seed solve");

    CLI::App* cmd_stab = app.add_subcommand("stability", "linearize and report the spectrum");
    add_common(cmd_stab, c_stab, true);
    cmd_stab->add_option("--beta", stab.beta, "choice sharpness");
    cmd_stab->add_option("--v", stab.v_text, "point to analyze (default: all equilibria)");
    cmd_stab->add_option("--multistart", stab.multistart, "random starts for the default search");

    CLI::App* cmd_enum = app.add_subcommand("enumerate", "enumerate pure sharp-choice limits");
    add_common(cmd_enum, c_enum, true);

    CLI::App* cmd_repro = app.add_subcommand("reproduce", "run the built-in acceptance battery");
    add_common(cmd_repro, c_repro, false);
    cmd_repro->add_flag("--json", repro.as_json, "machine-readable output");
    cmd_repro->add_option("--mutate-z2", repro.mutate_z2,
                          "perturb an embedded payoff (harness self-test; must cause a FAIL)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_reduce->parsed()) run_reduce(c_reduce);
        else if (cmd_sim->parsed()) run_simulate(c_sim, sim);
        else if (cmd_int->parsed()) run_integrate(c_int, integ);
        else if (cmd_solve->parsed()) run_solve(c_solve, solve);
        else if (cmd_sweep->parsed()) run_sweep(c_sweep, sweep);
        else if (cmd_stab->parsed()) run_stability(c_stab, stab);
        else if (cmd_enum->parsed()) run_enumerate(c_enum);
        else if (cmd_repro->parsed()) return run_reproduce(c_repro, repro);
    } catch (const cpal::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const cpal::ConvergenceError& e) {
        std::cerr << "error: " << e.what() << " (best residual " << e.best_residual << ")\n";
        return 4;
    } catch (const cpal::ConstructionInvalid& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const cpal::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
