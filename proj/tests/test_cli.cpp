#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kCli = CPAL_CLI_PATH;

fs::path work_dir() {
    static fs::path dir = [] {
        std::string tmpl = (fs::temp_directory_path() / "cpal_cli_XXXXXX").string();
        char* made = mkdtemp(tmpl.data());
        REQUIRE(made != nullptr);
        return fs::path(made);
    }();
    return dir;
}

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    REQUIRE(out.good());
    out << text;
}

RunResult run(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    fs::path out_file = work_dir() / ("stdout_" + std::to_string(counter) + ".txt");
    fs::path err_file = work_dir() / ("stderr_" + std::to_string(counter) + ".txt");
    ++counter;
    std::string cmd = env + (env.empty() ? "" : " ") + std::string(kCli) + " " + args + " > " +
                      out_file.string() + " 2> " + err_file.string();
    int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

fs::path fixture(const std::string& name, const std::string& text) {
    fs::path p = work_dir() / name;
    if (!fs::exists(p)) write_file(p, text);
    return p;
}

fs::path bob_json() {
    return fixture("bob.json", R"({
  "classes": ["apples", "citrus"],
  "states": [
    {"id": "market1", "prob": "1/3", "alternatives": [
      {"id": "apples1", "class": "apples", "payoff": 3.0},
      {"id": "limes1", "class": "citrus", "payoff": 2.0}]},
    {"id": "market2", "prob": "1/3", "alternatives": [
      {"id": "lemons2", "class": "citrus", "payoff": 3.0},
      {"id": "limes2", "class": "citrus", "payoff": 1.0}]},
    {"id": "market3", "prob": "1/3", "alternatives": [
      {"id": "lemons3", "class": "citrus", "payoff": 4.0},
      {"id": "apples3", "class": "apples", "payoff": 1.0}]}
  ]
})");
}

std::string three_state_text(double z2, double z3) {
    std::ostringstream os;
    os << R"({"classes": ["L", "R"], "states": [
  {"id": "w1", "prob": "1/3", "alternatives": [
    {"id": "l1", "class": "L", "payoff": 2.0},
    {"id": "r1", "class": "R", "payoff": 1.0}]},
  {"id": "w2", "prob": "1/3", "alternatives": [{"id": "l2", "class": "L", "payoff": )"
       << z2 << R"(}]},
  {"id": "w3", "prob": "1/3", "alternatives": [{"id": "r3", "class": "R", "payoff": )"
       << z3 << R"(}]}
]})";
    return os.str();
}

fs::path tree00_json() { return fixture("tree00.json", three_state_text(0.0, 0.0)); }
fs::path tree33_json() { return fixture("tree33.json", three_state_text(3.0, 3.0)); }

fs::path out_dir(const std::string& name) {
    fs::path p = work_dir() / name;
    fs::create_directories(p);
    return p;
}

std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("reduce emits the aggregated problem with exact fractions") {
    fs::path dir = out_dir("reduce");
    RunResult r = run("reduce -i " + bob_json().string() + " -o " + dir.string());
    CHECK(r.code == 0);
    json j = json::parse(slurp(dir / "reduced.json"));
    CHECK(j["reduced"] == true);
    REQUIRE(j["states"].size() == 2);
    CHECK(j["states"][0]["classes"] == json::array({"apples", "citrus"}));
    CHECK(j["states"][0]["prob"] == "2/3");
    CHECK(j["states"][0]["payoffs"]["apples"] == 2.0);
    CHECK(j["states"][0]["payoffs"]["citrus"] == 3.0);
    CHECK(j["states"][1]["prob"] == "1/3");
    CHECK(j["states"][1]["payoffs"]["citrus"] == 2.0);

    // Reducing the already-reduced file reproduces it byte for byte.
    fs::path dir2 = out_dir("rereduce");
    RunResult r2 = run("reduce -i " + (dir / "reduced.json").string() + " -o " + dir2.string());
    CHECK(r2.code == 0);
    CHECK(slurp(dir2 / "reduced.json") == slurp(dir / "reduced.json"));
}

TEST_CASE("unary shift flag moves one-class payoffs") {
    fs::path dir = out_dir("shifted");
    RunResult r = run("reduce -i " + tree00_json().string() + " -o " + dir.string() + " --z 100");
    CHECK(r.code == 0);
    json j = json::parse(slurp(dir / "reduced.json"));
    for (const auto& st : j["states"]) {
        if (st["classes"].size() == 1) {
            std::string cls = st["classes"][0];
            CHECK(st["payoffs"][cls] == 100.0);
        } else {
            CHECK(st["payoffs"]["L"] == 2.0);
        }
    }
}

TEST_CASE("bad inputs exit with the validation code") {
    fs::path bad = fixture("bad.json", "{\n  \"classes\": [\"a\"],\n  oops\n}");
    RunResult r = run("reduce -i " + bad.string() + " -o " + out_dir("bad").string());
    CHECK(r.code == 2);
    CHECK(r.err.find("line") != std::string::npos);

    CHECK(run("reduce -o " + out_dir("noin").string()).code == 2);
    CHECK(run("reduce -i /nonexistent.json -o " + out_dir("noin").string()).code == 2);
    CHECK(run("reduce --bogus-flag").code == 2);
    CHECK(run("simulate -i " + tree00_json().string() + " --step constant --alpha 1.5 -o " +
              out_dir("badalpha").string()).code == 2);
    CHECK(run("--help").code == 0);
    CHECK(run("solve --help").code == 0);
}

TEST_CASE("solve reports all equilibria with stability verdicts") {
    fs::path dir = out_dir("solve31");
    RunResult r = run("solve -i " + tree00_json().string() + " --beta 50 -o " + dir.string());
    CHECK(r.code == 0);
    json j = json::parse(slurp(dir / "equilibria.json"));
    REQUIRE(j.size() == 3);
    int stable = 0, unstable = 0;
    for (const auto& eq : j) {
        CHECK(eq["beta"] == 50.0);
        CHECK(eq["residual"].get<double>() < 1e-12);
        std::string verdict = eq["stability"]["verdict"];
        if (verdict == "stable") ++stable;
        if (verdict == "unstable") ++unstable;
        CHECK(eq["stability"]["discs_cover_spectrum"] == true);
        CHECK(eq["stability"]["row_sum_defect"].get<double>() < 1e-9);
        REQUIRE(eq["stability"]["eigenvalues"].size() == 2);
    }
    CHECK(stable == 2);
    CHECK(unstable == 1);
    // Lexicographic order: the low branch first, interior saddle second.
    CHECK(j[0]["v_star"][0].get<double>() < 0.01);
    CHECK(j[0]["v_star"][1].get<double>() == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(j[2]["v_star"][0].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("single-start solve accepts an explicit initial point") {
    fs::path dir = out_dir("solve_v0");
    RunResult r = run("solve -i " + tree00_json().string() + " --beta 50 --v0 1.2,0.1 -o " +
                      dir.string());
    CHECK(r.code == 0);
    json j = json::parse(slurp(dir / "equilibria.json"));
    REQUIRE(j.size() == 1);
    CHECK(j[0]["v_star"][0].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(j[0]["classification"] == "strict-pure");

    CHECK(run("solve -i " + tree00_json().string() + " --v0 1.2 -o " + dir.string()).code == 2);
    CHECK(run("solve -i " + tree00_json().string() + " --v0 x,y -o " + dir.string()).code == 2);
}

TEST_CASE("simulation runs are seed-reproducible") {
    fs::path a = out_dir("sim_a"), b = out_dir("sim_b"), c = out_dir("sim_c");
    std::string base = "simulate -i " + tree00_json().string() +
                       " --beta 5 --horizon 400 --seed 11 -o ";
    CHECK(run(base + a.string()).code == 0);
    CHECK(run(base + b.string()).code == 0);
    CHECK(slurp(a / "trajectory.csv") == slurp(b / "trajectory.csv"));
    CHECK(slurp(a / "events.csv") == slurp(b / "events.csv"));

    std::string other = "simulate -i " + tree00_json().string() +
                        " --beta 5 --horizon 400 --seed 12 -o " + c.string();
    CHECK(run(other).code == 0);
    CHECK(slurp(a / "trajectory.csv") != slurp(c / "trajectory.csv"));

    // Harmonic schedule: the first two recorded steps use alpha 1 and 1/2.
    std::ifstream ev(a / "events.csv");
    std::string line;
    std::getline(ev, line);
    CHECK(line == "k,omega,chosen,payoff,alpha");
    std::getline(ev, line);
    CHECK(line.substr(0, 2) == "0,");
    CHECK(line.substr(line.rfind(',') + 1) == "1");
    std::getline(ev, line);
    CHECK(line.substr(line.rfind(',') + 1) == "0.5");
}

TEST_CASE("recording stride thins the trajectory") {
    fs::path dir = out_dir("sim_stride");
    RunResult r = run("simulate -i " + tree00_json().string() +
                      " --horizon 100 --record-every 7 -o " + dir.string());
    CHECK(r.code == 0);
    std::string traj = slurp(dir / "trajectory.csv");
    CHECK(std::count(traj.begin(), traj.end(), '\n') == 17); // header + 16 rows
}

TEST_CASE("raw sampling needs a raw tree and rejects the shift flag") {
    fs::path dir = out_dir("sim_raw");
    RunResult ok = run("simulate -i " + bob_json().string() + " --mode raw --horizon 200 -o " +
                       dir.string());
    CHECK(ok.code == 0);

    fs::path rdir = out_dir("sim_raw_reduced");
    REQUIRE(run("reduce -i " + bob_json().string() + " -o " + rdir.string()).code == 0);
    CHECK(run("simulate -i " + (rdir / "reduced.json").string() + " --mode raw -o " +
              dir.string()).code == 2);
    CHECK(run("simulate -i " + bob_json().string() + " --mode raw --z 1 -o " + dir.string())
              .code == 2);
}

TEST_CASE("integrate holds a solved equilibrium flat") {
    fs::path sdir = out_dir("solve32");
    CHECK(run("solve -i " + tree33_json().string() + " --beta 50 -o " + sdir.string()).code == 0);
    json eqs = json::parse(slurp(sdir / "equilibria.json"));
    REQUIRE(eqs.size() == 1);
    std::string v0 = fmt17(eqs[0]["v_star"][0].get<double>()) + "," +
                     fmt17(eqs[0]["v_star"][1].get<double>());

    fs::path dir = out_dir("integrate_flat");
    RunResult r = run("integrate -i " + tree33_json().string() + " --beta 50 --t-end 20 --v0 " +
                      v0 + " -o " + dir.string());
    CHECK(r.code == 0);
    std::ifstream in(dir / "trajectory.csv");
    std::string header, first, line, last;
    std::getline(in, header);
    std::getline(in, first);
    while (std::getline(in, line)) last = line;
    auto second_field = [](const std::string& s) {
        auto a = s.find(',');
        auto b = s.find(',', a + 1);
        return std::stod(s.substr(a + 1, b - a - 1));
    };
    CHECK(std::abs(second_field(first) - second_field(last)) < 1e-9);
}

TEST_CASE("annealing sweep lands on the sharp-choice limit and labels it mixed") {
    fs::path dir = out_dir("sweep32");
    RunResult r = run("sweep -i " + tree33_json().string() +
                      " --beta-from 1 --beta-to 10000 --beta-ratio 1.5 -o " + dir.string());
    CHECK(r.code == 0);
    json j = json::parse(slurp(dir / "sweep.json"));
    REQUIRE(j.size() == 1);
    CHECK(j[0]["termination"] == "completed");
    const json& final_pt = j[0]["points"].back();
    double limit = 2.0 + 1.0 / std::sqrt(3.0);
    CHECK(std::abs(final_pt["v_star"][0].get<double>() - limit) < 1e-3);
    CHECK(std::abs(final_pt["v_star"][1].get<double>() - limit) < 1e-3);
    CHECK(final_pt["classification"] == "mixed");
    CHECK(final_pt["beta"] == 10000.0);
}

TEST_CASE("stability command reports a point or all equilibria") {
    fs::path dir = out_dir("stab_point");
    RunResult r = run("stability -i " + tree00_json().string() + " --beta 50 --v 1.7,0.9 -o " +
                      dir.string());
    CHECK(r.code == 0);
    CHECK(r.err.find("not an equilibrium") != std::string::npos);
    json j = json::parse(slurp(dir / "stability.json"));
    REQUIRE(j.size() == 1);
    CHECK(j[0]["verdict"].is_string());

    fs::path all = out_dir("stab_all");
    RunResult r2 = run("stability -i " + tree00_json().string() + " --beta 50 -o " + all.string());
    CHECK(r2.code == 0);
    json j2 = json::parse(slurp(all / "stability.json"));
    REQUIRE(j2.size() == 3);

    CHECK(run("stability -i " + tree00_json().string() + " --v 1 -o " + dir.string()).code == 2);
}

TEST_CASE("enumerate writes pure limits and the greedy construction") {
    fs::path dir = out_dir("enum31");
    RunResult r = run("enumerate -i " + tree00_json().string() + " -o " + dir.string());
    CHECK(r.code == 0);
    json j = json::parse(slurp(dir / "pure_limits.json"));
    REQUIRE(j["pure_limits"].size() == 2);
    CHECK(j["pure_limits"][0]["valuations"] == json::array({0.0, 0.5}));
    CHECK(j["pure_limits"][1]["valuations"] == json::array({1.0, 0.0}));
    CHECK(j["greedy_construction"]["valuations"] == json::array({1.0, 0.0}));

    fs::path dir2 = out_dir("enum32");
    CHECK(run("enumerate -i " + tree33_json().string() + " -o " + dir2.string()).code == 0);
    json j2 = json::parse(slurp(dir2 / "pure_limits.json"));
    CHECK(j2["pure_limits"].empty());
    CHECK(j2["greedy_construction"].contains("invalid"));
}

TEST_CASE("thread settings do not change results") {
    fs::path a = out_dir("thr_a"), b = out_dir("thr_b");
    std::string args = "solve -i " + tree00_json().string() + " --beta 50 -o ";
    CHECK(run(args + a.string(), "CPAL_THREADS=1").code == 0);
    CHECK(run(args + b.string() + " --threads 4", "CPAL_THREADS=3").code == 0);
    CHECK(slurp(a / "equilibria.json") == slurp(b / "equilibria.json"));
}

TEST_CASE("self-test battery detects a corrupted benchmark") {
    fs::path dir = out_dir("repro");
    RunResult r = run("reproduce --mutate-z2 5 --json -o " + dir.string());
    CHECK(r.code == 1);
    json j = json::parse(r.out);
    REQUIRE(j.is_array());
    REQUIRE(j.size() == 11);
    int failed = 0;
    for (const auto& c : j)
        if (c["pass"] == false) ++failed;
    CHECK(failed > 0);
}

} // TEST_SUITE
