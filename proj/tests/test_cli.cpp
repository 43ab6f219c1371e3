#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "qmdp/hiv.hpp"
#include "qmdp/mdp_json.hpp"
#include "qmdp/report.hpp"
#include "qmdp/simulate.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* env = std::getenv("QMDP_CLI_BIN");
    REQUIRE(env != nullptr);
    return env;
}

struct RunResult {
    int exit_code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run_cli(const std::string& args) {
    const fs::path out = fs::temp_directory_path() / "qmdp_cli_out.txt";
    const fs::path err = fs::temp_directory_path() / "qmdp_cli_err.txt";
    const std::string cmd =
        cli_path() + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    RunResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.out = slurp(out);
    result.err = slurp(err);
    fs::remove(out);
    fs::remove(err);
    return result;
}

fs::path work_dir() {
    const fs::path dir = fs::temp_directory_path() / "qmdp_cli_work";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("validate accepts a generated chain and rejects a broken one") {
    const fs::path dir = work_dir();
    const fs::path model = dir / "chain.json";
    const auto gen = run_cli("gen chain --n 6 --T 4 --rmax 5 --seed 3 --out " + model.string());
    REQUIRE(gen.exit_code == 0);

    const auto ok = run_cli("validate " + model.string());
    CHECK(ok.exit_code == 0);
    CHECK(ok.out == "OK\n");

    // corrupt one row
    auto spec = qmdp::load_model(model.string());
    spec.rows[0][0][0].probs[0] = 0.3;
    const fs::path broken = dir / "broken.json";
    qmdp::save_model(spec, broken.string());
    const auto bad = run_cli("validate " + broken.string());
    CHECK(bad.exit_code == 1);
    CHECK(bad.err.find("sums to") != std::string::npos);
}

TEST_CASE("unknown flags exit with usage code 2") {
    const auto result = run_cli("solve --frobnicate");
    CHECK(result.exit_code == 2);
    const auto nocmd = run_cli("");
    CHECK(nocmd.exit_code == 2);
}

TEST_CASE("solve then run reproduces the frontier on episodes") {
    const fs::path dir = work_dir();
    const fs::path model = dir / "m.json";
    const fs::path table = dir / "t.json";
    const fs::path episodes = dir / "runs.csv";
    REQUIRE(run_cli("gen chain --n 5 --T 5 --rmax 6 --seed 11 --out " + model.string())
                .exit_code == 0);
    REQUIRE(run_cli("solve " + model.string() + " --out " + table.string()).exit_code == 0);

    const auto run = run_cli("run " + model.string() + " --table " + table.string() +
                             " --tau 0.3 --seed 5 --episodes 2000 --out " + episodes.string());
    REQUIRE(run.exit_code == 0);
    CHECK(run.out.find("episodes=2000") != std::string::npos);
    const std::string csv = slurp(episodes);
    CHECK(csv.starts_with("episode,t,state,action,tau,reward\n"));

    // identical invocation gives byte-identical episode logs
    const fs::path episodes2 = dir / "runs2.csv";
    REQUIRE(run_cli("run " + model.string() + " --table " + table.string() +
                    " --tau 0.3 --seed 5 --episodes 2000 --out " + episodes2.string())
                .exit_code == 0);
    CHECK(slurp(episodes2) == csv);
}

TEST_CASE("gen, solve, report pipeline emits a dominated-baseline table") {
    const fs::path dir = work_dir();
    const fs::path model = dir / "chain20.json";
    const fs::path report = dir / "report.csv";
    REQUIRE(run_cli("gen chain --n 10 --T 6 --rmax 6 --seed 1 --out " + model.string())
                .exit_code == 0);
    const auto rep =
        run_cli("report " + model.string() + " --s0 s1 --grid 41 --episodes 3000 --seed 7 --out " +
                report.string());
    REQUIRE(rep.exit_code == 0);
    const std::string csv = slurp(report);
    REQUIRE(csv.starts_with("tau,qmdp_frontier,mdp_cdf_quantile"));

    // the frontier column is a non-decreasing quantile curve and the gap
    // column is exactly frontier minus the risk-neutral curve
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);  // header
    double prev_frontier = -1e300;
    while (std::getline(lines, line)) {
        std::vector<std::string> cells;
        std::istringstream row(line);
        for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
        REQUIRE(cells.size() == 9);
        const double frontier = std::stod(cells[1]);
        CHECK(frontier >= prev_frontier);
        prev_frontier = frontier;
        CHECK(std::stod(cells[8]) == frontier - std::stod(cells[2]));
    }

    // byte-identical regeneration
    const fs::path report2 = dir / "report2.csv";
    REQUIRE(run_cli("report " + model.string() +
                    " --s0 s1 --grid 41 --episodes 3000 --seed 7 --out " + report2.string())
                .exit_code == 0);
    CHECK(slurp(report2) == csv);
}

TEST_CASE("cvar objective writes grid csv and tables") {
    const fs::path dir = work_dir();
    const fs::path model = dir / "small.json";
    REQUIRE(run_cli("gen chain --n 4 --T 3 --rmax 4 --seed 2 --out " + model.string())
                .exit_code == 0);
    const fs::path grid = dir / "cvar.csv";
    REQUIRE(run_cli("solve " + model.string() + " --objective cvar --grid 21 --format csv --out " +
                    grid.string())
                .exit_code == 0);
    CHECK(slurp(grid).starts_with("t,state,tau,u,u_quant\n"));

    const fs::path table = dir / "cvar.json";
    REQUIRE(run_cli("solve " + model.string() + " --objective cvar --grid 21 --out " +
                    table.string())
                .exit_code == 0);
    const auto run = run_cli("run " + model.string() + " --table " + table.string() +
                             " --tau 0.4 --seed 3 --episodes 50 --out " +
                             (dir / "cvar_runs.csv").string());
    CHECK(run.exit_code == 0);
}

TEST_CASE("hiv generator runs end to end") {
    const fs::path dir = work_dir();
    const fs::path mortality = dir / "mortality.csv";
    {
        std::ofstream out(mortality);
        out << "age,annual_death_prob\n";
        const auto table = qmdp::synthetic_mortality();
        for (std::size_t i = 0; i < table.ages.size(); ++i)
            out << table.ages[i] << "," << table.annual_prob[i] << "\n";
    }
    const fs::path params = dir / "hiv_params.json";
    {
        std::ofstream out(params);
        out << "{\"terminal_age\": 23.0}\n";
    }
    const fs::path model = dir / "hiv.json";
    const auto gen = run_cli("gen hiv --params " + params.string() + " --mortality " +
                             mortality.string() + " --out " + model.string());
    REQUIRE(gen.exit_code == 0);
    CHECK(run_cli("validate " + model.string()).exit_code == 0);

    const fs::path table = dir / "hiv_table.json";
    CHECK(run_cli("solve " + model.string() + " --cap 64 --out " + table.string()).exit_code ==
          0);
}
