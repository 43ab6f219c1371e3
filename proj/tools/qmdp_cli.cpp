// Command-line front end: model generation, validation, solving, policy
// simulation, and risk reports. One process, no daemon; everything flows
// through files, and all randomness derives from the --seed flag.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qmdp/baselines.hpp"
#include "qmdp/chain.hpp"
#include "qmdp/cvar.hpp"
#include "qmdp/dp.hpp"
#include "qmdp/hiv.hpp"
#include "qmdp/mdp.hpp"
#include "qmdp/mdp_json.hpp"
#include "qmdp/policy.hpp"
#include "qmdp/report.hpp"
#include "qmdp/simulate.hpp"
#include "qmdp/table_io.hpp"

namespace {

qmdp::HivParams hiv_params_from_json(const nlohmann::ordered_json& j) {
    qmdp::HivParams params;
    params.start_age = j.value("start_age", params.start_age);
    params.terminal_age = j.value("terminal_age", params.terminal_age);
    params.period_years = j.value("period_years", params.period_years);
    params.cd4_drift_off_art = j.value("cd4_drift_off_art", params.cd4_drift_off_art);
    params.cardiac_mortality_multiplier =
        j.value("cardiac_mortality_multiplier", params.cardiac_mortality_multiplier);
    params.annual_discount = j.value("annual_discount", params.annual_discount);
    params.reward_quantum = j.value("reward_quantum", params.reward_quantum);
    auto fill = [&](const char* key, auto& arr) {
        if (!j.contains(key)) return;
        const auto& v = j.at(key);
        if (v.size() != arr.size())
            throw std::runtime_error(std::string(key) + ": expected " +
                                     std::to_string(arr.size()) + " entries");
        for (std::size_t i = 0; i < arr.size(); ++i) arr[i] = v[i].get<double>();
    };
    fill("cd4_lower", params.cd4_lower);
    fill("cd4_gain_on_art", params.cd4_gain_on_art);
    fill("hiv_death_off", params.hiv_death_off);
    fill("hiv_death_on", params.hiv_death_on);
    fill("utility_off", params.utility_off);
    fill("utility_on", params.utility_on);
    return params;
}

int resolve_state(const qmdp::MdpSpec& spec, const std::string& name) {
    if (name.empty()) return 0;
    return spec.state_id(name);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    return out;
}

void report_to_json_stream(const qmdp::RiskReport& report, std::ostream& os) {
    nlohmann::ordered_json j;
    j["taus"] = report.taus;
    j["qmdp_frontier"] = report.frontier;
    for (const auto& b : report.baselines) j["baselines"][b.name] = b.quantiles;
    j["gap"] = report.gap;
    j["episodes"] = report.episodes;
    os << j.dump(1) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"risk-sensitive MDP toolkit: quantile and CVaR objectives"};
    app.require_subcommand(1);

    // validate
    std::string validate_model;
    CLI::App* cmd_validate = app.add_subcommand("validate", "check a model file");
    cmd_validate->add_option("model", validate_model, "model JSON file")->required();

    // solve
    std::string solve_model, solve_out, solve_objective = "quantile", solve_format = "json";
    std::optional<int> solve_cap;
    std::optional<double> solve_value_tol;
    double vi_epsilon = 1e-6;
    int vi_max_iters = 100000, solve_grid = 1001, solve_threads = 1;
    bool frontier_only = false;
    CLI::App* cmd_solve = app.add_subcommand("solve", "solve a model to a value table");
    cmd_solve->add_option("model", solve_model, "model JSON file")->required();
    cmd_solve->add_option("--out", solve_out, "output table path")->required();
    cmd_solve->add_option("--objective", solve_objective, "quantile|cvar")
        ->check(CLI::IsMember({"quantile", "cvar"}));
    cmd_solve->add_option("--cap", solve_cap, "restrict curves to N uniform breakpoints");
    cmd_solve->add_option("--value-tolerance", solve_value_tol,
                          "value merge tolerance (default: exact for integer rewards)");
    cmd_solve->add_option("--vi-epsilon", vi_epsilon, "value-iteration accuracy target");
    cmd_solve->add_option("--vi-max-iters", vi_max_iters, "value-iteration sweep limit");
    cmd_solve->add_option("--grid", solve_grid, "CVaR export grid size");
    cmd_solve->add_option("--threads", solve_threads, "solver thread cap");
    cmd_solve->add_flag("--frontier-only", frontier_only,
                        "keep only the t=0 and terminal value rows");
    cmd_solve->add_option("--format", solve_format, "csv|json (cvar tables only)")
        ->check(CLI::IsMember({"csv", "json"}));

    // run
    std::string run_model, run_table, run_s0, run_out;
    double run_tau = 0.5;
    std::uint64_t run_seed = 0;
    long run_episodes = 1;
    int run_max_periods = 0;
    CLI::App* cmd_run = app.add_subcommand("run", "simulate the solved policy");
    cmd_run->add_option("model", run_model, "model JSON file")->required();
    cmd_run->add_option("--table", run_table, "solved table path")->required();
    cmd_run->add_option("--tau", run_tau, "initial quantile level")->required();
    cmd_run->add_option("--seed", run_seed, "base seed");
    cmd_run->add_option("--episodes", run_episodes, "episode count");
    cmd_run->add_option("--s0", run_s0, "start state (default: first declared)");
    cmd_run->add_option("--out", run_out, "episode CSV path (default: stdout)");
    cmd_run->add_option("--max-periods", run_max_periods,
                        "episode length for discounted models");

    // report
    std::string report_model, report_s0, report_out, report_format = "csv";
    int report_grid = 101;
    long report_episodes = 20000;
    std::uint64_t report_seed = 0;
    std::vector<double> report_qbdp_taus = {0.2, 0.5, 0.8};
    std::vector<double> report_gammas = {-0.5, 0.5};
    std::optional<int> report_cap;
    CLI::App* cmd_report = app.add_subcommand("report", "risk-diagnostic comparison report");
    cmd_report->add_option("model", report_model, "model JSON file")->required();
    cmd_report->add_option("--s0", report_s0, "start state")->required();
    cmd_report->add_option("--grid", report_grid, "tau grid size");
    cmd_report->add_option("--episodes", report_episodes, "episodes per baseline");
    cmd_report->add_option("--seed", report_seed, "base seed");
    cmd_report->add_option("--qbdp-taus", report_qbdp_taus, "nested-quantile baseline levels");
    cmd_report->add_option("--util-gammas", report_gammas, "exponential-utility parameters");
    cmd_report->add_option("--cap", report_cap, "breakpoint cap for the frontier solve");
    cmd_report->add_option("--out", report_out, "report path (default: stdout)");
    cmd_report->add_option("--format", report_format, "csv|json")
        ->check(CLI::IsMember({"csv", "json"}));

    // gen
    CLI::App* cmd_gen = app.add_subcommand("gen", "build a bundled model instance");
    cmd_gen->require_subcommand(1);

    int chain_n = 20, chain_T = 10, chain_rmax = 10;
    std::uint64_t chain_seed = 0;
    bool chain_occupancy = false;
    std::string chain_out;
    CLI::App* cmd_chain = cmd_gen->add_subcommand("chain", "synthetic chain instance");
    cmd_chain->add_option("--n", chain_n, "state count");
    cmd_chain->add_option("--T", chain_T, "periods");
    cmd_chain->add_option("--rmax", chain_rmax, "maximum integer reward");
    cmd_chain->add_option("--seed", chain_seed, "generator seed");
    cmd_chain->add_flag("--pay-occupancy", chain_occupancy,
                        "pay the state reward on Move as well as Stay");
    cmd_chain->add_option("--out", chain_out, "output model path")->required();

    std::string hiv_params_path, hiv_mortality_path, hiv_out;
    CLI::App* cmd_hiv = cmd_gen->add_subcommand("hiv", "treatment-initiation instance");
    cmd_hiv->add_option("--params", hiv_params_path, "parameter overrides (JSON)");
    cmd_hiv->add_option("--mortality", hiv_mortality_path, "background mortality CSV")
        ->required();
    cmd_hiv->add_option("--out", hiv_out, "output model path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*cmd_validate) {
            const qmdp::MdpSpec spec = qmdp::load_model(validate_model);
            const auto violations = qmdp::validate(spec);
            if (violations.empty()) {
                std::cout << "OK\n";
                return 0;
            }
            for (const auto& v : violations) std::cerr << v.str() << "\n";
            return 1;
        }

        if (*cmd_solve) {
            const qmdp::MdpSpec spec = qmdp::load_model(solve_model);
            qmdp::SolveOptions opts;
            opts.breakpoint_cap = solve_cap;
            opts.value_tolerance = solve_value_tol;
            opts.vi_epsilon = vi_epsilon;
            opts.vi_max_iters = vi_max_iters;
            opts.threads = solve_threads;
            opts.store_all_stages = !frontier_only;
            if (solve_objective == "cvar") {
                const auto table = qmdp::cvar_solve(spec, solve_grid, opts);
                if (solve_format == "csv") {
                    auto out = open_out(solve_out);
                    qmdp::write_cvar_grid_csv(out, table);
                } else {
                    qmdp::save_cvar_table(table, solve_out);
                }
            } else {
                const auto table = spec.is_finite() ? qmdp::backward_solve(spec, opts)
                                                    : qmdp::value_iterate(spec, opts);
                qmdp::save_value_table(table, solve_out);
            }
            return 0;
        }

        if (*cmd_run) {
            const qmdp::MdpSpec spec = qmdp::load_model(run_model);
            qmdp::require_valid(spec);
            const int s0 = resolve_state(spec, run_s0);

            std::ifstream table_in(run_table);
            if (!table_in) throw std::runtime_error(run_table + ": cannot open");
            nlohmann::ordered_json tj = nlohmann::ordered_json::parse(table_in);
            const std::string type = tj.value("type", "");

            std::vector<qmdp::EpisodeResult> episodes;
            episodes.reserve(static_cast<std::size_t>(run_episodes));
            if (type == "cvar_table") {
                const qmdp::CvarTable table = qmdp::cvar_table_from_json(tj);
                for (long e = 0; e < run_episodes; ++e) {
                    qmdp::Rng rng(qmdp::derive_seed(run_seed, static_cast<std::uint64_t>(e)));
                    qmdp::EpisodeResult episode;
                    int state = s0;
                    double tau = run_tau;
                    for (int t = 0; t < spec.finite_periods(); ++t) {
                        const int a = qmdp::cvar_act(table, spec, t, {state, tau});
                        const auto& row = spec.row(t, state, a);
                        const std::size_t edge = rng.next_index(row.probs);
                        const double reward = row.rewards[edge];
                        episode.steps.push_back({t, state, a, tau, reward});
                        episode.total_reward += reward;
                        const int succ = row.successors[edge];
                        tau = qmdp::cvar_step_quantile(table, spec, t, {state, tau}, a, succ);
                        state = succ;
                    }
                    episode.total_reward += spec.terminal_reward(state);
                    episode.final_state = state;
                    episodes.push_back(std::move(episode));
                }
            } else {
                const qmdp::ValueTable table = qmdp::value_table_from_json(tj);
                for (long e = 0; e < run_episodes; ++e)
                    episodes.push_back(qmdp::run_episode(
                        table, spec, s0, run_tau,
                        qmdp::derive_seed(run_seed, static_cast<std::uint64_t>(e)),
                        run_max_periods));
            }

            if (run_out.empty()) {
                qmdp::write_episode_csv(std::cout, episodes, spec.states, spec.actions);
            } else {
                auto out = open_out(run_out);
                qmdp::write_episode_csv(out, episodes, spec.states, spec.actions);
                std::vector<double> totals;
                totals.reserve(episodes.size());
                for (const auto& e : episodes) totals.push_back(e.total_reward);
                const qmdp::EmpiricalCdf cdf(std::move(totals));
                std::cout << "episodes=" << run_episodes << " mean="
                          << qmdp::to_decimal_string(cdf.mean()) << " q(" << run_tau
                          << ")=" << qmdp::to_decimal_string(cdf.quantile(run_tau)) << "\n";
            }
            return 0;
        }

        if (*cmd_report) {
            const qmdp::MdpSpec spec = qmdp::load_model(report_model);
            qmdp::ReportOptions opts;
            opts.grid_points = report_grid;
            opts.episodes = report_episodes;
            opts.qbdp_taus = report_qbdp_taus;
            opts.util_gammas = report_gammas;
            opts.solve.breakpoint_cap = report_cap;
            const qmdp::RiskReport report =
                qmdp::build_report(spec, resolve_state(spec, report_s0), report_seed, opts);
            if (report_out.empty()) {
                if (report_format == "csv")
                    report.to_csv(std::cout);
                else
                    report_to_json_stream(report, std::cout);
            } else {
                auto out = open_out(report_out);
                if (report_format == "csv")
                    report.to_csv(out);
                else
                    report_to_json_stream(report, out);
            }
            return 0;
        }

        if (*cmd_chain) {
            qmdp::ChainParams params;
            params.n = chain_n;
            params.periods = chain_T;
            params.r_max = chain_rmax;
            params.seed = chain_seed;
            params.pay_on_occupancy = chain_occupancy;
            qmdp::save_model(qmdp::gen_chain(params), chain_out);
            return 0;
        }

        if (*cmd_hiv) {
            qmdp::HivParams params;
            if (!hiv_params_path.empty()) {
                std::ifstream in(hiv_params_path);
                if (!in) throw std::runtime_error(hiv_params_path + ": cannot open");
                params = hiv_params_from_json(nlohmann::ordered_json::parse(in));
            }
            params.background = qmdp::load_mortality_csv(hiv_mortality_path);
            qmdp::save_model(qmdp::gen_hiv(params), hiv_out);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
