#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "qmdp/baselines.hpp"
#include "qmdp/common.hpp"
#include "qmdp/dp.hpp"
#include "qmdp/mdp.hpp"
#include "qmdp/simulate.hpp"

namespace qmdp {

struct BaselineCurve {
    std::string name;                // column stem, e.g. "qbdp_0.2"
    std::vector<double> quantiles;   // empirical quantile per grid tau
    EmpiricalCdf cdf;
};

/// Risk diagnostic for one model and start state: the solved quantile
/// frontier against the empirical quantile curves of fixed baseline
/// policies. The gap column measures how much the risk-neutral policy gives
/// up at each level.
struct RiskReport {
    std::vector<double> taus;
    std::vector<double> frontier;
    std::vector<BaselineCurve> baselines;  // first entry is the expectation policy
    std::vector<double> gap;               // frontier - expectation-policy quantile
    long episodes = 0;

    void to_csv(std::ostream& os) const {
        os << "tau,qmdp_frontier";
        for (const auto& b : baselines) os << "," << b.name << "_quantile";
        os << ",gap\n";
        for (std::size_t j = 0; j < taus.size(); ++j) {
            os << to_decimal_string(taus[j]) << "," << to_decimal_string(frontier[j]);
            for (const auto& b : baselines) os << "," << to_decimal_string(b.quantiles[j]);
            os << "," << to_decimal_string(gap[j]) << "\n";
        }
    }
};

struct ReportOptions {
    int grid_points = 101;
    long episodes = 20000;
    std::vector<double> qbdp_taus = {0.2, 0.5, 0.8};
    std::vector<double> util_gammas = {-0.5, 0.5};
    SolveOptions solve;
};

/// Monte-Carlo-tolerant dominance: the frontier at tau must reach the
/// baseline's empirical quantile at tau minus z binomial standard errors.
inline bool frontier_dominates(const std::vector<double>& taus,
                               const std::vector<double>& frontier, const EmpiricalCdf& cdf,
                               double z = 3.0) {
    const double m = static_cast<double>(cdf.sample_size());
    for (std::size_t j = 0; j < taus.size(); ++j) {
        const double sigma = std::sqrt(taus[j] * (1.0 - taus[j]) / m);
        const double level = std::max(0.0, taus[j] - z * sigma);
        if (frontier[j] + 1e-9 < cdf.quantile(level)) return false;
    }
    return true;
}

namespace detail {

inline std::string trimmed_number(double v) { return to_decimal_string(v); }

}  // namespace detail

/// Solves the quantile frontier once (a single pass yields all levels),
/// simulates the expectation, nested-quantile, and exponential-utility
/// baselines under derived seed streams, and tabulates frontier versus
/// empirical quantile curves with per-level gaps.
inline RiskReport build_report(const MdpSpec& spec, int s0, std::uint64_t seed,
                               const ReportOptions& opts = {}) {
    require_valid(spec);
    if (!spec.is_finite()) throw std::invalid_argument("build_report: finite-horizon model required");
    if (opts.grid_points < 2) throw std::invalid_argument("build_report: need at least 2 grid points");

    RiskReport report;
    report.episodes = opts.episodes;
    for (int j = 0; j < opts.grid_points; ++j)
        report.taus.push_back(static_cast<double>(j) / (opts.grid_points - 1));

    const ValueTable table = backward_solve(spec, opts.solve);
    for (double tau : report.taus) report.frontier.push_back(table.value(0, s0).value_at(tau));

    std::uint64_t stream = 1;
    auto simulate_markov = [&](const MarkovPolicy& policy, const std::string& name) {
        MarkovPolicyDriver driver(policy);
        BaselineCurve curve;
        curve.name = name;
        curve.cdf = simulate_policy(spec, driver, s0, opts.episodes, derive_seed(seed, stream++));
        for (double tau : report.taus) curve.quantiles.push_back(curve.cdf.quantile(tau));
        report.baselines.push_back(std::move(curve));
    };

    simulate_markov(solve_expectation(spec).policy, "mdp_cdf");
    for (double tau : opts.qbdp_taus)
        simulate_markov(solve_qbdp(spec, tau).policy, "qbdp_" + detail::trimmed_number(tau));
    for (double gamma_u : opts.util_gammas)
        simulate_markov(solve_exp_utility(spec, gamma_u).policy,
                        "util_" + detail::trimmed_number(gamma_u));

    for (std::size_t j = 0; j < report.taus.size(); ++j)
        report.gap.push_back(report.frontier[j] - report.baselines.front().quantiles[j]);
    return report;
}

}  // namespace qmdp
