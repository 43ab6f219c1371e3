#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "qmdp/chain.hpp"
#include "qmdp/report.hpp"
#include "support/generators.hpp"

using qmdp::MdpSpec;
using qmdp::RiskReport;
using qmdp::Rng;

TEST_CASE("deterministic models report zero gap everywhere") {
    MdpSpec spec;
    spec.states = {"s0", "s1"};
    spec.actions = {"a"};
    spec.horizon = qmdp::FiniteHorizon{3};
    spec.stationary = true;
    spec.integer_rewards = true;
    spec.terminal = {0.0, 0.0};
    spec.admissible.assign(1, {{0}, {0}});
    spec.rows.assign(1, {{qmdp::StageRow{{1}, {1.0}, {2.0}, {}}},
                         {qmdp::StageRow{{1}, {1.0}, {1.0}, {}}}});
    qmdp::ReportOptions opts;
    opts.episodes = 200;
    opts.grid_points = 21;
    const RiskReport report = qmdp::build_report(spec, 0, 5, opts);
    for (double g : report.gap) CHECK(g == 0.0);
}

TEST_CASE("chain frontier dominates every simulated baseline") {
    qmdp::ChainParams params;
    params.n = 8;
    params.periods = 6;
    params.r_max = 6;
    params.seed = 17;
    const MdpSpec spec = qmdp::gen_chain(params);
    qmdp::ReportOptions opts;
    opts.episodes = 4000;
    opts.grid_points = 51;
    const RiskReport report = qmdp::build_report(spec, 0, 23, opts);
    REQUIRE(report.baselines.size() == 6);  // mdp + 3 qbdp + 2 utility
    for (const auto& baseline : report.baselines)
        CHECK(qmdp::frontier_dominates(report.taus, report.frontier, baseline.cdf));
    for (std::size_t j = 0; j < report.taus.size(); ++j)
        CHECK(report.gap[j] ==
              report.frontier[j] - report.baselines.front().quantiles[j]);
}

TEST_CASE("report csv is byte-stable and carries the expected header") {
    qmdp::ChainParams params;
    params.n = 5;
    params.periods = 4;
    params.r_max = 5;
    params.seed = 2;
    const MdpSpec spec = qmdp::gen_chain(params);
    qmdp::ReportOptions opts;
    opts.episodes = 300;
    opts.grid_points = 11;
    const RiskReport a = qmdp::build_report(spec, 0, 9, opts);
    const RiskReport b = qmdp::build_report(spec, 0, 9, opts);
    std::ostringstream sa, sb;
    a.to_csv(sa);
    b.to_csv(sb);
    CHECK(sa.str() == sb.str());
    CHECK(sa.str().starts_with(
        "tau,qmdp_frontier,mdp_cdf_quantile,qbdp_0.2_quantile,qbdp_0.5_quantile,"
        "qbdp_0.8_quantile,util_-0.5_quantile,util_0.5_quantile,gap\n"));
}
