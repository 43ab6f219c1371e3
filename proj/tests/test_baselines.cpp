#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "qmdp/baselines.hpp"
#include "qmdp/simulate.hpp"
#include "support/generators.hpp"

using qmdp::MarkovPolicy;
using qmdp::MdpSpec;
using qmdp::Rng;
using qmdp::ScalarSolution;

namespace {

/// Two arms from a single state over one period: a safe constant and a
/// risky coin with the same mean.
MdpSpec equal_mean_two_arm() {
    MdpSpec spec;
    spec.states = {"root", "safe", "lo", "hi"};
    spec.actions = {"risky", "sure"};
    spec.horizon = qmdp::FiniteHorizon{1};
    spec.stationary = true;
    spec.integer_rewards = true;
    spec.terminal = {0.0, 0.0, 0.0, 0.0};
    spec.admissible.assign(1, {{0, 1}, {0}, {0}, {0}});
    spec.rows.assign(1, {{qmdp::StageRow{{2, 3}, {0.5, 0.5}, {0.0, 10.0}, {}},
                          qmdp::StageRow{{1}, {1.0}, {5.0}, {}}},
                         {qmdp::StageRow{{1}, {1.0}, {0.0}, {}}, qmdp::StageRow{}},
                         {qmdp::StageRow{{2}, {1.0}, {0.0}, {}}, qmdp::StageRow{}},
                         {qmdp::StageRow{{3}, {1.0}, {0.0}, {}}, qmdp::StageRow{}}});
    return spec;
}

/// Exact distribution of cumulative reward under a Markov policy, by
/// forward enumeration.
std::vector<std::pair<double, double>> exact_policy_dist(const MdpSpec& spec,
                                                         const MarkovPolicy& policy, int s0) {
    std::map<double, double> acc;
    struct Frame {
        int t;
        int state;
        double prob;
        double total;
    };
    std::vector<Frame> stack = {{0, s0, 1.0, 0.0}};
    const int T = spec.finite_periods();
    while (!stack.empty()) {
        const Frame f = stack.back();
        stack.pop_back();
        if (f.t == T) {
            acc[f.total + spec.terminal_reward(f.state)] += f.prob;
            continue;
        }
        const auto& row = spec.row(f.t, f.state, policy.at(f.t, f.state));
        for (std::size_t e = 0; e < row.successors.size(); ++e) {
            if (row.probs[e] <= 0.0) continue;
            stack.push_back({f.t + 1, row.successors[e], f.prob * row.probs[e],
                             f.total + row.rewards[e]});
        }
    }
    return {acc.begin(), acc.end()};
}

}  // namespace

TEST_CASE("expectation solver finds the best deterministic path") {
    MdpSpec spec;
    spec.states = {"s0", "good", "bad"};
    spec.actions = {"up", "down"};
    spec.horizon = qmdp::FiniteHorizon{2};
    spec.stationary = true;
    spec.integer_rewards = true;
    spec.terminal = {0.0, 0.0, 0.0};
    spec.admissible.assign(1, {{0, 1}, {0}, {0}});
    spec.rows.assign(1, {{qmdp::StageRow{{1}, {1.0}, {4.0}, {}},
                          qmdp::StageRow{{2}, {1.0}, {1.0}, {}}},
                         {qmdp::StageRow{{1}, {1.0}, {2.0}, {}}, qmdp::StageRow{}},
                         {qmdp::StageRow{{2}, {1.0}, {7.0}, {}}, qmdp::StageRow{}}});
    const ScalarSolution sol = qmdp::solve_expectation(spec);
    CHECK(sol.value[0][0] == 8.0);  // 1 + 7 beats 4 + 2
    CHECK(sol.policy.at(0, 0) == 1);
}

TEST_CASE("expectation solver matches policy enumeration in the mean") {
    Rng rng(61);
    for (int trial = 0; trial < 25; ++trial) {
        const MdpSpec spec = testsupport::random_mdp(rng, {});
        const ScalarSolution sol = qmdp::solve_expectation(spec);
        // exhaustive maximum of the mean over history-dependent policies; the
        // Markov optimum must match it
        const auto tree = testsupport::build_prefix_tree(spec, 0);
        double best = -1e300;
        std::vector<int> odo(tree.decision_nodes.size(), 0);
        std::vector<int> assignment(tree.nodes.size(), 0);
        bool done = false;
        while (!done) {
            for (std::size_t i = 0; i < odo.size(); ++i)
                assignment[tree.decision_nodes[i]] = odo[i];
            const auto dist = testsupport::policy_distribution(spec, tree, assignment);
            double mean = 0.0;
            for (const auto& [v, p] : dist) mean += v * p;
            best = std::max(best, mean);
            done = true;
            for (std::size_t i = 0; i < odo.size(); ++i) {
                if (odo[i] + 1 < spec.num_actions()) {
                    odo[i] += 1;
                    std::fill(odo.begin(), odo.begin() + static_cast<long>(i), 0);
                    done = false;
                    break;
                }
            }
        }
        CHECK(sol.value[0][0] == Catch::Approx(best).margin(1e-12));
    }
}

TEST_CASE("reward shift raises expectation values by c per remaining period") {
    Rng rng(62);
    const double c = 3.0;
    const MdpSpec spec = testsupport::random_mdp(rng, {});
    MdpSpec shifted = spec;
    for (auto& slice : shifted.rows)
        for (auto& per_state : slice)
            for (auto& row : per_state)
                for (auto& r : row.rewards) r += c;
    const ScalarSolution base = qmdp::solve_expectation(spec);
    const ScalarSolution moved = qmdp::solve_expectation(shifted);
    const int T = spec.finite_periods();
    for (int t = 0; t <= T; ++t)
        for (int s = 0; s < spec.num_states(); ++s)
            CHECK(moved.value[t][s] == Catch::Approx(base.value[t][s] + c * (T - t)));
}

TEST_CASE("one-period nested quantile is the stage quantile") {
    const MdpSpec spec = equal_mean_two_arm();
    const ScalarSolution low = qmdp::solve_qbdp(spec, 0.4);
    CHECK(low.value[0][0] == 5.0);  // risky arm's 0.4-quantile is 0
    CHECK(low.policy.at(0, 0) == 1);
    const ScalarSolution high = qmdp::solve_qbdp(spec, 0.8);
    CHECK(high.value[0][0] == 10.0);
    CHECK(high.policy.at(0, 0) == 0);
    CHECK_THROWS_AS(qmdp::solve_qbdp(spec, 0.0), std::domain_error);
}

TEST_CASE("nested quantile on a deterministic model equals expectation") {
    Rng rng(63);
    testsupport::RandomMdpConfig cfg;
    cfg.max_successors = 1;
    for (int trial = 0; trial < 10; ++trial) {
        const MdpSpec spec = testsupport::random_mdp(rng, cfg);
        const ScalarSolution expectation = qmdp::solve_expectation(spec);
        const ScalarSolution nested = qmdp::solve_qbdp(spec, 0.5);
        for (int s = 0; s < spec.num_states(); ++s) {
            CHECK(nested.value[0][s] == expectation.value[0][s]);
            CHECK(nested.policy.at(0, s) == expectation.policy.at(0, s));
        }
    }
}

TEST_CASE("two-stage nesting matches a hand evaluation") {
    // stage 1 from u: coin over {0, 4}; tau = 0.5 quantile = 0
    // stage 0: reward 1 then u, against a sure 2
    MdpSpec spec;
    spec.states = {"root", "u", "lo", "hi", "safe"};
    spec.actions = {"go", "sure"};
    spec.horizon = qmdp::FiniteHorizon{2};
    spec.stationary = true;
    spec.integer_rewards = true;
    spec.terminal = {0.0, 0.0, 0.0, 0.0, 0.0};
    spec.admissible.assign(1, {{0, 1}, {0}, {0}, {0}, {0}});
    spec.rows.assign(1, {{qmdp::StageRow{{1}, {1.0}, {1.0}, {}},
                          qmdp::StageRow{{4}, {1.0}, {2.0}, {}}},
                         {qmdp::StageRow{{2, 3}, {0.5, 0.5}, {0.0, 4.0}, {}}, qmdp::StageRow{}},
                         {qmdp::StageRow{{2}, {1.0}, {0.0}, {}}, qmdp::StageRow{}},
                         {qmdp::StageRow{{3}, {1.0}, {0.0}, {}}, qmdp::StageRow{}},
                         {qmdp::StageRow{{4}, {1.0}, {0.0}, {}}, qmdp::StageRow{}}});
    const ScalarSolution sol = qmdp::solve_qbdp(spec, 0.5);
    // rho_{0.5}(coin) = 0, so "go" is worth 1 + 0 = 1 against the sure 2
    CHECK(sol.value[1][1] == 0.0);
    CHECK(sol.value[0][0] == 2.0);
    CHECK(sol.policy.at(0, 0) == 1);
}

TEST_CASE("exponential utility on deterministic models is risk neutral") {
    Rng rng(64);
    testsupport::RandomMdpConfig cfg;
    cfg.max_successors = 1;
    for (int trial = 0; trial < 10; ++trial) {
        const MdpSpec spec = testsupport::random_mdp(rng, cfg);
        const ScalarSolution expectation = qmdp::solve_expectation(spec);
        for (double gamma_u : {-0.7, 0.7}) {
            const ScalarSolution utility = qmdp::solve_exp_utility(spec, gamma_u);
            for (int s = 0; s < spec.num_states(); ++s) {
                CHECK(utility.policy.at(0, s) == expectation.policy.at(0, s));
                CHECK(utility.value[0][s] == Catch::Approx(expectation.value[0][s]));
            }
        }
    }
}

TEST_CASE("vanishing risk aversion recovers the expectation-optimal choices") {
    Rng rng(65);
    for (int trial = 0; trial < 10; ++trial) {
        const MdpSpec spec = testsupport::random_mdp(rng, {});
        const ScalarSolution expectation = qmdp::solve_expectation(spec);
        const ScalarSolution nearly = qmdp::solve_exp_utility(spec, 1e-6);
        for (int t = 0; t < spec.finite_periods(); ++t)
            for (int s = 0; s < spec.num_states(); ++s) {
                // identical action unless the expectation problem is nearly tied
                const auto& adm = spec.admissible_at(t, s);
                if (adm.size() < 2) continue;
                double best = -1e300, second = -1e300;
                for (int a : adm) {
                    const auto& row = spec.row(t, s, a);
                    double q = 0.0;
                    for (std::size_t e = 0; e < row.successors.size(); ++e)
                        q += row.probs[e] * (row.rewards[e] + expectation.value[t + 1][row.successors[e]]);
                    if (q > best) {
                        second = best;
                        best = q;
                    } else {
                        second = std::max(second, q);
                    }
                }
                if (best - second > 1e-3)
                    CHECK(nearly.policy.at(t, s) == expectation.policy.at(t, s));
            }
    }
}

TEST_CASE("risk-averse utility prefers the lower-variance arm at equal means") {
    const MdpSpec spec = equal_mean_two_arm();
    const ScalarSolution averse = qmdp::solve_exp_utility(spec, 0.5);
    CHECK(averse.policy.at(0, 0) == 1);
    const ScalarSolution seeking = qmdp::solve_exp_utility(spec, -0.5);
    CHECK(seeking.policy.at(0, 0) == 0);
    CHECK_THROWS_AS(qmdp::solve_exp_utility(spec, 0.0), std::domain_error);
}

TEST_CASE("utility overflow reports a rescaling hint") {
    MdpSpec spec = equal_mean_two_arm();
    for (auto& slice : spec.rows)
        for (auto& per_state : slice)
            for (auto& row : per_state)
                for (auto& r : row.rewards) r *= 1e5;
    spec.integer_rewards = false;
    CHECK_THROWS_WITH(qmdp::solve_exp_utility(spec, -50.0),
                      Catch::Matchers::ContainsSubstring("rescale"));
}

TEST_CASE("simulation basics: determinism and exactness") {
    const MdpSpec spec = equal_mean_two_arm();
    MarkovPolicy sure;
    sure.stationary = true;
    sure.action.assign(1, {1, 0, 0, 0});
    qmdp::MarkovPolicyDriver driver(sure);
    const auto cdf = qmdp::simulate_policy(spec, driver, 0, 500, 7);
    CHECK(cdf.values().size() == 1);  // deterministic policy, point mass
    CHECK(cdf.quantile(0.3) == 5.0);

    MarkovPolicy risky;
    risky.stationary = true;
    risky.action.assign(1, {0, 0, 0, 0});
    qmdp::MarkovPolicyDriver risky_driver(risky);
    const auto a = qmdp::simulate_policy(spec, risky_driver, 0, 2000, 11);
    const auto b = qmdp::simulate_policy(spec, risky_driver, 0, 2000, 11);
    CHECK(a.values() == b.values());
    CHECK(a.counts() == b.counts());

    // empirical mean within 3 standard errors of the exact mean (5.0)
    const double se = 5.0 / std::sqrt(2000.0);
    CHECK(std::fabs(a.mean() - 5.0) <= 3 * se);
}

TEST_CASE("exact policy distributions confirm the simulator") {
    Rng rng(66);
    const MdpSpec spec = testsupport::random_mdp(rng, {});
    const ScalarSolution sol = qmdp::solve_expectation(spec);
    const auto exact = exact_policy_dist(spec, sol.policy, 0);
    double mean = 0.0;
    for (const auto& [v, p] : exact) mean += v * p;
    CHECK(mean == Catch::Approx(sol.value[0][0]).margin(1e-12));

    qmdp::MarkovPolicyDriver driver(sol.policy);
    const auto cdf = qmdp::simulate_policy(spec, driver, 0, 20000, 3);
    double spread = 0.0;
    for (const auto& [v, p] : exact) spread = std::max(spread, std::fabs(v));
    const double se = (spread + 1.0) / std::sqrt(20000.0);
    CHECK(std::fabs(cdf.mean() - mean) <= 4 * se);
}
