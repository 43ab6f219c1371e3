#pragma once

// Test-support generators and independent oracles. Everything here stays
// deliberately separate from the library implementation paths it checks:
// quantiles are recomputed by direct cumulative scans, convolutions by full
// joint enumeration, and optimal values by exhaustive policy enumeration.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include "qmdp/common.hpp"
#include "qmdp/distribution.hpp"
#include "qmdp/mdp.hpp"

namespace testsupport {

using qmdp::DiscreteDistribution;
using qmdp::Rng;

/// Random composition of `denom` into `parts` positive integers, scaled to
/// probabilities. All outputs are dyadic rationals (denom a power of two),
/// so sums and products of them are exact in double arithmetic; the
/// exact-equality oracle tests rely on this.
inline std::vector<double> dyadic_probs(Rng& rng, int parts, int denom = 64) {
    std::vector<int> cuts;
    for (int i = 0; i < parts - 1; ++i)
        cuts.push_back(static_cast<int>(rng.next_int(1, denom - 1)));
    cuts.push_back(0);
    cuts.push_back(denom);
    std::sort(cuts.begin(), cuts.end());
    std::vector<double> probs;
    for (int i = 1; i < static_cast<int>(cuts.size()); ++i)
        probs.push_back(static_cast<double>(cuts[i] - cuts[i - 1]) / denom);
    // avoid zero-probability parts by reassigning from the largest part
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] > 0.0) continue;
        auto mx = std::max_element(probs.begin(), probs.end());
        *mx -= 1.0 / denom;
        probs[i] += 1.0 / denom;
    }
    return probs;
}

/// Random distribution with distinct integer values and dyadic
/// probabilities.
inline DiscreteDistribution random_int_dist(Rng& rng, int max_atoms, int value_lo,
                                            int value_hi) {
    const int span = value_hi - value_lo + 1;
    const int atoms = static_cast<int>(rng.next_int(1, std::min(max_atoms, span)));
    std::vector<int> values;
    while (static_cast<int>(values.size()) < atoms) {
        const int v = static_cast<int>(rng.next_int(value_lo, value_hi));
        if (std::find(values.begin(), values.end(), v) == values.end()) values.push_back(v);
    }
    const std::vector<double> probs = dyadic_probs(rng, atoms);
    std::vector<DiscreteDistribution::Atom> out;
    for (int i = 0; i < atoms; ++i)
        out.push_back({static_cast<double>(values[i]), probs[i]});
    return DiscreteDistribution(std::move(out));
}

/// Independent quantile: direct scan of the sorted (value, prob) pairs.
inline double scan_quantile(std::vector<std::pair<double, double>> pairs, double tau) {
    std::sort(pairs.begin(), pairs.end());
    if (tau <= 0.0) return pairs.front().first;
    double cum = 0.0;
    for (const auto& [v, p] : pairs) {
        cum += p;
        if (cum >= tau) return v;
    }
    return pairs.back().first;
}

/// Independent CVaR: quantile by scan, then the tail-mean formula evaluated
/// term by term.
inline double scan_cvar(const std::vector<std::pair<double, double>>& pairs, double tau) {
    const double q = scan_quantile(pairs, tau);
    double excess = 0.0;
    for (const auto& [v, p] : pairs)
        if (v > q) excess += (v - q) * p;
    return q + excess / (1.0 - tau);
}

inline std::vector<std::pair<double, double>> as_pairs(const DiscreteDistribution& d) {
    std::vector<std::pair<double, double>> out;
    for (const auto& a : d.atoms()) out.push_back({a.value, a.prob});
    return out;
}

/// Full joint enumeration of the sum of two independent discrete variables.
inline std::vector<std::pair<double, double>> enumerate_sum(const DiscreteDistribution& d1,
                                                            const DiscreteDistribution& d2) {
    std::map<double, double> acc;
    for (const auto& a : d1.atoms())
        for (const auto& b : d2.atoms()) acc[a.value + b.value] += a.prob * b.prob;
    return {acc.begin(), acc.end()};
}

/// Flattened mixture as raw pairs (no library canonicalization).
inline std::vector<std::pair<double, double>> flatten_mixture(
    const std::vector<std::pair<double, DiscreteDistribution>>& branches) {
    std::vector<std::pair<double, double>> out;
    for (const auto& [p, dist] : branches) {
        if (p <= 0.0) continue;
        for (const auto& a : dist.atoms()) out.push_back({a.value, p * a.prob});
    }
    return out;
}

/// Random non-decreasing step curve with dyadic breakpoints and integer
/// values.
inline qmdp::StepCurve random_monotone_curve(Rng& rng, int max_pieces, int value_lo,
                                             int value_hi) {
    return qmdp::dist_to_curve(random_int_dist(rng, max_pieces, value_lo, value_hi));
}

// ---------------------------------------------------------------------------
// Random small MDPs with dyadic transition probabilities and integer rewards
// (both finite-horizon and stationary/discounted shapes).
// ---------------------------------------------------------------------------

struct RandomMdpConfig {
    int min_states = 2;
    int max_states = 3;
    int max_actions = 2;
    int min_periods = 1;
    int max_periods = 3;
    int reward_lo = -3;
    int reward_hi = 3;
    int max_successors = 3;
    bool stationary = false;  // finite-horizon specs may still vary by t
};

inline qmdp::MdpSpec random_mdp(Rng& rng, const RandomMdpConfig& cfg) {
    qmdp::MdpSpec spec;
    const int S = static_cast<int>(rng.next_int(cfg.min_states, cfg.max_states));
    const int A = static_cast<int>(rng.next_int(1, cfg.max_actions));
    const int T = static_cast<int>(rng.next_int(cfg.min_periods, cfg.max_periods));
    for (int s = 0; s < S; ++s) spec.states.push_back("s" + std::to_string(s));
    for (int a = 0; a < A; ++a) spec.actions.push_back("a" + std::to_string(a));
    spec.horizon = qmdp::FiniteHorizon{T};
    spec.stationary = cfg.stationary;
    spec.reward_kind = qmdp::RewardKind::deterministic;
    spec.integer_rewards = true;
    spec.terminal.assign(S, 0.0);

    const int slices = cfg.stationary ? 1 : T;
    std::vector<int> all_actions;
    for (int a = 0; a < A; ++a) all_actions.push_back(a);
    spec.admissible.assign(slices, std::vector<std::vector<int>>(S, all_actions));
    spec.rows.assign(slices,
                     std::vector<std::vector<qmdp::StageRow>>(S, std::vector<qmdp::StageRow>(A)));

    for (int ti = 0; ti < slices; ++ti)
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                qmdp::StageRow& row = spec.rows[ti][s][a];
                const int succ_count =
                    static_cast<int>(rng.next_int(1, std::min(cfg.max_successors, S)));
                std::vector<int> succ;
                while (static_cast<int>(succ.size()) < succ_count) {
                    const int cand = static_cast<int>(rng.next_int(0, S - 1));
                    if (std::find(succ.begin(), succ.end(), cand) == succ.end())
                        succ.push_back(cand);
                }
                std::sort(succ.begin(), succ.end());
                const std::vector<double> probs = dyadic_probs(rng, succ_count);
                row.successors = succ;
                row.probs = probs;
                for (int e = 0; e < succ_count; ++e)
                    row.rewards.push_back(
                        static_cast<double>(rng.next_int(cfg.reward_lo, cfg.reward_hi)));
            }
    return spec;
}

/// Random stationary spec suitable for discounted solving.
inline qmdp::MdpSpec random_stationary_mdp(Rng& rng, int states, int actions, int reward_lo,
                                           int reward_hi, double gamma) {
    RandomMdpConfig cfg;
    cfg.max_states = states;
    cfg.max_actions = actions;
    cfg.max_periods = 1;
    cfg.reward_lo = reward_lo;
    cfg.reward_hi = reward_hi;
    cfg.stationary = true;
    qmdp::MdpSpec spec = random_mdp(rng, cfg);
    spec.horizon = qmdp::DiscountedHorizon{gamma};
    return spec;
}

// ---------------------------------------------------------------------------
// Exhaustive policy enumeration over deterministic history-dependent
// policies. Histories are state sequences (actions along a deterministic
// policy are implied), so a policy is one action per prefix-tree node.
// ---------------------------------------------------------------------------

struct PrefixTree {
    // node 0 is the root (s0 at t = 0); nodes at depth t < T carry decisions
    struct Node {
        int state;
        int depth;
        std::vector<int> children;  // child node per successor state id, -1 if absent
    };
    std::vector<Node> nodes;
    std::vector<int> decision_nodes;  // nodes with depth < T
};

inline PrefixTree build_prefix_tree(const qmdp::MdpSpec& spec, int s0) {
    const int T = spec.finite_periods();
    const int S = spec.num_states();
    PrefixTree tree;
    tree.nodes.push_back({s0, 0, std::vector<int>(S, -1)});
    for (std::size_t idx = 0; idx < tree.nodes.size(); ++idx) {
        const int depth = tree.nodes[idx].depth;
        if (depth >= T) continue;
        tree.decision_nodes.push_back(static_cast<int>(idx));
        for (int s = 0; s < S; ++s) {
            tree.nodes.push_back({s, depth + 1, std::vector<int>(S, -1)});
            tree.nodes[idx].children[s] = static_cast<int>(tree.nodes.size()) - 1;
        }
    }
    return tree;
}

/// Exact cumulative-reward distribution of one policy assignment (action per
/// decision node), as raw (value, prob) pairs merged over equal totals.
inline std::vector<std::pair<double, double>> policy_distribution(
    const qmdp::MdpSpec& spec, const PrefixTree& tree, const std::vector<int>& action_of_node) {
    std::map<double, double> acc;
    struct Frame {
        int node;
        double prob;
        double total;
    };
    std::vector<Frame> stack = {{0, 1.0, 0.0}};
    const int T = spec.finite_periods();
    while (!stack.empty()) {
        const Frame f = stack.back();
        stack.pop_back();
        const auto& node = tree.nodes[f.node];
        if (node.depth == T) {
            acc[f.total + spec.terminal_reward(node.state)] += f.prob;
            continue;
        }
        const int a = action_of_node[f.node];
        const auto& row = spec.row(node.depth, node.state, a);
        for (std::size_t e = 0; e < row.successors.size(); ++e) {
            if (row.probs[e] <= 0.0) continue;
            const int child = node.children[row.successors[e]];
            stack.push_back({child, f.prob * row.probs[e], f.total + row.rewards[e]});
        }
    }
    return {acc.begin(), acc.end()};
}

/// Quantiles of a sorted (value, prob) list at an ascending tau grid, in one
/// cumulative pass.
inline void quantiles_into(const std::vector<std::pair<double, double>>& dist,
                           const std::vector<double>& taus, std::vector<double>& out) {
    out.assign(taus.size(), dist.back().first);
    double cum = 0.0;
    std::size_t k = 0;
    while (k < taus.size() && taus[k] <= 0.0) out[k++] = dist.front().first;
    for (const auto& [v, p] : dist) {
        cum += p;
        while (k < taus.size() && taus[k] <= cum) out[k++] = v;
    }
}

/// For each tau in taus (ascending), the maximum over all deterministic
/// history-dependent policies of the tau-quantile of cumulative reward from
/// (s0, t = 0).
inline std::vector<double> enumerate_optimal_quantiles(const qmdp::MdpSpec& spec, int s0,
                                                       const std::vector<double>& taus) {
    const PrefixTree tree = build_prefix_tree(spec, s0);
    const int A = spec.num_actions();
    std::vector<int> assignment(tree.nodes.size(), 0);
    std::vector<double> best(taus.size(), -std::numeric_limits<double>::infinity());
    std::vector<double> qs;

    const std::size_t decisions = tree.decision_nodes.size();
    std::vector<int> odo(decisions, 0);
    bool done = false;
    while (!done) {
        for (std::size_t i = 0; i < decisions; ++i)
            assignment[tree.decision_nodes[i]] = odo[i];
        const auto dist = policy_distribution(spec, tree, assignment);
        quantiles_into(dist, taus, qs);
        for (std::size_t k = 0; k < taus.size(); ++k) best[k] = std::max(best[k], qs[k]);
        // odometer over action assignments; admissible sets are full in the
        // random instances this oracle is used with
        done = true;
        for (std::size_t i = 0; i < decisions; ++i) {
            if (odo[i] + 1 < A) {
                odo[i] += 1;
                std::fill(odo.begin(), odo.begin() + static_cast<long>(i), 0);
                done = false;
                break;
            }
        }
    }
    return best;
}

/// Same enumeration, scoring each policy by CVaR (Definition-style direct
/// evaluation) instead of the quantile.
inline std::vector<double> enumerate_optimal_cvars(const qmdp::MdpSpec& spec, int s0,
                                                   const std::vector<double>& taus) {
    const PrefixTree tree = build_prefix_tree(spec, s0);
    const int A = spec.num_actions();
    std::vector<int> assignment(tree.nodes.size(), 0);
    std::vector<double> best(taus.size(), -std::numeric_limits<double>::infinity());

    const std::size_t decisions = tree.decision_nodes.size();
    std::vector<int> odo(decisions, 0);
    bool done = false;
    while (!done) {
        for (std::size_t i = 0; i < decisions; ++i)
            assignment[tree.decision_nodes[i]] = odo[i];
        const auto dist = policy_distribution(spec, tree, assignment);
        for (std::size_t k = 0; k < taus.size(); ++k)
            best[k] = std::max(best[k], scan_cvar(dist, taus[k]));
        done = true;
        for (std::size_t i = 0; i < decisions; ++i) {
            if (odo[i] + 1 < A) {
                odo[i] += 1;
                std::fill(odo.begin(), odo.begin() + static_cast<long>(i), 0);
                done = false;
                break;
            }
        }
    }
    return best;
}

}  // namespace testsupport
