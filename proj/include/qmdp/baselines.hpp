#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "qmdp/common.hpp"
#include "qmdp/distribution.hpp"
#include "qmdp/mdp.hpp"

namespace qmdp {

/// Deterministic Markov policy: action per (time slice, state). Stationary
/// policies carry a single slice.
struct MarkovPolicy {
    bool stationary = true;
    std::vector<std::vector<int>> action;  // [time?][s]

    int at(int t, int s) const { return action[stationary ? 0 : t][s]; }
};

/// Per-(t, s) scalar values along with the induced Markov policy.
struct ScalarSolution {
    std::vector<std::vector<double>> value;  // [t][s]; finite tables carry T+1 rows
    MarkovPolicy policy;
};

namespace detail {

inline double edge_mean_reward(const MdpSpec& spec, const StageRow& row, std::size_t e) {
    if (spec.reward_kind == RewardKind::deterministic) return row.rewards[e];
    return row.reward_dists[e].mean();
}

}  // namespace detail

/// Risk-neutral baseline: standard backward induction for finite horizons
/// and expectation value iteration for discounted ones. Ties broken by the
/// lowest action index.
inline ScalarSolution solve_expectation(const MdpSpec& spec, double vi_epsilon = 1e-10,
                                        int vi_max_iters = 1000000) {
    require_valid(spec);
    const int S = spec.num_states();
    ScalarSolution out;

    if (spec.is_finite()) {
        const int T = spec.finite_periods();
        out.value.assign(static_cast<std::size_t>(T) + 1, std::vector<double>(S, 0.0));
        for (int s = 0; s < S; ++s) out.value[T][s] = spec.terminal_reward(s);
        out.policy.stationary = false;
        out.policy.action.assign(static_cast<std::size_t>(T), std::vector<int>(S, 0));
        for (int t = T - 1; t >= 0; --t)
            for (int s = 0; s < S; ++s) {
                double best = -std::numeric_limits<double>::infinity();
                int best_a = spec.admissible_at(t, s).front();
                for (int a : spec.admissible_at(t, s)) {
                    const StageRow& row = spec.row(t, s, a);
                    double q = 0.0;
                    for (std::size_t e = 0; e < row.successors.size(); ++e) {
                        if (row.probs[e] <= 0.0) continue;
                        q += row.probs[e] * (detail::edge_mean_reward(spec, row, e) +
                                             out.value[t + 1][row.successors[e]]);
                    }
                    if (q > best) {
                        best = q;
                        best_a = a;
                    }
                }
                out.value[t][s] = best;
                out.policy.action[t][s] = best_a;
            }
        return out;
    }

    const double gamma = spec.discount();
    std::vector<double> v(S, 0.0);
    out.policy.stationary = true;
    out.policy.action.assign(1, std::vector<int>(S, 0));
    for (int iter = 0; iter < vi_max_iters; ++iter) {
        std::vector<double> next(S);
        double residual = 0.0;
        for (int s = 0; s < S; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            int best_a = spec.admissible_at(0, s).front();
            for (int a : spec.admissible_at(0, s)) {
                const StageRow& row = spec.row(0, s, a);
                double q = 0.0;
                for (std::size_t e = 0; e < row.successors.size(); ++e) {
                    if (row.probs[e] <= 0.0) continue;
                    q += row.probs[e] *
                         (detail::edge_mean_reward(spec, row, e) + gamma * v[row.successors[e]]);
                }
                if (q > best) {
                    best = q;
                    best_a = a;
                }
            }
            next[s] = best;
            out.policy.action[0][s] = best_a;
            residual = std::max(residual, std::fabs(next[s] - v[s]));
        }
        v = std::move(next);
        if (residual <= vi_epsilon * (1.0 - gamma) / (2.0 * gamma)) {
            out.value.assign(1, v);
            return out;
        }
    }
    throw std::runtime_error("solve_expectation: value iteration did not converge");
}

/// Nested per-stage quantile baseline: each stage applies the tau-quantile
/// operator to stage reward plus next value over the transition
/// distribution. The innermost nest includes the terminal reward.
inline ScalarSolution solve_qbdp(const MdpSpec& spec, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw std::domain_error("solve_qbdp: tau outside (0,1)");
    require_valid(spec);
    if (!spec.is_finite()) throw std::invalid_argument("solve_qbdp: finite-horizon model required");
    const int S = spec.num_states();
    const int T = spec.finite_periods();

    ScalarSolution out;
    out.value.assign(static_cast<std::size_t>(T) + 1, std::vector<double>(S, 0.0));
    for (int s = 0; s < S; ++s) out.value[T][s] = spec.terminal_reward(s);
    out.policy.stationary = false;
    out.policy.action.assign(static_cast<std::size_t>(T), std::vector<int>(S, 0));

    for (int t = T - 1; t >= 0; --t)
        for (int s = 0; s < S; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            int best_a = spec.admissible_at(t, s).front();
            for (int a : spec.admissible_at(t, s)) {
                const StageRow& row = spec.row(t, s, a);
                std::vector<DiscreteDistribution::Atom> atoms;
                for (std::size_t e = 0; e < row.successors.size(); ++e) {
                    if (row.probs[e] <= 0.0) continue;
                    const double continuation = out.value[t + 1][row.successors[e]];
                    if (spec.reward_kind == RewardKind::deterministic) {
                        atoms.push_back({row.rewards[e] + continuation, row.probs[e]});
                    } else {
                        for (const auto& atom : row.reward_dists[e].atoms())
                            atoms.push_back({atom.value + continuation,
                                             row.probs[e] * atom.prob});
                    }
                }
                const double q = quantile_of(DiscreteDistribution(std::move(atoms)), tau);
                if (q > best) {
                    best = q;
                    best_a = a;
                }
            }
            out.value[t][s] = best;
            out.policy.action[t][s] = best_a;
        }
    return out;
}

/// Exponential-utility baseline via the multiplicative certainty-equivalent
/// recursion on m_t(s) = E[exp(-gamma_u * (reward + continuation))]. A
/// positive gamma_u is risk averse (m is minimized), a negative one risk
/// seeking (m is maximized); the certainty equivalent -log(m)/gamma_u is
/// maximized either way.
inline ScalarSolution solve_exp_utility(const MdpSpec& spec, double gamma_u) {
    if (gamma_u == 0.0) throw std::domain_error("solve_exp_utility: gamma_u must be nonzero");
    require_valid(spec);
    if (!spec.is_finite())
        throw std::invalid_argument("solve_exp_utility: finite-horizon model required");
    const int S = spec.num_states();
    const int T = spec.finite_periods();
    const bool averse = gamma_u > 0.0;

    std::vector<std::vector<double>> m(static_cast<std::size_t>(T) + 1,
                                       std::vector<double>(S, 1.0));
    for (int s = 0; s < S; ++s) m[T][s] = std::exp(-gamma_u * spec.terminal_reward(s));

    ScalarSolution out;
    out.value.assign(static_cast<std::size_t>(T) + 1, std::vector<double>(S, 0.0));
    out.policy.stationary = false;
    out.policy.action.assign(static_cast<std::size_t>(T), std::vector<int>(S, 0));

    for (int t = T - 1; t >= 0; --t)
        for (int s = 0; s < S; ++s) {
            double best_m = averse ? std::numeric_limits<double>::infinity() : 0.0;
            int best_a = spec.admissible_at(t, s).front();
            for (int a : spec.admissible_at(t, s)) {
                const StageRow& row = spec.row(t, s, a);
                double acc = 0.0;
                for (std::size_t e = 0; e < row.successors.size(); ++e) {
                    if (row.probs[e] <= 0.0) continue;
                    double factor;
                    if (spec.reward_kind == RewardKind::deterministic) {
                        factor = std::exp(-gamma_u * row.rewards[e]);
                    } else {
                        factor = 0.0;
                        for (const auto& atom : row.reward_dists[e].atoms())
                            factor += atom.prob * std::exp(-gamma_u * atom.value);
                    }
                    acc += row.probs[e] * factor * m[t + 1][row.successors[e]];
                }
                if (!std::isfinite(acc))
                    throw std::runtime_error(
                        "solve_exp_utility: utility overflow; rescale rewards or reduce "
                        "|gamma_u|");
                const bool better = averse ? acc < best_m : acc > best_m;
                if (better) {
                    best_m = acc;
                    best_a = a;
                }
            }
            m[t][s] = best_m;
            out.policy.action[t][s] = best_a;
            out.value[t][s] = -std::log(best_m) / gamma_u;
        }
    for (int s = 0; s < S; ++s) out.value[T][s] = spec.terminal_reward(s);
    return out;
}

}  // namespace qmdp
