#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "qmdp/common.hpp"
#include "qmdp/mdp.hpp"
#include "qmdp/opt.hpp"
#include "qmdp/step_curve.hpp"

namespace qmdp {

/// Knobs shared by the finite-horizon solver and value iteration.
struct SolveOptions {
    /// When set, every curve is restricted to N uniform breakpoints after
    /// each solve step. Values are rounded down (toward the left piece), so
    /// compressed promises stay achievable.
    std::optional<int> breakpoint_cap;

    /// Tolerance for merging equal curve values. Defaults to exact merging
    /// for integer-reward models and 1e-9 otherwise.
    std::optional<double> value_tolerance;

    double vi_epsilon = 1e-6;  // sup-norm accuracy target of value iteration
    int vi_max_iters = 100000;
    int threads = 1;

    bool store_action_curves = true;  // keep per-action curves for policy execution
    bool store_all_stages = true;     // false: keep only the t = 0 and terminal rows

    /// Levels at which the greedy action is recorded per (t, s) during the
    /// solve. Costs a few ints per cell, so policy maps stay available even
    /// for frontier-only solves of large models.
    std::vector<double> policy_slice_taus;

    void check() const {
        if (breakpoint_cap && *breakpoint_cap < 2)
            throw std::invalid_argument("SolveOptions: breakpoint_cap must be >= 2");
        if (!(vi_epsilon > 0.0))
            throw std::invalid_argument("SolveOptions: vi_epsilon must be positive");
        if (threads < 1) throw std::invalid_argument("SolveOptions: threads must be >= 1");
    }
};

inline double effective_value_eps(const MdpSpec& spec, const SolveOptions& opts) {
    if (opts.value_tolerance) return *opts.value_tolerance;
    return spec.integer_rewards ? 0.0 : kValueEps;
}

/// Solved value functions: v[t][s] is the optimal quantile curve of
/// cumulative reward from (t, s), and v_action[t][s][a] the curve with the
/// first action pinned to a. Finite-horizon tables carry T + 1 value rows
/// (row T holds the terminal constants) and T action rows; discounted tables
/// carry a single fixed-point row each.
struct ValueTable {
    Horizon horizon = FiniteHorizon{1};
    std::vector<std::string> states;
    std::vector<std::string> actions;

    std::vector<std::vector<StepCurve>> v;
    std::vector<std::vector<std::vector<StepCurve>>> v_action;

    /// Sup-norm successive differences per sweep (value iteration only).
    std::vector<double> vi_residuals;

    /// Greedy-action snapshots requested through policy_slice_taus:
    /// policy_slices[k][t][s] is the argmax action at level
    /// policy_slice_taus[k].
    std::vector<double> policy_slice_taus;
    std::vector<std::vector<std::vector<int>>> policy_slices;

    bool is_finite() const { return std::holds_alternative<FiniteHorizon>(horizon); }
    int stage_of(int t) const { return is_finite() ? t : 0; }

    const StepCurve& value(int t, int s) const {
        const auto& row = v.at(static_cast<std::size_t>(stage_of(t)));
        if (row.empty())
            throw std::logic_error("ValueTable: stage " + std::to_string(t) +
                                   " was not stored (frontier-only solve)");
        return row[static_cast<std::size_t>(s)];
    }

    bool has_action_curves(int t) const {
        const std::size_t stage = static_cast<std::size_t>(stage_of(t));
        return stage < v_action.size() && !v_action[stage].empty();
    }

    const StepCurve& action_value(int t, int s, int a) const {
        const auto& row = v_action.at(static_cast<std::size_t>(stage_of(t)));
        if (row.empty())
            throw std::logic_error("ValueTable: action curves for stage " + std::to_string(t) +
                                   " were not stored");
        return row[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
    }
};

/// One stage sub-problem: the allocation instance for (t, s, a) built from
/// the next-stage curves, plus the successor state behind each branch.
struct StageInstance {
    OptInstance inst;
    std::vector<int> successors;

    int branch_of(int successor) const {
        for (std::size_t i = 0; i < successors.size(); ++i)
            if (successors[i] == successor) return static_cast<int>(i);
        return -1;
    }
};

/// Builds the stage instance: one branch per positive-probability successor,
/// whose curve is the quantile function of stage reward plus continuation
/// value conditional on that successor. Deterministic rewards shift the
/// continuation curve; distributional rewards convolve with it.
inline StageInstance stage_inputs(const MdpSpec& spec, std::span<const StepCurve> v_next, int t,
                                  int s, int a, double value_eps = 0.0) {
    const StageRow& row = spec.row(t, s, a);
    StageInstance out;
    for (std::size_t e = 0; e < row.successors.size(); ++e) {
        const double p = e < row.probs.size() ? row.probs[e] : 0.0;
        if (p <= 0.0) continue;
        const int succ = row.successors[e];
        StepCurve curve;
        if (spec.reward_kind == RewardKind::deterministic) {
            if (e >= row.rewards.size())
                throw std::domain_error("stage_inputs: missing deterministic reward");
            curve = v_next[succ].shifted(row.rewards[e]);
        } else {
            if (e >= row.reward_dists.size() || row.reward_dists[e].size() == 0)
                throw std::domain_error("stage_inputs: missing reward distribution");
            const DiscreteDistribution continuation = curve_to_dist(v_next[succ], value_eps);
            curve = dist_to_curve(convolve(row.reward_dists[e], continuation, value_eps));
        }
        out.inst.branches.push_back({p, std::move(curve)});
        out.successors.push_back(succ);
    }
    return out;
}

namespace detail {

/// Runs fn(s) for every state, splitting the range across opts.threads.
template <typename Fn>
void for_each_state(int num_states, int threads, Fn&& fn) {
    if (threads <= 1 || num_states < 2 * threads) {
        for (int s = 0; s < num_states; ++s) fn(s);
        return;
    }
    std::vector<std::thread> pool;
    const int chunk = (num_states + threads - 1) / threads;
    for (int w = 0; w < threads; ++w) {
        const int lo = w * chunk;
        const int hi = std::min(num_states, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (int s = lo; s < hi; ++s) fn(s);
        });
    }
    for (auto& th : pool) th.join();
}

inline StepCurve capped(StepCurve curve, const SolveOptions& opts, double value_eps) {
    if (!opts.breakpoint_cap) return curve;
    return compress_to_grid(curve, *opts.breakpoint_cap, value_eps);
}

/// One Bellman stage: per-action curves and their pointwise max for every
/// state, reading the continuation from v_next. slice_out, when given, gets
/// the greedy action per requested level (row k of slice_out corresponds to
/// opts.policy_slice_taus[k]).
inline void solve_stage(const MdpSpec& spec, std::span<const StepCurve> v_next, int t,
                        const SolveOptions& opts, double value_eps,
                        std::vector<StepCurve>& v_out,
                        std::vector<std::vector<StepCurve>>* action_out,
                        std::vector<std::vector<int>>* slice_out = nullptr) {
    const int S = spec.num_states();
    for_each_state(S, opts.threads, [&](int s) {
        const auto& adm = spec.admissible_at(t, s);
        std::vector<StepCurve> curves;
        curves.reserve(adm.size());
        for (int a : adm) {
            const StageInstance stage = stage_inputs(spec, v_next, t, s, a, value_eps);
            curves.push_back(capped(solve_opt_full(stage.inst, value_eps), opts, value_eps));
        }
        if (slice_out) {
            for (std::size_t k = 0; k < opts.policy_slice_taus.size(); ++k) {
                const double tau = opts.policy_slice_taus[k];
                int best = adm.front();
                double best_value = curves.front().value_at(tau);
                for (std::size_t i = 1; i < adm.size(); ++i) {
                    const double value = curves[i].value_at(tau);
                    if (value > best_value) {
                        best_value = value;
                        best = adm[i];
                    }
                }
                (*slice_out)[k][s] = best;
            }
        }
        v_out[s] = capped(pointwise_max(curves, value_eps), opts, value_eps);
        if (action_out) {
            auto& per_action = (*action_out)[s];
            per_action.assign(spec.num_actions(), StepCurve());
            for (std::size_t k = 0; k < adm.size(); ++k)
                per_action[adm[k]] = std::move(curves[k]);
        }
    });
}

}  // namespace detail

/// Finite-horizon backward dynamic programming: v_T holds the terminal
/// constants; each earlier stage solves the allocation problem per action
/// and maximizes pointwise over actions. v[0][s0] evaluated at tau is the
/// optimal tau-quantile of cumulative reward from s0.
inline ValueTable backward_solve(const MdpSpec& spec, const SolveOptions& opts = {}) {
    opts.check();
    require_valid(spec);
    if (!spec.is_finite())
        throw std::invalid_argument("backward_solve: finite-horizon model required");
    const int T = spec.finite_periods();
    const int S = spec.num_states();
    const double value_eps = effective_value_eps(spec, opts);

    ValueTable table;
    table.horizon = spec.horizon;
    table.states = spec.states;
    table.actions = spec.actions;
    table.v.assign(static_cast<std::size_t>(T) + 1, {});
    if (opts.store_action_curves && opts.store_all_stages)
        table.v_action.assign(static_cast<std::size_t>(T), {});

    table.policy_slice_taus = opts.policy_slice_taus;
    if (!opts.policy_slice_taus.empty())
        table.policy_slices.assign(
            opts.policy_slice_taus.size(),
            std::vector<std::vector<int>>(static_cast<std::size_t>(T), std::vector<int>(S, 0)));

    std::vector<StepCurve> terminal(S);
    for (int s = 0; s < S; ++s) terminal[s] = StepCurve::constant(spec.terminal_reward(s));
    table.v[static_cast<std::size_t>(T)] = terminal;

    std::vector<StepCurve> next = std::move(terminal);
    std::vector<std::vector<int>> stage_slices(opts.policy_slice_taus.size(),
                                               std::vector<int>(S, 0));
    for (int t = T - 1; t >= 0; --t) {
        std::vector<StepCurve> cur(S);
        std::vector<std::vector<StepCurve>>* action_slot = nullptr;
        if (opts.store_action_curves && opts.store_all_stages) {
            table.v_action[static_cast<std::size_t>(t)].assign(S, {});
            action_slot = &table.v_action[static_cast<std::size_t>(t)];
        }
        detail::solve_stage(spec, next, t, opts, value_eps, cur, action_slot,
                            opts.policy_slice_taus.empty() ? nullptr : &stage_slices);
        for (std::size_t k = 0; k < opts.policy_slice_taus.size(); ++k)
            table.policy_slices[k][static_cast<std::size_t>(t)] = stage_slices[k];
        if (opts.store_all_stages || t == 0) table.v[static_cast<std::size_t>(t)] = cur;
        next = std::move(cur);
    }
    return table;
}

/// Discounted-horizon value iteration: v <- max_a OPT(gamma * v + r), with
/// discounting applied to curve values only. Stops once the sup-norm
/// successive difference drops to vi_epsilon * (1 - gamma) / (2 gamma),
/// which bounds the distance to the fixed point by vi_epsilon.
inline ValueTable value_iterate(const MdpSpec& spec, const SolveOptions& opts = {}) {
    opts.check();
    require_valid(spec);
    if (spec.is_finite())
        throw std::invalid_argument("value_iterate: discounted model required");
    const double gamma = spec.discount();
    const int S = spec.num_states();
    const double value_eps = effective_value_eps(spec, opts);
    const double threshold = opts.vi_epsilon * (1.0 - gamma) / (2.0 * gamma);

    ValueTable table;
    table.horizon = spec.horizon;
    table.states = spec.states;
    table.actions = spec.actions;

    std::vector<StepCurve> cur(S, StepCurve::constant(0.0));
    bool converged = false;
    for (int iter = 0; iter < opts.vi_max_iters; ++iter) {
        std::vector<StepCurve> scaled(S);
        for (int s = 0; s < S; ++s) scaled[s] = cur[s].scaled(gamma);
        std::vector<StepCurve> next(S);
        detail::solve_stage(spec, scaled, 0, opts, value_eps, next, nullptr);
        double residual = 0.0;
        for (int s = 0; s < S; ++s) residual = std::max(residual, sup_distance(next[s], cur[s]));
        table.vi_residuals.push_back(residual);
        cur = std::move(next);
        if (residual <= threshold) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw std::runtime_error("value_iterate: no convergence after " +
                                 std::to_string(opts.vi_max_iters) + " sweeps, last residual " +
                                 std::to_string(table.vi_residuals.back()));

    table.v.assign(1, cur);
    if (opts.store_action_curves) {
        std::vector<StepCurve> scaled(S);
        for (int s = 0; s < S; ++s) scaled[s] = cur[s].scaled(gamma);
        table.v_action.assign(1, std::vector<std::vector<StepCurve>>(S));
        detail::for_each_state(S, opts.threads, [&](int s) {
            auto& per_action = table.v_action[0][s];
            per_action.assign(spec.num_actions(), StepCurve());
            for (int a : spec.admissible_at(0, s)) {
                const StageInstance stage = stage_inputs(spec, scaled, 0, s, a, value_eps);
                per_action[a] =
                    detail::capped(solve_opt_full(stage.inst, value_eps), opts, value_eps);
            }
        });
    }
    return table;
}

/// The Bellman operator applied once to an arbitrary curve table; exposed
/// for contraction checks.
inline std::vector<StepCurve> apply_bellman(const MdpSpec& spec,
                                            const std::vector<StepCurve>& v,
                                            const SolveOptions& opts = {}) {
    require_valid(spec);
    if (spec.is_finite())
        throw std::invalid_argument("apply_bellman: discounted model required");
    const double gamma = spec.discount();
    const int S = spec.num_states();
    const double value_eps = effective_value_eps(spec, opts);
    std::vector<StepCurve> scaled(S);
    for (int s = 0; s < S; ++s) scaled[s] = v[s].scaled(gamma);
    std::vector<StepCurve> out(S);
    detail::solve_stage(spec, scaled, 0, opts, value_eps, out, nullptr);
    return out;
}

}  // namespace qmdp
