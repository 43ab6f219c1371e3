#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "qmdp/common.hpp"
#include "qmdp/dp.hpp"
#include "qmdp/mdp.hpp"
#include "qmdp/opt.hpp"
#include "qmdp/policy.hpp"
#include "qmdp/step_curve.hpp"

namespace qmdp {

// The CVaR backward recursion is evaluated through the tail integral of the
// quantile companion curves: for a level curve u'(.) the CVaR value at tau
// is
//     u(tau) = (1 / (1 - tau)) * integral_tau^1 u'(v) dv,
// which is exact because the integrand is piecewise constant. Equivalently,
// h(tau) = (1 - tau) * u(tau) is piecewise linear with slope -u'(tau), so
// the max over actions is taken as an upper envelope in h-space, where it
// stays exactly representable. The sampled grid of G interior points exists
// for export and inspection; no interpolation enters the recursion.

namespace detail {

inline double cvar_from_quantile_curve(const StepCurve& quant, double tau) {
    if (tau >= 1.0) return quant.value_at(1.0);
    return quant.tail_integral(tau) / (1.0 - tau);
}

/// Upper envelope of the curves' tail integrals, returned as the step curve
/// of the envelope's negative slope. On every stretch where one action's
/// h-line dominates, the output carries that action's quantile value, so the
/// result is the per-tau quantile companion of the pointwise CVaR maximum.
inline StepCurve envelope_quantile(std::span<const StepCurve> curves, double value_eps) {
    if (curves.empty()) throw std::invalid_argument("envelope_quantile: no curves");
    if (curves.size() == 1) return curves[0];

    const std::vector<double> grid = merged_breakpoints(curves);
    const std::size_t m = grid.size();
    const std::size_t k = curves.size();

    // value of each curve on (grid[j], grid[j+1]] and tail integral at the
    // interval's right end
    std::vector<std::vector<double>> value(k, std::vector<double>(m));
    std::vector<std::vector<double>> tail(k, std::vector<double>(m + 1, 0.0));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double right = (j + 1 < m) ? grid[j + 1] : 1.0;
            const double mid = grid[j] + (right - grid[j]) / 2.0;
            value[i][j] = curves[i].value_at(mid);
        }
        for (std::size_t j = m; j-- > 0;) {
            const double right = (j + 1 < m) ? grid[j + 1] : 1.0;
            tail[i][j] = tail[i][j + 1] + value[i][j] * (right - grid[j]);
        }
    }

    std::vector<StepCurve::Piece> out;
    std::vector<double> cuts;
    for (std::size_t j = 0; j < m; ++j) {
        const double left = grid[j];
        const double right = (j + 1 < m) ? grid[j + 1] : 1.0;
        // candidate switch points: interval ends plus pairwise h-crossings
        cuts.clear();
        cuts.push_back(left);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t l = i + 1; l < k; ++l) {
                const double dv = value[i][j] - value[l][j];
                if (dv == 0.0) continue;
                // h_i(left + d) = h_i(right-end anchored): h_i(x) = tail[i][j+1]
                //   + value[i][j] * (right - x); equate the two lines
                const double d = (tail[l][j + 1] - tail[i][j + 1]) / dv;
                const double x = right - d;
                if (x > left + kProbEps && x < right - kProbEps) cuts.push_back(x);
            }
        std::sort(cuts.begin(), cuts.end());
        cuts.erase(std::unique(cuts.begin(), cuts.end(),
                               [](double a, double b) { return b - a <= kProbEps; }),
                   cuts.end());
        for (std::size_t c = 0; c < cuts.size(); ++c) {
            const double seg_right = (c + 1 < cuts.size()) ? cuts[c + 1] : right;
            const double mid = cuts[c] + (seg_right - cuts[c]) / 2.0;
            std::size_t best = 0;
            double best_h = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < k; ++i) {
                const double h = tail[i][j + 1] + value[i][j] * (right - mid);
                if (h > best_h) {
                    best_h = h;
                    best = i;
                }
            }
            out.push_back({cuts[c], value[best][j]});
        }
    }
    return StepCurve(std::move(out), value_eps);
}

}  // namespace detail

/// Paired CVaR value functions: u_quant[t][s] is the quantile companion
/// curve u'_t(s, .), and the CVaR value u_t(s, tau) is read from it through
/// the tail integral. Per-action companions drive policy execution. The
/// grid_size fixes the uniform interior tau grid used by exports.
struct CvarTable {
    Horizon horizon = FiniteHorizon{1};
    std::vector<std::string> states;
    std::vector<std::string> actions;
    int grid_size = 1001;

    std::vector<std::vector<StepCurve>> u_quant;                        // [t][s], t = 0..T
    std::vector<std::vector<std::vector<StepCurve>>> u_quant_action;    // [t][s][a]

    std::vector<double> grid_taus() const {
        std::vector<double> taus;
        taus.reserve(static_cast<std::size_t>(grid_size));
        for (int j = 1; j <= grid_size; ++j)
            taus.push_back(static_cast<double>(j) / (grid_size + 1));
        return taus;
    }

    /// Optimal CVaR of cumulative reward from (t, s) at level tau.
    double u_at(int t, int s, double tau) const {
        return detail::cvar_from_quantile_curve(u_quant.at(t)[s], tau);
    }

    /// Optimal cumulative-reward quantile under the CVaR-optimal actions.
    double u_quant_at(int t, int s, double tau) const { return u_quant.at(t)[s].value_at(tau); }

    double u_action_at(int t, int s, int a, double tau) const {
        const StepCurve& c = u_quant_action.at(t)[s][a];
        if (c.empty()) throw std::logic_error("CvarTable: action not admissible");
        return detail::cvar_from_quantile_curve(c, tau);
    }
};

/// Backward dynamic programming for the CVaR objective. Each stage solves
/// the same allocation problem as the quantile recursion on the companion
/// curves u'_{t+1}; the per-action CVaR is the scaled tail integral of the
/// resulting curve, and the action max is the h-space upper envelope.
inline CvarTable cvar_solve(const MdpSpec& spec, int grid_size = 1001,
                            const SolveOptions& opts = {}) {
    opts.check();
    if (grid_size < 2) throw std::domain_error("cvar_solve: grid size must be >= 2");
    require_valid(spec);
    if (!spec.is_finite())
        throw std::invalid_argument("cvar_solve: finite-horizon model required");
    const int T = spec.finite_periods();
    const int S = spec.num_states();
    const double value_eps = effective_value_eps(spec, opts);

    CvarTable table;
    table.horizon = spec.horizon;
    table.states = spec.states;
    table.actions = spec.actions;
    table.grid_size = grid_size;
    table.u_quant.assign(static_cast<std::size_t>(T) + 1, {});
    table.u_quant_action.assign(static_cast<std::size_t>(T), {});

    std::vector<StepCurve> next(S);
    for (int s = 0; s < S; ++s) next[s] = StepCurve::constant(spec.terminal_reward(s));
    table.u_quant[static_cast<std::size_t>(T)] = next;

    for (int t = T - 1; t >= 0; --t) {
        std::vector<StepCurve> cur(S);
        auto& action_row = table.u_quant_action[static_cast<std::size_t>(t)];
        action_row.assign(S, {});
        detail::for_each_state(S, opts.threads, [&](int s) {
            const auto& adm = spec.admissible_at(t, s);
            std::vector<StepCurve> curves;
            curves.reserve(adm.size());
            for (int a : adm) {
                const StageInstance stage = stage_inputs(spec, next, t, s, a, value_eps);
                curves.push_back(
                    detail::capped(solve_opt_full(stage.inst, value_eps), opts, value_eps));
            }
            cur[s] = detail::capped(detail::envelope_quantile(curves, value_eps), opts, value_eps);
            action_row[s].assign(spec.num_actions(), StepCurve());
            for (std::size_t i = 0; i < adm.size(); ++i)
                action_row[s][adm[i]] = std::move(curves[i]);
        });
        table.u_quant[static_cast<std::size_t>(t)] = std::move(cur);
        next = table.u_quant[static_cast<std::size_t>(t)];
    }
    return table;
}

/// Greedy CVaR action at an augmented state; ties broken by the lowest
/// action index.
inline int cvar_act(const CvarTable& table, const MdpSpec& spec, int t,
                    const AugmentedState& aug) {
    const auto& adm = spec.admissible_at(t, aug.state);
    int best = adm.front();
    double best_value = 0.0;
    bool first = true;
    for (int a : adm) {
        const double value = table.u_action_at(t, aug.state, a, aug.tau);
        if (first || value > best_value) {
            best = a;
            best_value = value;
            first = false;
        }
    }
    return best;
}

/// Next level after a realized transition under the CVaR policy: the
/// probability mass of the successor's branch at or below the achieved
/// stage quantile. Written out, the branch whose outcomes all sit below the
/// quantile is fully written off (level 1) and the branches carrying the
/// upper tail continue at their conditional cdf level.
inline double cvar_step_quantile(const CvarTable& table, const MdpSpec& spec, int t,
                                 const AugmentedState& aug, int action, int successor) {
    const StepCurve& action_curve = table.u_quant_action.at(t)[aug.state][action];
    if (action_curve.empty()) throw std::logic_error("cvar_step_quantile: action not stored");
    const double level = action_curve.value_at(aug.tau);
    const auto& next = table.u_quant.at(static_cast<std::size_t>(t) + 1);
    const StageInstance stage = stage_inputs(spec, next, t, aug.state, action);
    const int branch = stage.branch_of(successor);
    if (branch < 0)
        throw std::domain_error("cvar_step_quantile: successor has zero probability");
    const auto mass = cdf_allocation(stage.inst, level);
    return std::min(1.0, std::max(0.0, mass[static_cast<std::size_t>(branch)]));
}

}  // namespace qmdp
