#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "qmdp/common.hpp"
#include "qmdp/step_curve.hpp"

namespace qmdp {

/// One branch of a mixture problem: selection probability plus the
/// piecewise-constant payoff curve g(i, .) indexed by a budget in [0, 1].
struct OptBranch {
    double prob;
    StepCurve curve;
};

/// Instance of the budget-allocation problem
///   max_q  min_{i : q_i != 1}  g(i, q_i)
///   s.t.   sum_i p_i q_i <= tau,  q_i in [0, 1],
/// solved for every tau in [0, 1] simultaneously. When each g(i, .) is the
/// quantile function of a branch distribution, the solution value equals the
/// tau-quantile of the mixture.
struct OptInstance {
    std::vector<OptBranch> branches;
};

/// Optimizer extracted at a fixed tau: one budget coordinate per branch
/// (q_i = 1 for branches excluded from the min) and the value attained.
struct Allocation {
    std::vector<double> q;
    double achieved_value = 0.0;
};

namespace detail {

struct SweepCursor {
    std::size_t branch;  // index into the original instance
    std::size_t piece;   // current piece of that branch's curve
    double value;        // curve value of the current piece
};

inline void validate_instance(const OptInstance& inst) {
    if (inst.branches.empty()) throw std::domain_error("opt: empty instance");
    double total = 0.0;
    for (const OptBranch& b : inst.branches) {
        if (b.prob < -kProbEps) throw std::domain_error("opt: negative branch probability");
        if (b.curve.empty()) throw std::domain_error("opt: branch with empty curve");
        total += b.prob;
    }
    if (!nearly_equal(total, 1.0, kProbEps))
        throw std::domain_error("opt: branch probabilities sum to " + std::to_string(total));
}

inline std::vector<SweepCursor> live_cursors(const OptInstance& inst) {
    std::vector<SweepCursor> live;
    live.reserve(inst.branches.size());
    for (std::size_t i = 0; i < inst.branches.size(); ++i) {
        if (inst.branches[i].prob <= 0.0) continue;  // cannot affect the mixture
        live.push_back({i, 0, inst.branches[i].curve.pieces().front().value});
    }
    return live;
}

inline double min_live_value(const std::vector<SweepCursor>& live) {
    double m = live.front().value;
    for (const SweepCursor& c : live) m = std::min(m, c.value);
    return m;
}

/// Advances every cursor currently at the minimum value by one piece,
/// accumulating the budget consumed; exhausted cursors are removed. Returns
/// the new total budget position. The accumulation order (by position in
/// `live`) is fixed so that the full solve and the allocation replay perform
/// bit-identical arithmetic.
inline double advance_min_set(const OptInstance& inst, std::vector<SweepCursor>& live,
                              double u_min, double tau_tmp) {
    double tau_new = tau_tmp;
    std::size_t out = 0;
    for (std::size_t j = 0; j < live.size(); ++j) {
        SweepCursor c = live[j];
        if (c.value != u_min) {
            live[out++] = c;
            continue;
        }
        const auto& pieces = inst.branches[c.branch].curve.pieces();
        const double p = inst.branches[c.branch].prob;
        if (c.piece + 1 == pieces.size()) {
            tau_new += p * (1.0 - pieces[c.piece].breakpoint);
            // exhausted: drop from the live set
        } else {
            tau_new += p * (pieces[c.piece + 1].breakpoint - pieces[c.piece].breakpoint);
            c.piece += 1;
            c.value = pieces[c.piece].value;
            live[out++] = c;
        }
    }
    live.resize(out);
    return tau_new;
}

/// Budget consumed if the min set were advanced, without mutating the state.
inline double peek_advance(const OptInstance& inst, const std::vector<SweepCursor>& live,
                           double u_min, double tau_tmp) {
    double tau_new = tau_tmp;
    for (const SweepCursor& c : live) {
        if (c.value != u_min) continue;
        const auto& pieces = inst.branches[c.branch].curve.pieces();
        const double p = inst.branches[c.branch].prob;
        if (c.piece + 1 == pieces.size())
            tau_new += p * (1.0 - pieces[c.piece].breakpoint);
        else
            tau_new += p * (pieces[c.piece + 1].breakpoint - pieces[c.piece].breakpoint);
    }
    return tau_new;
}

}  // namespace detail

/// Solves the allocation problem for all tau at once by the greedy sweep:
/// starting from q = 0, the branch(es) whose current value is the bottleneck
/// are advanced to their next piece, spending p_i times the piece width of
/// budget; the bottleneck value holds on the budget interval just consumed.
/// The output is the full value profile f on [0, 1], left continuous and
/// piecewise constant, with f(tau) equal to the tau-quantile of the mixture
/// whenever the branch curves are quantile functions.
inline StepCurve solve_opt_full(const OptInstance& inst, double value_eps = 0.0) {
    detail::validate_instance(inst);
    auto live = detail::live_cursors(inst);
    if (live.empty()) throw std::domain_error("opt: no branch has positive probability");

    std::vector<StepCurve::Piece> out;
    double tau_tmp = 0.0;
    while (!live.empty()) {
        const double u = detail::min_live_value(live);
        out.push_back({tau_tmp, u});
        tau_tmp = detail::advance_min_set(inst, live, u, tau_tmp);
    }
    return StepCurve(std::move(out), value_eps);
}

/// Replays the greedy sweep until the budget tau is reached and reads off an
/// optimizer: exhausted branches get q_i = 1, live branches sit at their
/// current breakpoint, and the residual budget is split equally across the
/// live branches, capped at each branch's next breakpoint. The achieved
/// value equals solve_opt_full(inst)(tau), and the allocation is always
/// feasible: sum_i p_i q_i <= tau.
inline Allocation extract_allocation(const OptInstance& inst, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0))
        throw std::domain_error("extract_allocation: tau outside [0,1]");
    detail::validate_instance(inst);
    auto live = detail::live_cursors(inst);
    if (live.empty()) throw std::domain_error("opt: no branch has positive probability");

    double tau_tmp = 0.0;
    double u = detail::min_live_value(live);
    while (true) {
        u = detail::min_live_value(live);
        const double tau_new = detail::peek_advance(inst, live, u, tau_tmp);
        if (tau_new >= tau) break;  // tau lands in the interval this step would close
        tau_tmp = detail::advance_min_set(inst, live, u, tau_tmp);
        if (live.empty()) break;  // numerically defensive; final tau_new is 1
    }

    Allocation alloc;
    alloc.q.assign(inst.branches.size(), 1.0);
    alloc.achieved_value = u;
    if (live.empty()) return alloc;

    const double residual = std::max(0.0, tau - tau_tmp);
    const double n_live = static_cast<double>(live.size());
    for (const detail::SweepCursor& c : live) {
        const auto& pieces = inst.branches[c.branch].curve.pieces();
        const double p = inst.branches[c.branch].prob;
        const double pos = pieces[c.piece].breakpoint;
        const double next_bp =
            (c.piece + 1 < pieces.size()) ? pieces[c.piece + 1].breakpoint : 1.0;
        const double pushed = pos + residual / (n_live * p);
        alloc.q[c.branch] = std::min({pushed, next_bp, 1.0});
    }
    return alloc;
}

/// Per-branch probability mass at or below a level: for each branch, the
/// Lebesgue measure of {x in [0,1] : g_i(x) <= level}. When g_i is the
/// quantile function of the branch distribution this is exactly
/// P(X_i <= level), the decomposition weights used by the CVaR recursion.
inline std::vector<double> cdf_allocation(const OptInstance& inst, double level,
                                          double value_eps = 0.0) {
    detail::validate_instance(inst);
    std::vector<double> q;
    q.reserve(inst.branches.size());
    for (const OptBranch& b : inst.branches) {
        const auto& pieces = b.curve.pieces();
        double mass = 0.0;
        for (std::size_t k = 0; k < pieces.size(); ++k) {
            if (pieces[k].value <= level + value_eps) {
                const double right = (k + 1 < pieces.size()) ? pieces[k + 1].breakpoint : 1.0;
                mass += right - pieces[k].breakpoint;
            }
        }
        q.push_back(std::min(mass, 1.0));
    }
    return q;
}

}  // namespace qmdp
