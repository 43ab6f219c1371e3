#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qmdp/common.hpp"
#include "qmdp/dp.hpp"
#include "qmdp/mdp.hpp"

namespace qmdp {

/// The state carried during optimal-policy execution: the physical state
/// plus the quantile level tau summarizing how the history has gone so far.
struct AugmentedState {
    int state = 0;
    double tau = 0.5;
};

namespace detail {

/// Continuation curves seen from stage t: a borrowed reference to the
/// next-stage row for finite horizons (no copy on the hot path), an owned
/// discounted copy of the fixed point otherwise.
class ContinuationView {
  public:
    ContinuationView(const ValueTable& table, const MdpSpec& spec, int t) {
        if (table.is_finite()) {
            const auto& row = table.v.at(static_cast<std::size_t>(t) + 1);
            if (row.empty())
                throw std::logic_error("policy: stage " + std::to_string(t + 1) +
                                       " missing from the value table");
            ref_ = &row;
            return;
        }
        const double gamma = spec.discount();
        owned_.reserve(table.v[0].size());
        for (const StepCurve& c : table.v[0]) owned_.push_back(c.scaled(gamma));
    }

    const std::vector<StepCurve>& curves() const { return ref_ ? *ref_ : owned_; }

  private:
    const std::vector<StepCurve>* ref_ = nullptr;
    std::vector<StepCurve> owned_;
};

inline StepCurve computed_action_curve(const ValueTable& table, const MdpSpec& spec, int t, int s,
                                       int a, double value_eps) {
    const ContinuationView next(table, spec, t);
    return solve_opt_full(stage_inputs(spec, next.curves(), t, s, a, value_eps).inst, value_eps);
}

}  // namespace detail

/// Greedy action at an augmented state: the admissible action whose
/// first-action-pinned curve is largest at tau, ties broken by the lowest
/// action index. Falls back to re-solving the stage when per-action curves
/// were not stored.
inline int act(const ValueTable& table, const MdpSpec& spec, int t, const AugmentedState& aug) {
    const auto& adm = spec.admissible_at(t, aug.state);
    int best = adm.front();
    double best_value = 0.0;
    bool first = true;
    for (int a : adm) {
        double value;
        if (table.has_action_curves(t)) {
            value = table.action_value(t, aug.state, a).value_at(aug.tau);
        } else {
            value = detail::computed_action_curve(table, spec, t, aug.state, a, 0.0)
                        .value_at(aug.tau);
        }
        if (first || value > best_value) {
            best = a;
            best_value = value;
            first = false;
        }
    }
    return best;
}

/// The next quantile level after observing the realized successor: the
/// optimizer component of the stage allocation problem for the branch that
/// occurred. At tau = 1 the sup objective propagates unchanged.
inline double step_quantile(const ValueTable& table, const MdpSpec& spec, int t,
                            const AugmentedState& aug, int action, int successor) {
    if (aug.tau == 1.0) return 1.0;
    const detail::ContinuationView view(table, spec, t);
    const auto& next = view.curves();
    const StageInstance stage = stage_inputs(spec, next, t, aug.state, action);
    const int branch = stage.branch_of(successor);
    if (branch < 0)
        throw std::domain_error("step_quantile: successor has zero probability under (t,s,a)");
    const Allocation alloc = extract_allocation(stage.inst, aug.tau);
    double q = std::min(1.0, std::max(0.0, alloc.q[static_cast<std::size_t>(branch)]));
    // snap to a breakpoint of the successor's continuation curve when the
    // residual split landed within float dust of one
    for (const auto& piece : next[successor].pieces()) {
        if (std::fabs(piece.breakpoint - q) <= kProbEps) {
            q = piece.breakpoint;
            break;
        }
    }
    return q;
}

struct EpisodeStep {
    int t;
    int state;
    int action;
    double tau;     // level before the transition
    double reward;  // realized stage reward (discounted when applicable)
};

struct EpisodeResult {
    std::vector<EpisodeStep> steps;
    double total_reward = 0.0;
    int final_state = 0;
};

/// Simulates one episode of the augmented-quantile policy. Finite-horizon
/// models run T periods and collect the terminal reward; discounted models
/// run max_periods steps with geometric weighting. Deterministic given the
/// seed.
inline EpisodeResult run_episode(const ValueTable& table, const MdpSpec& spec, int s0,
                                 double tau0, std::uint64_t seed, int max_periods = 0) {
    if (!(tau0 >= 0.0 && tau0 <= 1.0))
        throw std::domain_error("run_episode: tau outside [0,1]");
    Rng rng(derive_seed(seed, 0x455049ULL));
    const bool finite = spec.is_finite();
    const int periods = finite ? spec.finite_periods() : (max_periods > 0 ? max_periods : 1000);
    const double gamma = finite ? 1.0 : spec.discount();

    EpisodeResult out;
    AugmentedState aug{s0, tau0};
    double weight = 1.0;
    for (int t = 0; t < periods; ++t) {
        const int a = act(table, spec, t, aug);
        const StageRow& row = spec.row(t, aug.state, a);
        const std::size_t e = rng.next_index(row.probs);
        const int succ = row.successors[e];
        double reward;
        if (spec.reward_kind == RewardKind::deterministic) {
            reward = row.rewards[e];
        } else {
            const auto& dist = row.reward_dists[e];
            const double u = rng.next_double();
            double cum = 0.0;
            reward = dist.atoms().back().value;
            for (const auto& atom : dist.atoms()) {
                cum += atom.prob;
                if (u < cum) {
                    reward = atom.value;
                    break;
                }
            }
        }
        const double inc = weight * reward;
        out.steps.push_back({t, aug.state, a, aug.tau, inc});
        out.total_reward += inc;
        const double next_tau = step_quantile(table, spec, t, aug, a, succ);
        aug = {succ, next_tau};
        weight *= gamma;
    }
    if (finite) out.total_reward += spec.terminal_reward(aug.state);
    out.final_state = aug.state;
    return out;
}

}  // namespace qmdp
