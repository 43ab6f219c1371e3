#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "qmdp/common.hpp"
#include "qmdp/distribution.hpp"

namespace qmdp {

struct FiniteHorizon {
    int periods = 1;
    bool operator==(const FiniteHorizon&) const = default;
};

struct DiscountedHorizon {
    double gamma = 0.9;
    bool operator==(const DiscountedHorizon&) const = default;
};

using Horizon = std::variant<FiniteHorizon, DiscountedHorizon>;

enum class RewardKind { deterministic, distributional };

/// Transition row for one (t, state, action): sparse successor list with
/// probabilities and the rewards attached to each edge. For the
/// deterministic reward kind `rewards` is aligned with `successors`; for the
/// distributional kind `reward_dists` is. An empty reward container marks a
/// missing table entry, which validation reports.
struct StageRow {
    std::vector<int> successors;
    std::vector<double> probs;
    std::vector<double> rewards;
    std::vector<DiscreteDistribution> reward_dists;

    bool operator==(const StageRow&) const = default;
};

/// Finite MDP with named states and actions, per-(t, s) admissible action
/// sets, sparse time-indexed transition rows, edge rewards (deterministic or
/// distributional), per-state terminal rewards, and either a finite horizon
/// or a discount factor. Stationary models store a single time slice.
struct MdpSpec {
    std::vector<std::string> states;
    std::vector<std::string> actions;
    Horizon horizon = FiniteHorizon{1};
    bool stationary = true;
    RewardKind reward_kind = RewardKind::deterministic;

    /// True iff every reachable reward and terminal reward is an integer;
    /// enables the exact value-merging fast path of the solvers.
    bool integer_rewards = false;

    std::vector<double> terminal;  // per state; empty means all zero

    /// admissible[time_index][s] -> action ids, ascending.
    std::vector<std::vector<std::vector<int>>> admissible;

    /// rows[time_index][s][a] -> transition row. Rows for inadmissible
    /// actions may be left empty.
    std::vector<std::vector<std::vector<StageRow>>> rows;

    int num_states() const { return static_cast<int>(states.size()); }
    int num_actions() const { return static_cast<int>(actions.size()); }

    bool is_finite() const { return std::holds_alternative<FiniteHorizon>(horizon); }

    int finite_periods() const {
        if (!is_finite()) throw std::logic_error("MdpSpec: horizon is not finite");
        return std::get<FiniteHorizon>(horizon).periods;
    }

    double discount() const {
        if (is_finite()) throw std::logic_error("MdpSpec: horizon is not discounted");
        return std::get<DiscountedHorizon>(horizon).gamma;
    }

    int time_index(int t) const { return stationary ? 0 : t; }

    const StageRow& row(int t, int s, int a) const { return rows[time_index(t)][s][a]; }

    const std::vector<int>& admissible_at(int t, int s) const {
        return admissible[time_index(t)][s];
    }

    double terminal_reward(int s) const { return terminal.empty() ? 0.0 : terminal[s]; }

    int state_id(const std::string& name) const {
        for (int i = 0; i < num_states(); ++i)
            if (states[i] == name) return i;
        throw std::invalid_argument("unknown state name '" + name + "'");
    }

    int action_id(const std::string& name) const {
        for (int i = 0; i < num_actions(); ++i)
            if (actions[i] == name) return i;
        throw std::invalid_argument("unknown action name '" + name + "'");
    }

    bool operator==(const MdpSpec&) const = default;
};

/// One failed model invariant, locating the offending (t, s, a) where that
/// applies.
struct Violation {
    std::string where;
    std::string rule;

    std::string str() const { return where.empty() ? rule : where + ": " + rule; }
};

namespace detail {

inline bool is_integer_value(double v) { return std::isfinite(v) && v == std::floor(v); }

inline std::string loc(const MdpSpec& spec, int ti, int s, int a = -1) {
    std::string out = "t=" + (spec.stationary ? std::string("*") : std::to_string(ti));
    out += " s=" + spec.states[s];
    if (a >= 0) out += " a=" + spec.actions[a];
    return out;
}

}  // namespace detail

/// Checks every model invariant and returns the list of failures (empty for
/// a well-formed model). Diagnostics are returned, not thrown.
inline std::vector<Violation> validate(const MdpSpec& spec) {
    std::vector<Violation> out;
    const int S = spec.num_states();
    const int A = spec.num_actions();

    if (S == 0) out.push_back({"", "no states declared"});
    if (A == 0) out.push_back({"", "no actions declared"});
    for (int i = 0; i < S; ++i)
        for (int j = i + 1; j < S; ++j)
            if (spec.states[i] == spec.states[j])
                out.push_back({"", "duplicate state name '" + spec.states[i] + "'"});
    for (int i = 0; i < A; ++i)
        for (int j = i + 1; j < A; ++j)
            if (spec.actions[i] == spec.actions[j])
                out.push_back({"", "duplicate action name '" + spec.actions[i] + "'"});

    if (spec.is_finite()) {
        if (spec.finite_periods() < 1) out.push_back({"", "finite horizon requires T >= 1"});
    } else {
        const double g = spec.discount();
        if (!(g > 0.0 && g < 1.0))
            out.push_back({"", "discounted horizon requires gamma in (0,1), got " +
                                   std::to_string(g)});
        if (!spec.stationary)
            out.push_back({"", "discounted horizon requires stationary dynamics"});
    }

    const std::size_t slices =
        spec.stationary ? 1 : static_cast<std::size_t>(spec.is_finite() ? spec.finite_periods() : 0);
    if (spec.admissible.size() != slices)
        out.push_back({"", "admissible table has " + std::to_string(spec.admissible.size()) +
                               " time slices, expected " + std::to_string(slices)});
    if (spec.rows.size() != slices)
        out.push_back({"", "transition table has " + std::to_string(spec.rows.size()) +
                               " time slices, expected " + std::to_string(slices)});
    if (!spec.terminal.empty() && spec.terminal.size() != static_cast<std::size_t>(S))
        out.push_back({"", "terminal rewards sized " + std::to_string(spec.terminal.size()) +
                               ", expected " + std::to_string(S)});

    for (std::size_t ti = 0; ti < spec.rows.size() && ti < spec.admissible.size(); ++ti) {
        if (spec.admissible[ti].size() != static_cast<std::size_t>(S) ||
            spec.rows[ti].size() != static_cast<std::size_t>(S)) {
            out.push_back({"", "time slice " + std::to_string(ti) + " not sized per state"});
            continue;
        }
        for (int s = 0; s < S; ++s) {
            const auto& adm = spec.admissible[ti][s];
            if (adm.empty())
                out.push_back({detail::loc(spec, static_cast<int>(ti), s),
                               "empty admissible action set"});
            for (std::size_t k = 0; k < adm.size(); ++k) {
                if (adm[k] < 0 || adm[k] >= A) {
                    out.push_back({detail::loc(spec, static_cast<int>(ti), s),
                                   "admissible action id out of range"});
                    continue;
                }
                if (k > 0 && adm[k] <= adm[k - 1])
                    out.push_back({detail::loc(spec, static_cast<int>(ti), s),
                                   "admissible action ids not strictly ascending"});
            }
            if (spec.rows[ti][s].size() != static_cast<std::size_t>(A)) {
                out.push_back({detail::loc(spec, static_cast<int>(ti), s),
                               "transition rows not sized per action"});
                continue;
            }
            for (int a : adm) {
                if (a < 0 || a >= A) continue;
                const StageRow& row = spec.rows[ti][s][a];
                const std::string where = detail::loc(spec, static_cast<int>(ti), s, a);
                if (row.successors.size() != row.probs.size()) {
                    out.push_back({where, "successor and probability lists differ in length"});
                    continue;
                }
                if (row.successors.empty()) {
                    out.push_back({where, "no successors"});
                    continue;
                }
                double total = 0.0;
                bool shape_ok = true;
                for (std::size_t e = 0; e < row.successors.size(); ++e) {
                    if (row.successors[e] < 0 || row.successors[e] >= S) {
                        out.push_back({where, "successor id out of range"});
                        shape_ok = false;
                    }
                    for (std::size_t f = e + 1; f < row.successors.size(); ++f)
                        if (row.successors[e] == row.successors[f]) {
                            out.push_back({where, "duplicate successor in row"});
                            shape_ok = false;
                        }
                    if (row.probs[e] < -kProbEps) {
                        out.push_back({where, "negative transition probability"});
                        shape_ok = false;
                    }
                    total += row.probs[e];
                }
                if (shape_ok && !nearly_equal(total, 1.0, kProbEps))
                    out.push_back({where, "transition row sums to " + std::to_string(total)});

                if (spec.reward_kind == RewardKind::deterministic) {
                    if (row.rewards.size() != row.successors.size()) {
                        bool needed = false;
                        for (double p : row.probs) needed = needed || p > 0.0;
                        if (needed)
                            out.push_back({where, "deterministic reward missing for a "
                                                  "positive-probability edge"});
                    } else {
                        for (std::size_t e = 0; e < row.rewards.size(); ++e)
                            if (row.probs[e] > 0.0 && !std::isfinite(row.rewards[e]))
                                out.push_back({where, "non-finite reward"});
                    }
                } else {
                    if (row.reward_dists.size() != row.successors.size()) {
                        bool needed = false;
                        for (double p : row.probs) needed = needed || p > 0.0;
                        if (needed)
                            out.push_back({where, "reward distribution missing for a "
                                                  "positive-probability edge"});
                    } else {
                        for (std::size_t e = 0; e < row.reward_dists.size(); ++e)
                            if (row.probs[e] > 0.0 && row.reward_dists[e].size() == 0)
                                out.push_back({where, "empty reward distribution on a "
                                                      "positive-probability edge"});
                    }
                }
            }
        }
    }

    if (spec.integer_rewards) {
        for (double tr : spec.terminal)
            if (!detail::is_integer_value(tr)) {
                out.push_back({"", "integer_rewards set but a terminal reward is not integer"});
                break;
            }
        bool flagged = false;
        for (std::size_t ti = 0; ti < spec.rows.size() && !flagged; ++ti)
            for (std::size_t s = 0; s < spec.rows[ti].size() && !flagged; ++s)
                for (std::size_t a = 0; a < spec.rows[ti][s].size() && !flagged; ++a) {
                    const StageRow& row = spec.rows[ti][s][a];
                    for (std::size_t e = 0; e < row.successors.size() && !flagged; ++e) {
                        if (e >= row.probs.size() || row.probs[e] <= 0.0) continue;
                        if (spec.reward_kind == RewardKind::deterministic) {
                            if (e < row.rewards.size() &&
                                !detail::is_integer_value(row.rewards[e])) {
                                out.push_back({"", "integer_rewards set but a stage reward "
                                                   "is not integer"});
                                flagged = true;
                            }
                        } else if (e < row.reward_dists.size()) {
                            for (const auto& atom : row.reward_dists[e].atoms())
                                if (!detail::is_integer_value(atom.value)) {
                                    out.push_back({"", "integer_rewards set but a reward "
                                                       "atom is not integer"});
                                    flagged = true;
                                    break;
                                }
                        }
                    }
                }
    }

    return out;
}

/// Convenience used by solvers: throws listing every violation.
inline void require_valid(const MdpSpec& spec) {
    const auto violations = validate(spec);
    if (violations.empty()) return;
    std::string msg = "invalid model:";
    for (const Violation& v : violations) msg += "\n  " + v.str();
    throw std::invalid_argument(msg);
}

}  // namespace qmdp
