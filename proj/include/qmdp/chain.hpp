#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "qmdp/common.hpp"
#include "qmdp/mdp.hpp"

namespace qmdp {

/// Parameters of the synthetic chain instance: a player on a line of n
/// states either stays (collecting the state's reward) or moves to a random
/// neighbor.
struct ChainParams {
    int n = 20;          // state count, >= 2
    int periods = 10;    // finite horizon T, >= 1
    int r_max = 10;      // rewards drawn uniformly from {0..r_max}
    std::uint64_t seed = 0;

    /// When set, the state reward is paid every period regardless of the
    /// action taken, instead of only under Stay.
    bool pay_on_occupancy = false;
};

/// Builds the chain instance. Stay self-loops with probability one and pays
/// the state reward; Move goes to a uniform-seeded random split between the
/// two neighbors (probability one to the single neighbor at the ends) and
/// pays zero. Deterministic given the seed.
inline MdpSpec gen_chain(const ChainParams& params) {
    if (params.n < 2) throw std::invalid_argument("gen_chain: need n >= 2");
    if (params.periods < 1) throw std::invalid_argument("gen_chain: need T >= 1");
    if (params.r_max < 1) throw std::invalid_argument("gen_chain: need r_max >= 1");

    Rng rng(derive_seed(params.seed, 0x434841494eULL));

    MdpSpec spec;
    spec.horizon = FiniteHorizon{params.periods};
    spec.stationary = true;
    spec.reward_kind = RewardKind::deterministic;
    spec.integer_rewards = true;

    spec.states.reserve(params.n);
    for (int i = 1; i <= params.n; ++i) spec.states.push_back("s" + std::to_string(i));
    spec.actions = {"Stay", "Move"};
    spec.terminal.assign(params.n, 0.0);

    std::vector<double> state_reward(params.n);
    for (int i = 0; i < params.n; ++i)
        state_reward[i] = static_cast<double>(rng.next_int(0, params.r_max));

    spec.admissible.assign(1, std::vector<std::vector<int>>(params.n, {0, 1}));
    spec.rows.assign(1, std::vector<std::vector<StageRow>>(
                            params.n, std::vector<StageRow>(2)));

    for (int i = 0; i < params.n; ++i) {
        StageRow& stay = spec.rows[0][i][0];
        stay.successors = {i};
        stay.probs = {1.0};
        stay.rewards = {state_reward[i]};

        StageRow& move = spec.rows[0][i][1];
        const double move_reward = params.pay_on_occupancy ? state_reward[i] : 0.0;
        if (i == 0) {
            move.successors = {1};
            move.probs = {1.0};
            move.rewards = {move_reward};
        } else if (i == params.n - 1) {
            move.successors = {i - 1};
            move.probs = {1.0};
            move.rewards = {move_reward};
        } else {
            const double p_left = rng.next_double();
            move.successors = {i - 1, i + 1};
            move.probs = {p_left, 1.0 - p_left};
            move.rewards = {move_reward, move_reward};
        }
    }

    return spec;
}

}  // namespace qmdp
