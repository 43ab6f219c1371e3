#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <vector>

#include "qmdp/baselines.hpp"
#include "qmdp/common.hpp"
#include "qmdp/cvar.hpp"
#include "qmdp/dp.hpp"
#include "qmdp/mdp.hpp"
#include "qmdp/policy.hpp"

namespace qmdp {

/// Sorted sample values with multiplicities; quantile queries follow the
/// same inf convention as the exact distributions.
class EmpiricalCdf {
  public:
    EmpiricalCdf() = default;

    explicit EmpiricalCdf(std::vector<double> samples) {
        if (samples.empty()) throw std::invalid_argument("EmpiricalCdf: no samples");
        std::sort(samples.begin(), samples.end());
        total_ = static_cast<long>(samples.size());
        for (double v : samples) {
            if (!values_.empty() && values_.back() == v)
                counts_.back() += 1;
            else {
                values_.push_back(v);
                counts_.push_back(1);
            }
        }
    }

    long sample_size() const { return total_; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<long>& counts() const { return counts_; }

    /// Empirical tau-quantile: smallest sample value whose cumulative
    /// fraction reaches tau.
    double quantile(double tau) const {
        if (!(tau >= 0.0 && tau <= 1.0))
            throw std::domain_error("EmpiricalCdf: tau outside [0,1]");
        if (tau == 0.0) return values_.front();
        const double need = tau * static_cast<double>(total_);
        double cum = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i) {
            cum += static_cast<double>(counts_[i]);
            if (cum >= need - 1e-9) return values_[i];
        }
        return values_.back();
    }

    /// Fraction of samples at or below x.
    double cdf(double x) const {
        double cum = 0.0;
        for (std::size_t i = 0; i < values_.size() && values_[i] <= x; ++i)
            cum += static_cast<double>(counts_[i]);
        return cum / static_cast<double>(total_);
    }

    double mean() const {
        double m = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i)
            m += values_[i] * static_cast<double>(counts_[i]);
        return m / static_cast<double>(total_);
    }

    /// Empirical CVaR at level tau: empirical quantile plus the scaled mean
    /// excess above it.
    double cvar(double tau) const {
        if (!(tau > 0.0 && tau < 1.0)) throw std::domain_error("EmpiricalCdf: tau outside (0,1)");
        const double q = quantile(tau);
        double excess = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i)
            if (values_[i] > q) excess += (values_[i] - q) * static_cast<double>(counts_[i]);
        return q + excess / ((1.0 - tau) * static_cast<double>(total_));
    }

  private:
    std::vector<double> values_;
    std::vector<long> counts_;
    long total_ = 0;
};

/// Episode-level policy interface used by the simulator: choose an action,
/// then observe the realized transition (history-summarizing policies update
/// their level there). reset() is called at the start of every episode.
class PolicyDriver {
  public:
    virtual ~PolicyDriver() = default;
    virtual void reset() {}
    virtual int choose(int t, int state) = 0;
    virtual void observe(int t, int state, int action, int successor) {}
};

class MarkovPolicyDriver final : public PolicyDriver {
  public:
    explicit MarkovPolicyDriver(const MarkovPolicy& policy) : policy_(&policy) {}
    int choose(int t, int state) override { return policy_->at(t, state); }

  private:
    const MarkovPolicy* policy_;
};

/// Augmented-quantile policy: greedy in the stored per-action curves with
/// the level updated to the realized branch's optimizer component.
class QuantilePolicyDriver final : public PolicyDriver {
  public:
    QuantilePolicyDriver(const MdpSpec& spec, const ValueTable& table, double tau0)
        : spec_(&spec), table_(&table), tau0_(tau0), tau_(tau0) {}
    void reset() override { tau_ = tau0_; }
    int choose(int t, int state) override { return act(*table_, *spec_, t, {state, tau_}); }
    void observe(int t, int state, int action, int successor) override {
        tau_ = step_quantile(*table_, *spec_, t, {state, tau_}, action, successor);
    }

  private:
    const MdpSpec* spec_;
    const ValueTable* table_;
    double tau0_;
    double tau_;
};

class CvarPolicyDriver final : public PolicyDriver {
  public:
    CvarPolicyDriver(const MdpSpec& spec, const CvarTable& table, double tau0)
        : spec_(&spec), table_(&table), tau0_(tau0), tau_(tau0) {}
    void reset() override { tau_ = tau0_; }
    int choose(int t, int state) override { return cvar_act(*table_, *spec_, t, {state, tau_}); }
    void observe(int t, int state, int action, int successor) override {
        tau_ = cvar_step_quantile(*table_, *spec_, t, {state, tau_}, action, successor);
    }

  private:
    const MdpSpec* spec_;
    const CvarTable* table_;
    double tau0_;
    double tau_;
};

/// Runs M seeded episodes of a policy from s0 and collects the cumulative
/// rewards. Per-episode randomness comes from seeds derived by counter, so
/// the result is deterministic in (seed, M) and independent of batch order.
inline EmpiricalCdf simulate_policy(const MdpSpec& spec, PolicyDriver& policy, int s0, long m,
                                    std::uint64_t seed, int max_periods = 0) {
    if (m < 1) throw std::invalid_argument("simulate_policy: need at least one episode");
    require_valid(spec);
    const bool finite = spec.is_finite();
    const int periods = finite ? spec.finite_periods() : (max_periods > 0 ? max_periods : 1000);
    const double gamma = finite ? 1.0 : spec.discount();

    std::vector<double> totals;
    totals.reserve(static_cast<std::size_t>(m));
    for (long episode = 0; episode < m; ++episode) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(episode)));
        policy.reset();
        int state = s0;
        double total = 0.0;
        double weight = 1.0;
        for (int t = 0; t < periods; ++t) {
            const int a = policy.choose(t, state);
            const StageRow& row = spec.row(t, state, a);
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
            total += weight * reward;
            policy.observe(t, state, a, succ);
            state = succ;
            weight *= gamma;
        }
        if (finite) total += spec.terminal_reward(state);
        totals.push_back(total);
    }
    return EmpiricalCdf(std::move(totals));
}

}  // namespace qmdp
