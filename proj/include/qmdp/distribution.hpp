#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qmdp/common.hpp"
#include "qmdp/step_curve.hpp"

namespace qmdp {

/// Finite discrete distribution: sorted (value, probability) atoms with
/// distinct values and probabilities summing to one.
///
/// Construction canonicalizes: atoms are sorted by value, equal values are
/// merged (within value_eps), numerically empty atoms are dropped, and the
/// probabilities are renormalized after checking the total is within
/// kProbEps of one. Canonical form makes structural equality usable in
/// oracle-equivalence tests.
class DiscreteDistribution {
  public:
    struct Atom {
        double value;
        double prob;
        bool operator==(const Atom&) const = default;
    };

    DiscreteDistribution() = default;

    explicit DiscreteDistribution(std::vector<Atom> atoms, double value_eps = kValueEps) {
        if (atoms.empty()) throw std::invalid_argument("DiscreteDistribution: no atoms");
        std::sort(atoms.begin(), atoms.end(),
                  [](const Atom& a, const Atom& b) { return a.value < b.value; });
        atoms_.reserve(atoms.size());
        for (const Atom& a : atoms) {
            if (a.prob < -kProbEps)
                throw std::invalid_argument("DiscreteDistribution: negative probability");
            if (a.prob <= kAtomEps) continue;
            if (!atoms_.empty() && nearly_equal(atoms_.back().value, a.value, value_eps))
                atoms_.back().prob += a.prob;
            else
                atoms_.push_back(a);
        }
        if (atoms_.empty())
            throw std::invalid_argument("DiscreteDistribution: all atoms have zero probability");
        double total = 0.0;
        for (const Atom& a : atoms_) total += a.prob;
        if (!nearly_equal(total, 1.0, kProbEps))
            throw std::invalid_argument("DiscreteDistribution: probabilities sum to " +
                                        std::to_string(total));
        if (total != 1.0)
            for (Atom& a : atoms_) a.prob /= total;
    }

    static DiscreteDistribution point_mass(double v) {
        return DiscreteDistribution({{v, 1.0}});
    }

    const std::vector<Atom>& atoms() const { return atoms_; }
    std::size_t size() const { return atoms_.size(); }

    double min_value() const { return atoms_.front().value; }
    double max_value() const { return atoms_.back().value; }

    double mean() const {
        double m = 0.0;
        for (const Atom& a : atoms_) m += a.value * a.prob;
        return m;
    }

    /// P(X <= x).
    double cdf(double x) const {
        double c = 0.0;
        for (const Atom& a : atoms_) {
            if (a.value > x) break;
            c += a.prob;
        }
        return c;
    }

    bool operator==(const DiscreteDistribution&) const = default;

  private:
    std::vector<Atom> atoms_;
};

/// tau-quantile: inf{x : P(X <= x) >= tau}. The endpoints follow the
/// essential inf/sup convention: tau = 0 returns the smallest atom and
/// tau = 1 the largest (zero-probability atoms were already dropped).
inline double quantile_of(const DiscreteDistribution& dist, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::domain_error("quantile_of: tau outside [0,1]");
    if (dist.size() == 0) throw std::domain_error("quantile_of: empty distribution");
    if (tau == 0.0) return dist.min_value();
    if (tau == 1.0) return dist.max_value();
    double cum = 0.0;
    for (const auto& a : dist.atoms()) {
        cum += a.prob;
        if (cum >= tau) return a.value;
    }
    return dist.max_value();  // cumulative rounding fell just short of 1
}

/// Conditional value at risk at level tau (0 < tau < 1):
///   Q_tau(X) + E[(X - Q_tau(X))^+] / (1 - tau),
/// the mean of the part of the distribution beyond its tau-quantile.
inline double cvar_of(const DiscreteDistribution& dist, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw std::domain_error("cvar_of: tau outside (0,1)");
    const double q = quantile_of(dist, tau);
    double excess = 0.0;
    for (const auto& a : dist.atoms())
        if (a.value > q) excess += (a.value - q) * a.prob;
    return q + excess / (1.0 - tau);
}

/// Quantile function of a distribution as a step curve: the piece starting
/// at the cumulative probability below each atom carries that atom's value.
/// The resulting curve is non-decreasing and value_at(tau) equals
/// quantile_of(dist, tau) for every tau in [0, 1].
inline StepCurve dist_to_curve(const DiscreteDistribution& dist) {
    std::vector<StepCurve::Piece> pieces;
    pieces.reserve(dist.size());
    double cum = 0.0;
    for (const auto& a : dist.atoms()) {
        pieces.push_back({cum, a.value});
        cum += a.prob;
    }
    return StepCurve(std::move(pieces));
}

/// Inverse of dist_to_curve: each piece becomes an atom whose probability is
/// the piece width. Requires a non-decreasing curve; no distribution has a
/// decreasing quantile function.
inline DiscreteDistribution curve_to_dist(const StepCurve& curve, double value_eps = kValueEps) {
    if (!curve.non_decreasing())
        throw std::domain_error("curve_to_dist: curve is not non-decreasing");
    std::vector<DiscreteDistribution::Atom> atoms;
    atoms.reserve(curve.size());
    const auto& pieces = curve.pieces();
    for (std::size_t k = 0; k < pieces.size(); ++k) {
        const double right = (k + 1 < pieces.size()) ? pieces[k + 1].breakpoint : 1.0;
        atoms.push_back({pieces[k].value, right - pieces[k].breakpoint});
    }
    return DiscreteDistribution(std::move(atoms), value_eps);
}

/// Distribution of the sum of two independent draws: all value pairs are
/// formed, products of probabilities attached, and equal sums merged. The
/// result has at most n*m atoms.
inline DiscreteDistribution convolve(const DiscreteDistribution& d1,
                                     const DiscreteDistribution& d2,
                                     double value_eps = kValueEps) {
    std::vector<DiscreteDistribution::Atom> atoms;
    atoms.reserve(d1.size() * d2.size());
    for (const auto& a : d1.atoms())
        for (const auto& b : d2.atoms())
            atoms.push_back({a.value + b.value, a.prob * b.prob});
    return DiscreteDistribution(std::move(atoms), value_eps);
}

/// tau-quantile of a probability mixture, computed from the exact flattened
/// distribution: P(Z <= c) = sum_i p_i P(X_i <= c). This is the ground-truth
/// route against which the sweep-based mixture solver is checked.
inline double mixture_quantile(
    const std::vector<std::pair<double, DiscreteDistribution>>& branches, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0))
        throw std::domain_error("mixture_quantile: tau outside [0,1]");
    if (branches.empty()) throw std::domain_error("mixture_quantile: no branches");
    double total = 0.0;
    for (const auto& [p, dist] : branches) {
        if (p < -kProbEps) throw std::domain_error("mixture_quantile: negative branch weight");
        total += p;
    }
    if (!nearly_equal(total, 1.0, kProbEps))
        throw std::domain_error("mixture_quantile: branch weights sum to " + std::to_string(total));

    std::vector<DiscreteDistribution::Atom> atoms;
    for (const auto& [p, dist] : branches) {
        if (p <= 0.0) continue;
        for (const auto& a : dist.atoms()) atoms.push_back({a.value, p * a.prob});
    }
    return quantile_of(DiscreteDistribution(std::move(atoms)), tau);
}

}  // namespace qmdp
