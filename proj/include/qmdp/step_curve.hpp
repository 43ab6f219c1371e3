#pragma once

#include <algorithm>
#include <cmath>
#include <array>
#include <initializer_list>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "qmdp/common.hpp"

namespace qmdp {

/// Left-continuous piecewise-constant function on [0, 1].
///
/// A curve is a list of (breakpoint, value) pieces with breakpoints strictly
/// increasing in [0, 1) and an implicit terminal breakpoint at 1. Piece k
/// holds its value on (b_k, b_{k+1}]; the first piece additionally covers
/// tau = 0, i.e. it holds on [0, b_1]. This is exactly the evaluation
/// convention of a quantile function: value_at(tau) of the curve produced by
/// a distribution equals the tau-quantile of that distribution.
///
/// Curves are canonical after construction: zero-width pieces are removed,
/// breakpoints within kProbEps are merged, and adjacent pieces with equal
/// values (within the supplied value tolerance) are coalesced. Canonical form
/// makes structural equality meaningful, which the exactness tests rely on.
///
/// Instances are immutable after construction and safe to share across
/// threads.
class StepCurve {
  public:
    struct Piece {
        double breakpoint;  // start of the piece, in [0, 1)
        double value;
        bool operator==(const Piece&) const = default;
    };

    StepCurve() = default;

    explicit StepCurve(std::vector<Piece> pieces, double value_eps = 0.0) {
        if (pieces.empty()) throw std::invalid_argument("StepCurve: no pieces");
        if (!nearly_equal(pieces.front().breakpoint, 0.0, kProbEps))
            throw std::invalid_argument("StepCurve: first breakpoint must be 0");
        pieces.front().breakpoint = 0.0;

        pieces_.reserve(pieces.size());
        for (const Piece& p : pieces) {
            if (!(p.breakpoint >= 0.0) || p.breakpoint >= 1.0 - kProbEps) {
                if (&p == &pieces.front()) {
                    // first breakpoint already snapped to 0
                } else if (p.breakpoint >= 1.0 - kProbEps) {
                    continue;  // zero-width tail piece
                } else {
                    throw std::invalid_argument("StepCurve: breakpoint outside [0,1)");
                }
            }
            if (!pieces_.empty()) {
                if (p.breakpoint < pieces_.back().breakpoint - kProbEps)
                    throw std::invalid_argument("StepCurve: breakpoints not increasing");
                if (p.breakpoint - pieces_.back().breakpoint <= kProbEps) {
                    // zero-width predecessor: the newer value takes over
                    pieces_.back().value = p.value;
                    continue;
                }
            }
            pieces_.push_back(p);
        }
        // merge adjacent equal values
        std::size_t out = 1;
        for (std::size_t k = 1; k < pieces_.size(); ++k) {
            if (nearly_equal(pieces_[k].value, pieces_[out - 1].value, value_eps)) continue;
            pieces_[out++] = pieces_[k];
        }
        pieces_.resize(out);
    }

    /// The constant curve tau -> v.
    static StepCurve constant(double v) { return StepCurve({{0.0, v}}); }

    const std::vector<Piece>& pieces() const { return pieces_; }
    std::size_t size() const { return pieces_.size(); }
    bool empty() const { return pieces_.empty(); }

    /// Left-continuous evaluation: the value of the piece whose half-open
    /// interval (b_k, b_{k+1}] contains tau, with value_at(0) equal to the
    /// first piece value.
    double value_at(double tau) const {
        check_tau(tau);
        return pieces_[piece_index_left(tau)].value;
    }

    /// Right limit: the value held immediately to the right of tau (for
    /// tau < 1), i.e. the value of the piece whose interval starts at or
    /// before tau. Used by grid compression, which must under-promise.
    double value_right_of(double tau) const {
        check_tau(tau);
        return pieces_[piece_index_right(tau)].value;
    }

    /// Index of the piece evaluated by value_at.
    std::size_t piece_index_left(double tau) const {
        std::size_t lo = upper(tau, /*strict=*/true);
        return lo == 0 ? 0 : lo - 1;
    }

    /// Index of the piece active just right of tau.
    std::size_t piece_index_right(double tau) const {
        return upper(tau, /*strict=*/false) - 1;
    }

    bool non_decreasing() const {
        for (std::size_t k = 1; k < pieces_.size(); ++k)
            if (pieces_[k].value < pieces_[k - 1].value) return false;
        return true;
    }

    double min_value() const {
        double m = pieces_.front().value;
        for (const Piece& p : pieces_) m = std::min(m, p.value);
        return m;
    }

    double max_value() const {
        double m = pieces_.front().value;
        for (const Piece& p : pieces_) m = std::max(m, p.value);
        return m;
    }

    /// Curve with every value shifted by c. Breakpoints are untouched.
    StepCurve shifted(double c) const {
        StepCurve r(*this);
        for (Piece& p : r.pieces_) p.value += c;
        return r;
    }

    /// Curve with every value scaled by a positive factor.
    StepCurve scaled(double factor) const {
        StepCurve r(*this);
        for (Piece& p : r.pieces_) p.value *= factor;
        return r;
    }

    /// Integral of the curve over (tau, 1].
    double tail_integral(double tau) const {
        check_tau(tau);
        const std::size_t k0 = piece_index_right(tau);
        double acc = 0.0;
        for (std::size_t k = k0; k < pieces_.size(); ++k) {
            const double left = (k == k0) ? tau : pieces_[k].breakpoint;
            const double right = (k + 1 < pieces_.size()) ? pieces_[k + 1].breakpoint : 1.0;
            acc += pieces_[k].value * (right - left);
        }
        return acc;
    }

    bool operator==(const StepCurve&) const = default;

    friend std::ostream& operator<<(std::ostream& os, const StepCurve& c) {
        os << "{";
        for (std::size_t k = 0; k < c.pieces_.size(); ++k) {
            if (k) os << ", ";
            os << "(" << c.pieces_[k].breakpoint << ", " << c.pieces_[k].value << ")";
        }
        return os << "}";
    }

  private:
    static void check_tau(double tau) {
        if (!(tau >= 0.0 && tau <= 1.0))
            throw std::domain_error("StepCurve: tau outside [0,1]");
    }

    // First piece index whose breakpoint is >= tau (strict: > tau).
    std::size_t upper(double tau, bool strict) const {
        std::size_t lo = 0, hi = pieces_.size();
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            const bool below = strict ? (pieces_[mid].breakpoint < tau)
                                      : (pieces_[mid].breakpoint <= tau);
            if (below)
                lo = mid + 1;
            else
                hi = mid;
        }
        return strict ? std::max<std::size_t>(lo, 1) : lo;
    }

    std::vector<Piece> pieces_;
};

namespace detail {

/// Union of the curves' breakpoints with near-duplicates (within kProbEps)
/// merged. Between consecutive grid points every curve is constant, up to
/// slivers narrower than the merge tolerance.
template <typename CurveSpan>
inline std::vector<double> merged_breakpoints(const CurveSpan& curves) {
    std::vector<double> grid;
    for (const StepCurve& c : curves)
        for (const auto& p : c.pieces()) grid.push_back(p.breakpoint);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end(),
                           [](double a, double b) { return b - a <= kProbEps; }),
               grid.end());
    return grid;
}

}  // namespace detail

/// Pointwise maximum of a family of curves on the refined breakpoint grid.
/// Each merged interval is sampled at its midpoint: curves whose breakpoints
/// differ only by float dust then agree on which side of the jump the
/// interval lies.
inline StepCurve pointwise_max(std::span<const StepCurve> curves, double value_eps = 0.0) {
    if (curves.empty()) throw std::invalid_argument("pointwise_max: no curves");
    if (curves.size() == 1) return curves[0];

    const std::vector<double> grid = detail::merged_breakpoints(curves);
    std::vector<StepCurve::Piece> out;
    out.reserve(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double right = (j + 1 < grid.size()) ? grid[j + 1] : 1.0;
        const double mid = grid[j] + (right - grid[j]) / 2.0;
        double v = curves[0].value_at(mid);
        for (std::size_t i = 1; i < curves.size(); ++i)
            v = std::max(v, curves[i].value_at(mid));
        out.push_back({grid[j], v});
    }
    return StepCurve(std::move(out), value_eps);
}

/// Sup-norm distance between two curves, evaluated at the midpoint of every
/// interval of the merged breakpoint grid (both curves are constant there).
inline double sup_distance(const StepCurve& a, const StepCurve& b) {
    const std::array<const StepCurve*, 2> ptrs = {&a, &b};
    std::vector<double> grid;
    for (const StepCurve* c : ptrs)
        for (const auto& p : c->pieces()) grid.push_back(p.breakpoint);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end(),
                           [](double x, double y) { return y - x <= kProbEps; }),
               grid.end());
    double d = 0.0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double right = (j + 1 < grid.size()) ? grid[j + 1] : 1.0;
        const double mid = grid[j] + (right - grid[j]) / 2.0;
        d = std::max(d, std::fabs(a.value_at(mid) - b.value_at(mid)));
    }
    return d;
}

/// Restricts a curve to N uniform breakpoints {j/N}. The compressed curve
/// takes, on each grid cell, the value just right of the cell's left edge;
/// for a non-decreasing curve this never exceeds the original anywhere, so
/// compressed value promises remain achievable.
inline StepCurve compress_to_grid(const StepCurve& curve, int n_breakpoints,
                                  double value_eps = 0.0) {
    if (n_breakpoints < 2) throw std::invalid_argument("compress_to_grid: need N >= 2");
    const int n = n_breakpoints;
    std::vector<StepCurve::Piece> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        const double g = static_cast<double>(j) / static_cast<double>(n);
        out.push_back({g, curve.value_right_of(g)});
    }
    return StepCurve(std::move(out), value_eps);
}

}  // namespace qmdp
