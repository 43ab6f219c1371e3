#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace qmdp {

/// Shortest decimal string that parses back to the same double. Used by
/// every serializer so that identical inputs produce byte-identical files.
inline std::string to_decimal_string(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Absolute tolerance for comparing probabilities and curve breakpoints.
/// Two probability coordinates closer than this are treated as equal and
/// merged during canonicalization.
inline constexpr double kProbEps = 1e-12;

/// Atoms with probability below this are treated as numerically empty and
/// dropped before quantile queries (the inf/sup conventions ignore
/// measure-zero sets).
inline constexpr double kAtomEps = 1e-15;

/// Default tolerance for merging equal reward values when rewards are not
/// declared integer. Integer-reward paths merge exactly.
inline constexpr double kValueEps = 1e-9;

inline bool nearly_equal(double a, double b, double eps) {
    return std::fabs(a - b) <= eps;
}

// ---------------------------------------------------------------------------
// Deterministic pseudo-random helpers.
//
// std::uniform_*_distribution is not bit-reproducible across standard
// libraries, so generators and simulators draw through these instead. All
// outputs are pure functions of the engine state.
// ---------------------------------------------------------------------------

/// splitmix64 step; used both as a stand-alone mixer and for deriving
/// per-stream seeds from a base seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed and a stream index.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t s = base ^ (0x632be59bd9b4e019ULL * (stream + 1));
    std::uint64_t a = splitmix64(s);
    std::uint64_t b = splitmix64(s);
    return a ^ (b << 1);
}

/// xoshiro-free minimal engine: a splitmix64 sequence. Deterministic across
/// platforms and cheap to seed per episode.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [lo, hi] inclusive. Uses rejection sampling so the
    /// result is unbiased and reproducible.
    std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
        if (lo > hi) throw std::invalid_argument("next_int: empty range");
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<std::int64_t>(next_u64());  // full range
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    (std::numeric_limits<std::uint64_t>::max() % span);
        std::uint64_t draw;
        do {
            draw = next_u64();
        } while (draw >= limit);
        return lo + static_cast<std::int64_t>(draw % span);
    }

    /// Samples an index from a finite probability row (probabilities assumed
    /// to sum to one).
    template <typename Row>
    std::size_t next_index(const Row& probs) {
        const double u = next_double();
        double cum = 0.0;
        std::size_t last = 0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            cum += probs[i];
            last = i;
            if (u < cum) return i;
        }
        return last;
    }

  private:
    std::uint64_t state_;
};

}  // namespace qmdp
