#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qmdp/common.hpp"
#include "qmdp/mdp.hpp"

namespace qmdp {

// Treatment-initiation case study: a patient tracked by CD4 cell-count bin,
// age, and treatment duration decides every six months whether to start
// lifelong antiretroviral therapy. Off treatment the CD4 count drifts down
// and disease mortality is high; on treatment CD4 recovers by a
// duration-dependent amount but background mortality is elevated by a
// cardiac risk multiplier. Rewards are discounted quality-adjusted
// half-years; the terminal reward is the expected remaining lifetime value
// from a cohort recursion past the terminal age.

/// Per-age annual death probability table (CSV: age,annual_death_prob).
struct MortalityTable {
    std::vector<int> ages;
    std::vector<double> annual_prob;

    double at(double age) const {
        if (ages.empty()) throw std::domain_error("MortalityTable: empty");
        if (age <= ages.front()) return annual_prob.front();
        for (std::size_t i = ages.size(); i-- > 0;)
            if (static_cast<double>(ages[i]) <= age) return annual_prob[i];
        return annual_prob.back();
    }

    int max_age() const { return ages.empty() ? 0 : ages.back(); }

    bool operator==(const MortalityTable&) const = default;
};

inline MortalityTable load_mortality_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    MortalityTable table;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string age_field, prob_field;
        if (!std::getline(row, age_field, ',') || !std::getline(row, prob_field, ','))
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected age,annual_death_prob");
        try {
            table.ages.push_back(std::stoi(age_field));
            table.annual_prob.push_back(std::stod(prob_field));
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": parse error");
        }
    }
    if (table.ages.empty()) throw std::runtime_error(path + ": no data rows");
    for (std::size_t i = 1; i < table.ages.size(); ++i)
        if (table.ages[i] <= table.ages[i - 1])
            throw std::runtime_error(path + ": ages must be strictly increasing");
    return table;
}

/// Synthetic stand-in for a published life table: a Gompertz-shaped annual
/// death probability. Real analyses should substitute measured data; this
/// placeholder only keeps the generator runnable out of the box.
inline MortalityTable synthetic_mortality(int age_lo = 20, int age_hi = 110) {
    MortalityTable table;
    for (int age = age_lo; age <= age_hi; ++age) {
        table.ages.push_back(age);
        const double p = 0.0004 * std::exp(0.082 * (age - 20));
        table.annual_prob.push_back(std::min(0.9, p));
    }
    return table;
}

struct HivParams {
    // CD4 bins in cells/mm^3: [0,50), [50,100), [100,200), ..., [500, inf)
    std::array<double, 7> cd4_lower = {0, 50, 100, 200, 300, 400, 500};

    double start_age = 20.0;
    double terminal_age = 90.0;
    double period_years = 0.5;

    double cd4_drift_off_art = 35.25;  // cells lost per period off treatment
    // cells gained per period on treatment, by completed-period bracket
    // (<=6, <=12, <=18, <=24, <=30, <=36, <=42, >42 months)
    std::array<double, 8> cd4_gain_on_art = {100, 50, 40, 40, 25, 20, 20, 0};

    std::array<double, 7> hiv_death_off = {0.1618, 0.0692, 0.0549, 0.0428,
                                           0.0348, 0.0295, 0.0186};
    std::array<double, 7> hiv_death_on = {0.1356, 0.0472, 0.0201, 0.0103,
                                          0.0076, 0.0076, 0.0045};
    std::array<double, 7> utility_off = {0.82, 0.83, 0.84, 0.85, 0.86, 0.87, 0.88};
    std::array<double, 7> utility_on = {0.72, 0.75, 0.78, 0.81, 0.84, 0.87, 0.90};

    double cardiac_mortality_multiplier = 2.0;
    double annual_discount = 0.03;

    /// Rewards are snapped to this QALY grid before solving so the value
    /// curves keep a finite value set; 0 disables quantization.
    double reward_quantum = 0.005;

    MortalityTable background;

    int periods() const {
        return static_cast<int>(std::llround((terminal_age - start_age) / period_years));
    }

    double per_period_discount() const {
        return std::pow(1.0 + annual_discount, -period_years);
    }

    std::vector<std::string> bin_labels() const {
        std::vector<std::string> labels;
        for (std::size_t b = 0; b < cd4_lower.size(); ++b) {
            if (b + 1 < cd4_lower.size())
                labels.push_back(std::to_string(static_cast<int>(cd4_lower[b])) + "-" +
                                 std::to_string(static_cast<int>(cd4_lower[b + 1])));
            else
                labels.push_back(">" + std::to_string(static_cast<int>(cd4_lower[b])));
        }
        return labels;
    }

    void check() const {
        if (!(terminal_age > start_age)) throw std::domain_error("hiv: terminal_age <= start_age");
        if (!(period_years > 0)) throw std::domain_error("hiv: period must be positive");
        if (!(cd4_drift_off_art > 0)) throw std::domain_error("hiv: drift must be positive");
        for (double p : hiv_death_off)
            if (!(p >= 0 && p <= 1)) throw std::domain_error("hiv: death probability outside [0,1]");
        for (double p : hiv_death_on)
            if (!(p >= 0 && p <= 1)) throw std::domain_error("hiv: death probability outside [0,1]");
        for (double u : utility_off)
            if (!(u >= 0 && u <= 1)) throw std::domain_error("hiv: utility outside [0,1]");
        for (double u : utility_on)
            if (!(u >= 0 && u <= 1)) throw std::domain_error("hiv: utility outside [0,1]");
        for (double g : cd4_gain_on_art)
            if (g < 0) throw std::domain_error("hiv: negative CD4 gain");
        if (background.ages.empty())
            throw std::domain_error("hiv: background mortality table required");
        if (static_cast<double>(background.ages.front()) > start_age ||
            static_cast<double>(background.max_age()) < terminal_age)
            throw std::domain_error("hiv: mortality table must cover [start_age, terminal_age]");
    }
};

namespace hiv_detail {

constexpr int kBins = 7;
constexpr int kDurations = 9;  // 0 = off treatment, 1..8 completed-period brackets
constexpr int kPhases = 5;     // countdown slots for bin movement

struct Patient {
    int bin;    // 0..6
    int dur;    // 0 off treatment; k >= 1 after k periods on it (capped at 8)
    int phase;  // periods remaining in the current bin before it moves
};

inline int state_count() { return kBins * kDurations * kPhases + 1; }
inline int death_id() { return state_count() - 1; }

inline int encode(const Patient& p) {
    return (p.bin * kDurations + p.dur) * kPhases + p.phase;
}

inline Patient decode(int id) {
    return {id / (kDurations * kPhases), (id / kPhases) % kDurations, id % kPhases};
}

inline double bin_width(const HivParams& params, int bin) {
    // the open-ended top bin reuses the last finite width for drift purposes
    if (bin + 1 < kBins) return params.cd4_lower[bin + 1] - params.cd4_lower[bin];
    return params.cd4_lower[kBins - 1] - params.cd4_lower[kBins - 2];
}

/// Periods spent in a bin before the accumulated drift/gain crosses its
/// width.
inline int crossing_periods(double width, double rate) {
    return static_cast<int>(std::ceil(width / rate));
}

inline int off_entry_phase(const HivParams& params, int bin) {
    return crossing_periods(bin_width(params, bin), params.cd4_drift_off_art) - 1;
}

inline double gain_for_period(const HivParams& params, int art_period_1based) {
    const int bracket = std::min(art_period_1based, 8);
    return params.cd4_gain_on_art[static_cast<std::size_t>(bracket - 1)];
}

/// Deterministic CD4-bin step for one period, conditional on survival.
/// on_art marks whether this period is spent on treatment (the starting
/// period counts).
inline Patient survivor_next(const HivParams& params, const Patient& s, bool on_art) {
    if (!on_art) {
        if (s.bin == 0) return {0, 0, 0};  // floor of the scale; no further drift
        if (s.phase > 0) return {s.bin, 0, s.phase - 1};
        const int nb = s.bin - 1;
        return {nb, 0, off_entry_phase(params, nb)};
    }
    const int k = s.dur + 1;  // which treatment period this is
    const int nd = std::min(s.dur + 1, kDurations - 1);
    const double gain = gain_for_period(params, k);
    if (s.bin == kBins - 1 || gain <= 0.0) return {s.bin, nd, 0};
    const int countdown =
        s.dur == 0 ? crossing_periods(bin_width(params, s.bin), gain) - 1 : s.phase;
    if (countdown > 0) return {s.bin, nd, countdown - 1};
    const int nb = s.bin + 1;
    const double next_gain = gain_for_period(params, k + 1);
    const int np = (nb == kBins - 1 || next_gain <= 0.0)
                       ? 0
                       : crossing_periods(bin_width(params, nb), next_gain) - 1;
    return {nb, nd, np};
}

inline double period_death_prob(const HivParams& params, const Patient& s, bool on_art,
                                double age) {
    const double hiv = on_art ? params.hiv_death_on[s.bin] : params.hiv_death_off[s.bin];
    double annual_bg = params.background.at(age);
    if (on_art) annual_bg = std::min(1.0, annual_bg * params.cardiac_mortality_multiplier);
    const double bg = 1.0 - std::pow(1.0 - annual_bg, params.period_years);
    return 1.0 - (1.0 - bg) * (1.0 - hiv);
}

inline double period_qaly(const HivParams& params, const Patient& s, bool on_art) {
    const double u = on_art ? params.utility_on[s.bin] : params.utility_off[s.bin];
    return u * params.period_years;
}

inline double quantize(double value, double quantum) {
    if (quantum <= 0.0) return value;
    return std::round(value / quantum) * quantum;
}

}  // namespace hiv_detail

inline std::vector<std::string> hiv_state_names(const HivParams& params) {
    const auto labels = params.bin_labels();
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(hiv_detail::state_count()));
    for (int id = 0; id < hiv_detail::state_count() - 1; ++id) {
        const auto p = hiv_detail::decode(id);
        names.push_back("c" + std::to_string(p.bin + 1) + "_d" + std::to_string(p.dur) + "_p" +
                        std::to_string(p.phase) + "[" + labels[p.bin] + "]");
    }
    names.push_back("Death");
    return names;
}

/// Initial state id for a fresh, untreated patient in the given CD4 bin
/// (0-based).
inline int hiv_start_state(const HivParams& params, int bin) {
    if (bin < 0 || bin >= hiv_detail::kBins) throw std::domain_error("hiv: bin outside 0..6");
    return hiv_detail::encode({bin, 0, hiv_detail::off_entry_phase(params, bin)});
}

/// Expected discounted remaining QALYs for each state at the terminal age,
/// from an expectation recursion over the same dynamics with the regimen
/// frozen (nobody starts treatment after the horizon). The recursion stops
/// once the surviving mass drops below 1e-6 or sixty further years pass;
/// ages beyond the table reuse its last row. Values are relative to the
/// terminal age (undiscounted by the main horizon).
inline std::vector<double> cohort_terminal_reward(const HivParams& params) {
    params.check();
    using namespace hiv_detail;
    const int n = state_count();
    const double beta = params.per_period_discount();
    const int max_periods = static_cast<int>(std::llround(60.0 / params.period_years));

    std::vector<double> terminal(static_cast<std::size_t>(n), 0.0);
    for (int id = 0; id < n - 1; ++id) {
        const Patient start = decode(id);
        const bool on_art = start.dur >= 1;
        // mass per state; the regimen never changes, so dur evolves but stays
        // on the same side of 0
        std::vector<double> mass(static_cast<std::size_t>(n), 0.0);
        mass[static_cast<std::size_t>(id)] = 1.0;
        double total = 0.0;
        double discount = 1.0;
        double alive = 1.0;
        for (int k = 0; k < max_periods && alive > 1e-6; ++k) {
            const double age = params.terminal_age + k * params.period_years;
            std::vector<double> next(static_cast<std::size_t>(n), 0.0);
            double accrued = 0.0;
            for (int s = 0; s < n - 1; ++s) {
                const double m = mass[static_cast<std::size_t>(s)];
                if (m <= 0.0) continue;
                const Patient p = decode(s);
                const double death = period_death_prob(params, p, on_art, age);
                const double qaly = period_qaly(params, p, on_art);
                accrued += m * ((1.0 - death) * qaly + death * qaly / 2.0);
                const Patient succ = survivor_next(params, p, on_art);
                next[static_cast<std::size_t>(encode(succ))] += m * (1.0 - death);
            }
            total += discount * accrued;
            discount *= beta;
            mass = std::move(next);
            alive = 0.0;
            for (int s = 0; s < n - 1; ++s) alive += mass[static_cast<std::size_t>(s)];
        }
        terminal[static_cast<std::size_t>(id)] = total;
    }
    return terminal;
}

/// Builds the treatment-initiation model: states (CD4 bin, treatment
/// duration, movement countdown) plus an absorbing Death state, actions
/// {W, Rx} with Rx irreversible, six-month periods from start_age to
/// terminal_age, per-period rewards in discounted QALYs (halved on the
/// transition into Death), and cohort-recursion terminal rewards.
inline MdpSpec gen_hiv(const HivParams& params) {
    params.check();
    using namespace hiv_detail;
    const int n = state_count();
    const int T = params.periods();
    const double beta = params.per_period_discount();

    MdpSpec spec;
    spec.states = hiv_state_names(params);
    spec.actions = {"W", "Rx"};
    spec.horizon = FiniteHorizon{T};
    spec.stationary = false;
    spec.reward_kind = RewardKind::deterministic;
    spec.integer_rewards = false;

    spec.admissible.assign(static_cast<std::size_t>(T), {});
    spec.rows.assign(static_cast<std::size_t>(T), {});

    const int death = death_id();
    for (int t = 0; t < T; ++t) {
        auto& adm = spec.admissible[static_cast<std::size_t>(t)];
        auto& rows = spec.rows[static_cast<std::size_t>(t)];
        adm.assign(static_cast<std::size_t>(n), {});
        rows.assign(static_cast<std::size_t>(n), std::vector<StageRow>(2));
        const double age = params.start_age + t * params.period_years;
        const double discount = std::pow(beta, t);
        for (int id = 0; id < n; ++id) {
            if (id == death) {
                adm[static_cast<std::size_t>(id)] = {0};
                rows[static_cast<std::size_t>(id)][0] = {{death}, {1.0}, {0.0}, {}};
                continue;
            }
            const Patient p = decode(id);
            const bool already_on = p.dur >= 1;
            adm[static_cast<std::size_t>(id)] = already_on ? std::vector<int>{1}
                                                           : std::vector<int>{0, 1};
            for (int a : adm[static_cast<std::size_t>(id)]) {
                const bool on_art = already_on || a == 1;
                const double p_death = period_death_prob(params, p, on_art, age);
                const double qaly = period_qaly(params, p, on_art);
                const double live_reward = quantize(discount * qaly, params.reward_quantum);
                const double death_reward =
                    quantize(discount * qaly / 2.0, params.reward_quantum);
                StageRow& row = rows[static_cast<std::size_t>(id)][a];
                if (p_death >= 1.0) {
                    row = {{death}, {1.0}, {death_reward}, {}};
                    continue;
                }
                const int succ = encode(survivor_next(params, p, on_art));
                if (p_death <= 0.0) {
                    row = {{succ}, {1.0}, {live_reward}, {}};
                    continue;
                }
                row = {{succ, death}, {1.0 - p_death, p_death}, {live_reward, death_reward}, {}};
            }
        }
    }

    const auto remaining = cohort_terminal_reward(params);
    const double terminal_discount = std::pow(beta, T);
    spec.terminal.assign(static_cast<std::size_t>(n), 0.0);
    for (int id = 0; id < n - 1; ++id)
        spec.terminal[static_cast<std::size_t>(id)] =
            quantize(terminal_discount * remaining[static_cast<std::size_t>(id)],
                     params.reward_quantum);
    return spec;
}

}  // namespace qmdp
