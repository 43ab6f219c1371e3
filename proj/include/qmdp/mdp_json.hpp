#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "qmdp/common.hpp"
#include "qmdp/mdp.hpp"

namespace qmdp {

// Model files are a single self-describing JSON document. Probabilities are
// serialized as decimal strings so a value written by one toolchain parses
// to the same double everywhere. Transition and reward rows are dense arrays
// indexed by declared state order for small models and name-keyed objects
// (zero entries omitted) for large ones; both forms load.

namespace detail {

using ordered_json = nlohmann::ordered_json;

inline double parse_prob(const ordered_json& j, const std::string& where) {
    try {
        if (j.is_string()) return std::stod(j.get<std::string>());
        if (j.is_number()) return j.get<double>();
    } catch (const std::exception&) {
    }
    throw std::runtime_error(where + ": expected a probability");
}

inline int lookup_state(const MdpSpec& spec, const std::string& name, const std::string& where) {
    for (int i = 0; i < spec.num_states(); ++i)
        if (spec.states[i] == name) return i;
    throw std::runtime_error(where + ": unknown state name '" + name + "'");
}

inline int lookup_action(const MdpSpec& spec, const std::string& name, const std::string& where) {
    for (int i = 0; i < spec.num_actions(); ++i)
        if (spec.actions[i] == name) return i;
    throw std::runtime_error(where + ": unknown action name '" + name + "'");
}

/// Reads one transition row: either a dense probability array over all
/// states or an object keyed by state name.
inline void load_transition_row(const MdpSpec& spec, const ordered_json& j, StageRow& row,
                                const std::string& where) {
    if (j.is_array()) {
        if (j.size() != spec.states.size())
            throw std::runtime_error(where + ": dense row has " + std::to_string(j.size()) +
                                     " entries, expected " + std::to_string(spec.states.size()));
        for (std::size_t s = 0; s < j.size(); ++s) {
            const double p = parse_prob(j[s], where);
            if (p == 0.0) continue;
            row.successors.push_back(static_cast<int>(s));
            row.probs.push_back(p);
        }
    } else if (j.is_object()) {
        for (const auto& [name, value] : j.items()) {
            row.successors.push_back(lookup_state(spec, name, where));
            row.probs.push_back(parse_prob(value, where));
        }
    } else {
        throw std::runtime_error(where + ": transition row must be an array or object");
    }
}

inline ordered_json dump_transition_row(const MdpSpec& spec, const StageRow& row, bool dense) {
    if (dense) {
        ordered_json out = ordered_json::array();
        std::vector<double> full(spec.states.size(), 0.0);
        for (std::size_t e = 0; e < row.successors.size(); ++e) full[row.successors[e]] = row.probs[e];
        for (double p : full) out.push_back(to_decimal_string(p));
        return out;
    }
    ordered_json out = ordered_json::object();
    for (std::size_t e = 0; e < row.successors.size(); ++e)
        out[spec.states[row.successors[e]]] = to_decimal_string(row.probs[e]);
    return out;
}

}  // namespace detail

inline nlohmann::ordered_json model_to_json(const MdpSpec& spec) {
    using detail::ordered_json;
    const bool dense = spec.states.size() <= 12;

    ordered_json j;
    j["states"] = spec.states;
    j["actions"] = spec.actions;
    if (spec.is_finite())
        j["horizon"] = {{"finite", spec.finite_periods()}};
    else
        j["horizon"] = {{"discounted", to_decimal_string(spec.discount())}};
    j["stationary"] = spec.stationary;
    j["integer_rewards"] = spec.integer_rewards;

    ordered_json adm = ordered_json::array();
    for (const auto& slice : spec.admissible) {
        ordered_json per_state = ordered_json::array();
        for (const auto& ids : slice) {
            ordered_json names = ordered_json::array();
            for (int a : ids) names.push_back(spec.actions[a]);
            per_state.push_back(names);
        }
        adm.push_back(per_state);
    }
    j["admissible"] = adm;

    ordered_json trans = ordered_json::array();
    for (const auto& slice : spec.rows) {
        ordered_json per_state = ordered_json::array();
        for (const auto& per_action : slice) {
            ordered_json rows = ordered_json::array();
            for (const auto& row : per_action)
                rows.push_back(row.successors.empty()
                                   ? ordered_json()
                                   : detail::dump_transition_row(spec, row, dense));
            per_state.push_back(rows);
        }
        trans.push_back(per_state);
    }
    j["transitions"] = trans;

    ordered_json rewards;
    rewards["kind"] =
        spec.reward_kind == RewardKind::deterministic ? "deterministic" : "distributional";
    ordered_json values = ordered_json::array();
    for (const auto& slice : spec.rows) {
        ordered_json per_state = ordered_json::array();
        for (const auto& per_action : slice) {
            ordered_json rows = ordered_json::array();
            for (const auto& row : per_action) {
                if (row.successors.empty()) {
                    rows.push_back(nullptr);
                    continue;
                }
                ordered_json rr = ordered_json::object();
                if (spec.reward_kind == RewardKind::deterministic) {
                    if (row.rewards.size() != row.successors.size()) {
                        rows.push_back(nullptr);
                        continue;
                    }
                    for (std::size_t e = 0; e < row.successors.size(); ++e)
                        rr[spec.states[row.successors[e]]] = row.rewards[e];
                } else {
                    if (row.reward_dists.size() != row.successors.size()) {
                        rows.push_back(nullptr);
                        continue;
                    }
                    for (std::size_t e = 0; e < row.successors.size(); ++e) {
                        ordered_json atoms = ordered_json::array();
                        for (const auto& atom : row.reward_dists[e].atoms())
                            atoms.push_back(
                                ordered_json::array({atom.value, to_decimal_string(atom.prob)}));
                        rr[spec.states[row.successors[e]]] = {{"atoms", atoms}};
                    }
                }
                rows.push_back(rr);
            }
            per_state.push_back(rows);
        }
        values.push_back(per_state);
    }
    rewards["values"] = values;
    j["rewards"] = rewards;

    ordered_json terminal = ordered_json::array();
    for (int s = 0; s < spec.num_states(); ++s) terminal.push_back(spec.terminal_reward(s));
    j["terminal"] = terminal;
    return j;
}

inline MdpSpec model_from_json(const nlohmann::ordered_json& j) {
    using detail::ordered_json;
    MdpSpec spec;
    try {
        spec.states = j.at("states").get<std::vector<std::string>>();
        spec.actions = j.at("actions").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("model: states/actions: ") + e.what());
    }

    const auto& horizon = j.at("horizon");
    if (horizon.contains("finite"))
        spec.horizon = FiniteHorizon{horizon.at("finite").get<int>()};
    else if (horizon.contains("discounted"))
        spec.horizon =
            DiscountedHorizon{detail::parse_prob(horizon.at("discounted"), "horizon.discounted")};
    else
        throw std::runtime_error("model: horizon must be {finite: T} or {discounted: gamma}");

    spec.stationary = j.value("stationary", true);
    spec.integer_rewards = j.value("integer_rewards", false);

    const std::size_t slices =
        spec.stationary ? 1
                        : static_cast<std::size_t>(
                              spec.is_finite() ? spec.finite_periods() : 1);

    const int S = spec.num_states();
    const int A = spec.num_actions();

    if (j.contains("admissible") && !j.at("admissible").is_null()) {
        const auto& adm = j.at("admissible");
        for (std::size_t ti = 0; ti < adm.size(); ++ti) {
            std::vector<std::vector<int>> slice;
            for (std::size_t s = 0; s < adm[ti].size(); ++s) {
                std::vector<int> ids;
                for (const auto& name : adm[ti][s]) {
                    const std::string where = "admissible[" + std::to_string(ti) + "][" +
                                              std::to_string(s) + "]";
                    ids.push_back(detail::lookup_action(spec, name.get<std::string>(), where));
                }
                std::sort(ids.begin(), ids.end());
                slice.push_back(ids);
            }
            spec.admissible.push_back(slice);
        }
    } else {
        std::vector<int> all;
        for (int a = 0; a < A; ++a) all.push_back(a);
        spec.admissible.assign(slices, std::vector<std::vector<int>>(S, all));
    }

    const auto& trans = j.at("transitions");
    for (std::size_t ti = 0; ti < trans.size(); ++ti) {
        std::vector<std::vector<StageRow>> slice;
        if (trans[ti].size() != static_cast<std::size_t>(S))
            throw std::runtime_error("transitions[" + std::to_string(ti) +
                                     "]: expected one entry per state");
        for (std::size_t s = 0; s < trans[ti].size(); ++s) {
            std::vector<StageRow> per_action(A);
            const auto& rows = trans[ti][s];
            if (rows.size() != static_cast<std::size_t>(A))
                throw std::runtime_error("transitions[" + std::to_string(ti) + "][" +
                                         std::to_string(s) + "]: expected one row per action");
            for (std::size_t a = 0; a < rows.size(); ++a) {
                if (rows[a].is_null()) continue;
                const std::string where = "transitions[" + std::to_string(ti) + "][" +
                                          std::to_string(s) + "][" + std::to_string(a) + "]";
                detail::load_transition_row(spec, rows[a], per_action[a], where);
            }
            slice.push_back(std::move(per_action));
        }
        spec.rows.push_back(std::move(slice));
    }

    const auto& rewards = j.at("rewards");
    const std::string kind = rewards.at("kind").get<std::string>();
    if (kind == "deterministic")
        spec.reward_kind = RewardKind::deterministic;
    else if (kind == "distributional")
        spec.reward_kind = RewardKind::distributional;
    else
        throw std::runtime_error("rewards.kind: expected deterministic or distributional");

    const auto& values = rewards.at("values");
    for (std::size_t ti = 0; ti < values.size() && ti < spec.rows.size(); ++ti)
        for (std::size_t s = 0; s < values[ti].size() && s < spec.rows[ti].size(); ++s)
            for (std::size_t a = 0; a < values[ti][s].size() && a < spec.rows[ti][s].size();
                 ++a) {
                const auto& cell = values[ti][s][a];
                if (cell.is_null()) continue;
                StageRow& row = spec.rows[ti][s][a];
                const std::string where = "rewards.values[" + std::to_string(ti) + "][" +
                                          std::to_string(s) + "][" + std::to_string(a) + "]";
                auto fetch = [&](int succ) -> const ordered_json* {
                    if (cell.is_array()) {
                        if (static_cast<std::size_t>(succ) >= cell.size()) return nullptr;
                        const auto& entry = cell[static_cast<std::size_t>(succ)];
                        return entry.is_null() ? nullptr : &entry;
                    }
                    if (cell.is_object()) {
                        const auto it = cell.find(spec.states[succ]);
                        if (it == cell.end() || it->is_null()) return nullptr;
                        return &*it;
                    }
                    throw std::runtime_error(where + ": expected an array or object");
                };
                bool complete = true;
                std::vector<double> det;
                std::vector<DiscreteDistribution> dists;
                for (int succ : row.successors) {
                    const ordered_json* entry = fetch(succ);
                    if (!entry) {
                        complete = false;
                        break;
                    }
                    if (spec.reward_kind == RewardKind::deterministic) {
                        det.push_back(entry->get<double>());
                    } else {
                        std::vector<DiscreteDistribution::Atom> atoms;
                        for (const auto& pair : entry->at("atoms"))
                            atoms.push_back({pair.at(0).get<double>(),
                                             detail::parse_prob(pair.at(1), where)});
                        dists.push_back(DiscreteDistribution(std::move(atoms)));
                    }
                }
                if (!complete) continue;  // validation reports the missing entry
                if (spec.reward_kind == RewardKind::deterministic)
                    row.rewards = std::move(det);
                else
                    row.reward_dists = std::move(dists);
            }

    if (j.contains("terminal") && !j.at("terminal").is_null()) {
        const auto& term = j.at("terminal");
        spec.terminal.assign(S, 0.0);
        if (term.is_array()) {
            if (term.size() != static_cast<std::size_t>(S))
                throw std::runtime_error("terminal: expected one entry per state");
            for (int s = 0; s < S; ++s) spec.terminal[s] = term[s].get<double>();
        } else if (term.is_object()) {
            for (const auto& [name, value] : term.items())
                spec.terminal[detail::lookup_state(spec, name, "terminal")] = value.get<double>();
        } else {
            throw std::runtime_error("terminal: expected an array or object");
        }
    }
    return spec;
}

/// Loads and structurally checks a model file. Parse errors carry the file
/// path and the parser's position context; semantic errors carry the JSON
/// path of the offending field. Model invariants are NOT checked here; run
/// validate() on the result.
inline MdpSpec load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    try {
        return model_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

inline void save_model(const MdpSpec& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << model_to_json(spec).dump(1) << "\n";
}

}  // namespace qmdp
