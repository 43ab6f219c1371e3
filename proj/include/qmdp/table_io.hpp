#pragma once

#include <fstream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "qmdp/common.hpp"
#include "qmdp/cvar.hpp"
#include "qmdp/dp.hpp"
#include "qmdp/policy.hpp"

namespace qmdp {

namespace detail {

inline nlohmann::ordered_json horizon_to_json(const Horizon& horizon) {
    if (std::holds_alternative<FiniteHorizon>(horizon))
        return {{"finite", std::get<FiniteHorizon>(horizon).periods}};
    return {{"discounted", to_decimal_string(std::get<DiscountedHorizon>(horizon).gamma)}};
}

inline Horizon horizon_from_json(const nlohmann::ordered_json& j) {
    if (j.contains("finite")) return FiniteHorizon{j.at("finite").get<int>()};
    if (j.contains("discounted"))
        return DiscountedHorizon{std::stod(j.at("discounted").get<std::string>())};
    throw std::runtime_error("horizon: expected finite or discounted");
}

inline nlohmann::ordered_json curve_to_json(const StepCurve& curve) {
    if (curve.empty()) return nullptr;
    nlohmann::ordered_json pieces = nlohmann::ordered_json::array();
    for (const auto& p : curve.pieces())
        pieces.push_back(nlohmann::ordered_json::array(
            {to_decimal_string(p.breakpoint), to_decimal_string(p.value)}));
    return pieces;
}

inline StepCurve curve_from_json(const nlohmann::ordered_json& j) {
    if (j.is_null()) return StepCurve();
    std::vector<StepCurve::Piece> pieces;
    for (const auto& pair : j)
        pieces.push_back({std::stod(pair.at(0).get<std::string>()),
                          std::stod(pair.at(1).get<std::string>())});
    return StepCurve(std::move(pieces));
}

}  // namespace detail

/// Value tables serialize as a JSON document mapping (t, state[, action]) to
/// breakpoint-value lists. Numbers round-trip exactly through shortest
/// decimal strings.
inline nlohmann::ordered_json value_table_to_json(const ValueTable& table) {
    nlohmann::ordered_json j;
    j["type"] = "quantile_value_table";
    j["horizon"] = detail::horizon_to_json(table.horizon);
    j["states"] = table.states;
    j["actions"] = table.actions;
    nlohmann::ordered_json v = nlohmann::ordered_json::array();
    for (const auto& stage : table.v) {
        if (stage.empty()) {
            v.push_back(nullptr);
            continue;
        }
        nlohmann::ordered_json per_state = nlohmann::ordered_json::array();
        for (const auto& curve : stage) per_state.push_back(detail::curve_to_json(curve));
        v.push_back(per_state);
    }
    j["v"] = v;
    if (!table.v_action.empty()) {
        nlohmann::ordered_json va = nlohmann::ordered_json::array();
        for (const auto& stage : table.v_action) {
            if (stage.empty()) {
                va.push_back(nullptr);
                continue;
            }
            nlohmann::ordered_json per_state = nlohmann::ordered_json::array();
            for (const auto& per_action : stage) {
                nlohmann::ordered_json curves = nlohmann::ordered_json::array();
                for (const auto& curve : per_action) curves.push_back(detail::curve_to_json(curve));
                per_state.push_back(curves);
            }
            va.push_back(per_state);
        }
        j["v_action"] = va;
    }
    if (!table.vi_residuals.empty()) {
        nlohmann::ordered_json res = nlohmann::ordered_json::array();
        for (double r : table.vi_residuals) res.push_back(to_decimal_string(r));
        j["vi_residuals"] = res;
    }
    return j;
}

inline ValueTable value_table_from_json(const nlohmann::ordered_json& j) {
    if (j.value("type", "") != "quantile_value_table")
        throw std::runtime_error("value table: unexpected document type");
    ValueTable table;
    table.horizon = detail::horizon_from_json(j.at("horizon"));
    table.states = j.at("states").get<std::vector<std::string>>();
    table.actions = j.at("actions").get<std::vector<std::string>>();
    for (const auto& stage : j.at("v")) {
        table.v.push_back({});
        if (stage.is_null()) continue;
        for (const auto& curve : stage) table.v.back().push_back(detail::curve_from_json(curve));
    }
    if (j.contains("v_action")) {
        for (const auto& stage : j.at("v_action")) {
            table.v_action.push_back({});
            if (stage.is_null()) continue;
            for (const auto& per_state : stage) {
                table.v_action.back().push_back({});
                for (const auto& curve : per_state)
                    table.v_action.back().back().push_back(detail::curve_from_json(curve));
            }
        }
    }
    if (j.contains("vi_residuals"))
        for (const auto& r : j.at("vi_residuals"))
            table.vi_residuals.push_back(std::stod(r.get<std::string>()));
    return table;
}

inline void save_value_table(const ValueTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << value_table_to_json(table).dump(1) << "\n";
}

inline ValueTable load_value_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return value_table_from_json(j);
}

inline nlohmann::ordered_json cvar_table_to_json(const CvarTable& table) {
    nlohmann::ordered_json j;
    j["type"] = "cvar_table";
    j["horizon"] = detail::horizon_to_json(table.horizon);
    j["states"] = table.states;
    j["actions"] = table.actions;
    j["grid_size"] = table.grid_size;
    nlohmann::ordered_json uq = nlohmann::ordered_json::array();
    for (const auto& stage : table.u_quant) {
        nlohmann::ordered_json per_state = nlohmann::ordered_json::array();
        for (const auto& curve : stage) per_state.push_back(detail::curve_to_json(curve));
        uq.push_back(per_state);
    }
    j["u_quant"] = uq;
    nlohmann::ordered_json ua = nlohmann::ordered_json::array();
    for (const auto& stage : table.u_quant_action) {
        nlohmann::ordered_json per_state = nlohmann::ordered_json::array();
        for (const auto& per_action : stage) {
            nlohmann::ordered_json curves = nlohmann::ordered_json::array();
            for (const auto& curve : per_action) curves.push_back(detail::curve_to_json(curve));
            per_state.push_back(curves);
        }
        ua.push_back(per_state);
    }
    j["u_quant_action"] = ua;
    return j;
}

inline CvarTable cvar_table_from_json(const nlohmann::ordered_json& j) {
    if (j.value("type", "") != "cvar_table")
        throw std::runtime_error("cvar table: unexpected document type");
    CvarTable table;
    table.horizon = detail::horizon_from_json(j.at("horizon"));
    table.states = j.at("states").get<std::vector<std::string>>();
    table.actions = j.at("actions").get<std::vector<std::string>>();
    table.grid_size = j.at("grid_size").get<int>();
    for (const auto& stage : j.at("u_quant")) {
        table.u_quant.push_back({});
        for (const auto& curve : stage)
            table.u_quant.back().push_back(detail::curve_from_json(curve));
    }
    for (const auto& stage : j.at("u_quant_action")) {
        table.u_quant_action.push_back({});
        for (const auto& per_state : stage) {
            table.u_quant_action.back().push_back({});
            for (const auto& curve : per_state)
                table.u_quant_action.back().back().push_back(detail::curve_from_json(curve));
        }
    }
    return table;
}

inline void save_cvar_table(const CvarTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << cvar_table_to_json(table).dump(1) << "\n";
}

inline CvarTable load_cvar_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return cvar_table_from_json(j);
}

/// Episode logs: one CSV row per period of each episode.
inline void write_episode_csv(std::ostream& os, std::span<const EpisodeResult> episodes,
                              const std::vector<std::string>& states,
                              const std::vector<std::string>& actions) {
    os << "episode,t,state,action,tau,reward\n";
    for (std::size_t i = 0; i < episodes.size(); ++i)
        for (const auto& step : episodes[i].steps)
            os << i << "," << step.t << "," << states[step.state] << "," << actions[step.action]
               << "," << to_decimal_string(step.tau) << "," << to_decimal_string(step.reward)
               << "\n";
}

/// Sampled CVaR table: one row per (t, state, grid tau).
inline void write_cvar_grid_csv(std::ostream& os, const CvarTable& table) {
    os << "t,state,tau,u,u_quant\n";
    const auto taus = table.grid_taus();
    for (std::size_t t = 0; t < table.u_quant.size(); ++t)
        for (std::size_t s = 0; s < table.u_quant[t].size(); ++s)
            for (double tau : taus)
                os << t << "," << table.states[s] << "," << to_decimal_string(tau) << ","
                   << to_decimal_string(table.u_at(static_cast<int>(t), static_cast<int>(s), tau))
                   << ","
                   << to_decimal_string(
                          table.u_quant_at(static_cast<int>(t), static_cast<int>(s), tau))
                   << "\n";
}

}  // namespace qmdp
