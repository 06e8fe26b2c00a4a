#pragma once

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "l0bound/applications.hpp"
#include "l0bound/bounds.hpp"
#include "l0bound/errors.hpp"

namespace l0bound {

namespace detail {

/// Reals are written with exactly six decimals so report bytes are stable for golden tests.
inline std::string fixed6(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline std::string real_or_null(const std::optional<double>& v) { return v ? fixed6(*v) : "null"; }

template <typename T>
std::string int_or_null(const std::optional<T>& v)
{
    return v ? std::to_string(*v) : "null";
}

inline std::string int_list(const std::vector<std::size_t>& values)
{
    std::string out = "[";
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? ", " : "") + std::to_string(values[i]);
    return out + "]";
}

/// Writes via a sibling temp file and rename, so readers never see a partial document.
inline void write_atomically(const std::string& path, const std::string& text)
{
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp);
        out << text;
        out.flush();
        if (!out) throw IoError("write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

} // namespace detail

inline std::string report_to_json(const AnytimeReport& r)
{
    using namespace detail;
    std::string out = "{\n";
    out += "  \"iteration\": " + std::to_string(r.iteration) + ",\n";
    out += "  \"epsilon\": " + fixed6(r.epsilon) + ",\n";
    out += std::string("  \"mode\": \"") + to_string(r.mode) + "\",\n";
    out += std::string("  \"subspaces\": \"") + to_string(r.subspaces) + "\",\n";
    out += "  \"inputs\": [";
    for (std::size_t i = 0; i < r.inputs.size(); ++i) {
        const InputReport& e = r.inputs[i];
        out += i ? ",\n" : "\n";
        out += "    {\"id\": " + std::to_string(e.id);
        out += ", \"label\": " + int_or_null(e.label);
        out += ", \"predicted\": " + std::to_string(e.predicted);
        out += std::string(", \"skipped\": ") + (e.skipped ? "true" : "false");
        out += ", \"lower\": " + std::to_string(e.lower);
        out += ", \"upper\": " + int_or_null(e.upper);
        out += std::string(", \"converged\": ") + (e.converged ? "true" : "false");
        out += ", \"max_safe_radius\": " + int_or_null(e.max_safe_radius);
        out += ", \"u_c\": " + real_or_null(e.centre);
        out += ", \"u_r\": " + real_or_null(e.radius);
        out += ", \"adversarial_distance\": " + int_or_null(e.adversarial_distance);
        out += ", \"perturbed_positions\": " + int_list(e.perturbed_positions) + "}";
    }
    out += r.inputs.empty() ? "],\n" : "\n  ],\n";
    out += "  \"aggregate\": {\n";
    out += "    \"mean_lower\": " + real_or_null(r.mean_lower) + ",\n";
    out += "    \"mean_upper\": " + real_or_null(r.mean_upper) + ",\n";
    out += "    \"global_u_c\": " + real_or_null(r.global_centre) + ",\n";
    out += "    \"global_u_r\": " + real_or_null(r.global_radius) + ",\n";
    out += "    \"query_count\": " + std::to_string(r.queries) + ",\n";
    out += "    \"wall_time_s\": " + real_or_null(r.wall_time_s) + ",\n";
    out += "    \"grid_slack\": " + fixed6(r.grid_slack) + "\n";
    out += "  }\n}\n";
    return out;
}

inline void write_report(const std::string& path, const AnytimeReport& report)
{
    detail::write_atomically(path, report_to_json(report));
}

/// Checks a parsed report document against the report schema; returns one message per violation.
inline std::vector<std::string> validate_report(const nlohmann::json& doc)
{
    std::vector<std::string> problems;
    auto need = [&](const nlohmann::json& obj, const char* key, auto predicate, const std::string& where) {
        if (!obj.is_object() || !obj.contains(key)) {
            problems.push_back(where + ": missing \"" + key + "\"");
            return false;
        }
        if (!predicate(obj[key])) {
            problems.push_back(where + ": \"" + key + "\" has the wrong type");
            return false;
        }
        return true;
    };
    const auto is_uint = [](const nlohmann::json& v) { return v.is_number_integer() && v.get<std::int64_t>() >= 0; };
    const auto is_uint_or_null = [&](const nlohmann::json& v) { return v.is_null() || is_uint(v); };
    const auto is_num = [](const nlohmann::json& v) { return v.is_number(); };
    const auto is_num_or_null = [](const nlohmann::json& v) { return v.is_null() || v.is_number(); };
    const auto is_bool = [](const nlohmann::json& v) { return v.is_boolean(); };
    const auto is_mode = [](const nlohmann::json& v) { return v == "strict" || v == "paper"; };
    const auto is_sub = [](const nlohmann::json& v) { return v == "exhaustive" || v == "sampled"; };

    if (!doc.is_object()) return {"report is not an object"};
    need(doc, "iteration", is_uint, "report");
    need(doc, "epsilon", is_num, "report");
    need(doc, "mode", is_mode, "report");
    need(doc, "subspaces", is_sub, "report");
    if (need(doc, "inputs", [](const nlohmann::json& v) { return v.is_array(); }, "report")) {
        for (std::size_t i = 0; i < doc["inputs"].size(); ++i) {
            const auto& e = doc["inputs"][i];
            const std::string where = "inputs[" + std::to_string(i) + "]";
            need(e, "id", is_uint, where);
            need(e, "label", is_uint_or_null, where);
            need(e, "predicted", is_uint, where);
            const bool skipped_ok = need(e, "skipped", is_bool, where);
            const bool lower_ok = need(e, "lower", is_uint, where);
            const bool upper_ok = need(e, "upper", is_uint_or_null, where);
            const bool conv_ok = need(e, "converged", is_bool, where);
            need(e, "max_safe_radius", is_uint_or_null, where);
            need(e, "u_c", is_num_or_null, where);
            const bool ur_ok = need(e, "u_r", is_num_or_null, where);
            need(e, "adversarial_distance", is_uint_or_null, where);
            need(e, "perturbed_positions",
                 [&](const nlohmann::json& v) {
                     return v.is_array() && std::all_of(v.begin(), v.end(), is_uint);
                 },
                 where);
            if (lower_ok && upper_ok && !e["upper"].is_null() && e["lower"].get<std::size_t>() >= e["upper"].get<std::size_t>()) {
                problems.push_back(where + ": lower must be below upper");
            }
            if (ur_ok && !e["u_r"].is_null() && e["u_r"].get<double>() < 0) problems.push_back(where + ": u_r negative");
            if (ur_ok && conv_ok && skipped_ok && e["converged"].get<bool>() && !e["skipped"].get<bool>() &&
                !(e["u_r"].is_number() && e["u_r"].get<double>() == 0.0)) {
                problems.push_back(where + ": converged input must have u_r = 0");
            }
        }
    }
    if (need(doc, "aggregate", [](const nlohmann::json& v) { return v.is_object(); }, "report")) {
        const auto& a = doc["aggregate"];
        for (const char* key : {"mean_lower", "mean_upper", "global_u_c", "global_u_r", "wall_time_s"}) {
            need(a, key, is_num_or_null, "aggregate");
        }
        need(a, "query_count", is_uint, "aggregate");
        need(a, "grid_slack", is_num, "aggregate");
    }
    return problems;
}

inline std::string coverage_to_json(const CoverageReport& r)
{
    using namespace detail;
    auto neuron = [](const NeuronId& n) { return "[" + std::to_string(n.layer) + ", " + std::to_string(n.offset) + "]"; };
    std::string out = "{\n";
    out += "  \"total_neurons\": " + std::to_string(r.total_neurons) + ",\n";
    out += "  \"baseline_fraction\": " + fixed6(r.baseline_fraction) + ",\n";
    out += "  \"fraction\": " + fixed6(r.fraction) + ",\n";
    out += "  \"covered\": [";
    for (std::size_t i = 0; i < r.covered.size(); ++i) out += (i ? ", " : "") + neuron(r.covered[i]);
    out += "],\n  \"unreached\": [";
    for (std::size_t i = 0; i < r.unreached.size(); ++i) out += (i ? ", " : "") + neuron(r.unreached[i]);
    out += "],\n  \"tests\": [";
    for (std::size_t i = 0; i < r.tests.size(); ++i) {
        const GeneratedTest& g = r.tests[i];
        out += i ? ",\n" : "\n";
        out += "    {\"target\": " + neuron(g.target) + ", \"seed_id\": " + std::to_string(g.seed_id) +
               ", \"distance\": " + std::to_string(g.distance) + ", \"activation\": " + fixed6(g.activation) +
               ", \"perturbed_positions\": " + int_list(g.perturbation.positions()) + "}";
    }
    out += r.tests.empty() ? "],\n" : "\n  ],\n";
    out += "  \"query_count\": " + std::to_string(r.queries) + "\n}\n";
    return out;
}

inline void write_coverage(const std::string& path, const CoverageReport& report)
{
    detail::write_atomically(path, coverage_to_json(report));
}

/// Saliency as an ASCII graymap (P2, max 255), values scaled linearly so the map maximum is 255.
/// An all-zero map stays all zero.
inline std::string saliency_to_pgm(const SaliencyMap& map)
{
    const std::size_t height = map.shape.size() == 2 ? map.shape[0] : 1;
    const std::size_t width = map.shape.size() == 2 ? map.shape[1] : map.shape[0];
    const double top = map.values.empty() ? 0.0 : *std::max_element(map.values.begin(), map.values.end());
    std::string out = "P2\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double v = map.values[y * width + x];
            const long level = top > 0.0 ? std::lround(255.0 * v / top) : 0;
            out += (x ? " " : "") + std::to_string(level);
        }
        out += "\n";
    }
    return out;
}

inline void write_saliency(const std::string& path, const SaliencyMap& map)
{
    detail::write_atomically(path, saliency_to_pgm(map));
}

} // namespace l0bound
