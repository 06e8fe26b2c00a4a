#pragma once

#include <atomic>
#include <chrono>
#include <fstream>
#include <limits>
#include <csignal>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "l0bound/applications.hpp"
#include "l0bound/bounds.hpp"
#include "l0bound/dataset.hpp"
#include "l0bound/model_io.hpp"
#include "l0bound/report_io.hpp"

namespace l0bound::cli {

/// Settings shared by the subcommands.
struct RunConfig {
    std::string model_path;
    std::string data_path;
    double epsilon = 0.25;
    std::size_t t_max = 2;
    std::uint64_t cap = 1'000'000;
    std::uint64_t seed = 0;
    std::string mode = "strict";
    std::string subspaces = "exhaustive";
    std::size_t chunk = 4096;
    std::size_t workers = 0;
    std::string out;
    std::string saliency_out;
    std::string tests_out;
    double threshold = 0.0;
    std::size_t prefix_budget = 0;
    bool record_time = false;
};

inline std::atomic<bool>& interrupted()
{
    static std::atomic<bool> flag{false};
    return flag;
}

namespace detail {

inline std::string fixed(double v) { return l0bound::detail::fixed6(v); }

inline std::string fixed_or_null(const std::optional<double>& v) { return v ? fixed(*v) : "null"; }

inline SensitivityOptions sensitivity_options(const RunConfig& c)
{
    return {c.chunk, c.workers == 0 ? default_workers() : c.workers};
}

inline SubspaceSource subspace_source(const RunConfig& c)
{
    return {c.subspaces == "sampled" ? SubspaceMode::sampled : SubspaceMode::exhaustive, c.cap, c.seed};
}

inline void on_signal(int) { interrupted().store(true); }

inline int run_evaluate(const RunConfig& c, std::ostream& out, std::ostream& err)
{
    const Model model = load_model(c.model_path);
    const Dataset data = load_dataset(c.data_path, model.input_shape());

    EvaluateConfig config;
    config.grid = GridConfig::from_epsilon(c.epsilon);
    config.t_max = c.t_max;
    config.source = subspace_source(c);
    config.mode = c.mode == "paper" ? CheckMode::paper : CheckMode::strict;
    config.options = sensitivity_options(c);
    config.record_time = c.record_time;
    config.cancel = &interrupted();

    if (!c.out.empty()) std::filesystem::create_directories(c.out);
    const auto started = std::chrono::steady_clock::now();
    const auto result = evaluate(model, data, config, [&](const AnytimeReport& r) {
        if (!c.out.empty()) {
            write_report((std::filesystem::path(c.out) / ("report_t" + std::to_string(r.iteration) + ".json")).string(), r);
        }
        out << "iteration " << r.iteration << ": mean_lower=" << fixed_or_null(r.mean_lower)
            << " mean_upper=" << fixed_or_null(r.mean_upper) << " global_u_c=" << fixed_or_null(r.global_centre)
            << " global_u_r=" << fixed_or_null(r.global_radius) << " queries=" << r.queries << "\n";
        out.flush();
    });
    err << "wall time " << fixed(std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count())
        << " s\n";
    if (interrupted().load()) {
        err << "interrupted after iteration " << result.reports.size() << "\n";
        return 1;
    }
    return 0;
}

inline int run_attack(const RunConfig& c, std::ostream& out, std::ostream&)
{
    const Model model = load_model(c.model_path);
    const Dataset data = load_dataset(c.data_path, model.input_shape());
    const GridConfig grid = GridConfig::from_epsilon(c.epsilon);
    const std::size_t budget = c.prefix_budget == 0 ? std::numeric_limits<std::size_t>::max() : c.prefix_budget;
    if (!c.out.empty()) std::ofstream(c.out, std::ios::trunc);

    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto result = attack(model, data.inputs[i], grid, budget, sensitivity_options(c));
        out << "id " << data.ids[i];
        if (!result) {
            out << ": none\n";
            continue;
        }
        out << ": label " << result->original_label << " -> " << result->adversarial_label << " distance "
            << result->distance << " positions " << l0bound::detail::int_list(result->perturbation.positions()) << "\n";
        if (!c.out.empty()) write_adversarial(c.out, result->adversarial, result->adversarial_label, true);
    }
    return 0;
}

inline int run_testgen(const RunConfig& c, std::ostream& out, std::ostream&)
{
    const Model model = load_model(c.model_path);
    const Dataset data = load_dataset(c.data_path, model.input_shape());
    TestgenConfig config;
    config.threshold = c.threshold;
    config.per_neuron_budget = c.t_max;
    config.source = subspace_source(c);
    config.options = sensitivity_options(c);
    const CoverageReport report = testgen(model, data, GridConfig::from_epsilon(c.epsilon), config);

    if (!c.out.empty()) write_coverage(c.out, report);
    if (!c.tests_out.empty()) {
        for (const GeneratedTest& g : report.tests) write_adversarial(c.tests_out, g.input, std::nullopt, true);
    }
    out << "neurons " << report.total_neurons << " baseline " << fixed(report.baseline_fraction) << " coverage "
        << fixed(report.fraction) << " generated " << report.tests.size() << "\n";
    for (const GeneratedTest& g : report.tests) {
        out << "neuron [" << g.target.layer << "," << g.target.offset << "] seed " << g.seed_id << " distance "
            << g.distance << " activation " << fixed(g.activation) << "\n";
    }
    return 0;
}

inline int run_saliency(const RunConfig& c, std::ostream& out, std::ostream&)
{
    const Model model = load_model(c.model_path);
    const Dataset data = load_dataset(c.data_path, model.input_shape());
    const GridConfig grid = GridConfig::from_epsilon(c.epsilon);
    const bool single_file = data.size() == 1 && std::filesystem::path(c.saliency_out).extension() == ".pgm";
    if (!c.saliency_out.empty() && !single_file) std::filesystem::create_directories(c.saliency_out);

    for (std::size_t i = 0; i < data.size(); ++i) {
        const SaliencyMap map = saliency(model, data.inputs[i], grid, sensitivity_options(c));
        out << "id " << data.ids[i] << ":";
        for (double v : map.values) out << " " << fixed(v);
        out << "\n";
        if (c.saliency_out.empty()) continue;
        const std::string path =
            single_file ? c.saliency_out
                        : (std::filesystem::path(c.saliency_out) / ("saliency_" + std::to_string(data.ids[i]) + ".pgm")).string();
        write_saliency(path, map);
    }
    return 0;
}

} // namespace detail

/// Entry point; returns 0 on success, 2 on usage errors, 1 on runtime errors.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Anytime L0 robustness bounds for small neural-network classifiers"};
    app.require_subcommand(1);
    RunConfig c;

    const auto epsilon_range = CLI::Validator(
        [](std::string& s) {
            double v = 0.0;
            if (!CLI::detail::lexical_cast(s, v)) return std::string("epsilon must be a number");
            return v > 0.0 && v <= 1.0 ? std::string{} : std::string("epsilon must lie in (0,1]");
        },
        "(0,1]");

    auto common = [&](CLI::App* sub, bool needs_data) {
        sub->add_option("--model", c.model_path, "model JSON file")->required();
        auto data = sub->add_option("--data", c.data_path, "dataset CSV file");
        if (needs_data) data->required();
        sub->add_option("--epsilon", c.epsilon, "grid tolerance")->check(epsilon_range);
        sub->add_option("--chunk", c.chunk, "candidates per forward batch")->check(CLI::PositiveNumber);
        sub->add_option("--workers", c.workers, "worker threads (0 = hardware concurrency)");
        sub->add_option("--cap", c.cap, "maximum subspaces per input and t")->check(CLI::PositiveNumber);
        sub->add_option("--seed", c.seed, "seed for sampled subspaces");
        sub->add_option("--subspaces", c.subspaces, "subspace enumeration")->check(CLI::IsMember({"exhaustive", "sampled"}));
    };

    auto* evaluate_cmd = app.add_subcommand("evaluate", "anytime lower/upper bounds, one report per iteration");
    common(evaluate_cmd, true);
    evaluate_cmd->add_option("--t-max", c.t_max, "largest subspace dimension")->check(CLI::PositiveNumber);
    evaluate_cmd->add_option("--mode", c.mode, "lower-bound check")->check(CLI::IsMember({"strict", "paper"}));
    evaluate_cmd->add_option("--out", c.out, "directory for report_t<k>.json files");
    evaluate_cmd->add_flag("--record-time", c.record_time, "store wall time in reports");

    auto* attack_cmd = app.add_subcommand("attack", "single-pass L0 adversarial examples");
    common(attack_cmd, true);
    attack_cmd->add_option("--prefix-budget", c.prefix_budget, "ranked pixels to accumulate (0 = all)");
    attack_cmd->add_option("--out", c.out, "CSV file for adversarial inputs");

    auto* testgen_cmd = app.add_subcommand("testgen", "neuron-coverage test generation");
    common(testgen_cmd, true);
    testgen_cmd->add_option("--t-max", c.t_max, "per-neuron subspace dimension budget")->check(CLI::PositiveNumber);
    testgen_cmd->add_option("--threshold", c.threshold, "activation threshold");
    testgen_cmd->add_option("--out", c.out, "coverage report JSON");
    testgen_cmd->add_option("--tests-out", c.tests_out, "CSV file the generated tests are appended to");

    auto* saliency_cmd = app.add_subcommand("saliency", "per-pixel sensitivity maps");
    common(saliency_cmd, true);
    saliency_cmd->add_option("--saliency-out", c.saliency_out, "PGM file (single input) or directory");

    std::size_t qb_n = 0;
    double qb_epsilon = 0.0;
    auto* query_cmd = app.add_subcommand("query-bound", "worst-case network evaluations for exact L0 radius");
    query_cmd->add_option("n", qb_n, "input dimension")->required()->check(CLI::PositiveNumber);
    query_cmd->add_option("epsilon", qb_epsilon, "grid tolerance")->required()->check(epsilon_range);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*query_cmd) {
            out << worst_case_queries(qb_n, qb_epsilon) << "\n";
            return 0;
        }
        if (*evaluate_cmd) {
            interrupted().store(false);
            auto previous_int = std::signal(SIGINT, detail::on_signal);
            auto previous_term = std::signal(SIGTERM, detail::on_signal);
            const int code = detail::run_evaluate(c, out, err);
            std::signal(SIGINT, previous_int);
            std::signal(SIGTERM, previous_term);
            return code;
        }
        if (*attack_cmd) return detail::run_attack(c, out, err);
        if (*testgen_cmd) return detail::run_testgen(c, out, err);
        if (*saliency_cmd) return detail::run_saliency(c, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace l0bound::cli
