#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <vector>

#include "l0bound/bounds.hpp"
#include "l0bound/dataset.hpp"
#include "l0bound/model.hpp"
#include "l0bound/parallel.hpp"
#include "l0bound/sparse.hpp"
#include "l0bound/subspace.hpp"

namespace l0bound {

struct AttackResult {
    TensorND adversarial;
    SparsePerturbation perturbation;
    std::size_t distance = 0;
    std::size_t original_label = 0;
    std::size_t adversarial_label = 0;
    std::uint64_t queries = 0;
};

/// Single-pass L0 attack: one-pixel sensitivities, prefix accumulation over at most
/// `prefix_budget` ranked pixels, then tightening.
inline std::optional<AttackResult> attack(const Model& model, const TensorND& x0, const GridConfig& grid,
                                          std::size_t prefix_budget = std::numeric_limits<std::size_t>::max(),
                                          const SensitivityOptions& options = {})
{
    check_input(model, x0.data());
    const Prediction original = predict(model, x0.data());
    const ClassFlip criterion{original.label};
    const std::vector<TensorND> inputs{x0};
    const std::vector<std::uint64_t> ids{0};
    const std::vector<ClassFlip> criteria{criterion};
    const SensitivityBatch sens = compute_sensitivity<ClassFlip>(model, inputs, ids, criteria, 1, grid, {}, options);

    std::uint64_t queries = 1 + sens.queries;
    auto prefix = first_satisfying_prefix(model, x0, sens.inputs[0], criterion, prefix_budget, options, &queries);
    if (!prefix) return std::nullopt;

    AttackResult r;
    r.perturbation = tighten(model, x0, prefix->second, criterion, &queries);
    r.adversarial = apply(x0, r.perturbation);
    r.distance = r.perturbation.weight();
    r.original_label = original.label;
    r.adversarial_label = predict(model, r.adversarial.data()).label;
    r.queries = queries + 1;
    return r;
}

struct GeneratedTest {
    NeuronId target;
    std::uint64_t seed_id = 0;
    TensorND input;
    SparsePerturbation perturbation;
    std::size_t distance = 0;
    double activation = 0.0;
};

struct CoverageReport {
    std::size_t total_neurons = 0;
    std::vector<NeuronId> covered;
    double fraction = 0.0;
    double baseline_fraction = 0.0;
    std::vector<GeneratedTest> tests;
    /// Neurons uncovered by the suite for which the search found no activating input.
    std::vector<NeuronId> unreached;
    std::uint64_t queries = 0;
};

struct TestgenConfig {
    double threshold = 0.0;
    /// Largest subspace dimension tried per neuron.
    std::size_t per_neuron_budget = 2;
    SubspaceSource source;
    SensitivityOptions options;
};

namespace detail {

inline std::set<NeuronId> activated(const Model& model, const TensorND& x, double threshold)
{
    std::set<NeuronId> out;
    for (const auto& [id, value] : record_activations(model, x)) {
        if (value > threshold) out.insert(id);
    }
    return out;
}

} // namespace detail

/// Coverage-guided test generation: every hidden neuron left inactive by the suite gets its own
/// search, seeded from the suite input with the largest pre-activation for it, for the closest
/// input (in L0) that activates it.
inline CoverageReport testgen(const Model& model, const Dataset& suite, const GridConfig& grid,
                              const TestgenConfig& config = {})
{
    if (suite.empty()) throw PreconditionError("testgen needs a non-empty test suite");
    const auto neurons = model.hidden_neurons();
    const std::size_t pixels = pixel_count(model.input_shape());

    CoverageReport report;
    report.total_neurons = neurons.size();
    std::set<NeuronId> covered;
    for (const TensorND& x : suite.inputs) {
        const auto hit = detail::activated(model, x, config.threshold);
        covered.insert(hit.begin(), hit.end());
        ++report.queries;
    }
    const double total = static_cast<double>(std::max<std::size_t>(neurons.size(), 1));
    report.baseline_fraction = neurons.empty() ? 1.0 : static_cast<double>(covered.size()) / total;

    std::vector<NeuronId> targets;
    for (const NeuronId& ne : neurons) {
        if (!covered.contains(ne)) targets.push_back(ne);
    }

    std::vector<std::optional<GeneratedTest>> found(targets.size());
    std::vector<std::uint64_t> queries(targets.size(), 0);
    SensitivityOptions inner = config.options;
    inner.workers = 1;
    parallel_for(targets.size(), config.options.workers, [&](std::size_t k) {
        const NeuronActivation criterion{targets[k], config.threshold};
        std::vector<double> a, b;
        std::size_t seed = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < suite.size(); ++i) {
            const double pre = NeuronActivation::pre_activation(model, suite.inputs[i].data(), targets[k], a, b);
            if (pre > best) {
                best = pre;
                seed = i;
            }
        }
        queries[k] += suite.size();
        const TensorND& x0 = suite.inputs[seed];
        const std::vector<TensorND> inputs{x0};
        const std::vector<std::uint64_t> ids{suite.ids[seed]};
        const std::vector<NeuronActivation> criteria{criterion};

        for (std::size_t t = 1; t <= std::min(config.per_neuron_budget, pixels); ++t) {
            const SensitivityBatch sens =
                compute_sensitivity<NeuronActivation>(model, inputs, ids, criteria, t, grid, config.source, inner);
            queries[k] += sens.queries;
            const InputSensitivity& s = sens.inputs[0];

            std::optional<SparsePerturbation> candidate;
            for (const auto& sub : s.subspaces) {
                if (sub.witness && (!candidate || sub.witness->weight() < candidate->weight())) candidate = sub.witness;
            }
            if (!candidate) {
                auto prefix = first_satisfying_prefix(model, x0, s, criterion, std::numeric_limits<std::size_t>::max(),
                                                      inner, &queries[k]);
                if (prefix) candidate = std::move(prefix->second);
            }
            if (!candidate) continue;

            GeneratedTest test;
            test.target = targets[k];
            test.seed_id = suite.ids[seed];
            test.perturbation = tighten(model, x0, *candidate, criterion, &queries[k]);
            test.input = apply(x0, test.perturbation);
            test.distance = test.perturbation.weight();
            test.activation = std::max(0.0, NeuronActivation::pre_activation(model, test.input.data(), targets[k], a, b));
            found[k] = std::move(test);
            break;
        }
    });

    for (std::size_t k = 0; k < targets.size(); ++k) {
        report.queries += queries[k];
        if (!found[k]) {
            report.unreached.push_back(targets[k]);
            continue;
        }
        const auto hit = detail::activated(model, found[k]->input, config.threshold);
        covered.insert(hit.begin(), hit.end());
        ++report.queries;
        report.tests.push_back(std::move(*found[k]));
    }
    // neurons reached only as a side effect of another neuron's test
    std::erase_if(report.unreached, [&](const NeuronId& ne) { return covered.contains(ne); });

    report.covered.assign(covered.begin(), covered.end());
    report.fraction = neurons.empty() ? 1.0 : static_cast<double>(covered.size()) / total;
    return report;
}

/// Per-pixel one-dimensional subspace sensitivity, shaped like the spatial input.
struct SaliencyMap {
    Shape shape;
    std::vector<double> values;
};

inline SaliencyMap saliency(const Model& model, const TensorND& x0, const GridConfig& grid,
                            const SensitivityOptions& options = {})
{
    const std::vector<TensorND> inputs{x0};
    const SensitivityBatch sens = compute_sensitivity(model, inputs, 1, grid, {}, options);
    SaliencyMap map;
    const Shape& in = model.input_shape();
    map.shape = in.size() == 3 ? Shape{in[0], in[1]} : Shape{in[0]};
    map.values.resize(pixel_count(in), 0.0);
    for (const auto& sub : sens.inputs[0].subspaces) map.values[sub.subspace.dims[0]] = sub.sensitivity;
    return map;
}

} // namespace l0bound
