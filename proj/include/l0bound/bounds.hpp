#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "l0bound/dataset.hpp"
#include "l0bound/errors.hpp"
#include "l0bound/model.hpp"
#include "l0bound/parallel.hpp"
#include "l0bound/sparse.hpp"
#include "l0bound/subspace.hpp"
#include "l0bound/tensor.hpp"

namespace l0bound {

enum class CheckMode {
    /// certify radius t only if no evaluated candidate at radius t succeeds
    strict,
    /// certify radius t if the top-ranked solution keeps the class
    paper,
};

inline const char* to_string(CheckMode mode) { return mode == CheckMode::strict ? "strict" : "paper"; }
inline const char* to_string(SubspaceMode mode) { return mode == SubspaceMode::exhaustive ? "exhaustive" : "sampled"; }

/// Bounds on the maximum safe L0 radius of one input.
///
/// `lower` is the largest certified-safe radius, `upper` the L0 distance of the best witnessed
/// adversarial. Converged once upper == lower + 1 (then d_m == lower), or when lower reaches the
/// pixel count and no adversarial exists on the grid.
struct InputBounds {
    std::uint64_t id = 0;
    std::optional<std::size_t> label;
    std::size_t predicted = 0;
    bool skipped = false;
    std::size_t pixels = 0;
    std::size_t lower = 0;
    std::optional<std::size_t> upper;
    std::optional<SparsePerturbation> best_adversarial;
    bool converged = false;

    /// Largest radius not yet ruled out.
    std::size_t ceiling() const noexcept { return upper ? *upper - 1 : pixels; }
    double centre() const noexcept { return 0.5 * static_cast<double>(lower + ceiling()); }
    double radius() const noexcept { return 0.5 * static_cast<double>(ceiling() - lower); }
};

struct BoundsState {
    std::vector<InputBounds> inputs;
    std::uint64_t queries = 0;
};

/// Restores lower < upper (violated only when the lower bound was not grid-sound) and
/// recomputes the convergence flag.
inline void settle(InputBounds& b)
{
    if (b.upper && *b.upper <= b.lower) b.lower = *b.upper - 1;
    b.converged = (b.upper && *b.upper == b.lower + 1) || (!b.upper && b.lower >= b.pixels);
}

/// Removes redundant positions from a successful perturbation: repeated ascending passes that
/// revert any single position whose removal keeps the criterion satisfied, until a pass changes
/// nothing. The result is 1-minimal.
template <typename Criterion>
SparsePerturbation tighten(const Model& model, const TensorND& x0, SparsePerturbation adv, const Criterion& criterion,
                           std::uint64_t* queries = nullptr)
{
    const std::size_t channels = channel_count(model.input_shape());
    const std::size_t dw = criterion.detail_width(model);
    std::vector<double> x(x0.data().begin(), x0.data().end());
    std::vector<Outcome> outcome(1);
    std::vector<double> detail(dw);
    auto satisfied = [&](const SparsePerturbation& p) {
        std::copy(x0.data().begin(), x0.data().end(), x.begin());
        apply_in_place(x, p, channels);
        criterion.evaluate_rows(model, x, 1, outcome, detail);
        if (queries) ++*queries;
        return outcome[0].satisfied;
    };
    if (!satisfied(adv)) throw PreconditionError("tighten: perturbation does not satisfy the search criterion");

    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t pos : adv.positions()) {
            SparsePerturbation trial = adv;
            trial.erase(pos);
            if (satisfied(trial)) {
                adv = std::move(trial);
                changed = true;
            }
        }
    }
    return adv;
}

/// Class-flip tightening against the model's own prediction on x0.
inline SparsePerturbation tighten(const Model& model, const TensorND& x0, const SparsePerturbation& adv)
{
    check_input(model, x0.data());
    return tighten(model, x0, adv, ClassFlip{predict(model, x0.data()).label});
}

/// Accumulates the ranked best perturbations with overwrite-union (N_1 = S_1, N_i = N_{i-1} ⋓ S_i),
/// evaluates every prefix image as a batch and returns the first satisfying prefix.
template <typename Criterion>
std::optional<std::pair<std::size_t, SparsePerturbation>>
first_satisfying_prefix(const Model& model, const TensorND& x0, const InputSensitivity& sens, const Criterion& criterion,
                        std::size_t prefix_limit, const SensitivityOptions& options, std::uint64_t* queries = nullptr)
{
    const std::size_t channels = channel_count(model.input_shape());
    const std::size_t width = model.input_size();
    const std::size_t k = std::min(prefix_limit, sens.ranking.size());
    if (k == 0) return std::nullopt;

    std::vector<SparsePerturbation> prefixes;
    prefixes.reserve(k);
    SparsePerturbation acc;
    for (std::size_t i = 0; i < k; ++i) {
        acc = sparse_union(acc, sens.subspaces[sens.ranking[i]].best);
        prefixes.push_back(acc);
    }

    const std::size_t chunk = std::max<std::size_t>(options.chunk, 1);
    const std::size_t chunks = (k + chunk - 1) / chunk;
    const std::size_t dw = criterion.detail_width(model);
    std::vector<char> hit(k, 0);
    parallel_for(chunks, options.workers, [&](std::size_t c) {
        const std::size_t first = c * chunk;
        const std::size_t count = std::min(chunk, k - first);
        std::vector<double> rows(count * width);
        for (std::size_t i = 0; i < count; ++i) {
            auto row = std::span<double>(rows).subspan(i * width, width);
            std::copy(x0.data().begin(), x0.data().end(), row.begin());
            apply_in_place(row, prefixes[first + i], channels);
        }
        std::vector<Outcome> out(count);
        std::vector<double> details(count * dw);
        criterion.evaluate_rows(model, rows, count, out, details);
        for (std::size_t i = 0; i < count; ++i) hit[first + i] = out[i].satisfied;
    });
    if (queries) *queries += k;

    for (std::size_t i = 0; i < k; ++i) {
        if (hit[i]) return std::make_pair(i + 1, prefixes[i]);
    }
    return std::nullopt;
}

/// Sets the upper bound from a successful perturbation if it improves it.
inline void offer_adversarial(InputBounds& b, SparsePerturbation adv)
{
    if (!b.upper || adv.weight() < *b.upper) {
        b.upper = adv.weight();
        b.best_adversarial = std::move(adv);
    }
}

/// Lower-bound certification at dimension t.
///
/// `active[k]` is the state index of `sens.inputs[k]`. strict: radius t is certified only if no
/// candidate of any subspace flips the class; a flip becomes an upper-bound witness (tightened).
/// paper: radius t is certified if the top-ranked solution keeps the class; otherwise the input
/// converges with d_m = t - 1.
inline void lower_bound_step(const Model& model, std::span<const TensorND> inputs, BoundsState& state,
                             const SensitivityBatch& sens, std::span<const std::size_t> active, std::size_t t,
                             CheckMode mode, const SensitivityOptions& options = {})
{
    std::vector<std::uint64_t> queries(active.size(), 0);
    parallel_for(active.size(), options.workers, [&](std::size_t k) {
        InputBounds& b = state.inputs[active[k]];
        if (b.converged || b.skipped) return;
        const InputSensitivity& s = sens.inputs[k];
        const ClassFlip criterion{b.predicted};
        const TensorND& x0 = inputs[active[k]];

        if (mode == CheckMode::paper) {
            const SubspaceResult& top = s.subspaces[s.ranking.front()];
            if (!top.best_satisfied) {
                b.lower = std::max(b.lower, t);
            } else {
                b.lower = std::min(b.lower, t - 1);
                offer_adversarial(b, tighten(model, x0, top.best, criterion, &queries[k]));
                b.converged = true;
            }
        } else {
            const SparsePerturbation* witness = nullptr;
            for (const auto& sub : s.subspaces) {
                if (sub.witness && (!witness || sub.witness->weight() < witness->weight())) witness = &*sub.witness;
            }
            if (!witness) {
                b.lower = std::max(b.lower, t);
            } else {
                offer_adversarial(b, tighten(model, x0, *witness, criterion, &queries[k]));
            }
        }
        settle(b);
    });
    state.queries += std::accumulate(queries.begin(), queries.end(), std::uint64_t{0});
}

/// Upper-bound accumulation at dimension t: the first class-flipping prefix of ranked solutions,
/// tightened, replaces the upper bound when strictly smaller.
inline void upper_bound_step(const Model& model, std::span<const TensorND> inputs, BoundsState& state,
                             const SensitivityBatch& sens, std::span<const std::size_t> active,
                             const SensitivityOptions& options = {},
                             std::size_t prefix_limit = std::numeric_limits<std::size_t>::max())
{
    std::vector<std::uint64_t> queries(active.size(), 0);
    SensitivityOptions inner = options;
    inner.workers = 1;
    parallel_for(active.size(), options.workers, [&](std::size_t k) {
        InputBounds& b = state.inputs[active[k]];
        if (b.converged || b.skipped) return;
        const ClassFlip criterion{b.predicted};
        const TensorND& x0 = inputs[active[k]];
        auto prefix = first_satisfying_prefix(model, x0, sens.inputs[k], criterion, prefix_limit, inner, &queries[k]);
        if (prefix) offer_adversarial(b, tighten(model, x0, prefix->second, criterion, &queries[k]));
        settle(b);
    });
    state.queries += std::accumulate(queries.begin(), queries.end(), std::uint64_t{0});
}

struct InputReport {
    std::uint64_t id = 0;
    std::optional<std::size_t> label;
    std::size_t predicted = 0;
    bool skipped = false;
    std::size_t lower = 0;
    std::optional<std::size_t> upper;
    bool converged = false;
    std::optional<std::size_t> max_safe_radius;
    std::optional<double> centre;
    std::optional<double> radius;
    std::optional<std::size_t> adversarial_distance;
    std::vector<std::size_t> perturbed_positions;
};

/// Snapshot after one iteration: per-input intervals and dataset-level means over non-skipped inputs.
struct AnytimeReport {
    std::size_t iteration = 0;
    double epsilon = 0.0;
    CheckMode mode = CheckMode::strict;
    SubspaceMode subspaces = SubspaceMode::exhaustive;
    std::vector<InputReport> inputs;
    std::optional<double> mean_lower;
    std::optional<double> mean_upper;
    std::optional<double> global_centre;
    std::optional<double> global_radius;
    std::uint64_t queries = 0;
    std::optional<double> wall_time_s;
    /// K * epsilon / 2: worst-case gap between grid and true subspace minima.
    double grid_slack = 0.0;
};

inline AnytimeReport make_report(const BoundsState& state, std::size_t iteration, double epsilon, CheckMode mode,
                                 SubspaceMode subspaces, double grid_slack)
{
    AnytimeReport r;
    r.iteration = iteration;
    r.epsilon = epsilon;
    r.mode = mode;
    r.subspaces = subspaces;
    r.queries = state.queries;
    r.grid_slack = grid_slack;

    double sum_lower = 0, sum_upper = 0, sum_centre = 0, sum_radius = 0;
    std::size_t counted = 0, with_upper = 0;
    for (const InputBounds& b : state.inputs) {
        InputReport e;
        e.id = b.id;
        e.label = b.label;
        e.predicted = b.predicted;
        e.skipped = b.skipped;
        e.lower = b.lower;
        e.upper = b.upper;
        e.converged = b.converged;
        if (b.best_adversarial) {
            e.adversarial_distance = b.best_adversarial->weight();
            e.perturbed_positions = b.best_adversarial->positions();
        }
        if (!b.skipped) {
            if (b.converged) e.max_safe_radius = b.lower;
            e.centre = b.centre();
            e.radius = b.radius();
            sum_lower += static_cast<double>(b.lower);
            sum_centre += *e.centre;
            sum_radius += *e.radius;
            ++counted;
            if (b.upper) {
                sum_upper += static_cast<double>(*b.upper);
                ++with_upper;
            }
        }
        r.inputs.push_back(std::move(e));
    }
    if (counted > 0) {
        const double n = static_cast<double>(counted);
        r.mean_lower = sum_lower / n;
        r.global_centre = sum_centre / n;
        r.global_radius = sum_radius / n;
    }
    if (with_upper > 0) r.mean_upper = sum_upper / static_cast<double>(with_upper);
    return r;
}

struct EvaluateConfig {
    GridConfig grid = GridConfig::from_epsilon(0.25);
    std::size_t t_max = 2;
    SubspaceSource source;
    CheckMode mode = CheckMode::strict;
    SensitivityOptions options;
    bool record_time = false;
    /// Checked between iterations; when set, evaluation stops after the current report.
    const std::atomic<bool>* cancel = nullptr;
};

struct EvaluationResult {
    std::vector<AnytimeReport> reports;
    BoundsState state;
};

/// Anytime evaluation over t = 1..t_max. `on_iteration` receives every report as soon as it is
/// complete, so an interrupted run still leaves valid reports behind.
inline EvaluationResult evaluate(const Model& model, const Dataset& data, const EvaluateConfig& config,
                                 const std::function<void(const AnytimeReport&)>& on_iteration = {})
{
    if (config.t_max < 1) throw RangeError("t_max must be >= 1");
    const auto started = std::chrono::steady_clock::now();
    const std::size_t pixels = pixel_count(model.input_shape());
    const double slack = lipschitz_upper_bound(model) * config.grid.epsilon / 2.0;

    EvaluationResult result;
    BoundsState& state = result.state;
    for (std::size_t i = 0; i < data.size(); ++i) {
        check_input(model, data.inputs[i].data());
        if (data.labels[i] && *data.labels[i] >= model.class_count()) {
            throw RangeError("label " + std::to_string(*data.labels[i]) + " of input " + std::to_string(data.ids[i]) +
                             " outside [0," + std::to_string(model.class_count()) + ")");
        }
        InputBounds b;
        b.id = data.ids[i];
        b.label = data.labels[i];
        b.predicted = predict(model, data.inputs[i].data()).label;
        b.skipped = b.label && *b.label != b.predicted;
        b.pixels = pixels;
        state.inputs.push_back(std::move(b));
        ++state.queries;
    }

    auto emit = [&](std::size_t t) {
        AnytimeReport report = make_report(state, t, config.grid.epsilon, config.mode, config.source.mode, slack);
        if (config.record_time) {
            report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        }
        if (on_iteration) on_iteration(report);
        result.reports.push_back(std::move(report));
    };

    for (std::size_t t = 1; t <= config.t_max; ++t) {
        std::vector<std::size_t> active;
        for (std::size_t i = 0; i < state.inputs.size(); ++i) {
            if (!state.inputs[i].converged && !state.inputs[i].skipped) active.push_back(i);
        }
        if (active.empty() && !data.empty()) break;
        if (t > pixels && !data.empty()) break;

        if (!active.empty()) {
            std::vector<TensorND> inputs;
            std::vector<std::uint64_t> ids;
            std::vector<ClassFlip> criteria;
            for (std::size_t i : active) {
                inputs.push_back(data.inputs[i]);
                ids.push_back(state.inputs[i].id);
                criteria.push_back({state.inputs[i].predicted});
            }
            const SensitivityBatch sens =
                compute_sensitivity<ClassFlip>(model, inputs, ids, criteria, t, config.grid, config.source, config.options);
            state.queries += sens.queries;

            lower_bound_step(model, data.inputs, state, sens, active, t, config.mode, config.options);
            upper_bound_step(model, data.inputs, state, sens, active, config.options);
        }
        emit(t);
        if (config.cancel && config.cancel->load()) break;
    }
    return result;
}

/// Worst-case network evaluations for exact L0 radius by grid search: sum over d = 1..n of
/// C(n,d) * delta^d = (1 + delta)^n - 1, delta = ceil(1/epsilon).
inline boost::multiprecision::cpp_int worst_case_queries(std::size_t n, double epsilon)
{
    if (n < 1) throw RangeError("n must be >= 1");
    const GridConfig grid = GridConfig::from_epsilon(epsilon);
    boost::multiprecision::cpp_int base = grid.delta + 1;
    return boost::multiprecision::pow(base, static_cast<unsigned>(n)) - 1;
}

} // namespace l0bound
