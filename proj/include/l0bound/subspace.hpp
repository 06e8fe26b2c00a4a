#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "l0bound/errors.hpp"
#include "l0bound/model.hpp"
#include "l0bound/parallel.hpp"
#include "l0bound/sparse.hpp"
#include "l0bound/tensor.hpp"

namespace l0bound {

/// Per-dimension sampling grid: delta = ceil(1/epsilon), values k/delta for k = 0..delta.
struct GridConfig {
    double epsilon = 0.25;
    std::size_t delta = 4;
    std::vector<double> values;

    static GridConfig from_epsilon(double epsilon)
    {
        if (!(epsilon > 0.0 && epsilon <= 1.0)) {
            throw RangeError("epsilon must lie in (0,1], got " + std::to_string(epsilon));
        }
        GridConfig g;
        g.epsilon = epsilon;
        // 1/0.1 and friends land a hair above the integer
        g.delta = static_cast<std::size_t>(std::ceil(1.0 / epsilon - 1e-9));
        g.delta = std::max<std::size_t>(g.delta, 1);
        g.values.reserve(g.delta + 1);
        for (std::size_t k = 0; k <= g.delta; ++k) g.values.push_back(static_cast<double>(k) / static_cast<double>(g.delta));
        return g;
    }
};

/// Strictly increasing pixel positions that are free to move.
struct SubspaceIndex {
    std::vector<std::size_t> dims;

    std::size_t size() const noexcept { return dims.size(); }
    auto operator<=>(const SubspaceIndex&) const = default;
};

enum class SubspaceMode { exhaustive, sampled };

struct SubspaceSource {
    SubspaceMode mode = SubspaceMode::exhaustive;
    std::uint64_t cap = 1'000'000;
    std::uint64_t seed = 0;
};

/// C(n, k), saturating at uint64 max.
inline std::uint64_t binomial_saturating(std::uint64_t n, std::uint64_t k)
{
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 acc = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        acc = acc * (n - k + i) / i;
        if (acc > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
    }
    return static_cast<std::uint64_t>(acc);
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Uniform integer in [0, bound) by rejection; portable unlike std::uniform_int_distribution.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound)
{
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw = rng();
    while (draw >= limit) draw = rng();
    return draw % bound;
}

inline bool next_combination(std::vector<std::size_t>& dims, std::size_t n)
{
    const std::size_t t = dims.size();
    std::size_t i = t;
    while (i > 0 && dims[i - 1] == n - t + i - 1) --i;
    if (i == 0) return false;
    ++dims[i - 1];
    for (std::size_t j = i; j < t; ++j) dims[j] = dims[j - 1] + 1;
    return true;
}

inline std::vector<SubspaceIndex> all_subspaces(std::size_t n, std::size_t t)
{
    std::vector<SubspaceIndex> out;
    std::vector<std::size_t> dims(t);
    std::iota(dims.begin(), dims.end(), std::size_t{0});
    do {
        out.push_back({dims});
    } while (next_combination(dims, n));
    return out;
}

} // namespace detail

/// Seed for one input's sampled subspaces; depends only on the run seed, the input id and t.
inline std::uint64_t subspace_seed(std::uint64_t run_seed, std::uint64_t input_id, std::size_t t)
{
    return detail::splitmix64(detail::splitmix64(run_seed ^ detail::splitmix64(input_id)) + t);
}

/// All t-subsets of {0..n-1} in lexicographic order, or `cap` distinct seeded samples
/// (returned in lexicographic order) in sampled mode.
inline std::vector<SubspaceIndex> enumerate_subspaces(std::size_t n, std::size_t t, const SubspaceSource& source)
{
    if (t < 1 || t > n) {
        throw RangeError("subspace dimension t=" + std::to_string(t) + " must satisfy 1 <= t <= n=" + std::to_string(n));
    }
    if (source.cap < 1) throw RangeError("subspace cap must be >= 1");
    const std::uint64_t total = binomial_saturating(n, t);

    if (source.mode == SubspaceMode::exhaustive || total <= source.cap) {
        if (total > source.cap) {
            throw CapacityError("C(" + std::to_string(n) + "," + std::to_string(t) + ") = " + std::to_string(total) +
                                " subspaces exceeds cap " + std::to_string(source.cap));
        }
        return detail::all_subspaces(n, t);
    }

    std::mt19937_64 rng(source.seed);
    if (total <= 4 * source.cap && total <= 10'000'000) {
        auto all = detail::all_subspaces(n, t);
        for (std::size_t i = 0; i < source.cap; ++i) {
            const std::size_t j = i + detail::bounded(rng, all.size() - i);
            std::swap(all[i], all[j]);
        }
        all.resize(source.cap);
        std::sort(all.begin(), all.end());
        return all;
    }

    // sparse draw: Floyd's algorithm per subset, rejection on duplicates
    std::set<SubspaceIndex> picked;
    while (picked.size() < source.cap) {
        std::set<std::size_t> dims;
        for (std::size_t j = n - t; j < n; ++j) {
            const std::size_t r = detail::bounded(rng, j + 1);
            if (!dims.insert(r).second) dims.insert(j);
        }
        picked.insert({std::vector<std::size_t>(dims.begin(), dims.end())});
    }
    return {picked.begin(), picked.end()};
}

/// Values one position may take: the original pixel first, then every other grid combination.
/// Channels vary independently; channel 0 is the slowest digit.
inline std::vector<SparsePerturbation::Pixel> position_choices(std::span<const double> original,
                                                               const GridConfig& grid)
{
    std::vector<std::vector<double>> per_channel;
    per_channel.reserve(original.size());
    for (double v : original) {
        std::vector<double> list{v};
        for (double g : grid.values) {
            if (g != v) list.push_back(g);
        }
        per_channel.push_back(std::move(list));
    }
    std::vector<SparsePerturbation::Pixel> out{SparsePerturbation::Pixel(original.begin(), original.end())};
    std::vector<std::size_t> digit(original.size(), 0);
    while (true) {
        std::size_t c = original.size();
        while (c > 0 && ++digit[c - 1] == per_channel[c - 1].size()) digit[--c] = 0;
        if (c == 0) break;
        SparsePerturbation::Pixel px(original.size());
        for (std::size_t k = 0; k < original.size(); ++k) px[k] = per_channel[k][digit[k]];
        out.push_back(std::move(px));
    }
    return out;
}

/// Candidate layout for one (input, subspace) pair. Candidate index is mixed radix over the
/// subspace dims with dims[0] most significant; digit 0 means "original value".
class CandidateSpace {
public:
    CandidateSpace(std::span<const double> x0, std::size_t channels, const SubspaceIndex& sub, const GridConfig& grid)
        : channels_(channels), dims_(sub.dims)
    {
        choices_.reserve(dims_.size());
        for (std::size_t d : dims_) choices_.push_back(position_choices(x0.subspan(d * channels, channels), grid));
        count_ = 1;
        for (const auto& c : choices_) count_ *= c.size();
    }

    std::size_t count() const noexcept { return count_; }

    /// Writes candidate `index` into `x`, which must already hold x0.
    void write(std::size_t index, std::span<double> x) const
    {
        for (std::size_t k = dims_.size(); k-- > 0;) {
            const std::size_t radix = choices_[k].size();
            const auto& px = choices_[k][index % radix];
            index /= radix;
            std::copy(px.begin(), px.end(), x.begin() + static_cast<std::ptrdiff_t>(dims_[k] * channels_));
        }
    }

    /// Number of positions candidate `index` changes.
    std::size_t weight(std::size_t index) const
    {
        std::size_t w = 0;
        for (std::size_t k = dims_.size(); k-- > 0;) {
            const std::size_t radix = choices_[k].size();
            w += (index % radix) != 0;
            index /= radix;
        }
        return w;
    }

    SparsePerturbation perturbation(std::size_t index) const
    {
        SparsePerturbation out;
        for (std::size_t k = dims_.size(); k-- > 0;) {
            const std::size_t radix = choices_[k].size();
            const std::size_t digit = index % radix;
            index /= radix;
            if (digit != 0) out.set(dims_[k], choices_[k][digit]);
        }
        return out;
    }

private:
    std::size_t channels_;
    std::vector<std::size_t> dims_;
    std::vector<std::vector<SparsePerturbation::Pixel>> choices_;
    std::size_t count_ = 1;
};

/// Every candidate of one subspace as a batch [count, ...x0.shape]; candidate 0 is x0.
inline TensorND build_candidates(const TensorND& x0, const SubspaceIndex& sub, const GridConfig& grid)
{
    const std::size_t channels = channel_count(x0.shape());
    for (std::size_t d : sub.dims) {
        if (d >= x0.size() / channels) throw RangeError("subspace position " + std::to_string(d) + " out of range");
    }
    CandidateSpace space(x0.data(), channels, sub, grid);
    Shape shape{space.count()};
    shape.insert(shape.end(), x0.shape().begin(), x0.shape().end());
    TensorND out(shape);
    const std::size_t width = x0.size();
    for (std::size_t i = 0; i < space.count(); ++i) {
        auto row = out.data().subspan(i * width, width);
        std::copy(x0.data().begin(), x0.data().end(), row.begin());
        space.write(i, row);
    }
    return out;
}

/// Outcome of evaluating one candidate under a search criterion: a score to minimise and
/// whether the candidate achieves the search goal.
struct Outcome {
    double score = 0.0;
    bool satisfied = false;
};

/// Robustness criterion: minimise the confidence of `label`; success when the predicted class changes.
struct ClassFlip {
    std::size_t label = 0;

    std::size_t detail_width(const Model& model) const { return model.class_count(); }

    void evaluate_rows(const Model& model, std::span<const double> rows, std::size_t count, std::span<Outcome> out,
                       std::span<double> details) const
    {
        const auto preds = predict_rows(model, rows, count);
        const std::size_t m = model.class_count();
        for (std::size_t i = 0; i < count; ++i) {
            out[i] = {preds[i].confidences[label], preds[i].label != label};
            std::copy(preds[i].confidences.begin(), preds[i].confidences.end(), details.begin() + static_cast<std::ptrdiff_t>(i * m));
        }
    }
};

/// Coverage criterion: maximise the pre-activation of one relu neuron; success when its
/// post-activation value exceeds the threshold.
struct NeuronActivation {
    NeuronId neuron;
    double threshold = 0.0;

    std::size_t detail_width(const Model&) const { return 1; }

    static double pre_activation(const Model& model, std::span<const double> x, NeuronId neuron,
                                 std::vector<double>& a, std::vector<double>& b)
    {
        if (neuron.layer == 0) return x[neuron.offset];
        double value = 0.0;
        model.logits(x, a, b, [&](std::size_t layer, std::span<const double> v) {
            if (layer + 1 == neuron.layer) value = v[neuron.offset];
        });
        return value;
    }

    void evaluate_rows(const Model& model, std::span<const double> rows, std::size_t count, std::span<Outcome> out,
                       std::span<double> details) const
    {
        const std::size_t width = model.input_size();
        std::vector<double> a, b;
        for (std::size_t i = 0; i < count; ++i) {
            const double pre = pre_activation(model, rows.subspan(i * width, width), neuron, a, b);
            out[i] = {-pre, std::max(pre, 0.0) > threshold};
            details[i] = pre;
        }
    }
};

struct SensitivityOptions {
    /// Upper bound on candidates per forward batch.
    std::size_t chunk = 4096;
    std::size_t workers = 1;
};

/// Result for one (input, subspace) pair.
struct SubspaceResult {
    SubspaceIndex subspace;
    /// V - V_min, never negative.
    double sensitivity = 0.0;
    double min_score = 0.0;
    /// Realises min_score; empty when x0 itself is the minimiser.
    SparsePerturbation best;
    bool best_satisfied = false;
    /// Criterion detail of the minimiser (class confidences for ClassFlip).
    std::vector<double> best_detail;
    /// Smallest-weight satisfying candidate, if any candidate satisfies the criterion.
    std::optional<SparsePerturbation> witness;
};

struct InputSensitivity {
    /// Criterion score of x0 (c_j(x0) for ClassFlip).
    double reference_score = 0.0;
    bool reference_satisfied = false;
    std::vector<SubspaceResult> subspaces;
    /// Subspace indices by descending sensitivity; ties keep lexicographic order.
    std::vector<std::size_t> ranking;
};

struct SensitivityBatch {
    std::size_t t = 0;
    std::vector<InputSensitivity> inputs;
    std::uint64_t queries = 0;
    std::size_t chunks = 0;
};

namespace detail {

struct WorkUnit {
    std::size_t pair = 0;
    std::size_t first = 0;
    std::size_t length = 0;
};

struct UnitResult {
    double min_score = std::numeric_limits<double>::infinity();
    std::size_t argmin = 0;
    bool best_satisfied = false;
    std::vector<double> best_detail;
    std::optional<std::size_t> witness;
    std::size_t witness_weight = 0;
};

} // namespace detail

/// Subspace sensitivities for every input and every t-dimensional subspace.
///
/// Candidates for a group of (input, subspace) pairs are laid into a tensor of shape
/// [features, candidates, pairs], unfolded along mode 0 and evaluated as one batch; scores are
/// folded back to [candidates, pairs] and reduced along the candidate axis. Groups are
/// independent and run on the worker pool; per-pair reductions happen after all groups finish.
template <typename Criterion>
SensitivityBatch compute_sensitivity(const Model& model, std::span<const TensorND> inputs,
                                     std::span<const std::uint64_t> ids, std::span<const Criterion> criteria,
                                     std::size_t t, const GridConfig& grid, const SubspaceSource& source,
                                     const SensitivityOptions& options = {})
{
    if (criteria.size() != inputs.size() || ids.size() != inputs.size()) {
        throw ShapeError("compute_sensitivity needs one criterion and one id per input");
    }
    const std::size_t width = model.input_size();
    const std::size_t channels = channel_count(model.input_shape());
    const std::size_t pixels = width / channels;
    const std::size_t chunk = std::max<std::size_t>(options.chunk, 1);

    SensitivityBatch batch;
    batch.t = t;
    batch.inputs.resize(inputs.size());

    struct Pair {
        std::size_t input;
        std::size_t subspace;
        CandidateSpace space;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        check_input(model, inputs[i].data());
        SubspaceSource local = source;
        local.seed = subspace_seed(source.seed, ids[i], t);
        auto subspaces = enumerate_subspaces(pixels, t, local);
        InputSensitivity& entry = batch.inputs[i];
        entry.subspaces.resize(subspaces.size());
        for (std::size_t s = 0; s < subspaces.size(); ++s) {
            pairs.push_back({i, s, CandidateSpace(inputs[i].data(), channels, subspaces[s], grid)});
            entry.subspaces[s].subspace = std::move(subspaces[s]);
        }

        const std::size_t dw = criteria[i].detail_width(model);
        std::vector<Outcome> ref(1);
        std::vector<double> detail(dw);
        criteria[i].evaluate_rows(model, inputs[i].data(), 1, ref, detail);
        entry.reference_score = ref[0].score;
        entry.reference_satisfied = ref[0].satisfied;
        ++batch.queries;
    }

    // split every pair's candidate range into slices of at most `chunk`, then pack slices of
    // equal length into groups so each group forms a dense tensor
    std::vector<detail::WorkUnit> units;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const std::size_t count = pairs[p].space.count();
        for (std::size_t first = 0; first < count; first += chunk) units.push_back({p, first, std::min(chunk, count - first)});
    }
    std::vector<std::size_t> order(units.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return units[a].length < units[b].length; });
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < order.size();) {
        const std::size_t length = units[order[k]].length;
        const std::size_t per_group = std::max<std::size_t>(chunk / length, 1);
        std::vector<std::size_t> group;
        while (k < order.size() && units[order[k]].length == length && group.size() < per_group) group.push_back(order[k++]);
        groups.push_back(std::move(group));
    }
    batch.chunks = groups.size();

    std::vector<detail::UnitResult> unit_results(units.size());
    parallel_for(groups.size(), options.workers, [&](std::size_t g) {
        const auto& group = groups[g];
        const std::size_t q = group.size();
        const std::size_t length = units[group[0]].length;
        const std::size_t dw = criteria[pairs[units[group[0]].pair].input].detail_width(model);

        TensorND grid_tensor({width, length, q});
        std::vector<double> candidate(width);
        auto flat = grid_tensor.data();
        for (std::size_t r = 0; r < q; ++r) {
            const auto& unit = units[group[r]];
            const auto& pair = pairs[unit.pair];
            const auto x0 = inputs[pair.input].data();
            for (std::size_t c = 0; c < length; ++c) {
                std::copy(x0.begin(), x0.end(), candidate.begin());
                pair.space.write(unit.first + c, candidate);
                for (std::size_t f = 0; f < width; ++f) flat[(f * length + c) * q + r] = candidate[f];
            }
        }
        const TensorND rows = transpose(unfold_mode_n(grid_tensor, 0));

        // one criterion per input; evaluate each pair's column block with its own criterion
        std::vector<Outcome> outcomes(length * q);
        std::vector<double> details(length * q * dw);
        {
            std::vector<double> col_rows(length * width);
            std::vector<Outcome> col_out(length);
            std::vector<double> col_details(length * dw);
            for (std::size_t r = 0; r < q; ++r) {
                for (std::size_t c = 0; c < length; ++c) {
                    const auto src = rows.data().subspan((c * q + r) * width, width);
                    std::copy(src.begin(), src.end(), col_rows.begin() + static_cast<std::ptrdiff_t>(c * width));
                }
                criteria[pairs[units[group[r]].pair].input].evaluate_rows(model, col_rows, length, col_out, col_details);
                for (std::size_t c = 0; c < length; ++c) {
                    outcomes[c * q + r] = col_out[c];
                    std::copy_n(col_details.begin() + static_cast<std::ptrdiff_t>(c * dw), dw,
                                details.begin() + static_cast<std::ptrdiff_t>((c * q + r) * dw));
                }
            }
        }

        TensorND scores({1, length * q});
        for (std::size_t k = 0; k < length * q; ++k) scores[k] = outcomes[k].score;
        const auto folded = fold(scores.reshaped({length, q}), {length, q}, 0);
        const auto minimum = min_along_first_axis(folded);

        for (std::size_t r = 0; r < q; ++r) {
            const auto& unit = units[group[r]];
            const auto& space = pairs[unit.pair].space;
            detail::UnitResult& res = unit_results[group[r]];
            const std::size_t c = minimum.argmin[r];
            res.min_score = minimum.values[r];
            res.argmin = unit.first + c;
            res.best_satisfied = outcomes[c * q + r].satisfied;
            res.best_detail.assign(details.begin() + static_cast<std::ptrdiff_t>((c * q + r) * dw),
                                   details.begin() + static_cast<std::ptrdiff_t>((c * q + r + 1) * dw));
            for (std::size_t k = 0; k < length; ++k) {
                if (!outcomes[k * q + r].satisfied) continue;
                const std::size_t w = space.weight(unit.first + k);
                if (!res.witness || w < res.witness_weight) {
                    res.witness = unit.first + k;
                    res.witness_weight = w;
                }
            }
        }
    });
    for (const auto& unit : units) batch.queries += unit.length;

    // units of one pair were created consecutively in candidate order
    std::vector<std::optional<detail::UnitResult>> merged(pairs.size());
    for (std::size_t u = 0; u < units.size(); ++u) {
        auto& slot = merged[units[u].pair];
        auto& res = unit_results[u];
        if (!slot) {
            slot = std::move(res);
            continue;
        }
        if (res.min_score < slot->min_score) {
            slot->min_score = res.min_score;
            slot->argmin = res.argmin;
            slot->best_satisfied = res.best_satisfied;
            slot->best_detail = std::move(res.best_detail);
        }
        if (res.witness && (!slot->witness || res.witness_weight < slot->witness_weight)) {
            slot->witness = res.witness;
            slot->witness_weight = res.witness_weight;
        }
    }

    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto& pair = pairs[p];
        const auto& res = *merged[p];
        InputSensitivity& entry = batch.inputs[pair.input];
        SubspaceResult& out = entry.subspaces[pair.subspace];
        out.min_score = res.min_score;
        out.sensitivity = entry.reference_score - res.min_score;
        out.best = pair.space.perturbation(res.argmin);
        out.best_satisfied = res.best_satisfied;
        out.best_detail = res.best_detail;
        if (res.witness) out.witness = pair.space.perturbation(*res.witness);
    }
    for (auto& entry : batch.inputs) {
        entry.ranking.resize(entry.subspaces.size());
        std::iota(entry.ranking.begin(), entry.ranking.end(), std::size_t{0});
        std::stable_sort(entry.ranking.begin(), entry.ranking.end(), [&](std::size_t a, std::size_t b) {
            return entry.subspaces[a].sensitivity > entry.subspaces[b].sensitivity;
        });
    }
    return batch;
}

/// Robustness sensitivities with each input's own predicted class as the reference label.
inline SensitivityBatch compute_sensitivity(const Model& model, std::span<const TensorND> inputs, std::size_t t,
                                            const GridConfig& grid, const SubspaceSource& source = {},
                                            const SensitivityOptions& options = {})
{
    std::vector<ClassFlip> criteria;
    std::vector<std::uint64_t> ids;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        check_input(model, inputs[i].data());
        criteria.push_back({predict(model, inputs[i].data()).label});
        ids.push_back(i);
    }
    return compute_sensitivity<ClassFlip>(model, inputs, ids, criteria, t, grid, source, options);
}

} // namespace l0bound
