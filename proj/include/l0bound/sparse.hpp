#pragma once

#include <cstddef>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "l0bound/errors.hpp"
#include "l0bound/tensor.hpp"

namespace l0bound {

/// Replacement values for a sparse set of pixel positions.
///
/// A position is a spatial pixel; it carries one value per channel, so a multi-channel
/// pixel counts once toward the L0 weight.
class SparsePerturbation {
public:
    using Pixel = std::vector<double>;

    SparsePerturbation() = default;

    /// Single-channel convenience: {{position, value}, ...}.
    SparsePerturbation(std::initializer_list<std::pair<std::size_t, double>> entries)
    {
        for (const auto& [pos, value] : entries) set(pos, value);
    }

    void set(std::size_t position, double value) { set(position, Pixel{value}); }

    void set(std::size_t position, Pixel value)
    {
        for (double v : value) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw RangeError("perturbation value " + std::to_string(v) + " outside [0,1] at position " +
                                 std::to_string(position));
            }
        }
        entries_[position] = std::move(value);
    }

    void erase(std::size_t position) { entries_.erase(position); }
    bool contains(std::size_t position) const { return entries_.contains(position); }
    const Pixel& value(std::size_t position) const { return entries_.at(position); }

    /// L0 weight: the number of perturbed positions.
    std::size_t weight() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    std::vector<std::size_t> positions() const
    {
        std::vector<std::size_t> out;
        out.reserve(entries_.size());
        for (const auto& [pos, _] : entries_) out.push_back(pos);
        return out;
    }

    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    void validate(std::size_t pixel_count, std::size_t channels) const
    {
        for (const auto& [pos, pixel] : entries_) {
            if (pos >= pixel_count) {
                throw RangeError("perturbation position " + std::to_string(pos) + " outside pixel count " +
                                 std::to_string(pixel_count));
            }
            if (pixel.size() != channels) {
                throw ShapeError("perturbation at position " + std::to_string(pos) + " has " +
                                 std::to_string(pixel.size()) + " channels, expected " + std::to_string(channels));
            }
        }
    }

    bool operator==(const SparsePerturbation&) const = default;

private:
    std::map<std::size_t, Pixel> entries_;
};

/// a ⊟ b: entries of a whose position is absent from b.
inline SparsePerturbation sparse_remove(const SparsePerturbation& a, const SparsePerturbation& b)
{
    SparsePerturbation out;
    for (const auto& [pos, pixel] : a) {
        if (!b.contains(pos)) out.set(pos, pixel);
    }
    return out;
}

/// a ⋒ b: positions present in both with exactly equal values.
inline SparsePerturbation sparse_intersect(const SparsePerturbation& a, const SparsePerturbation& b)
{
    SparsePerturbation out;
    for (const auto& [pos, pixel] : a) {
        if (b.contains(pos) && b.value(pos) == pixel) out.set(pos, pixel);
    }
    return out;
}

/// a ⋓ b: union of positions; b overwrites a on conflicts.
inline SparsePerturbation sparse_union(const SparsePerturbation& a, const SparsePerturbation& b)
{
    SparsePerturbation out = a;
    for (const auto& [pos, pixel] : b) out.set(pos, pixel);
    return out;
}

/// Channel count of an input laid out as [h, w, c] or [n].
inline std::size_t channel_count(const Shape& input_shape)
{
    return input_shape.size() == 3 ? input_shape[2] : 1;
}

inline std::size_t pixel_count(const Shape& input_shape)
{
    return element_count(input_shape) / channel_count(input_shape);
}

/// Writes the perturbation into `x` (flat, channels innermost).
inline void apply_in_place(std::span<double> x, const SparsePerturbation& p, std::size_t channels)
{
    for (const auto& [pos, pixel] : p) {
        for (std::size_t c = 0; c < channels; ++c) x[pos * channels + c] = pixel[c];
    }
}

inline TensorND apply(const TensorND& x0, const SparsePerturbation& p)
{
    const std::size_t channels = channel_count(x0.shape());
    p.validate(x0.size() / channels, channels);
    TensorND out = x0;
    apply_in_place(out.data(), p, channels);
    return out;
}

/// The perturbation turning x0 into x: every position where any channel differs.
inline SparsePerturbation difference(std::span<const double> x0, std::span<const double> x, std::size_t channels)
{
    if (x0.size() != x.size()) throw ShapeError("difference of inputs with different sizes");
    SparsePerturbation out;
    const std::size_t pixels = x0.size() / channels;
    for (std::size_t p = 0; p < pixels; ++p) {
        bool differs = false;
        for (std::size_t c = 0; c < channels; ++c) differs = differs || x0[p * channels + c] != x[p * channels + c];
        if (differs) {
            out.set(p, SparsePerturbation::Pixel(x.begin() + static_cast<std::ptrdiff_t>(p * channels),
                                                 x.begin() + static_cast<std::ptrdiff_t>((p + 1) * channels)));
        }
    }
    return out;
}

inline SparsePerturbation difference(const TensorND& x0, const TensorND& x)
{
    if (x0.shape() != x.shape()) throw ShapeError("difference of inputs with different shapes");
    return difference(x0.data(), x.data(), channel_count(x0.shape()));
}

} // namespace l0bound
