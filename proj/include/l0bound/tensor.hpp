#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "l0bound/errors.hpp"

namespace l0bound {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape)
{
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != 0) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

/// Dense N-dimensional array stored in row-major order.
///
/// Rank 0 is allowed and holds a single element. Every extent is at least 1.
template <typename T>
class BasicTensor {
public:
    BasicTensor() : data_(1, T{}) {}

    explicit BasicTensor(Shape shape, T fill = T{}) : shape_(std::move(shape))
    {
        check_extents();
        data_.assign(element_count(shape_), fill);
    }

    BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        check_extents();
        if (data_.size() != element_count(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + to_string(shape_));
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

    std::span<const T> data() const noexcept { return data_; }
    std::span<T> data() noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    T& operator[](std::size_t flat) { return data_[flat]; }
    const T& operator[](std::size_t flat) const { return data_[flat]; }

    /// Element at a full multi-index.
    const T& at(std::span<const std::size_t> index) const { return data_[flat_index(index)]; }
    T& at(std::span<const std::size_t> index) { return data_[flat_index(index)]; }

    /// 2-d accessor for matrices.
    T& operator()(std::size_t row, std::size_t col) { return data_[row * shape_[1] + col]; }
    const T& operator()(std::size_t row, std::size_t col) const { return data_[row * shape_[1] + col]; }

    std::size_t flat_index(std::span<const std::size_t> index) const
    {
        if (index.size() != shape_.size()) throw ShapeError("index rank does not match tensor rank");
        std::size_t flat = 0;
        for (std::size_t k = 0; k < index.size(); ++k) {
            if (index[k] >= shape_[k]) throw ShapeError("index out of range on axis " + std::to_string(k));
            flat = flat * shape_[k] + index[k];
        }
        return flat;
    }

    /// Same data viewed under a different shape with equal element count.
    BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), data_); }

    bool operator==(const BasicTensor&) const = default;

private:
    void check_extents() const
    {
        for (std::size_t extent : shape_) {
            if (extent == 0) throw ShapeError("tensor extents must be >= 1, got " + to_string(shape_));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using TensorND = BasicTensor<double>;

/// Mode-n unfolding. Element (i_0, ..., i_{N-1}) lands in row i_n; its column is the
/// row-major rank of the remaining indices taken in original axis order.
template <typename T>
BasicTensor<T> unfold_mode_n(const BasicTensor<T>& t, std::size_t n)
{
    if (n >= t.rank()) {
        throw ShapeError("unfold axis " + std::to_string(n) + " out of range for rank " + std::to_string(t.rank()));
    }
    const Shape& shape = t.shape();
    const std::size_t rows = shape[n];
    const std::size_t outer = element_count(Shape(shape.begin(), shape.begin() + static_cast<std::ptrdiff_t>(n)));
    const std::size_t inner = element_count(Shape(shape.begin() + static_cast<std::ptrdiff_t>(n) + 1, shape.end()));
    const std::size_t cols = outer * inner;

    std::vector<T> out(t.size());
    const auto src = t.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t r = 0; r < rows; ++r) {
            const T* from = src.data() + (o * rows + r) * inner;
            T* to = out.data() + r * cols + o * inner;
            std::copy(from, from + inner, to);
        }
    }
    return BasicTensor<T>({rows, cols}, std::move(out));
}

/// Inverse of unfold_mode_n: fold(unfold_mode_n(t, n), t.shape(), n) == t.
template <typename T>
BasicTensor<T> fold(const BasicTensor<T>& m, const Shape& target_shape, std::size_t n)
{
    if (m.rank() != 2) throw ShapeError("fold expects a matrix, got rank " + std::to_string(m.rank()));
    if (n >= target_shape.size()) throw ShapeError("fold axis " + std::to_string(n) + " out of range");
    if (m.size() != element_count(target_shape) || m.extent(0) != target_shape[n]) {
        throw ShapeError("cannot fold matrix " + to_string(m.shape()) + " into " + to_string(target_shape) +
                         " at axis " + std::to_string(n));
    }
    const std::size_t rows = target_shape[n];
    const std::size_t outer =
        element_count(Shape(target_shape.begin(), target_shape.begin() + static_cast<std::ptrdiff_t>(n)));
    const std::size_t inner =
        element_count(Shape(target_shape.begin() + static_cast<std::ptrdiff_t>(n) + 1, target_shape.end()));
    const std::size_t cols = outer * inner;

    std::vector<T> out(m.size());
    const auto src = m.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t r = 0; r < rows; ++r) {
            const T* from = src.data() + r * cols + o * inner;
            std::copy(from, from + inner, out.data() + (o * rows + r) * inner);
        }
    }
    return BasicTensor<T>(target_shape, std::move(out));
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& m)
{
    if (m.rank() != 2) throw ShapeError("transpose expects a matrix");
    const std::size_t rows = m.extent(0);
    const std::size_t cols = m.extent(1);
    std::vector<T> out(m.size());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = m(r, c);
    }
    return BasicTensor<T>({cols, rows}, std::move(out));
}

template <typename T>
struct AxisMinimum {
    BasicTensor<T> values;
    BasicTensor<std::size_t> argmin;
};

/// Minimum over axis 0. Ties resolve to the smallest index.
template <typename T>
AxisMinimum<T> min_along_first_axis(const BasicTensor<T>& t)
{
    if (t.rank() == 0) throw ShapeError("min_along_first_axis needs rank >= 1");
    Shape rest(t.shape().begin() + 1, t.shape().end());
    const std::size_t lanes = element_count(rest);
    const std::size_t depth = t.extent(0);

    std::vector<T> values(t.data().begin(), t.data().begin() + static_cast<std::ptrdiff_t>(lanes));
    std::vector<std::size_t> argmin(lanes, 0);
    for (std::size_t d = 1; d < depth; ++d) {
        const T* row = t.data().data() + d * lanes;
        for (std::size_t i = 0; i < lanes; ++i) {
            if (row[i] < values[i]) {
                values[i] = row[i];
                argmin[i] = d;
            }
        }
    }
    return {BasicTensor<T>(rest, std::move(values)), BasicTensor<std::size_t>(std::move(rest), std::move(argmin))};
}

} // namespace l0bound
