#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "l0bound/errors.hpp"
#include "l0bound/tensor.hpp"

namespace l0bound {

/// Inputs in [0,1]^n sharing one shape, with optional labels and stable ids (1-based row numbers).
struct Dataset {
    Shape input_shape;
    std::vector<TensorND> inputs;
    std::vector<std::optional<std::size_t>> labels;
    std::vector<std::uint64_t> ids;

    std::size_t size() const noexcept { return inputs.size(); }
    bool empty() const noexcept { return inputs.empty(); }

    void push_back(TensorND input, std::optional<std::size_t> label, std::uint64_t id)
    {
        inputs.push_back(std::move(input));
        labels.push_back(label);
        ids.push_back(id);
    }
};

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view field)
{
    field = trim(field);
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) return std::nullopt;
    return value;
}

inline std::string format_double(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

/// Parses CSV rows "label,p1,...,pn" or "p1,...,pn" against `input_shape`. Blank lines are skipped.
inline Dataset parse_dataset(std::istream& in, const Shape& input_shape)
{
    Dataset ds;
    ds.input_shape = input_shape;
    const std::size_t n = element_count(input_shape);
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        const std::string_view text = detail::trim(line);
        if (text.empty()) continue;

        std::vector<std::string_view> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = text.find(',', start);
            fields.push_back(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (fields.size() != n && fields.size() != n + 1) {
            throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(n) + " or " +
                                 std::to_string(n + 1) + " fields, found " + std::to_string(fields.size()),
                             row);
        }

        std::optional<std::size_t> label;
        std::size_t first = 0;
        if (fields.size() == n + 1) {
            const auto value = detail::parse_double(fields[0]);
            if (!value || *value < 0 || std::floor(*value) != *value) {
                throw ParseError("row " + std::to_string(row) + ": label is not a non-negative integer", row);
            }
            label = static_cast<std::size_t>(*value);
            first = 1;
        }
        std::vector<double> values;
        values.reserve(n);
        for (std::size_t k = first; k < fields.size(); ++k) {
            const auto value = detail::parse_double(fields[k]);
            if (!value) throw ParseError("row " + std::to_string(row) + ": malformed number in field " + std::to_string(k + 1), row);
            if (!(*value >= 0.0 && *value <= 1.0)) {
                throw RangeError("row " + std::to_string(row) + ": value " + detail::format_double(*value) + " outside [0,1]", row);
            }
            values.push_back(*value);
        }
        ds.push_back(TensorND(input_shape, std::move(values)), label, row);
    }
    return ds;
}

inline Dataset load_dataset(const std::string& path, const Shape& input_shape)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset " + path);
    return parse_dataset(in, input_shape);
}

/// One dataset row; values are written with round-trip precision.
inline std::string format_dataset_row(const TensorND& input, std::optional<std::size_t> label = std::nullopt)
{
    std::string out;
    if (label) out += std::to_string(*label) + ",";
    for (std::size_t k = 0; k < input.size(); ++k) {
        if (k != 0) out += ",";
        out += detail::format_double(input[k]);
    }
    return out + "\n";
}

/// Appends (or truncates and writes) one adversarial input as a dataset row.
inline void write_adversarial(const std::string& path, const TensorND& input, std::optional<std::size_t> label = std::nullopt,
                              bool append = false)
{
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << format_dataset_row(input, label);
    if (!out) throw IoError("write failed for " + path);
}

} // namespace l0bound
