#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "l0bound/errors.hpp"
#include "l0bound/model.hpp"

namespace l0bound {

namespace detail {

using json = nlohmann::json;

inline std::vector<double> flat_numbers(const json& j, const std::string& what)
{
    if (!j.is_array()) throw ParseError(what + " must be an array");
    std::vector<double> out;
    out.reserve(j.size());
    for (const json& v : j) {
        if (!v.is_number()) throw ParseError(what + " must contain numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

/// Flattens a rectangular nested list row-major; `extents` receives its shape.
inline void flatten_nested(const json& j, std::size_t depth, std::vector<std::size_t>& extents, std::vector<double>& out,
                           const std::string& what)
{
    if (depth == extents.size()) {
        if (!j.is_number()) throw ParseError(what + " has a non-numeric entry or ragged nesting");
        out.push_back(j.get<double>());
        return;
    }
    if (!j.is_array() || j.empty()) throw ParseError(what + " must be a non-empty nested array");
    if (extents[depth] == 0) extents[depth] = j.size();
    if (j.size() != extents[depth]) throw ParseError(what + " is ragged at depth " + std::to_string(depth));
    for (const json& item : j) flatten_nested(item, depth + 1, extents, out, what);
}

inline json nested(std::span<const double> flat, std::span<const std::size_t> extents)
{
    if (extents.size() == 1) return json(std::vector<double>(flat.begin(), flat.end()));
    std::size_t stride = 1;
    for (std::size_t k = 1; k < extents.size(); ++k) stride *= extents[k];
    json out = json::array();
    for (std::size_t i = 0; i < extents[0]; ++i) out.push_back(nested(flat.subspan(i * stride, stride), extents.subspan(1)));
    return out;
}

inline Layer parse_layer(const json& j, std::size_t index)
{
    const std::string where = "layer " + std::to_string(index);
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) throw ParseError(where + ": missing \"type\"");
    const std::string type = j["type"].get<std::string>();
    auto field = [&](const char* key) -> const json& {
        if (!j.contains(key)) throw ParseError(where + " (" + type + "): missing \"" + key + "\"");
        return j[key];
    };

    if (type == "dense") {
        layers::Dense d;
        std::vector<std::size_t> extents(2, 0);
        flatten_nested(field("weights"), 0, extents, d.weights, where + " weights");
        d.outputs = extents[0];
        d.inputs = extents[1];
        d.bias = flat_numbers(field("bias"), where + " bias");
        return d;
    }
    if (type == "conv2d") {
        layers::Conv2d c;
        std::vector<std::size_t> extents(4, 0);
        flatten_nested(field("kernels"), 0, extents, c.kernels, where + " kernels");
        c.out_channels = extents[0];
        c.kernel_h = extents[1];
        c.kernel_w = extents[2];
        c.in_channels = extents[3];
        c.bias = flat_numbers(field("bias"), where + " bias");
        c.stride = j.value("stride", std::size_t{1});
        return c;
    }
    if (type == "relu") return layers::Relu{};
    if (type == "flatten") return layers::Flatten{};
    if (type == "softmax") return layers::Softmax{};
    if (type == "dropout") return layers::Dropout{j.value("rate", 0.0)};
    if (type == "batchnorm") {
        layers::BatchNorm bn;
        bn.mean = flat_numbers(field("mean"), where + " mean");
        bn.variance = flat_numbers(field("variance"), where + " variance");
        bn.gamma = flat_numbers(field("gamma"), where + " gamma");
        bn.beta = flat_numbers(field("beta"), where + " beta");
        bn.eps = j.value("eps", 1e-5);
        return bn;
    }
    if (type == "maxpool") {
        const auto window = field("window");
        if (!window.is_array() || window.size() != 2) throw ParseError(where + " (maxpool): window must be [h,w]");
        return layers::MaxPool{window[0].get<std::size_t>(), window[1].get<std::size_t>()};
    }
    throw ParseError(where + ": unknown layer type \"" + type + "\"");
}

} // namespace detail

/// Builds a validated model from its JSON document.
inline Model model_from_json(const nlohmann::json& doc)
{
    using detail::json;
    if (!doc.is_object()) throw ParseError("model document must be an object");
    if (!doc.contains("input_shape") || !doc["input_shape"].is_array()) throw ParseError("model: missing \"input_shape\"");
    if (!doc.contains("layers") || !doc["layers"].is_array()) throw ParseError("model: missing \"layers\"");
    Shape input_shape;
    for (const json& e : doc["input_shape"]) {
        if (!e.is_number_unsigned()) throw ParseError("model: input_shape entries must be positive integers");
        input_shape.push_back(e.get<std::size_t>());
    }
    std::vector<Layer> layers;
    for (std::size_t i = 0; i < doc["layers"].size(); ++i) layers.push_back(detail::parse_layer(doc["layers"][i], i));
    return Model(doc.value("name", std::string{"model"}), std::move(input_shape), std::move(layers));
}

inline nlohmann::json model_to_json(const Model& model)
{
    using detail::json;
    json doc;
    doc["name"] = model.name();
    doc["input_shape"] = model.input_shape();
    json list = json::array();
    for (const Layer& layer : model.layers()) {
        json j;
        j["type"] = layer_type_name(layer);
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, layers::Dense>) {
                    const std::size_t ext[] = {l.outputs, l.inputs};
                    j["weights"] = detail::nested(l.weights, ext);
                    j["bias"] = l.bias;
                } else if constexpr (std::is_same_v<L, layers::Conv2d>) {
                    const std::size_t ext[] = {l.out_channels, l.kernel_h, l.kernel_w, l.in_channels};
                    j["kernels"] = detail::nested(l.kernels, ext);
                    j["bias"] = l.bias;
                    j["stride"] = l.stride;
                } else if constexpr (std::is_same_v<L, layers::BatchNorm>) {
                    j["mean"] = l.mean;
                    j["variance"] = l.variance;
                    j["gamma"] = l.gamma;
                    j["beta"] = l.beta;
                    j["eps"] = l.eps;
                } else if constexpr (std::is_same_v<L, layers::MaxPool>) {
                    j["window"] = {l.window_h, l.window_w};
                } else if constexpr (std::is_same_v<L, layers::Dropout>) {
                    j["rate"] = l.rate;
                }
            },
            layer);
        list.push_back(std::move(j));
    }
    doc["layers"] = std::move(list);
    return doc;
}

inline Model load_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("model " + path + ": " + e.what());
    }
    try {
        return model_from_json(doc);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("model " + path + ": " + e.what());
    }
}

inline void save_model(const std::string& path, const Model& model)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << model_to_json(model).dump(2) << "\n";
    if (!out) throw IoError("write failed for " + path);
}

} // namespace l0bound
