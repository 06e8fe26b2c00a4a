#pragma once

// Hand-built and seeded-random toy models shared by the test suites.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "l0bound/l0bound.hpp"

namespace l0bound::testing {

inline layers::Dense dense(const std::vector<std::vector<double>>& rows, std::vector<double> bias)
{
    layers::Dense d;
    d.outputs = rows.size();
    d.inputs = rows.empty() ? 0 : rows[0].size();
    for (const auto& r : rows) d.weights.insert(d.weights.end(), r.begin(), r.end());
    d.bias = std::move(bias);
    return d;
}

inline TensorND vec(std::vector<double> values)
{
    const std::size_t n = values.size();
    return TensorND({n}, std::move(values));
}

/// Two classes; class 1 iff x0 + x1 > 1 (ties at the boundary go to class 0).
inline Model threshold_model()
{
    return Model("threshold", {2}, {dense({{0, 0}, {10, 10}}, {0, -10}), layers::Softmax{}});
}

/// Three pixels; class 1 iff their sum exceeds 1.5.
inline Model majority_model()
{
    return Model("majority", {3}, {dense({{0, 0, 0}, {10, 10, 10}}, {0, -15}), layers::Softmax{}});
}

/// One pixel, logits (x, 0).
inline Model one_pixel_logit_model()
{
    return Model("one-pixel", {1}, {dense({{1}, {0}}, {0, 0}), layers::Softmax{}});
}

/// Zero weights everywhere: constant confidences [0.5, 0.5].
inline Model constant_model(std::size_t n)
{
    return Model("constant", {n},
                 {dense(std::vector<std::vector<double>>(3, std::vector<double>(n, 0.0)), {0, 0, 0}), layers::Relu{},
                  dense({{0, 0, 0}, {0, 0, 0}}, {0, 0}), layers::Softmax{}});
}

/// Reads only pixel 0: logits (2 - 4 x0, 0) so the class is 0 for x0 < 0.5.
inline Model pixel_zero_model(std::size_t n)
{
    std::vector<double> w(n, 0.0);
    w[0] = -4.0;
    return Model("pixel-zero", {n}, {dense({w, std::vector<double>(n, 0.0)}, {2, 0}), layers::Softmax{}});
}

/// Linear two-class model with logits (w.x + b, 0).
inline Model linear_model(const std::vector<double>& w, double b)
{
    return Model("linear", {w.size()}, {dense({w, std::vector<double>(w.size(), 0.0)}, {b, 0}), layers::Softmax{}});
}

/// Dense/relu stack with weights uniform in [-scale, scale].
inline Model random_mlp(std::mt19937_64& rng, std::size_t inputs, const std::vector<std::size_t>& hidden,
                        std::size_t classes, double scale = 1.5)
{
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<Layer> ls;
    std::size_t width = inputs;
    auto add = [&](std::size_t out) {
        std::vector<std::vector<double>> rows(out, std::vector<double>(width));
        std::vector<double> bias(out);
        for (auto& r : rows) {
            for (double& v : r) v = u(rng);
        }
        for (double& v : bias) v = 0.3 * u(rng);
        ls.push_back(dense(rows, bias));
        width = out;
    };
    for (std::size_t h : hidden) {
        add(h);
        ls.push_back(layers::Relu{});
    }
    add(classes);
    ls.push_back(layers::Softmax{});
    return Model("random", {inputs}, std::move(ls));
}

/// Input with entries drawn from {0, 0.25, 0.5, 0.75, 1} plus occasional off-grid values.
inline TensorND random_input(std::mt19937_64& rng, std::size_t n)
{
    std::uniform_int_distribution<int> level(0, 5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) {
        const int l = level(rng);
        x = l == 5 ? u(rng) : 0.25 * l;
    }
    return vec(std::move(v));
}

/// 4 inputs, two relu layers of 6 neurons each (12 hidden neurons), 2 classes.
inline Model coverage_model()
{
    return Model("coverage12", {4},
                 {dense({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}, {-1, 0, 0, 0}, {1, 1, 0, 0}},
                        {-0.5, -0.5, -0.5, -0.5, 0.5, -1.5}),
                  layers::Relu{},
                  dense({{1, 0, 0, 0, 0, 0},
                         {0, 1, 1, 0, 0, 0},
                         {0, 0, 0, 1, 0, 0},
                         {0, 0, 0, 0, 1, 0},
                         {0, 0, 0, 0, 0, 1},
                         {1, 0, 0, 1, 0, 0}},
                        {-0.25, -0.4, -0.1, -0.2, -0.1, -0.8}),
                  layers::Relu{},
                  dense({{1, 1, 1, 0, 0, 0}, {0, 0, 0, 1, 1, 1}}, {0, 0}),
                  layers::Softmax{}});
}

inline std::string fixture_path(const std::string& name)
{
    return std::string(L0BOUND_FIXTURES_DIR) + "/" + name;
}

} // namespace l0bound::testing
