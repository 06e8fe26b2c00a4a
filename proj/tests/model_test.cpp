#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace l0bound;
using namespace l0bound::testing;

TEST(Model, SoftmaxOfTwoLogits)
{
    const Model m = one_pixel_logit_model();
    const Prediction p = predict(m, std::vector<double>{1.0});
    EXPECT_NEAR(p.confidences[0], 0.7311, 1e-4);
    EXPECT_NEAR(p.confidences[1], 0.2689, 1e-4);
    EXPECT_EQ(p.label, 0u);
}

TEST(Model, ImplicitSoftmaxWhenAbsent)
{
    const Model m("no-softmax", {1}, {dense({{1}, {0}}, {0, 0})});
    const Prediction p = predict(m, std::vector<double>{1.0});
    EXPECT_NEAR(p.confidences[0] + p.confidences[1], 1.0, 1e-12);
    EXPECT_NEAR(p.confidences[0], 0.7311, 1e-4);
}

TEST(Model, ArgmaxTieGoesToSmallestClass)
{
    const Prediction p = predict(constant_model(3), std::vector<double>{0.2, 0.4, 0.6});
    EXPECT_EQ(p.label, 0u);
    EXPECT_DOUBLE_EQ(p.confidences[0], 0.5);
}

TEST(Model, ConvolutionMaxPoolAndBatchNorm)
{
    layers::Conv2d conv;
    conv.out_channels = 1;
    conv.kernel_h = conv.kernel_w = 2;
    conv.in_channels = 1;
    conv.stride = 1;
    conv.kernels = {1, 2, 3, 4};
    conv.bias = {0.5};
    layers::BatchNorm bn{{0.5}, {1.0}, {2.0}, {0.1}, 0.0};
    // 3x3 input, conv -> 2x2, batchnorm, 2x2 pool -> 1x1
    const Model m("cnn", {3, 3, 1},
                  {conv, bn, layers::MaxPool{2, 2}, layers::Flatten{}, dense({{1}, {-1}}, {0, 0}), layers::Softmax{}});
    const std::vector<double> x{0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    std::vector<double> a, b;
    std::vector<std::vector<double>> seen;
    m.logits(x, a, b, [&](std::size_t, std::span<const double> v) { seen.emplace_back(v.begin(), v.end()); });
    // conv outputs: 0.5 + [0+0.2+0.9+1.6, 0.1+0.4+1.2+2.0, 0.3+0.8+1.8+2.8, 0.4+1.0+2.1+3.2]
    ASSERT_EQ(seen[0].size(), 4u);
    EXPECT_NEAR(seen[0][0], 3.2, 1e-12);
    EXPECT_NEAR(seen[0][3], 7.2, 1e-12);
    EXPECT_NEAR(seen[1][0], 2.0 * (3.2 - 0.5) + 0.1, 1e-12);
    EXPECT_NEAR(seen[2][0], 2.0 * (7.2 - 0.5) + 0.1, 1e-12);
    EXPECT_EQ(m.output_shape(0), (Shape{2, 2, 1}));
    EXPECT_EQ(m.output_shape(2), (Shape{1, 1, 1}));
}

TEST(Model, StrideSkipsPositions)
{
    layers::Conv2d conv;
    conv.out_channels = 1;
    conv.kernel_h = conv.kernel_w = 1;
    conv.in_channels = 1;
    conv.stride = 2;
    conv.kernels = {1};
    conv.bias = {0};
    const Model m("stride", {3, 3, 1}, {conv, layers::Flatten{}, dense({{1, 1, 1, 1}, {0, 0, 0, 0}}, {0, 0})});
    EXPECT_EQ(m.output_shape(0), (Shape{2, 2, 1}));
    std::vector<double> a, b;
    m.logits(std::vector<double>{1, 9, 1, 9, 9, 9, 1, 9, 1}, a, b);
    EXPECT_DOUBLE_EQ(a[0], 4.0);
}

TEST(Model, ValidationNamesTheLayer)
{
    try {
        Model("bad", {3}, {dense({{1, 2}}, {0}), layers::Softmax{}});
        FAIL();
    } catch (const ModelError& e) {
        EXPECT_EQ(e.layer(), 0u);
    }
    try {
        Model("bad", {2}, {dense({{1, 2}, {3, 4}}, {0, 0}), layers::Softmax{}, layers::Relu{}});
        FAIL();
    } catch (const ModelError& e) {
        EXPECT_EQ(e.layer(), 1u);
    }
    EXPECT_THROW(Model("one-class", {2}, {dense({{1, 2}}, {0})}), ModelError);
    EXPECT_THROW(Model("rank2", {2, 2}, {layers::Flatten{}, dense({{1, 2, 3, 4}, {0, 0, 0, 0}}, {0, 0})}), ModelError);
}

TEST(Model, InputValidation)
{
    const Model m = threshold_model();
    EXPECT_THROW(check_input(m, std::vector<double>{0.5}), ShapeError);
    EXPECT_THROW(check_input(m, std::vector<double>{0.5, 1.5}), RangeError);
    EXPECT_THROW(check_input(m, std::vector<double>{0.5, std::nan("")}), RangeError);
    EXPECT_NO_THROW(check_input(m, std::vector<double>{0.0, 1.0}));
}

TEST(Model, HiddenNeuronsAreReluOutputs)
{
    const Model m = coverage_model();
    const auto neurons = m.hidden_neurons();
    ASSERT_EQ(neurons.size(), 12u);
    EXPECT_EQ(neurons.front(), (NeuronId{1, 0}));
    EXPECT_EQ(neurons.back(), (NeuronId{3, 5}));
    const auto acts = record_activations(m, vec({0.6, 0.2, 0.5, 0.5}));
    ASSERT_EQ(acts.size(), 12u);
    EXPECT_NEAR(acts[0].second, 0.1, 1e-12);
    EXPECT_EQ(acts[1].second, 0.0);
}

TEST(Model, DropoutIsIdentityAtInference)
{
    const Model with("d", {2}, {dense({{1, -1}, {0.5, 2}}, {0, 0}), layers::Dropout{0.5}, layers::Softmax{}});
    const Model without("d", {2}, {dense({{1, -1}, {0.5, 2}}, {0, 0}), layers::Softmax{}});
    const std::vector<double> x{0.3, 0.8};
    EXPECT_EQ(predict(with, x).confidences, predict(without, x).confidences);
}

TEST(Model, LipschitzOfDiagonalLayer)
{
    const Model m("diag", {2}, {dense({{2, 0}, {0, 3}}, {0, 0})});
    EXPECT_DOUBLE_EQ(lipschitz_upper_bound(m), 3.0);
}

TEST(Model, LipschitzBoundHoldsOnRandomPairs)
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0, 1);
    for (int model = 0; model < 5; ++model) {
        const Model m = random_mlp(rng, 6, {5, 4}, 3);
        const double k = lipschitz_upper_bound(m);
        std::vector<double> a1, b1, a2, b2;
        for (int pair = 0; pair < 1000; ++pair) {
            std::vector<double> x(6), y(6);
            for (double& v : x) v = u(rng);
            for (double& v : y) v = u(rng);
            double dx = 0;
            for (std::size_t i = 0; i < 6; ++i) dx = std::max(dx, std::abs(x[i] - y[i]));
            m.logits(x, a1, b1);
            m.logits(y, a2, b2);
            double dz = 0;
            for (std::size_t i = 0; i < a1.size(); ++i) dz = std::max(dz, std::abs(a1[i] - a2[i]));
            ASSERT_LE(dz, k * dx + 1e-12);
        }
    }
}

TEST(Model, BatchForwardMatchesSingleInputsBitwise)
{
    std::mt19937_64 rng(2);
    const Model m = random_mlp(rng, 5, {7, 6}, 4);
    const std::size_t count = 37;
    TensorND batch({count, 5});
    std::uniform_real_distribution<double> u(0, 1);
    for (double& v : batch.data()) v = u(rng);
    for (std::size_t workers : {1u, 3u, 8u}) {
        const auto preds = forward_batch(m, batch, workers);
        for (std::size_t i = 0; i < count; ++i) {
            const auto single = predict(m, batch.data().subspan(i * 5, 5));
            ASSERT_EQ(preds[i].confidences, single.confidences);
            ASSERT_EQ(preds[i].label, single.label);
        }
    }
    EXPECT_THROW(forward_batch(m, TensorND({2, 4})), ShapeError);
}

TEST(Model, ConfidencesFormADistribution)
{
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const Model m = random_mlp(rng, 4, {4}, 3, 6.0);
        const auto p = predict(m, random_input(rng, 4).data());
        double sum = 0;
        for (double c : p.confidences) {
            ASSERT_GE(c, 0.0);
            sum += c;
        }
        ASSERT_NEAR(sum, 1.0, 1e-12);
    }
}
