#include "fineprune/network.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fineprune;
using testutil::code_of;

namespace {

Network small_cnn(std::uint64_t seed) {
    Network net(Shape{2, 7, 7}, {LayerSpec::conv(2, 3, 3, 1, 1), LayerSpec::relu_layer(), LayerSpec::maxpool(),
                                 LayerSpec::conv(3, 4, 2, 2, 0), LayerSpec::relu_layer(), LayerSpec::flatten(),
                                 LayerSpec::dense(16, 5), LayerSpec::relu_layer(), LayerSpec::dense(5, 3),
                                 LayerSpec::softmax_layer()});
    net.init_he_uniform(seed);
    // Non-zero biases so every bias gradient is exercised.
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<float> u(-0.1f, 0.1f);
    for (std::size_t i = 0; i < net.layer_count(); ++i)
        for (float& b : net.mutable_layer(i).bias.data()) b = u(rng);
    return net;
}

double rel_error(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-3});
}

} // namespace

TEST(Network, RejectsLayersThatDoNotCompose) {
    EXPECT_EQ(code_of([] { Network(Shape{4}, {LayerSpec::dense(3, 2)}); }), ErrorCode::dimension);
    EXPECT_EQ(code_of([] { Network(Shape{1, 4, 4}, {LayerSpec::dense(16, 2)}); }), ErrorCode::dimension);
    EXPECT_EQ(code_of([] { Network(Shape{4}, {LayerSpec::softmax_layer(), LayerSpec::dense(4, 2)}); }),
              ErrorCode::invalid_argument);
}

TEST(Network, MlpShapesAndClassifier) {
    const Network net = Network::mlp({4, 3, 2});
    EXPECT_EQ(net.layer_count(), 3u);
    EXPECT_EQ(net.class_count(), 2u);
    EXPECT_EQ(net.classifier_index(), 2u);
    EXPECT_TRUE(net.is_prunable(0));
    EXPECT_FALSE(net.is_prunable(1));
    EXPECT_FALSE(net.is_prunable(2));
}

TEST(Forward, HandComputedDenseRelu) {
    Network net = Network::mlp({2, 2, 1});
    net.mutable_layer(0).weight = Tensor::matrix({{1, -1}, {2, 0.5f}});
    net.mutable_layer(0).bias = Tensor::vector({0, -1});
    net.mutable_layer(2).weight = Tensor::matrix({{1, 3}});
    net.mutable_layer(2).bias = Tensor::vector({0.5f});
    // h = relu([1-2, 2+1-1]) = [0, 2]; y = 0 + 6 + 0.5
    std::vector<Tensor> trace;
    const Tensor y = forward(net, Tensor::vector({1, 2}), &trace);
    EXPECT_FLOAT_EQ(y[0], 6.5f);
    ASSERT_EQ(trace.size(), 3u);
    EXPECT_TRUE(trace[1] == Tensor::vector({0, 2}));
}

TEST(Forward, InputShapeChecked) {
    const Network net = Network::mlp({3, 2});
    EXPECT_EQ(code_of([&] { forward(net, Tensor::vector({1, 2})); }), ErrorCode::dimension);
}

TEST(Forward, SoftmaxHeadReturnsLogits) {
    Network net(Shape{2}, {LayerSpec::dense(2, 2), LayerSpec::softmax_layer()});
    net.mutable_layer(0).weight = Tensor::matrix({{1, 0}, {0, 1}});
    const Tensor z = forward(net, Tensor::vector({3, 1}));
    EXPECT_TRUE(z == Tensor::vector({3, 1}));
    const Tensor p = predict_proba(net, Tensor::vector({3, 1}));
    EXPECT_NEAR(p[0] + p[1], 1.0f, 1e-6f);
    EXPECT_EQ(predict(net, Tensor::vector({3, 1})), 0u);
}

TEST(CrossEntropy, MatchesLongDoubleOracle) {
    const Tensor z = Tensor::vector({2.0f, -1.0f, 0.5f});
    EXPECT_NEAR(cross_entropy_loss(z, 2), oracle::xent(z, 2), 1e-12);
    EXPECT_EQ(code_of([&] { cross_entropy_loss(z, 3); }), ErrorCode::invalid_argument);
}

TEST(Backward, MatchesCentralDifferencesOnMlp) {
    std::mt19937_64 rng(21);
    Network net = Network::mlp({5, 4, 3});
    net.init_he_uniform(3);
    const Tensor x = oracle::random_tensor(Shape{5}, rng);
    const GradientSet g = backward(net, x, 1);
    for (std::size_t l : {std::size_t{0}, std::size_t{2}}) {
        for (std::size_t i = 0; i < net.layer(l).weight.size(); ++i)
            EXPECT_LT(rel_error(g.layers[l].weight[i], oracle::finite_difference(net, l, false, i, x, 1)), 1e-2);
        for (std::size_t i = 0; i < net.layer(l).bias.size(); ++i)
            EXPECT_LT(rel_error(g.layers[l].bias[i], oracle::finite_difference(net, l, true, i, x, 1)), 1e-2);
    }
}

TEST(Backward, MatchesCentralDifferencesOnConvNet) {
    std::mt19937_64 rng(22);
    const Network net = small_cnn(5);
    const Tensor x = oracle::random_tensor(Shape{2, 7, 7}, rng);
    double loss = 0.0;
    const GradientSet g = backward(net, x, 2, &loss);
    EXPECT_NEAR(loss, oracle::xent(forward(net, x), 2), 1e-6);
    double worst = 0.0;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        if (!net.layer(l).spec.has_parameters()) continue;
        for (std::size_t i = 0; i < net.layer(l).weight.size(); ++i)
            worst = std::max(worst, rel_error(g.layers[l].weight[i], oracle::finite_difference(net, l, false, i, x, 2)));
        for (std::size_t i = 0; i < net.layer(l).bias.size(); ++i)
            worst = std::max(worst, rel_error(g.layers[l].bias[i], oracle::finite_difference(net, l, true, i, x, 2)));
    }
    EXPECT_LT(worst, 1e-2);
}

TEST(Backward, DroppedUnitsGetZeroGradient) {
    Network net = Network::mlp({4, 6, 3});
    net.init_he_uniform(9);
    PruneMask m(net.unit_counts());
    m.drop(0, 2);
    net.set_mask(m);
    const GradientSet g = backward(net, Tensor::vector({1, -1, 0.5f, 2}), 0);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(g.layers[0].weight[2 * 4 + j], 0.0f);
    EXPECT_EQ(g.layers[0].bias[2], 0.0f);
}

TEST(Mask, ApplyIsIdempotentAndZeroesRowAndBias) {
    Network net = Network::mlp({3, 4, 2});
    net.init_he_uniform(1);
    for (float& b : net.mutable_layer(0).bias.data()) b = 0.25f;
    PruneMask m(net.unit_counts());
    m.drop(0, 1);
    net.set_mask(m);
    const Network once = net;
    net.apply_mask();
    EXPECT_TRUE(bit_equal(net.layer(0).weight, once.layer(0).weight));
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(net.layer(0).weight[3 + j], 0.0f);
    EXPECT_EQ(net.layer(0).bias[1], 0.0f);
    EXPECT_EQ(net.layer(0).bias[0], 0.25f);
}

TEST(Mask, WrongStructureRejected) {
    Network net = Network::mlp({3, 4, 2});
    EXPECT_EQ(code_of([&] { net.set_mask(PruneMask({5, 0, 2})); }), ErrorCode::structure_mismatch);
}

TEST(Adam, FirstStepMovesEachParameterByLearningRate) {
    Network net = Network::mlp({3, 2});
    net.init_he_uniform(4);
    const Network before = net;
    const GradientSet g = backward(net, Tensor::vector({1, 2, 3}), 1);
    AdamState state(net);
    adam_step(net, g, state, 0.01);
    for (std::size_t i = 0; i < net.layer(0).weight.size(); ++i) {
        const float grad = g.layers[0].weight[i];
        if (grad == 0.0f) continue;
        EXPECT_NEAR(before.layer(0).weight[i] - net.layer(0).weight[i], grad > 0 ? 0.01f : -0.01f, 1e-5f);
    }
    EXPECT_EQ(state.step, 1u);
}

TEST(Adam, MaskedUnitsStayExactlyZero) {
    Network net = small_cnn(8);
    PruneMask m(net.unit_counts());
    m.drop(0, 1);
    m.drop(3, 0);
    m.drop(6, 4);
    net.set_mask(m);
    std::mt19937_64 rng(3);
    AdamState state(net);
    for (int step = 0; step < 20; ++step) {
        const Tensor x = oracle::random_tensor(Shape{2, 7, 7}, rng);
        adam_step(net, backward(net, x, step % 3), state, 0.05);
    }
    for (auto [layer, unit] : {std::pair<std::size_t, std::size_t>{0, 1}, {3, 0}, {6, 4}}) {
        const std::size_t per = net.layer(layer).spec.weights_per_unit();
        for (std::size_t k = 0; k < per; ++k) EXPECT_EQ(net.layer(layer).weight[unit * per + k], 0.0f);
        EXPECT_EQ(net.layer(layer).bias[unit], 0.0f);
    }
}

TEST(Init, HeUniformIsSeededAndBounded) {
    Network a = Network::mlp({6, 5, 2}), b = Network::mlp({6, 5, 2});
    a.init_he_uniform(77);
    b.init_he_uniform(77);
    EXPECT_TRUE(bit_equal(a.layer(0).weight, b.layer(0).weight));
    const float limit = std::sqrt(6.0f / 6.0f);
    for (float w : a.layer(0).weight.data()) EXPECT_LE(std::fabs(w), limit);
}
