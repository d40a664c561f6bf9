#include "fineprune/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace fineprune;
using testutil::code_of;

namespace {

Network small_conv_net() {
    // conv 1x5x5 -> 2x3x3 (162 MACs), dense 18->4 (72), dense 4->2 (8)
    Network net(Shape{1, 5, 5}, {LayerSpec::conv(1, 2, 3), LayerSpec::relu_layer(), LayerSpec::flatten(),
                                 LayerSpec::dense(18, 4), LayerSpec::relu_layer(), LayerSpec::dense(4, 2)});
    net.init_he_uniform(1);
    return net;
}

} // namespace

TEST(Accuracy, ConstantOutputOnBalancedSetIsHalf) {
    Network net = Network::mlp({2, 2});
    net.mutable_layer(0).bias = Tensor::vector({1, 0});
    LabeledDataset d(2);
    for (int i = 0; i < 10; ++i) d.add(Tensor::vector({float(i), -float(i)}), static_cast<std::size_t>(i % 2));
    EXPECT_DOUBLE_EQ(evaluate_accuracy(net, d), 0.5);
    EXPECT_EQ(code_of([&] { evaluate_accuracy(net, LabeledDataset(2)); }), ErrorCode::empty_input);
}

TEST(Accuracy, MatchesDoubleForwardTally) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Network net = Network::mlp({5, 6, 3});
        net.init_he_uniform(static_cast<std::uint64_t>(trial));
        const oracle::DoubleParams p(net);
        LabeledDataset d(3);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < 60; ++i) {
            const Tensor x = oracle::random_tensor(Shape{5}, rng);
            const auto z = oracle::forward_double(net, p, x);
            const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
            d.add(x, i % 3);
            hits += best == i % 3 ? 1 : 0;
        }
        EXPECT_DOUBLE_EQ(evaluate_accuracy(net, d), double(hits) / 60.0);
    }
}

TEST(Macs, DenseAndConvPerLayer) {
    const Network net = small_conv_net();
    EXPECT_EQ(layer_forward_macs(net, 0), 162u);
    EXPECT_EQ(layer_forward_macs(net, 1), 0u);
    EXPECT_EQ(layer_forward_macs(net, 3), 72u);
    EXPECT_EQ(forward_macs(net), 242u);
    EXPECT_EQ(record_macs(net), forward_macs(net));
}

TEST(Macs, BackwardMatchesPerLayerOracle) {
    // Weight gradients cost one forward's worth per parameterised layer;
    // input gradients are skipped for the first one.
    const Network net = small_conv_net();
    EXPECT_EQ(backward_macs(net), 242u + 72u + 8u);
    const Network mlp = Network::mlp({4, 3, 2});
    EXPECT_EQ(backward_macs(mlp), 12u + 6u + 6u);
}

TEST(Macs, CounterScalesBySamples) {
    const Network net = Network::mlp({4, 3, 2});
    const MacCounter c = count_macs(net, PhaseSamples{10, 10, 5});
    EXPECT_EQ(c.get(Phase::forward), 180u);
    EXPECT_EQ(c.get(Phase::backward), 240u);
    EXPECT_EQ(c.get(Phase::record), 90u);
    EXPECT_EQ(c.total(), 510u);
}

TEST(Memory, DenseFourThreeTwo) {
    const std::vector<std::size_t> widths{4, 3, 2};
    EXPECT_EQ(estimate_memory(MemoryMethod::backprop, 10, widths), 180u);
    EXPECT_EQ(estimate_memory(MemoryMethod::fine_prune, 10, widths), 18u);
    // min(3*16, 9*4) + min(2*9, 4*3) = 36 + 12
    EXPECT_EQ(estimate_memory(MemoryMethod::svd, 10, widths), 480u);
    EXPECT_EQ(estimate_memory(MemoryMethod::backprop, 10, Network::mlp({4, 3, 2})), 180u);
}

TEST(Memory, FinePruneIndependentOfExampleCount) {
    const std::vector<std::size_t> widths{32, 64, 64, 8};
    const auto one = estimate_memory(MemoryMethod::fine_prune, 1, widths);
    for (std::uint64_t n : {10u, 1000u, 100000u}) {
        EXPECT_EQ(estimate_memory(MemoryMethod::fine_prune, n, widths), one);
        EXPECT_EQ(estimate_memory(MemoryMethod::backprop, n, widths), n * one);
    }
    EXPECT_EQ(code_of([] { estimate_memory(MemoryMethod::backprop, 1, std::vector<std::size_t>{4}); }),
              ErrorCode::invalid_argument);
}
