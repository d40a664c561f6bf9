#include "fineprune/dataset.hpp"
#include "fineprune/ledger.hpp"
#include "fineprune/prune.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <type_traits>

using namespace fineprune;
using testutil::code_of;

// The ledger and the pruning operator accept unlabeled inputs only: a
// labeled dataset cannot be passed where samples are expected.
static_assert(std::is_invocable_v<decltype(&ActivationLedger::record_all), ActivationLedger&, const Network&,
                                  std::span<const Tensor>>);
static_assert(!std::is_invocable_v<decltype(&ActivationLedger::record_all), ActivationLedger&, const Network&,
                                   const LabeledDataset&>);
static_assert(!std::is_invocable_v<decltype(&ActivationLedger::record), ActivationLedger&, const Network&,
                                   const LabeledDataset&>);
static_assert(std::is_same_v<decltype(&prune), Pruned (*)(double, const Network&, const ActivationLedger&)>);

namespace {

// 2-4-3-2 with small integer weights; scores are worked out by hand below.
Network hand_net() {
    Network net = Network::mlp({2, 4, 3, 2});
    net.mutable_layer(0).weight = Tensor::matrix({{1, 0}, {0, 1}, {1, 1}, {-1, 0}});
    net.mutable_layer(2).weight = Tensor::matrix({{1, 0, 0, 0}, {0, 0, 2, 0}, {0, 0.5f, 0, 0}});
    net.mutable_layer(4).weight = Tensor::matrix({{1, 1, 1}, {1, -1, 1}});
    return net;
}

std::vector<Tensor> hand_samples() {
    return {Tensor::vector({1, 2}), Tensor::vector({2, 0}), Tensor::vector({0, 1})};
}

} // namespace

TEST(Ledger, HandComputedScores) {
    // h0 per sample: [1,2,3,0], [2,0,2,0], [0,1,1,0]   -> means [1, 1, 2, 0]
    // h1 = [h0_0, 2 h0_2, 0.5 h0_1]: [1,6,1], [2,4,0], [0,2,0.5] -> means [1, 4, 0.5]
    // classifier (no activation follows, raw |z|): [8,6,2.5] and [4,2,1.5] -> [5.5, 2.5]
    const Network net = hand_net();
    ActivationLedger ledger(net);
    ledger.record_all(net, hand_samples());
    EXPECT_EQ(ledger.sample_count(), 3u);
    const auto scores = ledger.scores();
    const std::vector<double> want{1, 1, 2, 0, 1, 4, 0.5, 5.5, 2.5};
    ASSERT_EQ(scores.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_DOUBLE_EQ(scores[i].score, want[i]) << i;
    EXPECT_EQ(scores[4].layer, 2u);
    EXPECT_EQ(scores[4].unit, 0u);
}

TEST(Ledger, PruneBetweenSecondAndThirdSmallestDropsExactlyTwo) {
    // Sorted scores 0, 0.5, 1, ...; sigma = 0.75 lies between the 2nd and 3rd.
    const Network net = hand_net();
    ActivationLedger ledger(net);
    ledger.record_all(net, hand_samples());
    const Pruned p = prune(0.75, net, ledger);
    EXPECT_EQ(p.mask.dropped_units(), 2u); // classifier scores are recorded but never pruned
    EXPECT_FALSE(p.mask.keeps(0, 3));
    EXPECT_FALSE(p.mask.keeps(2, 2));
}

TEST(Ledger, ConvScoresSumOverSpatialPositions) {
    Network net(Shape{1, 5, 5}, {LayerSpec::conv(1, 3, 3), LayerSpec::relu_layer(), LayerSpec::flatten(),
                                 LayerSpec::dense(27, 2)});
    net.init_he_uniform(2);
    std::mt19937_64 rng(5);
    std::vector<Tensor> xs;
    for (int i = 0; i < 4; ++i) xs.push_back(oracle::random_tensor(Shape{1, 5, 5}, rng));
    ActivationLedger ledger(net);
    ledger.record_all(net, xs);
    std::vector<double> want(3, 0.0);
    for (const Tensor& x : xs) {
        std::vector<Tensor> trace;
        forward(net, x, &trace);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t k = 0; k < 9; ++k) want[c] += std::fabs(double(trace[1][c * 9 + k]));
    }
    const auto scores = ledger.scores();
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(scores[c].score, want[c] / 4.0, 1e-9);
}

TEST(Ledger, RawOutputOption) {
    const Network net = hand_net();
    ActivationLedger ledger(net, LedgerOptions{false});
    ledger.record(net, Tensor::vector({1, 2}));
    // Layer 0 raw output [1, 2, 3, -1]: |.| gives 1 for the negative unit.
    EXPECT_DOUBLE_EQ(ledger.scores()[3].score, 1.0);
}

TEST(Ledger, SizeIndependentOfSampleCount) {
    const Network net = hand_net();
    ActivationLedger small(net), large(net);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 10; ++i) small.record(net, oracle::random_tensor(Shape{2}, rng));
    for (int i = 0; i < 1000; ++i) large.record(net, oracle::random_tensor(Shape{2}, rng));
    EXPECT_EQ(small.accumulator_count(), 4u + 3u + 2u);
    EXPECT_EQ(large.accumulator_count(), small.accumulator_count());
}

TEST(Ledger, EmptyAndMismatch) {
    const Network net = hand_net();
    const ActivationLedger ledger(net);
    EXPECT_EQ(code_of([&] { ledger.scores(); }), ErrorCode::empty_input);
    ActivationLedger other(Network::mlp({2, 5, 2}));
    EXPECT_FALSE(other.matches(net));
    other.record(Network::mlp({2, 5, 2}), Tensor::vector({1, 1}));
    EXPECT_EQ(code_of([&] { prune(1.0, net, other); }), ErrorCode::structure_mismatch);
    EXPECT_EQ(code_of([&] { merge(ledger, other); }), ErrorCode::structure_mismatch);
}

TEST(Ledger, MergeIsCommutativeAndAssociative) {
    Network net = Network::mlp({3, 6, 4, 2});
    net.init_he_uniform(8);
    std::mt19937_64 rng(2);
    std::vector<ActivationLedger> parts(3, ActivationLedger(net));
    for (int i = 0; i < 30; ++i) parts[static_cast<std::size_t>(i % 3)].record(net, oracle::random_tensor(Shape{3}, rng));
    const auto ab = merge(parts[0], parts[1]), ba = merge(parts[1], parts[0]);
    const auto left = merge(merge(parts[0], parts[1]), parts[2]);
    const auto right = merge(parts[0], merge(parts[1], parts[2]));
    EXPECT_EQ(left.sample_count(), 30u);
    const auto sab = ab.scores(), sba = ba.scores(), sl = left.scores(), sr = right.scores();
    for (std::size_t i = 0; i < sab.size(); ++i) {
        EXPECT_EQ(sab[i].score, sba[i].score);
        EXPECT_NEAR(sl[i].score, sr[i].score, 1e-12);
    }
}

TEST(Ledger, CsvExport) {
    const Network net = hand_net();
    ActivationLedger ledger(net);
    ledger.record_all(net, hand_samples());
    const auto path = testutil::scratch_dir() / "ledger.csv";
    export_ledger_csv(ledger, path);
    std::ifstream f(path);
    std::string header, first;
    std::getline(f, header);
    std::getline(f, first);
    EXPECT_EQ(header, "layer_index,unit_index,score");
    EXPECT_EQ(first, "0,0,1");
}
