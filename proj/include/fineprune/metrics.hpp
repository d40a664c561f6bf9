#pragma once

#include "fineprune/dataset.hpp"
#include "fineprune/network.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace fineprune {

// Fraction of samples whose argmax logit equals the label.
double evaluate_accuracy(const Network& net, const LabeledDataset& data);

enum class Phase : std::size_t { forward, backward, record, prune, svd };
inline constexpr std::size_t kPhaseCount = 5;
const char* to_string(Phase phase) noexcept;

// Exact multiply-accumulate tallies per phase, derived from layer shapes:
// dense adds in*out per sample, conv adds C_out*H'*W'*C_in*kH*kW per sample.
// Activations, pooling and flattening cost no MACs.
struct MacCounter {
    std::array<std::uint64_t, kPhaseCount> tallies{};

    void add(Phase phase, std::uint64_t macs) { tallies[static_cast<std::size_t>(phase)] += macs; }
    std::uint64_t get(Phase phase) const { return tallies[static_cast<std::size_t>(phase)]; }
    std::uint64_t total() const;
};

std::uint64_t layer_forward_macs(const Network& net, std::size_t layer);
std::uint64_t forward_macs(const Network& net);
// Weight gradients for every parameterised layer plus input gradients for
// every parameterised layer above the first, matching backward().
std::uint64_t backward_macs(const Network& net);
// Recording into the ledger is one forward pass.
inline std::uint64_t record_macs(const Network& net) { return forward_macs(net); }

struct PhaseSamples {
    std::uint64_t forward = 0;
    std::uint64_t backward = 0;
    std::uint64_t record = 0;
};

MacCounter count_macs(const Network& net, const PhaseSamples& samples);

enum class MemoryMethod { backprop, svd, fine_prune };
const char* to_string(MemoryMethod method) noexcept;

// Activation-storage estimates with constant factor 1, for N training
// examples over layer widths n_0..n_L:
//   backprop    N * sum n_{i-1} n_i
//   svd         N * sum min(n_i n_{i-1}^2, n_i^2 n_{i-1})
//   fine_prune      sum n_{i-1} n_i
std::uint64_t estimate_memory(MemoryMethod method, std::uint64_t examples, std::span<const std::size_t> widths);
// Same, with (fan_in, units) taken from each parameterised layer.
std::uint64_t estimate_memory(MemoryMethod method, std::uint64_t examples, const Network& net);

} // namespace fineprune
