#include "fineprune/metrics.hpp"

#include "fineprune/error.hpp"

#include <algorithm>
#include <utility>
#include <vector>

namespace fineprune {

double evaluate_accuracy(const Network& net, const LabeledDataset& data) {
    if (data.empty()) fail(ErrorCode::empty_input, "accuracy of an empty dataset");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (predict(net, data.input(i)) == data.label(i)) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

const char* to_string(Phase phase) noexcept {
    switch (phase) {
    case Phase::forward: return "forward";
    case Phase::backward: return "backward";
    case Phase::record: return "record";
    case Phase::prune: return "prune";
    case Phase::svd: return "svd";
    }
    return "?";
}

std::uint64_t MacCounter::total() const {
    std::uint64_t t = 0;
    for (std::uint64_t v : tallies) t += v;
    return t;
}

std::uint64_t layer_forward_macs(const Network& net, std::size_t layer) {
    const LayerSpec& s = net.layer(layer).spec;
    if (s.kind == LayerKind::dense) return std::uint64_t{s.in_features} * s.out_features;
    if (s.kind == LayerKind::conv2d) {
        const Shape& out = net.output_shape(layer);
        return std::uint64_t{s.out_channels} * out[1] * out[2] * s.in_channels * s.kernel_h * s.kernel_w;
    }
    return 0;
}

std::uint64_t forward_macs(const Network& net) {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < net.layer_count(); ++i) t += layer_forward_macs(net, i);
    return t;
}

std::uint64_t backward_macs(const Network& net) {
    std::uint64_t t = 0;
    bool first = true;
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        if (!net.layer(i).spec.has_parameters()) continue;
        const std::uint64_t f = layer_forward_macs(net, i);
        t += f;              // weight gradient
        if (!first) t += f;  // input gradient
        first = false;
    }
    return t;
}

MacCounter count_macs(const Network& net, const PhaseSamples& samples) {
    MacCounter c;
    const std::uint64_t f = forward_macs(net);
    c.add(Phase::forward, samples.forward * f);
    c.add(Phase::backward, samples.backward * backward_macs(net));
    c.add(Phase::record, samples.record * f);
    return c;
}

const char* to_string(MemoryMethod method) noexcept {
    switch (method) {
    case MemoryMethod::backprop: return "backprop";
    case MemoryMethod::svd: return "svd";
    case MemoryMethod::fine_prune: return "fine_prune";
    }
    return "?";
}

namespace {

std::uint64_t memory_from_pairs(MemoryMethod method, std::uint64_t examples,
                                const std::vector<std::pair<std::uint64_t, std::uint64_t>>& pairs) {
    std::uint64_t sum = 0;
    for (const auto& [prev, cur] : pairs) {
        if (method == MemoryMethod::svd)
            sum += std::min(cur * prev * prev, cur * cur * prev);
        else
            sum += prev * cur;
    }
    return method == MemoryMethod::fine_prune ? sum : examples * sum;
}

} // namespace

std::uint64_t estimate_memory(MemoryMethod method, std::uint64_t examples, std::span<const std::size_t> widths) {
    if (widths.size() < 2) fail(ErrorCode::invalid_argument, "memory estimate needs at least two layer widths");
    std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
    for (std::size_t i = 1; i < widths.size(); ++i) pairs.emplace_back(widths[i - 1], widths[i]);
    return memory_from_pairs(method, examples, pairs);
}

std::uint64_t estimate_memory(MemoryMethod method, std::uint64_t examples, const Network& net) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
    for (const Layer& l : net.layers())
        if (l.spec.has_parameters()) pairs.emplace_back(l.spec.weights_per_unit(), l.spec.unit_count());
    return memory_from_pairs(method, examples, pairs);
}

} // namespace fineprune
