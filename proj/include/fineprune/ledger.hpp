#pragma once

#include "fineprune/network.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fineprune {

struct LedgerOptions {
    // Accumulate the output of the activation that follows a unit (the
    // transmitted signal). When false, the raw layer output is used.
    bool post_activation = true;

    friend bool operator==(const LedgerOptions&, const LedgerOptions&) = default;
};

struct UnitScore {
    std::size_t layer;
    std::size_t unit;
    double score;
};

// Running per-unit sums of |activation| over unlabeled samples. Its size
// depends only on the network topology, never on how many samples were
// recorded.
class ActivationLedger {
public:
    ActivationLedger() = default;
    explicit ActivationLedger(const Network& net, LedgerOptions options = {});

    // Forward pass over one unlabeled sample; each unit's accumulator grows
    // by the sum of |output| over all its spatial positions.
    void record(const Network& net, const Tensor& sample);
    void record_all(const Network& net, std::span<const Tensor> samples);

    // Per-unit mean |activation| (total / sample_count), ordered by
    // (layer, unit). Throws empty_input before anything was recorded.
    std::vector<UnitScore> scores() const;

    std::uint64_t sample_count() const noexcept { return samples_; }
    std::size_t accumulator_count() const noexcept;
    const LedgerOptions& options() const noexcept { return options_; }

    // Layer indices (into Network::layers()) that carry accumulators.
    const std::vector<std::size_t>& tracked_layers() const noexcept { return layers_; }
    const std::vector<double>& totals(std::size_t slot) const { return totals_.at(slot); }

    // True when this ledger was built for a network with the same unit layout.
    bool matches(const Network& net) const;
    bool same_structure(const ActivationLedger& other) const;

    // Elementwise sum; sample counts add.
    friend ActivationLedger merge(const ActivationLedger& a, const ActivationLedger& b);

private:
    LedgerOptions options_;
    std::vector<std::size_t> topology_; // Network::unit_counts() at construction
    std::vector<std::size_t> layers_;
    std::vector<std::vector<double>> totals_;
    std::uint64_t samples_ = 0;
};

// Columns: layer_index,unit_index,score
void export_ledger_csv(const ActivationLedger& ledger, const std::filesystem::path& path);

} // namespace fineprune
