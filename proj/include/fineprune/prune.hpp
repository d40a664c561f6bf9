#pragma once

#include "fineprune/dataset.hpp"
#include "fineprune/ledger.hpp"
#include "fineprune/network.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace fineprune {

// Zeroed prunable weights over total prunable weights, in integers.
// Prunable weights are the weight tensors of prunable layers (biases are
// not counted).
struct SparsityStats {
    std::size_t dropped_weights = 0;
    std::size_t total_weights = 0;

    double fraction() const noexcept {
        return total_weights == 0 ? 0.0
                                  : static_cast<double>(dropped_weights) / static_cast<double>(total_weights);
    }
};

SparsityStats sparsity_of(const Network& net, const PruneMask& mask);
inline SparsityStats sparsity_of(const Network& net) { return sparsity_of(net, net.mask()); }

// Prunable, not-yet-dropped units sorted by ascending score with ties
// broken by (layer, unit). Built once per score set and reused across
// thresholds.
class PruneOrder {
public:
    PruneOrder(const Network& net, std::span<const UnitScore> scores);

    const std::vector<UnitScore>& units() const noexcept { return units_; }

    // Largest-drop threshold whose resulting sparsity is <= target.
    // Nothing dropped -> a value just below the minimum score; everything
    // droppable -> +infinity.
    double threshold_for_sparsity(double target_sparsity) const;

    // Mask dropping every ordered unit with score < sigma, on top of the
    // network's current mask. Every layer keeps at least one unit: if all of
    // a layer's units fall below sigma, its highest-ranked unit survives.
    PruneMask mask_for_threshold(double sigma) const;

private:
    PruneMask base_;                          // network mask at construction
    std::vector<std::size_t> weights_per_unit_; // 0 for non-prunable layers
    std::vector<std::size_t> base_dropped_;     // per layer, prunable layers only
    std::size_t total_weights_ = 0;
    std::vector<UnitScore> units_;
};

double threshold_for_sparsity(const Network& net, std::span<const UnitScore> scores, double target_sparsity);

struct Pruned {
    Network network;
    PruneMask mask;
};

// Drops units whose ledger score is below sigma: their weights and bias
// become exactly 0, every other parameter is left untouched. Never reads
// labels.
Pruned prune(double sigma, const Network& net, const ActivationLedger& ledger);

// Threshold-then-prune with an arbitrary per-unit score (shared by the
// data-free baselines).
Pruned prune_to_sparsity(const Network& net, std::span<const UnitScore> scores, double target_sparsity);

struct SweepPoint {
    double target_sparsity = 0.0;
    double achieved_sparsity = 0.0;
    double accuracy = 0.0;
    double sigma = 0.0;
};

struct SweepResult {
    std::vector<SweepPoint> points; // strictly increasing target_sparsity
    std::size_t selected = 0;
    PruneMask selected_mask;

    double selected_sparsity() const { return points.at(selected).target_sparsity; }
    double selected_accuracy() const { return points.at(selected).accuracy; }
};

// start, start+step, ..., up to stop inclusive (values rounded to 1e-9).
std::vector<double> make_grid(double start, double stop, double step);

// Prunes a fresh copy at every grid point and measures accuracy on the
// labeled evaluation set. Selects the best accuracy, ties to the lowest
// sparsity.
SweepResult sweep(const Network& net, const ActivationLedger& ledger, const LabeledDataset& eval,
                  std::span<const double> grid);

// Same selection over an arbitrary per-unit score (data-free controls).
SweepResult sweep_scores(const Network& net, std::span<const UnitScore> scores, const LabeledDataset& eval,
                         std::span<const double> grid);
// 0.00..0.95 step 0.05, then step 0.01 within +-0.04 of the best point.
SweepResult sweep_refined(const Network& net, const ActivationLedger& ledger, const LabeledDataset& eval);

// Index of the last point before the first strict decrease (ties count as
// non-decreasing); the final index when there is no decrease.
std::size_t ramp_stop_index(std::span<const double> accuracies);

// Raises sparsity from 0 in `step` increments, stopping after the first
// strict accuracy decrease. 0 < step <= 0.1.
SweepResult safe_ramp(const Network& net, const ActivationLedger& ledger, const LabeledDataset& eval, double step);

} // namespace fineprune
