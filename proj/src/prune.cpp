#include "fineprune/prune.hpp"

#include "fineprune/error.hpp"
#include "fineprune/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fineprune {

SparsityStats sparsity_of(const Network& net, const PruneMask& mask) {
    if (mask.layer_count() != net.layer_count())
        fail(ErrorCode::structure_mismatch, "mask does not cover the network");
    SparsityStats s;
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        if (!net.is_prunable(i)) continue;
        const LayerSpec& spec = net.layer(i).spec;
        s.total_weights += spec.unit_count() * spec.weights_per_unit();
        s.dropped_weights += mask.dropped_units(i) * spec.weights_per_unit();
    }
    return s;
}

// ---------------------------------------------------------------------------
// PruneOrder
// ---------------------------------------------------------------------------

PruneOrder::PruneOrder(const Network& net, std::span<const UnitScore> scores)
    : base_(net.mask()), weights_per_unit_(net.layer_count(), 0), base_dropped_(net.layer_count(), 0) {
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        if (!net.is_prunable(i)) continue;
        weights_per_unit_[i] = net.layer(i).spec.weights_per_unit();
        base_dropped_[i] = base_.dropped_units(i);
        total_weights_ += weights_per_unit_[i] * net.layer(i).spec.unit_count();
    }
    for (const UnitScore& s : scores) {
        if (s.layer >= net.layer_count() || s.unit >= net.layer(s.layer).spec.unit_count())
            fail(ErrorCode::structure_mismatch, "score for layer " + std::to_string(s.layer) + " unit " +
                                                    std::to_string(s.unit) + " does not exist in the network");
        if (!std::isfinite(s.score)) fail(ErrorCode::invalid_argument, "non-finite unit score");
        if (net.is_prunable(s.layer) && base_.keeps(s.layer, s.unit)) units_.push_back(s);
    }
    std::sort(units_.begin(), units_.end(), [](const UnitScore& a, const UnitScore& b) {
        if (a.score != b.score) return a.score < b.score;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.unit < b.unit;
    });
}

double PruneOrder::threshold_for_sparsity(double target_sparsity) const {
    if (!(target_sparsity >= 0.0 && target_sparsity <= 1.0))
        fail(ErrorCode::invalid_argument, "target sparsity must lie in [0, 1]");
    if (units_.empty()) return 0.0;

    const double budget = target_sparsity * static_cast<double>(total_weights_);
    std::vector<std::size_t> dropped = base_dropped_;
    auto dropped_weights = [&]() {
        std::size_t w = 0;
        for (std::size_t l = 0; l < dropped.size(); ++l) {
            if (weights_per_unit_[l] == 0) continue;
            std::size_t d = dropped[l];
            // The survival guard restores one unit when a whole layer would go.
            if (d == base_.unit_count(l) && base_dropped_[l] < base_.unit_count(l)) --d;
            w += d * weights_per_unit_[l];
        }
        return w;
    };

    // Walk score groups; after each complete group check the budget.
    double sigma = std::nextafter(units_.front().score, -std::numeric_limits<double>::infinity());
    std::size_t i = 0;
    while (i < units_.size()) {
        std::size_t j = i;
        while (j < units_.size() && units_[j].score == units_[i].score) ++dropped[units_[j++].layer];
        if (static_cast<double>(dropped_weights()) > budget + 1e-9) break;
        sigma = j < units_.size() ? units_[j].score : std::numeric_limits<double>::infinity();
        i = j;
    }
    return sigma;
}

PruneMask PruneOrder::mask_for_threshold(double sigma) const {
    PruneMask mask = base_;
    std::vector<std::size_t> last_dropped(base_.layer_count(), std::numeric_limits<std::size_t>::max());
    for (const UnitScore& u : units_) {
        if (!(u.score < sigma)) break;
        mask.drop(u.layer, u.unit);
        last_dropped[u.layer] = u.unit;
    }
    for (std::size_t l = 0; l < mask.layer_count(); ++l)
        if (last_dropped[l] != std::numeric_limits<std::size_t>::max() &&
            mask.dropped_units(l) == mask.unit_count(l))
            mask.keep(l, last_dropped[l]);
    return mask;
}

double threshold_for_sparsity(const Network& net, std::span<const UnitScore> scores, double target_sparsity) {
    if (scores.empty()) fail(ErrorCode::empty_input, "no unit scores");
    return PruneOrder(net, scores).threshold_for_sparsity(target_sparsity);
}

// ---------------------------------------------------------------------------
// prune
// ---------------------------------------------------------------------------

namespace {

Pruned apply(const Network& net, PruneMask mask) {
    Pruned out{net, mask};
    out.network.set_mask(std::move(mask));
    return out;
}

} // namespace

Pruned prune(double sigma, const Network& net, const ActivationLedger& ledger) {
    if (!ledger.matches(net)) fail(ErrorCode::structure_mismatch, "ledger was recorded on a different topology");
    const auto scores = ledger.scores();
    return apply(net, PruneOrder(net, scores).mask_for_threshold(sigma));
}

Pruned prune_to_sparsity(const Network& net, std::span<const UnitScore> scores, double target_sparsity) {
    const PruneOrder order(net, scores);
    return apply(net, order.mask_for_threshold(order.threshold_for_sparsity(target_sparsity)));
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

std::vector<double> make_grid(double start, double stop, double step) {
    if (!(step > 0.0)) fail(ErrorCode::invalid_argument, "grid step must be positive");
    if (stop < start) fail(ErrorCode::invalid_argument, "grid stop precedes start");
    std::vector<double> grid;
    for (std::size_t k = 0;; ++k) {
        const double v = std::round((start + static_cast<double>(k) * step) * 1e9) / 1e9;
        if (v > stop + 1e-9) break;
        grid.push_back(v);
    }
    return grid;
}

namespace {

void check_grid(std::span<const double> grid) {
    if (grid.empty()) fail(ErrorCode::empty_input, "sparsity grid is empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] >= 0.0 && grid[i] <= 1.0))
            fail(ErrorCode::invalid_argument, "grid value " + std::to_string(grid[i]) + " outside [0, 1]");
        if (i > 0 && !(grid[i] > grid[i - 1]))
            fail(ErrorCode::invalid_argument, "grid must be strictly increasing");
    }
}

SweepPoint evaluate_point(const Network& net, const PruneOrder& order, const LabeledDataset& eval, double target) {
    const double sigma = order.threshold_for_sparsity(target);
    const Pruned p = apply(net, order.mask_for_threshold(sigma));
    return {target, sparsity_of(p.network).fraction(), evaluate_accuracy(p.network, eval), sigma};
}

void select_best(const PruneOrder& order, SweepResult& r) {
    r.selected = 0;
    for (std::size_t i = 1; i < r.points.size(); ++i)
        if (r.points[i].accuracy > r.points[r.selected].accuracy) r.selected = i;
    r.selected_mask = order.mask_for_threshold(r.points[r.selected].sigma);
}

} // namespace

SweepResult sweep_scores(const Network& net, std::span<const UnitScore> scores, const LabeledDataset& eval,
                         std::span<const double> grid) {
    check_grid(grid);
    if (eval.empty()) fail(ErrorCode::empty_input, "evaluation set is empty");
    const PruneOrder order(net, scores);
    SweepResult r;
    for (double target : grid) r.points.push_back(evaluate_point(net, order, eval, target));
    select_best(order, r);
    return r;
}

SweepResult sweep(const Network& net, const ActivationLedger& ledger, const LabeledDataset& eval,
                  std::span<const double> grid) {
    check_grid(grid);
    if (eval.empty()) fail(ErrorCode::empty_input, "evaluation set is empty");
    if (!ledger.matches(net)) fail(ErrorCode::structure_mismatch, "ledger was recorded on a different topology");
    const auto scores = ledger.scores();
    return sweep_scores(net, scores, eval, grid);
}

SweepResult sweep_refined(const Network& net, const ActivationLedger& ledger, const LabeledDataset& eval) {
    const auto coarse = make_grid(0.0, 0.95, 0.05);
    SweepResult r = sweep(net, ledger, eval, coarse);
    const double best = r.selected_sparsity();
    const auto scores = ledger.scores();
    const PruneOrder order(net, scores);
    for (double v : make_grid(std::max(0.0, best - 0.04), std::min(1.0, best + 0.04), 0.01)) {
        const bool present = std::any_of(r.points.begin(), r.points.end(),
                                         [&](const SweepPoint& p) { return std::fabs(p.target_sparsity - v) < 1e-9; });
        if (!present) r.points.push_back(evaluate_point(net, order, eval, v));
    }
    std::sort(r.points.begin(), r.points.end(),
              [](const SweepPoint& a, const SweepPoint& b) { return a.target_sparsity < b.target_sparsity; });
    select_best(order, r);
    return r;
}

std::size_t ramp_stop_index(std::span<const double> accuracies) {
    if (accuracies.empty()) fail(ErrorCode::empty_input, "empty accuracy series");
    for (std::size_t i = 1; i < accuracies.size(); ++i)
        if (accuracies[i] < accuracies[i - 1]) return i - 1;
    return accuracies.size() - 1;
}

SweepResult safe_ramp(const Network& net, const ActivationLedger& ledger, const LabeledDataset& eval, double step) {
    if (!(step > 0.0 && step <= 0.1)) fail(ErrorCode::invalid_argument, "ramp step must lie in (0, 0.1]");
    if (eval.empty()) fail(ErrorCode::empty_input, "evaluation set is empty");
    if (!ledger.matches(net)) fail(ErrorCode::structure_mismatch, "ledger was recorded on a different topology");
    const auto scores = ledger.scores();
    const PruneOrder order(net, scores);
    SweepResult r;
    std::vector<double> accuracies;
    for (double target : make_grid(0.0, 1.0, step)) {
        r.points.push_back(evaluate_point(net, order, eval, target));
        accuracies.push_back(r.points.back().accuracy);
        if (accuracies.size() > 1 && accuracies.back() < accuracies[accuracies.size() - 2]) break;
    }
    r.selected = ramp_stop_index(accuracies);
    r.selected_mask = order.mask_for_threshold(r.points[r.selected].sigma);
    return r;
}

} // namespace fineprune
