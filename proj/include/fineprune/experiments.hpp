#pragma once

#include "fineprune/baselines.hpp"
#include "fineprune/dataset.hpp"
#include "fineprune/network.hpp"
#include "fineprune/prune.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fineprune {

// Independent stream seed for a named component of a run.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

// ---------------------------------------------------------------------------
// Synthetic task
// ---------------------------------------------------------------------------

struct SyntheticTaskConfig {
    std::size_t classes = 8;
    std::size_t dims = 32;
    // support == 0: cluster means are N(0, (separation^2 / dims) I).
    // support > 0: each mean is separation / sqrt(support) on `support`
    // seeded coordinates and 0 elsewhere (prototype-like inputs).
    // Samples add N(0, noise^2 I) either way.
    std::size_t support = 8;
    double separation = 3.0;
    double noise = 1.0;
    std::size_t source_per_class = 400;
    std::size_t target_per_class = 500;
};

class GaussianClusters {
public:
    GaussianClusters(const SyntheticTaskConfig& config, std::uint64_t seed);

    const SyntheticTaskConfig& config() const noexcept { return config_; }
    const std::vector<double>& mean(std::size_t cls) const { return means_.at(cls); }
    Tensor draw(std::size_t cls, std::mt19937_64& rng) const;
    // per_class samples of each listed class, interleaved class by class.
    LabeledDataset make(std::span<const std::size_t> classes, std::size_t per_class, std::mt19937_64& rng,
                        Provenance provenance) const;

private:
    SyntheticTaskConfig config_;
    std::vector<std::vector<double>> means_;
};

// A target user: a subset of the source classes plus an optional fixed
// elementwise affine input shift x -> scale * x + shift.
struct Individual {
    std::vector<std::size_t> classes; // ascending
    std::vector<float> scale;         // empty = identity
    std::vector<float> shift;

    Tensor perturb(const Tensor& x) const;
};

// The first `class_count` entries of a seeded permutation of the source
// classes, so individuals built from one seed nest as class_count grows.
// perturbation > 0 draws scale ~ 1 + U(-p, p) and shift ~ U(-p, p).
Individual make_individual(std::size_t source_classes, std::size_t class_count, std::uint64_t seed,
                           double perturbation = 0.0, std::size_t dims = 0);

LabeledDataset make_target_data(const GaussianClusters& task, const Individual& who, std::size_t per_class,
                                std::uint64_t seed);

// ---------------------------------------------------------------------------
// Split protocol
// ---------------------------------------------------------------------------

struct FoldSplit {
    std::vector<std::size_t> train; // unlabeled role: feeds the ledger
    std::vector<std::size_t> eval;  // labeled role: measures target accuracy
};

// Seeded shuffle, then sample k of the permutation goes to fold k % folds.
// Every index lands in exactly one eval partition.
std::vector<FoldSplit> k_fold_splits(std::size_t sample_count, std::size_t folds, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Source model
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    SyntheticTaskConfig task;
    std::vector<std::size_t> hidden = {64, 64};
    TrainConfig source_training{1e-3, 64, 10, 0};
    TrainConfig finetune{}; // labeled-target baseline
    std::size_t folds = 5;
    double grid_start = 0.0;
    double grid_stop = 1.0;
    double grid_step = 0.02;
    std::size_t target_classes = 2;
    double perturbation = 0.0;
    std::uint64_t seed = 1;
};

void validate(const ExperimentConfig& cfg);

struct SourceModel {
    GaussianClusters task;
    Network network;
    double source_accuracy = 0.0; // on a fresh source test draw
};

SourceModel train_source_model(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct ReportRow {
    std::string experiment_id;
    std::string method;
    std::size_t fold = 0;
    double sparsity = 0.0;
    double target_accuracy = 0.0;
    double source_accuracy = 0.0;
    std::uint64_t macs = 0;
    std::uint64_t memory_estimate = 0;
    std::uint64_t seed = 0;
};

inline constexpr const char* kReportHeader =
    "experiment_id,method,fold,sparsity,target_accuracy,source_accuracy,macs,memory_estimate,seed";

class ExperimentReport {
public:
    void append(ReportRow row) { rows_.push_back(std::move(row)); }
    void append(std::span<const ReportRow> rows);
    const std::vector<ReportRow>& rows() const noexcept { return rows_; }
    // Header plus rows sorted by (experiment, method, fold, sparsity).
    std::string to_csv() const;
    void write(const std::filesystem::path& path) const;
    static ExperimentReport read(const std::filesystem::path& path);

private:
    std::vector<ReportRow> rows_;
};

std::string format_row(const ReportRow& row);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct CurveFold {
    double baseline_accuracy = 0.0; // source model on this fold's eval set
    SweepResult fine_prune;
    SweepResult magnitude;
    SweepResult random;
    // Control accuracies at Fine-Pruning's selected grid point.
    double magnitude_at_selected = 0.0;
    double random_at_selected = 0.0;
};

struct SparsityCurveResult {
    Individual individual;
    double source_accuracy = 0.0;
    std::vector<double> grid;
    std::vector<CurveFold> folds;
    std::vector<ReportRow> rows;
};

SparsityCurveResult experiment_sparsity_curve(const ExperimentConfig& cfg);
SparsityCurveResult experiment_sparsity_curve(const ExperimentConfig& cfg, const SourceModel& source);

inline constexpr double kNever = std::numeric_limits<double>::infinity();

struct DataEfficiencyFold {
    double baseline_accuracy = 0.0;
    std::vector<double> fine_prune; // best sweep accuracy per fraction
    std::vector<double> finetune;   // fine-tuned accuracy per fraction
    // Smallest fraction whose accuracy strictly exceeds the baseline; kNever if none.
    double fine_prune_min_fraction = kNever;
    double finetune_min_fraction = kNever;
};

struct DataEfficiencyResult {
    std::vector<double> fractions;
    std::vector<DataEfficiencyFold> folds;
    std::vector<ReportRow> rows;
};

// Fractions are of each fold's training partition, all in (0, 1].
DataEfficiencyResult experiment_data_efficiency(const ExperimentConfig& cfg, std::span<const double> fractions);
DataEfficiencyResult experiment_data_efficiency(const ExperimentConfig& cfg, const SourceModel& source,
                                                std::span<const double> fractions);
std::vector<double> default_fractions(); // 0.1 .. 1.0 step 0.1

struct ClassCountResult {
    std::vector<std::size_t> class_counts;
    // gains[c][f] = best sweep accuracy - baseline accuracy
    std::vector<std::vector<double>> gains;
    std::vector<std::vector<double>> baselines;
    std::vector<double> mean_gains;
    double spearman = 0.0; // class count vs mean gain
    std::vector<ReportRow> rows;
};

// Class counts from 2 to cfg.task.classes; the full count is the control.
ClassCountResult experiment_class_count(const ExperimentConfig& cfg);
ClassCountResult experiment_class_count(const ExperimentConfig& cfg, const SourceModel& source);

// Rank correlation with average ranks for ties; 0 when either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

} // namespace fineprune
