#pragma once

#include "fineprune/dataset.hpp"
#include "fineprune/network.hpp"
#include "fineprune/prune.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fineprune {

struct TrainConfig {
    double learning_rate = 1e-2;
    std::size_t batch_size = 64;
    std::size_t epochs = 10;
    std::uint64_t seed = 0; // shuffling order
};

struct FinetuneResult {
    Network network;
    std::vector<double> epoch_losses; // mean sample loss seen during each epoch
};

// Mini-batch Adam on labeled data (batch gradient = mean over the batch).
// All unmasked parameters are trained; dropped units stay zero.
FinetuneResult finetune_backprop(const Network& net, const LabeledDataset& data, const TrainConfig& cfg);

// Thin SVD A = U diag(S) V^T of a row-major m x n matrix, singular values
// descending. U is m x r and V is n x r (row-major), r = min(m, n).
struct SvdDecomposition {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t rank = 0;
    std::vector<double> u;
    std::vector<double> singular;
    std::vector<double> v;
    std::size_t sweeps = 0;
    std::uint64_t macs = 0; // dot products and rotations actually performed
};

// One-sided (Hestenes) Jacobi. A column pair counts as orthogonal once
// |<a_p, a_q>| <= tolerance * |a_p| |a_q|.
SvdDecomposition jacobi_svd(std::span<const double> a, std::size_t rows, std::size_t cols,
                            double tolerance = 1e-10, std::size_t max_sweeps = 60);

struct SvdCompressed {
    Network network;
    bool changed = false;
    std::uint64_t factorization_macs = 0;
    std::vector<std::string> warnings;
};

// Replaces every dense W (m x n) with dense(n -> k) = diag(S_k) V_k^T
// followed by dense(k -> m) = U_k (carrying the original bias and mask),
// k = ceil(rank_fraction * min(m, n)). A network without dense layers is
// returned unchanged with a warning.
SvdCompressed svd_compress(const Network& net, double rank_fraction);

// L1 norm of each prunable unit's weights; needs no data.
std::vector<UnitScore> magnitude_scores(const Network& net);
// Uniform random scores from the seed.
std::vector<UnitScore> random_scores(const Network& net, std::uint64_t seed);

Pruned magnitude_prune(const Network& net, double target_sparsity);
Pruned random_prune(const Network& net, double target_sparsity, std::uint64_t seed);

enum class BaselineMethod { finetune, svd, magnitude, random };
const char* to_string(BaselineMethod m) noexcept;
BaselineMethod baseline_method_from_string(const std::string& name);

struct BaselineConfig {
    BaselineMethod method = BaselineMethod::finetune;
    TrainConfig finetune;
    double rank_fraction = 0.5;
    double target_sparsity = 0.5;
    std::uint64_t seed = 0;
};

} // namespace fineprune
