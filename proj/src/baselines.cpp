#include "fineprune/baselines.hpp"

#include "fineprune/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace fineprune {

// ---------------------------------------------------------------------------
// Fine-tuning
// ---------------------------------------------------------------------------

FinetuneResult finetune_backprop(const Network& net, const LabeledDataset& data, const TrainConfig& cfg) {
    if (data.empty()) fail(ErrorCode::empty_input, "fine-tuning needs a non-empty labeled dataset");
    if (cfg.batch_size == 0) fail(ErrorCode::invalid_argument, "batch size must be positive");
    if (!(cfg.learning_rate > 0.0)) fail(ErrorCode::invalid_argument, "learning rate must be positive");

    FinetuneResult out{net, {}};
    AdamState state(out.network);
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            GradientSet grads = GradientSet::zeros_like(out.network);
            for (std::size_t k = start; k < end; ++k)
                epoch_loss += accumulate_gradients(out.network, data.input(order[k]), data.label(order[k]), grads);
            grads.scale(1.0f / static_cast<float>(end - start));
            adam_step(out.network, grads, state, cfg.learning_rate);
        }
        out.epoch_losses.push_back(epoch_loss / static_cast<double>(data.size()));
    }
    return out;
}

// ---------------------------------------------------------------------------
// SVD
// ---------------------------------------------------------------------------

namespace {

// Jacobi on the columns of a tall (rows >= cols) matrix.
SvdDecomposition jacobi_tall(std::vector<double> work, std::size_t m, std::size_t n, double tolerance,
                             std::size_t max_sweeps) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    SvdDecomposition d;
    d.rows = m;
    d.cols = n;
    d.rank = n;

    for (d.sweeps = 0; d.sweeps < max_sweeps;) {
        ++d.sweeps;
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double ap = work[i * n + p], aq = work[i * n + q];
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                d.macs += 3 * m;
                if (gamma == 0.0 || std::fabs(gamma) <= tolerance * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double ap = work[i * n + p], aq = work[i * n + q];
                    work[i * n + p] = c * ap - s * aq;
                    work[i * n + q] = s * ap + c * aq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v[i * n + p], vq = v[i * n + q];
                    v[i * n + p] = c * vp - s * vq;
                    v[i * n + q] = s * vp + c * vq;
                }
                d.macs += 4 * m + 4 * n;
            }
        }
        if (!rotated) break;
    }

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += work[i * n + j] * work[i * n + j];
        norms[j] = std::sqrt(s);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

    d.u.assign(m * n, 0.0);
    d.v.assign(n * n, 0.0);
    d.singular.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        d.singular[k] = norms[j];
        for (std::size_t i = 0; i < m; ++i) d.u[i * n + k] = norms[j] > 0.0 ? work[i * n + j] / norms[j] : 0.0;
        for (std::size_t i = 0; i < n; ++i) d.v[i * n + k] = v[i * n + j];
    }
    return d;
}

} // namespace

SvdDecomposition jacobi_svd(std::span<const double> a, std::size_t rows, std::size_t cols, double tolerance,
                            std::size_t max_sweeps) {
    if (rows == 0 || cols == 0 || a.size() != rows * cols)
        fail(ErrorCode::dimension, "jacobi_svd: data length does not match " + std::to_string(rows) + "x" +
                                       std::to_string(cols));
    if (rows >= cols) return jacobi_tall(std::vector<double>(a.begin(), a.end()), rows, cols, tolerance, max_sweeps);

    // Wide: decompose A^T = U' S V'^T, then A = V' S U'^T.
    std::vector<double> t(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
    SvdDecomposition dt = jacobi_tall(std::move(t), cols, rows, tolerance, max_sweeps);
    SvdDecomposition d;
    d.rows = rows;
    d.cols = cols;
    d.rank = rows;
    d.u = std::move(dt.v);
    d.v = std::move(dt.u);
    d.singular = std::move(dt.singular);
    d.sweeps = dt.sweeps;
    d.macs = dt.macs;
    return d;
}

SvdCompressed svd_compress(const Network& net, double rank_fraction) {
    if (!(rank_fraction > 0.0 && rank_fraction <= 1.0))
        fail(ErrorCode::invalid_argument, "rank fraction must lie in (0, 1]");

    std::vector<LayerSpec> specs;
    std::vector<Layer> params;           // parameters for each new layer
    std::vector<std::vector<bool>> keep; // mask rows for each new layer
    SvdCompressed out{net, false, 0, {}};
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const Layer& layer = net.layer(i);
        std::vector<bool> row_keep(layer.spec.unit_count());
        for (std::size_t u = 0; u < row_keep.size(); ++u) row_keep[u] = net.mask().keeps(i, u);
        if (layer.spec.kind != LayerKind::dense) {
            specs.push_back(layer.spec);
            params.push_back(layer);
            keep.push_back(std::move(row_keep));
            continue;
        }
        const std::size_t m = layer.spec.out_features, n = layer.spec.in_features;
        const auto k = static_cast<std::size_t>(std::ceil(rank_fraction * static_cast<double>(std::min(m, n)) - 1e-9));
        const std::vector<double> w(layer.weight.data().begin(), layer.weight.data().end());
        const SvdDecomposition d = jacobi_svd(w, m, n);
        out.factorization_macs += d.macs;

        Layer inner{LayerSpec::dense(n, k), Tensor(Shape{k, n}), Tensor(Shape{k})};
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t c = 0; c < n; ++c)
                inner.weight[r * n + c] = static_cast<float>(d.singular[r] * d.v[c * d.rank + r]);
        Layer outer{LayerSpec::dense(k, m), Tensor(Shape{m, k}), layer.bias};
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < k; ++c) outer.weight[r * k + c] = static_cast<float>(d.u[r * d.rank + c]);

        specs.push_back(inner.spec);
        params.push_back(std::move(inner));
        keep.emplace_back(k, true);
        specs.push_back(outer.spec);
        params.push_back(std::move(outer));
        keep.push_back(std::move(row_keep));
        out.changed = true;
    }
    if (!out.changed) {
        out.warnings.push_back("svd_compress: network has no dense layers; returned unchanged");
        return out;
    }

    Network compressed(net.input_shape(), specs);
    compressed.set_seed(net.seed());
    compressed.set_classifier_prunable(net.classifier_prunable());
    PruneMask mask(compressed.unit_counts());
    for (std::size_t i = 0; i < params.size(); ++i) {
        Layer& dst = compressed.mutable_layer(i);
        dst.weight = params[i].weight;
        dst.bias = params[i].bias;
        for (std::size_t u = 0; u < keep[i].size(); ++u)
            if (!keep[i][u]) mask.drop(i, u);
    }
    compressed.set_mask(std::move(mask));
    out.network = std::move(compressed);
    return out;
}

// ---------------------------------------------------------------------------
// Data-free pruning controls
// ---------------------------------------------------------------------------

std::vector<UnitScore> magnitude_scores(const Network& net) {
    std::vector<UnitScore> scores;
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const Layer& layer = net.layer(i);
        const std::size_t per_unit = layer.spec.weights_per_unit();
        for (std::size_t u = 0; u < layer.spec.unit_count(); ++u) {
            double l1 = 0.0;
            for (float w : layer.weight.data().subspan(u * per_unit, per_unit)) l1 += std::fabs(static_cast<double>(w));
            scores.push_back({i, u, l1});
        }
    }
    return scores;
}

std::vector<UnitScore> random_scores(const Network& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::vector<UnitScore> scores;
    for (std::size_t i = 0; i < net.layer_count(); ++i)
        for (std::size_t u = 0; u < net.layer(i).spec.unit_count(); ++u) scores.push_back({i, u, dist(rng)});
    return scores;
}

namespace {

void check_control_sparsity(double s) {
    if (!(s >= 0.0 && s < 1.0)) fail(ErrorCode::invalid_argument, "target sparsity must lie in [0, 1)");
}

} // namespace

Pruned magnitude_prune(const Network& net, double target_sparsity) {
    check_control_sparsity(target_sparsity);
    const auto scores = magnitude_scores(net);
    return prune_to_sparsity(net, scores, target_sparsity);
}

Pruned random_prune(const Network& net, double target_sparsity, std::uint64_t seed) {
    check_control_sparsity(target_sparsity);
    const auto scores = random_scores(net, seed);
    return prune_to_sparsity(net, scores, target_sparsity);
}

const char* to_string(BaselineMethod m) noexcept {
    switch (m) {
    case BaselineMethod::finetune: return "finetune";
    case BaselineMethod::svd: return "svd";
    case BaselineMethod::magnitude: return "magnitude";
    case BaselineMethod::random: return "random";
    }
    return "?";
}

BaselineMethod baseline_method_from_string(const std::string& name) {
    for (BaselineMethod m : {BaselineMethod::finetune, BaselineMethod::svd, BaselineMethod::magnitude,
                             BaselineMethod::random})
        if (name == to_string(m)) return m;
    fail(ErrorCode::invalid_argument, "unknown baseline '" + name + "'");
}

} // namespace fineprune
