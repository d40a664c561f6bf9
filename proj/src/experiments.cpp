#include "fineprune/experiments.hpp"

#include "fineprune/error.hpp"
#include "fineprune/ledger.hpp"
#include "fineprune/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

namespace fineprune {

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t {
    kMeans = 1,
    kInit,
    kSourceTrain,
    kSourceTest,
    kSourceData,
    kIndividual,
    kTargetData,
    kSplit,
    kRandomControl,
    kFinetune,
};

} // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    // splitmix64 finalizer over the pair
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Synthetic task
// ---------------------------------------------------------------------------

GaussianClusters::GaussianClusters(const SyntheticTaskConfig& config, std::uint64_t seed) : config_(config) {
    if (config.classes < 2) fail(ErrorCode::invalid_argument, "synthetic task needs at least 2 classes");
    if (config.dims == 0) fail(ErrorCode::invalid_argument, "synthetic task needs at least 1 dimension");
    if (!(config.separation > 0.0) || !(config.noise >= 0.0))
        fail(ErrorCode::invalid_argument, "separation must be positive and noise non-negative");
    if (config.support > config.dims) fail(ErrorCode::invalid_argument, "mean support exceeds the dimension");
    std::mt19937_64 rng(seed);
    means_.assign(config.classes, std::vector<double>(config.dims, 0.0));
    if (config.support == 0) {
        std::normal_distribution<double> gauss(0.0, config.separation / std::sqrt(static_cast<double>(config.dims)));
        for (auto& m : means_)
            for (double& v : m) v = gauss(rng);
        return;
    }
    std::vector<std::size_t> coords(config.dims);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    const double height = config.separation / std::sqrt(static_cast<double>(config.support));
    for (auto& m : means_) {
        std::shuffle(coords.begin(), coords.end(), rng);
        for (std::size_t k = 0; k < config.support; ++k) m[coords[k]] = height;
    }
}

Tensor GaussianClusters::draw(std::size_t cls, std::mt19937_64& rng) const {
    const std::vector<double>& m = means_.at(cls);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Tensor t(Shape{config_.dims});
    for (std::size_t d = 0; d < config_.dims; ++d) t[d] = static_cast<float>(m[d] + config_.noise * gauss(rng));
    return t;
}

LabeledDataset GaussianClusters::make(std::span<const std::size_t> classes, std::size_t per_class,
                                      std::mt19937_64& rng, Provenance provenance) const {
    LabeledDataset data(config_.classes, provenance);
    for (std::size_t i = 0; i < per_class; ++i)
        for (std::size_t c : classes) data.add(draw(c, rng), c);
    return data;
}

Tensor Individual::perturb(const Tensor& x) const {
    if (scale.empty()) return x;
    if (scale.size() != x.size()) fail(ErrorCode::dimension, "perturbation does not match the sample size");
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = scale[i] * x[i] + shift[i];
    return y;
}

Individual make_individual(std::size_t source_classes, std::size_t class_count, std::uint64_t seed,
                           double perturbation, std::size_t dims) {
    if (class_count == 0 || class_count > source_classes)
        fail(ErrorCode::invalid_argument, "individual needs between 1 and " + std::to_string(source_classes) +
                                              " classes, got " + std::to_string(class_count));
    if (perturbation < 0.0) fail(ErrorCode::invalid_argument, "perturbation must be non-negative");
    std::vector<std::size_t> order(source_classes);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    Individual who;
    who.classes.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(class_count));
    std::sort(who.classes.begin(), who.classes.end());
    if (perturbation > 0.0) {
        if (dims == 0) fail(ErrorCode::invalid_argument, "perturbation needs the input dimension");
        std::uniform_real_distribution<double> u(-perturbation, perturbation);
        for (std::size_t d = 0; d < dims; ++d) {
            who.scale.push_back(static_cast<float>(1.0 + u(rng)));
            who.shift.push_back(static_cast<float>(u(rng)));
        }
    }
    return who;
}

LabeledDataset make_target_data(const GaussianClusters& task, const Individual& who, std::size_t per_class,
                                std::uint64_t seed) {
    if (per_class == 0) fail(ErrorCode::invalid_argument, "target data needs at least one sample per class");
    std::mt19937_64 rng(seed);
    LabeledDataset raw = task.make(who.classes, per_class, rng, Provenance::target);
    if (who.scale.empty()) return raw;
    LabeledDataset out(raw.class_count(), Provenance::target);
    for (std::size_t i = 0; i < raw.size(); ++i) out.add(who.perturb(raw.input(i)), raw.label(i));
    return out;
}

// ---------------------------------------------------------------------------
// Split protocol
// ---------------------------------------------------------------------------

std::vector<FoldSplit> k_fold_splits(std::size_t sample_count, std::size_t folds, std::uint64_t seed) {
    if (folds < 2) fail(ErrorCode::invalid_argument, "need at least 2 folds");
    if (sample_count < folds)
        fail(ErrorCode::invalid_argument, "cannot split " + std::to_string(sample_count) + " samples into " +
                                              std::to_string(folds) + " folds");
    std::vector<std::size_t> perm(sample_count);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> fold_of(sample_count);
    for (std::size_t k = 0; k < sample_count; ++k) fold_of[perm[k]] = k % folds;

    std::vector<FoldSplit> splits(folds);
    // Partitions keep the shuffled order so prefix fractions are random subsets.
    for (std::size_t k = 0; k < sample_count; ++k) {
        const std::size_t idx = perm[k];
        for (std::size_t f = 0; f < folds; ++f) (fold_of[idx] == f ? splits[f].eval : splits[f].train).push_back(idx);
    }
    return splits;
}

// ---------------------------------------------------------------------------
// Source model
// ---------------------------------------------------------------------------

void validate(const ExperimentConfig& cfg) {
    if (cfg.task.classes < 3) fail(ErrorCode::invalid_argument, "source task needs at least 3 classes");
    if (cfg.target_classes < 1 || cfg.target_classes > cfg.task.classes)
        fail(ErrorCode::invalid_argument, "target classes must lie in [1, " + std::to_string(cfg.task.classes) + "]");
    if (cfg.folds < 2) fail(ErrorCode::invalid_argument, "need at least 2 folds");
    if (!(cfg.grid_step > 0.0 && cfg.grid_step <= 0.5))
        fail(ErrorCode::invalid_argument, "grid step must lie in (0, 0.5]");
    if (!(cfg.grid_start >= 0.0 && cfg.grid_start <= cfg.grid_stop && cfg.grid_stop <= 1.0))
        fail(ErrorCode::invalid_argument, "grid range must satisfy 0 <= start <= stop <= 1");
    if (cfg.task.source_per_class == 0 || cfg.task.target_per_class == 0)
        fail(ErrorCode::invalid_argument, "sample counts must be positive");
    if (cfg.task.target_per_class * cfg.target_classes < cfg.folds)
        fail(ErrorCode::invalid_argument, "fewer target samples than folds");
}

SourceModel train_source_model(const ExperimentConfig& cfg) {
    validate(cfg);
    GaussianClusters task(cfg.task, derive_seed(cfg.seed, kMeans));
    std::vector<std::size_t> all(cfg.task.classes);
    std::iota(all.begin(), all.end(), std::size_t{0});

    std::mt19937_64 data_rng(derive_seed(cfg.seed, kSourceData));
    const LabeledDataset train = task.make(all, cfg.task.source_per_class, data_rng, Provenance::source);

    std::vector<std::size_t> widths{cfg.task.dims};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(cfg.task.classes);
    Network net = Network::mlp(widths);
    net.init_he_uniform(derive_seed(cfg.seed, kInit));

    TrainConfig tc = cfg.source_training;
    tc.seed = derive_seed(cfg.seed, kSourceTrain);
    Network trained = finetune_backprop(net, train, tc).network;
    trained.set_seed(cfg.seed);

    std::mt19937_64 test_rng(derive_seed(cfg.seed, kSourceTest));
    const LabeledDataset test = task.make(all, std::max<std::size_t>(1, cfg.task.source_per_class / 2), test_rng,
                                          Provenance::source);
    const double acc = evaluate_accuracy(trained, test);
    return {std::move(task), std::move(trained), acc};
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

void ExperimentReport::append(std::span<const ReportRow> rows) { rows_.insert(rows_.end(), rows.begin(), rows.end()); }

std::string format_row(const ReportRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, ",%zu,%.4f,%.6f,%.6f,%llu,%llu,%llu", r.fold, r.sparsity, r.target_accuracy,
                  r.source_accuracy, static_cast<unsigned long long>(r.macs),
                  static_cast<unsigned long long>(r.memory_estimate), static_cast<unsigned long long>(r.seed));
    return r.experiment_id + "," + r.method + buf;
}

std::string ExperimentReport::to_csv() const {
    std::vector<const ReportRow*> order;
    for (const ReportRow& r : rows_) order.push_back(&r);
    std::stable_sort(order.begin(), order.end(), [](const ReportRow* a, const ReportRow* b) {
        return std::tie(a->experiment_id, a->method, a->fold, a->sparsity) <
               std::tie(b->experiment_id, b->method, b->fold, b->sparsity);
    });
    std::string out = std::string(kReportHeader) + "\n";
    for (const ReportRow* r : order) out += format_row(*r) + "\n";
    return out;
}

void ExperimentReport::write(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::io, "cannot open " + path.string() + " for writing");
    const std::string csv = to_csv();
    f.write(csv.data(), static_cast<std::streamsize>(csv.size()));
    if (!f) fail(ErrorCode::io, "write failed for " + path.string());
}

ExperimentReport ExperimentReport::read(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::io, "cannot open " + path.string());
    std::string line;
    if (!std::getline(f, line) || line != kReportHeader)
        fail(ErrorCode::parse, path.string() + ": missing or unexpected report header");
    ExperimentReport report;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (cells.size() != 9)
            fail(ErrorCode::parse, path.string() + ":" + std::to_string(lineno) + ": expected 9 columns");
        try {
            ReportRow r;
            r.experiment_id = cells[0];
            r.method = cells[1];
            r.fold = std::stoull(cells[2]);
            r.sparsity = std::stod(cells[3]);
            r.target_accuracy = std::stod(cells[4]);
            r.source_accuracy = std::stod(cells[5]);
            r.macs = std::stoull(cells[6]);
            r.memory_estimate = std::stoull(cells[7]);
            r.seed = std::stoull(cells[8]);
            report.append(std::move(r));
        } catch (const std::logic_error&) {
            fail(ErrorCode::parse, path.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

namespace {

struct FoldData {
    LabeledDataset train;
    LabeledDataset eval;
};

std::vector<FoldData> fold_data(const LabeledDataset& target, std::size_t folds, std::uint64_t seed) {
    std::vector<FoldData> out;
    for (const FoldSplit& s : k_fold_splits(target.size(), folds, seed))
        out.push_back({target.subset(s.train), target.subset(s.eval)});
    return out;
}

ActivationLedger record_ledger(const Network& net, const LabeledDataset& data) {
    ActivationLedger ledger(net);
    ledger.record_all(net, data.inputs()); // inputs only
    return ledger;
}

std::string fixed2(const char* key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s=%.2f", key, v);
    return buf;
}

std::uint64_t personalization_macs(const Network& net, std::size_t samples) {
    return count_macs(net, {0, 0, samples}).total();
}

std::uint64_t finetune_macs(const Network& net, std::size_t samples, std::size_t epochs) {
    const std::uint64_t n = std::uint64_t{samples} * epochs;
    return count_macs(net, {n, n, 0}).total();
}

} // namespace

SparsityCurveResult experiment_sparsity_curve(const ExperimentConfig& cfg) {
    return experiment_sparsity_curve(cfg, train_source_model(cfg));
}

SparsityCurveResult experiment_sparsity_curve(const ExperimentConfig& cfg, const SourceModel& source) {
    validate(cfg);
    SparsityCurveResult res;
    res.source_accuracy = source.source_accuracy;
    res.individual = make_individual(cfg.task.classes, cfg.target_classes, derive_seed(cfg.seed, kIndividual),
                                     cfg.perturbation, cfg.task.dims);
    res.grid = make_grid(cfg.grid_start, cfg.grid_stop, cfg.grid_step);
    const LabeledDataset target =
        make_target_data(source.task, res.individual, cfg.task.target_per_class, derive_seed(cfg.seed, kTargetData));
    const Network& net = source.network;
    const auto mag_scores = magnitude_scores(net);

    const auto folds = fold_data(target, cfg.folds, derive_seed(cfg.seed, kSplit));
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const FoldData& fd = folds[f];
        CurveFold cf;
        cf.baseline_accuracy = evaluate_accuracy(net, fd.eval);
        const ActivationLedger ledger = record_ledger(net, fd.train);
        cf.fine_prune = sweep(net, ledger, fd.eval, res.grid);
        cf.magnitude = sweep_scores(net, mag_scores, fd.eval, res.grid);
        const auto rnd_scores = random_scores(net, derive_seed(derive_seed(cfg.seed, kRandomControl), f));
        cf.random = sweep_scores(net, rnd_scores, fd.eval, res.grid);
        cf.magnitude_at_selected = cf.magnitude.points[cf.fine_prune.selected].accuracy;
        cf.random_at_selected = cf.random.points[cf.fine_prune.selected].accuracy;

        const std::uint64_t fp_macs = personalization_macs(net, fd.train.size());
        const std::uint64_t fp_mem = estimate_memory(MemoryMethod::fine_prune, fd.train.size(), net);
        auto emit = [&](const char* method, const SweepResult& r, std::uint64_t macs) {
            for (const SweepPoint& p : r.points)
                res.rows.push_back({"sparsity_curve", method, f, p.target_sparsity, p.accuracy, cf.baseline_accuracy,
                                    macs, fp_mem, cfg.seed});
        };
        emit("fine_prune", cf.fine_prune, fp_macs);
        emit("magnitude", cf.magnitude, 0);
        emit("random", cf.random, 0);
        res.folds.push_back(std::move(cf));
    }
    return res;
}

std::vector<double> default_fractions() { return make_grid(0.1, 1.0, 0.1); }

DataEfficiencyResult experiment_data_efficiency(const ExperimentConfig& cfg, std::span<const double> fractions) {
    return experiment_data_efficiency(cfg, train_source_model(cfg), fractions);
}

DataEfficiencyResult experiment_data_efficiency(const ExperimentConfig& cfg, const SourceModel& source,
                                                std::span<const double> fractions) {
    validate(cfg);
    if (fractions.empty()) fail(ErrorCode::empty_input, "no data fractions given");
    for (double fr : fractions)
        if (!(fr > 0.0 && fr <= 1.0))
            fail(ErrorCode::invalid_argument, "data fraction " + std::to_string(fr) + " outside (0, 1]");

    DataEfficiencyResult res;
    res.fractions.assign(fractions.begin(), fractions.end());
    const Individual who = make_individual(cfg.task.classes, cfg.target_classes, derive_seed(cfg.seed, kIndividual),
                                           cfg.perturbation, cfg.task.dims);
    const LabeledDataset target =
        make_target_data(source.task, who, cfg.task.target_per_class, derive_seed(cfg.seed, kTargetData));
    const Network& net = source.network;
    const auto grid = make_grid(cfg.grid_start, cfg.grid_stop, cfg.grid_step);

    const auto folds = fold_data(target, cfg.folds, derive_seed(cfg.seed, kSplit));
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const FoldData& fd = folds[f];
        DataEfficiencyFold out;
        out.baseline_accuracy = evaluate_accuracy(net, fd.eval);
        for (double fr : res.fractions) {
            const LabeledDataset part = fd.train.prefix_fraction(fr);
            const std::string id = "data_efficiency/" + fixed2("frac", fr);

            const SweepResult sw = sweep(net, record_ledger(net, part), fd.eval, grid);
            out.fine_prune.push_back(sw.selected_accuracy());
            res.rows.push_back({id, "fine_prune", f, sw.selected_sparsity(), sw.selected_accuracy(),
                                out.baseline_accuracy, personalization_macs(net, part.size()),
                                estimate_memory(MemoryMethod::fine_prune, part.size(), net), cfg.seed});

            TrainConfig tc = cfg.finetune;
            tc.seed = derive_seed(derive_seed(cfg.seed, kFinetune), f);
            const Network tuned = finetune_backprop(net, part, tc).network;
            out.finetune.push_back(evaluate_accuracy(tuned, fd.eval));
            res.rows.push_back({id, "finetune", f, 0.0, out.finetune.back(), out.baseline_accuracy,
                                finetune_macs(net, part.size(), tc.epochs),
                                estimate_memory(MemoryMethod::backprop, part.size(), net), cfg.seed});

            if (out.fine_prune_min_fraction == kNever && out.fine_prune.back() > out.baseline_accuracy)
                out.fine_prune_min_fraction = fr;
            if (out.finetune_min_fraction == kNever && out.finetune.back() > out.baseline_accuracy)
                out.finetune_min_fraction = fr;
        }
        res.folds.push_back(std::move(out));
    }
    return res;
}

ClassCountResult experiment_class_count(const ExperimentConfig& cfg) {
    return experiment_class_count(cfg, train_source_model(cfg));
}

ClassCountResult experiment_class_count(const ExperimentConfig& cfg, const SourceModel& source) {
    validate(cfg);
    ClassCountResult res;
    const Network& net = source.network;
    const auto grid = make_grid(cfg.grid_start, cfg.grid_stop, cfg.grid_step);
    for (std::size_t c = 2; c <= cfg.task.classes; ++c) {
        const Individual who =
            make_individual(cfg.task.classes, c, derive_seed(cfg.seed, kIndividual), cfg.perturbation, cfg.task.dims);
        const LabeledDataset target =
            make_target_data(source.task, who, cfg.task.target_per_class, derive_seed(cfg.seed, kTargetData + 100 * c));
        const std::string id = "class_count/classes=" + std::to_string(c);
        std::vector<double> gains, baselines;
        const auto folds = fold_data(target, cfg.folds, derive_seed(cfg.seed, kSplit));
        for (std::size_t f = 0; f < folds.size(); ++f) {
            const FoldData& fd = folds[f];
            const double base = evaluate_accuracy(net, fd.eval);
            const SweepResult sw = sweep(net, record_ledger(net, fd.train), fd.eval, grid);
            baselines.push_back(base);
            gains.push_back(sw.selected_accuracy() - base);
            res.rows.push_back({id, "fine_prune", f, sw.selected_sparsity(), sw.selected_accuracy(), base,
                                personalization_macs(net, fd.train.size()),
                                estimate_memory(MemoryMethod::fine_prune, fd.train.size(), net), cfg.seed});
        }
        res.class_counts.push_back(c);
        res.mean_gains.push_back(std::accumulate(gains.begin(), gains.end(), 0.0) / static_cast<double>(gains.size()));
        res.gains.push_back(std::move(gains));
        res.baselines.push_back(std::move(baselines));
    }
    std::vector<double> counts(res.class_counts.begin(), res.class_counts.end());
    res.spearman = spearman(counts, res.mean_gains);
    return res;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
        for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = r;
        i = j;
    }
    return ranks;
}

} // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) fail(ErrorCode::dimension, "spearman: series lengths differ");
    if (x.size() < 2) fail(ErrorCode::empty_input, "spearman needs at least two points");
    const auto rx = average_ranks(x), ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mean = (n + 1.0) / 2.0;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mean) * (ry[i] - mean);
        sxx += (rx[i] - mean) * (rx[i] - mean);
        syy += (ry[i] - mean) * (ry[i] - mean);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

} // namespace fineprune
