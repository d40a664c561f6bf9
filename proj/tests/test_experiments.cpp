#include "fineprune/experiments.hpp"
#include "fineprune/metrics.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace fineprune;
using testutil::code_of;

namespace {

ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.task.classes = 4;
    cfg.task.dims = 8;
    cfg.task.support = 4;
    cfg.task.source_per_class = 60;
    cfg.task.target_per_class = 40;
    cfg.hidden = {16};
    cfg.source_training.epochs = 3;
    cfg.finetune.epochs = 2;
    cfg.folds = 2;
    cfg.grid_step = 0.1;
    cfg.seed = 3;
    return cfg;
}

// Average ranks, then Pearson correlation of the ranks.
double spearman_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            double less = 0, equal = 0;
            for (double w : v) {
                less += w < v[i] ? 1 : 0;
                equal += w == v[i] ? 1 : 0;
            }
            r[i] = less + (equal + 1) / 2.0;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += rx[i] / n, my += ry[i] / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

} // namespace

TEST(Seeds, StreamsAreDistinctAndStable) {
    EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
    EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
    EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}

TEST(Folds, EvalPartitionsCoverEveryIndexOnce) {
    const auto splits = k_fold_splits(23, 5, 9);
    ASSERT_EQ(splits.size(), 5u);
    std::vector<int> seen(23, 0);
    for (const auto& f : splits) {
        EXPECT_EQ(f.train.size() + f.eval.size(), 23u);
        EXPECT_GE(f.eval.size(), 4u);
        EXPECT_LE(f.eval.size(), 5u);
        std::set<std::size_t> train(f.train.begin(), f.train.end());
        for (std::size_t i : f.eval) {
            ++seen[i];
            EXPECT_EQ(train.count(i), 0u);
        }
    }
    for (int c : seen) EXPECT_EQ(c, 1);
    EXPECT_EQ(code_of([] { k_fold_splits(3, 5, 1); }), ErrorCode::invalid_argument);
    EXPECT_EQ(code_of([] { k_fold_splits(10, 1, 1); }), ErrorCode::invalid_argument);
}

TEST(Individuals, NestAsClassCountGrows) {
    for (std::size_t c = 2; c < 8; ++c) {
        const Individual small = make_individual(8, c, 5), large = make_individual(8, c + 1, 5);
        EXPECT_TRUE(std::includes(large.classes.begin(), large.classes.end(), small.classes.begin(), small.classes.end()));
    }
    EXPECT_EQ(make_individual(8, 8, 5).classes.size(), 8u);
    EXPECT_EQ(code_of([] { make_individual(8, 9, 1); }), ErrorCode::invalid_argument);
}

TEST(Individuals, PerturbationIsAffine) {
    const Individual who = make_individual(4, 2, 7, 0.2, 3);
    ASSERT_EQ(who.scale.size(), 3u);
    const Tensor y = who.perturb(Tensor::vector({1, 0, -1}));
    EXPECT_FLOAT_EQ(y[0], who.scale[0] + who.shift[0]);
    EXPECT_FLOAT_EQ(y[1], who.shift[1]);
    const Tensor same = make_individual(4, 2, 7).perturb(Tensor::vector({1, 0, -1}));
    EXPECT_TRUE(same == Tensor::vector({1, 0, -1}));
}

TEST(TargetData, LabelsComeFromTheIndividual) {
    const ExperimentConfig cfg = tiny_config();
    const GaussianClusters task(cfg.task, 1);
    const Individual who = make_individual(4, 2, 2);
    const LabeledDataset d = make_target_data(task, who, 10, 3);
    EXPECT_EQ(d.size(), 20u);
    for (std::size_t i = 0; i < d.size(); ++i)
        EXPECT_TRUE(std::find(who.classes.begin(), who.classes.end(), d.label(i)) != who.classes.end());
}

TEST(Spearman, MatchesRankOracle) {
    EXPECT_DOUBLE_EQ(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{4, 3, 2, 1}), -1.0);
    EXPECT_EQ(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{5, 5, 5}), 0.0);
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> v(0, 5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x, y;
        for (int i = 0; i < 9; ++i) x.push_back(v(rng)), y.push_back(v(rng));
        if (std::adjacent_find(x.begin(), x.end(), std::not_equal_to<>()) == x.end()) continue;
        if (std::adjacent_find(y.begin(), y.end(), std::not_equal_to<>()) == y.end()) continue;
        EXPECT_NEAR(spearman(x, y), spearman_oracle(x, y), 1e-12);
    }
}

TEST(Report, HeaderAndStableSortedRows) {
    ExperimentReport r;
    r.append(ReportRow{"b", "random", 0, 0.5, 0.7, 0.9, 0, 10, 1});
    r.append(ReportRow{"a", "magnitude", 1, 0.2, 0.6, 0.9, 0, 10, 1});
    r.append(ReportRow{"a", "fine_prune", 1, 0.4, 0.8, 0.9, 100, 10, 1});
    r.append(ReportRow{"a", "fine_prune", 0, 0.4, 0.8, 0.9, 100, 10, 1});
    r.append(ReportRow{"a", "fine_prune", 0, 0.1, 0.8, 0.9, 100, 10, 1});
    const std::string csv = r.to_csv();
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        const std::size_t nl = csv.find('\n', pos);
        lines.push_back(csv.substr(pos, nl - pos));
        pos = nl + 1;
    }
    ASSERT_EQ(lines.size(), 6u);
    EXPECT_EQ(lines[0], kReportHeader);
    EXPECT_EQ(lines[1], "a,fine_prune,0,0.1000,0.800000,0.900000,100,10,1");
    EXPECT_EQ(lines[2].substr(0, 18), "a,fine_prune,0,0.4");
    EXPECT_EQ(lines[3].substr(0, 14), "a,fine_prune,1");
    EXPECT_EQ(lines[4].substr(0, 11), "a,magnitude");
    EXPECT_EQ(lines[5].substr(0, 8), "b,random");
}

TEST(Report, WriteReadRoundTrip) {
    ExperimentReport r;
    r.append(ReportRow{"class_count/classes=3", "fine_prune", 2, 0.25, 0.8125, 0.9, 123456789, 4096, 7});
    r.append(ReportRow{"sparsity_curve", "random", 0, 0.5, 0.5, 0.875, 0, 4096, 7});
    const auto path = testutil::scratch_dir() / "report.csv";
    r.write(path);
    const ExperimentReport back = ExperimentReport::read(path);
    EXPECT_EQ(back.to_csv(), r.to_csv());
    EXPECT_EQ(back.rows().size(), 2u);
    EXPECT_EQ(code_of([&] { ExperimentReport::read(path.parent_path() / "missing.csv"); }), ErrorCode::io);
}

TEST(Config, ValidationRejectsNonsense) {
    ExperimentConfig cfg = tiny_config();
    cfg.folds = 1;
    EXPECT_EQ(code_of([&] { validate(cfg); }), ErrorCode::invalid_argument);
    cfg = tiny_config();
    cfg.target_classes = 9;
    EXPECT_EQ(code_of([&] { validate(cfg); }), ErrorCode::invalid_argument);
    cfg = tiny_config();
    cfg.grid_step = 0.0;
    EXPECT_EQ(code_of([&] { validate(cfg); }), ErrorCode::invalid_argument);
}

class TinyExperiments : public ::testing::Test {
protected:
    static void SetUpTestSuite() { source_ = new SourceModel(train_source_model(tiny_config())); }
    static void TearDownTestSuite() {
        delete source_;
        source_ = nullptr;
    }
    static SourceModel* source_;
};
SourceModel* TinyExperiments::source_ = nullptr;

TEST_F(TinyExperiments, SparsityCurveIsDeterministicAndStartsAtBaseline) {
    const ExperimentConfig cfg = tiny_config();
    const SparsityCurveResult a = experiment_sparsity_curve(cfg, *source_);
    const SparsityCurveResult b = experiment_sparsity_curve(cfg, *source_);
    ExperimentReport ra, rb;
    ra.append(a.rows);
    rb.append(b.rows);
    EXPECT_EQ(ra.to_csv(), rb.to_csv());
    ASSERT_EQ(a.folds.size(), 2u);
    for (const auto& f : a.folds) {
        EXPECT_EQ(f.fine_prune.points.front().target_sparsity, 0.0);
        EXPECT_DOUBLE_EQ(f.fine_prune.points.front().accuracy, f.baseline_accuracy);
        EXPECT_GE(f.fine_prune.selected_accuracy(), f.baseline_accuracy);
    }
}

TEST_F(TinyExperiments, DataEfficiencyRejectsZeroFraction) {
    const ExperimentConfig cfg = tiny_config();
    EXPECT_EQ(code_of([&] { experiment_data_efficiency(cfg, *source_, std::vector<double>{0.0, 0.5}); }),
              ErrorCode::invalid_argument);
    const std::vector<double> fr{0.5, 1.0};
    const DataEfficiencyResult r = experiment_data_efficiency(cfg, *source_, fr);
    ASSERT_EQ(r.folds.size(), 2u);
    for (const auto& f : r.folds) {
        EXPECT_EQ(f.fine_prune.size(), 2u);
        EXPECT_EQ(f.finetune.size(), 2u);
        if (f.fine_prune_min_fraction != kNever) EXPECT_GT(f.fine_prune.front() + f.fine_prune.back(), 0.0);
    }
}

TEST_F(TinyExperiments, ClassCountCoversTwoToAll) {
    const ClassCountResult r = experiment_class_count(tiny_config(), *source_);
    EXPECT_EQ(r.class_counts, (std::vector<std::size_t>{2, 3, 4}));
    ASSERT_EQ(r.mean_gains.size(), 3u);
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0;
        for (double g : r.gains[c]) {
            EXPECT_GE(g, 0.0); // sparsity 0 is on the grid
            mean += g / double(r.gains[c].size());
        }
        EXPECT_NEAR(r.mean_gains[c], mean, 1e-12);
    }
    std::vector<double> x(r.class_counts.begin(), r.class_counts.end());
    EXPECT_DOUBLE_EQ(r.spearman, spearman(x, r.mean_gains));
}
