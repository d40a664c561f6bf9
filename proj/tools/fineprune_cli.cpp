// Command-line front end. Exit codes: 0 success, 2 validation error,
// 3 I/O or file-format error.

#include "fineprune/audio.hpp"
#include "fineprune/baselines.hpp"
#include "fineprune/dataset.hpp"
#include "fineprune/error.hpp"
#include "fineprune/experiments.hpp"
#include "fineprune/ledger.hpp"
#include "fineprune/metrics.hpp"
#include "fineprune/model_io.hpp"
#include "fineprune/prune.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace fineprune;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

// Anything about reading or decoding an external file counts as I/O.
bool is_io_class(ErrorCode c) {
    switch (c) {
    case ErrorCode::io:
    case ErrorCode::truncated_blob:
    case ErrorCode::version_mismatch:
    case ErrorCode::offset_overlap:
    case ErrorCode::bad_magic:
    case ErrorCode::count_mismatch:
    case ErrorCode::unsupported_format:
    case ErrorCode::parse:
        return true;
    default:
        return false;
    }
}

struct GridSpec {
    double start = 0.0, stop = 1.0, step = 0.02;
};

GridSpec parse_grid(const std::string& text) {
    GridSpec g;
    char c1 = 0, c2 = 0;
    std::istringstream in(text);
    if (!(in >> g.start >> c1 >> g.stop >> c2 >> g.step) || c1 != ':' || c2 != ':' || !(in >> std::ws).eof())
        fail(ErrorCode::invalid_argument, "grid must look like start:stop:step, got '" + text + "'");
    return g;
}

// CSV file, spoken-digit directory, or IDX images with --labels.
LabeledDataset load_data(const std::string& path, const std::string& labels) {
    if (fs::is_directory(path)) return load_spoken_digits(path);
    if (!labels.empty()) return load_idx_images(path, labels);
    if (fs::path(path).extension() == ".csv") return load_csv(path);
    fail(ErrorCode::invalid_argument, "cannot tell the format of '" + path + "' (use .csv, a directory, or --labels)");
}

Network build_classifier(const Shape& input, const std::vector<std::size_t>& hidden, std::size_t classes) {
    std::vector<LayerSpec> layers;
    std::size_t width = input.numel();
    if (input.rank() > 1) layers.push_back(LayerSpec::flatten());
    for (std::size_t h : hidden) {
        layers.push_back(LayerSpec::dense(width, h));
        layers.push_back(LayerSpec::relu_layer());
        width = h;
    }
    layers.push_back(LayerSpec::dense(width, classes));
    return Network(input, std::move(layers));
}

ActivationLedger record_ledger(const Network& net, const LabeledDataset& data) {
    ActivationLedger ledger(net);
    ledger.record_all(net, data.inputs());
    return ledger;
}

void write_text(const std::string& path, const std::string& text) {
    const std::vector<std::uint8_t> bytes(text.begin(), text.end());
    write_file_bytes(path, bytes);
}

void emit_sweep_rows(ExperimentReport& report, const char* id, const Network& net, const SweepResult& r,
                     std::size_t fold, std::size_t train_size, double baseline, std::uint64_t seed) {
    const std::uint64_t macs = record_macs(net) * train_size;
    const std::uint64_t mem = estimate_memory(MemoryMethod::fine_prune, train_size, net);
    for (const SweepPoint& p : r.points)
        report.append(ReportRow{id, "fine_prune", fold, p.target_sparsity, p.accuracy, baseline, macs, mem, seed});
}

void print_selection(std::size_t fold, double baseline, const SweepResult& r) {
    std::printf("fold %zu: baseline %.4f, selected sparsity %.2f, accuracy %.4f\n", fold, baseline,
                r.selected_sparsity(), r.selected_accuracy());
}

// Shared by sweep and ramp: with --eval the ledger sees all of --data;
// otherwise --data is split into folds and each eval partition is scored.
template <class Search>
int run_search(const char* id, const std::string& model_path, const std::string& data_path,
               const std::string& labels_path, const std::string& eval_path, std::size_t folds,
               std::uint64_t seed, const std::string& out_csv, const std::string& out_model, Search search) {
    const Network net = load_model(model_path);
    const LabeledDataset data = load_data(data_path, labels_path);
    ExperimentReport report;
    if (!eval_path.empty()) {
        const LabeledDataset eval = load_data(eval_path, "");
        const SweepResult r = search(net, record_ledger(net, data), eval);
        const double base = evaluate_accuracy(net, eval);
        print_selection(0, base, r);
        emit_sweep_rows(report, id, net, r, 0, data.size(), base, seed);
        if (!out_model.empty()) {
            Network chosen = net;
            chosen.set_mask(r.selected_mask);
            save_model(chosen, out_model);
        }
    } else {
        if (!out_model.empty()) fail(ErrorCode::invalid_argument, "--out-model needs --eval");
        const auto splits = k_fold_splits(data.size(), folds, seed);
        for (std::size_t f = 0; f < splits.size(); ++f) {
            const LabeledDataset train = data.subset(splits[f].train);
            const LabeledDataset eval = data.subset(splits[f].eval);
            const SweepResult r = search(net, record_ledger(net, train), eval);
            const double base = evaluate_accuracy(net, eval);
            print_selection(f, base, r);
            emit_sweep_rows(report, id, net, r, f, train.size(), base, seed);
        }
    }
    if (!out_csv.empty()) report.write(out_csv);
    return 0;
}

void summarize(const ExperimentReport& report) {
    // Per (experiment, method): fold count, mean best accuracy and the mean
    // sparsity at which it is first reached.
    struct Best {
        double accuracy = -1.0, sparsity = 0.0;
    };
    std::map<std::pair<std::string, std::string>, std::map<std::size_t, Best>> groups;
    for (const ReportRow& r : report.rows()) {
        Best& b = groups[{r.experiment_id, r.method}][r.fold];
        if (r.target_accuracy > b.accuracy || (r.target_accuracy == b.accuracy && r.sparsity < b.sparsity))
            b = {r.target_accuracy, r.sparsity};
    }
    std::printf("%-32s %-12s %5s %10s %10s\n", "experiment_id", "method", "folds", "best_acc", "at_sparsity");
    for (const auto& [key, folds] : groups) {
        double acc = 0.0, sp = 0.0;
        for (const auto& [fold, b] : folds) {
            acc += b.accuracy / double(folds.size());
            sp += b.sparsity / double(folds.size());
        }
        std::printf("%-32s %-12s %5zu %10.4f %10.2f\n", key.first.c_str(), key.second.c_str(), folds.size(), acc, sp);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Label-free personalization of trained networks by activation-driven structured pruning"};
    app.require_subcommand(1);

    std::string model, data, labels, eval, out, out_model, grid_text, kind, method;
    std::uint64_t seed = 1;
    std::size_t folds = 5;

    // train-source
    ExperimentConfig xcfg;
    std::string target_out;
    auto* train = app.add_subcommand("train-source", "Train a source model (synthetic task unless --data is given)");
    train->add_option("--out", out, "Model output path")->required();
    train->add_option("--data", data, "Labeled source data (CSV, IDX images, or spoken-digit directory)");
    train->add_option("--labels", labels, "IDX label file for --data");
    train->add_option("--seed", seed, "Seed");
    train->add_option("--hidden", xcfg.hidden, "Hidden layer widths")->expected(1, -1);
    train->add_option("--epochs", xcfg.source_training.epochs, "Training epochs");
    train->add_option("--lr", xcfg.source_training.learning_rate, "Adam learning rate");
    train->add_option("--target-classes", xcfg.target_classes, "Classes held by the synthetic individual");
    train->add_option("--perturbation", xcfg.perturbation, "Affine input shift of the synthetic individual");
    train->add_option("--target-out", target_out, "Also write the synthetic individual's data as CSV");

    // record
    auto* record = app.add_subcommand("record", "Accumulate the activation ledger over unlabeled data");
    record->add_option("--model", model, "Model path")->required();
    record->add_option("--data", data, "Target data; labels are ignored")->required();
    record->add_option("--labels", labels, "IDX label file for --data");
    record->add_option("--out", out, "Ledger CSV (layer_index,unit_index,score)")->required();

    // prune
    std::optional<double> sigma, sparsity;
    auto* prune_cmd = app.add_subcommand("prune", "Drop units whose ledger score is below a threshold");
    prune_cmd->add_option("--model", model, "Model path")->required();
    prune_cmd->add_option("--data", data, "Target data; labels are ignored")->required();
    prune_cmd->add_option("--labels", labels, "IDX label file for --data");
    auto* sigma_opt = prune_cmd->add_option("--sigma", sigma, "Score threshold");
    auto* sparsity_opt = prune_cmd->add_option("--sparsity", sparsity, "Target sparsity in [0, 1]");
    sigma_opt->excludes(sparsity_opt);
    prune_cmd->add_option("--out", out, "Pruned model path")->required();

    // sweep and ramp
    double ramp_step = 0.05;
    auto* sweep_cmd = app.add_subcommand("sweep", "Prune over a sparsity grid and keep the most accurate point");
    auto* ramp_cmd = app.add_subcommand("ramp", "Raise sparsity until accuracy first drops");
    for (auto* cmd : {sweep_cmd, ramp_cmd}) {
        cmd->add_option("--model", model, "Model path")->required();
        cmd->add_option("--data", data, "Target data (ledger; split into folds without --eval)")->required();
        cmd->add_option("--labels", labels, "IDX label file for --data");
        cmd->add_option("--eval", eval, "Labeled evaluation CSV");
        cmd->add_option("--folds", folds, "Folds when --eval is absent");
        cmd->add_option("--seed", seed, "Split seed");
        cmd->add_option("--out", out, "Report CSV");
        cmd->add_option("--out-model", out_model, "Save the selected model (needs --eval)");
    }
    sweep_cmd->add_option("--grid", grid_text, "start:stop:step")->default_str("0:0.95:0.05");
    ramp_cmd->add_option("--step", ramp_step, "Sparsity increment in (0, 0.1]");

    // baseline
    BaselineConfig bcfg;
    auto* base_cmd = app.add_subcommand("baseline", "Run a comparison method on a source model");
    base_cmd->add_option("method", method, "finetune | svd | magnitude | random")
        ->required()
        ->check(CLI::IsMember({"finetune", "svd", "magnitude", "random"}));
    base_cmd->add_option("--model", model, "Model path")->required();
    base_cmd->add_option("--data", data, "Labeled training data (finetune only)");
    base_cmd->add_option("--labels", labels, "IDX label file for --data");
    base_cmd->add_option("--eval", eval, "Labeled evaluation CSV");
    base_cmd->add_option("--out", out, "Output model path")->required();
    base_cmd->add_option("--seed", seed, "Seed (shuffling or random scores)");
    base_cmd->add_option("--epochs", bcfg.finetune.epochs, "Fine-tuning epochs");
    base_cmd->add_option("--lr", bcfg.finetune.learning_rate, "Fine-tuning learning rate");
    base_cmd->add_option("--batch", bcfg.finetune.batch_size, "Fine-tuning batch size");
    base_cmd->add_option("--rank-fraction", bcfg.rank_fraction, "SVD rank fraction in (0, 1]");
    base_cmd->add_option("--sparsity", bcfg.target_sparsity, "Magnitude/random target sparsity in [0, 1)");

    // experiment
    ExperimentConfig ecfg;
    std::size_t source_epochs = ecfg.source_training.epochs;
    auto* exp_cmd = app.add_subcommand("experiment", "Run a cross-validated study on the synthetic task");
    exp_cmd->add_option("kind", kind, "sparsity | data-efficiency | class-count")
        ->required()
        ->check(CLI::IsMember({"sparsity", "data-efficiency", "class-count"}));
    exp_cmd->add_option("--seed", seed, "Seed");
    exp_cmd->add_option("--folds", folds, "Folds");
    exp_cmd->add_option("--grid", grid_text, "start:stop:step")->default_str("0:1:0.02");
    exp_cmd->add_option("--target-classes", ecfg.target_classes, "Classes held by the individual");
    exp_cmd->add_option("--perturbation", ecfg.perturbation, "Affine input shift of the individual");
    exp_cmd->add_option("--epochs", source_epochs, "Source training epochs");
    exp_cmd->add_option("--out", out, "Report CSV")->required();

    // report
    std::vector<std::string> inputs;
    auto* report_cmd = app.add_subcommand("report", "Merge report CSVs and print a per-method summary");
    report_cmd->add_option("--in", inputs, "Report CSVs")->required()->expected(1, -1);
    report_cmd->add_option("--out", out, "Merged, sorted CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*train) {
            if (data.empty()) {
                xcfg.seed = seed;
                const SourceModel src = train_source_model(xcfg);
                save_model(src.network, out);
                std::printf("source accuracy %.4f\n", src.source_accuracy);
                if (!target_out.empty()) {
                    const Individual who = make_individual(xcfg.task.classes, xcfg.target_classes, seed,
                                                           xcfg.perturbation, xcfg.task.dims);
                    save_csv(make_target_data(src.task, who, xcfg.task.target_per_class, seed), target_out);
                }
            } else {
                if (!target_out.empty()) fail(ErrorCode::invalid_argument, "--target-out needs the synthetic task");
                const LabeledDataset src = load_data(data, labels);
                if (src.empty()) fail(ErrorCode::empty_input, "no training samples");
                Network net = build_classifier(src.input(0).shape(), xcfg.hidden, src.class_count());
                net.init_he_uniform(seed);
                TrainConfig tc = xcfg.source_training;
                tc.seed = seed;
                const FinetuneResult r = finetune_backprop(net, src, tc);
                save_model(r.network, out);
                std::printf("training accuracy %.4f\n", evaluate_accuracy(r.network, src));
            }
        } else if (*record) {
            const Network net = load_model(model);
            const ActivationLedger ledger = record_ledger(net, load_data(data, labels));
            export_ledger_csv(ledger, out);
            std::printf("recorded %llu samples into %zu accumulators\n",
                        static_cast<unsigned long long>(ledger.sample_count()), ledger.accumulator_count());
        } else if (*prune_cmd) {
            if (!sigma && !sparsity) fail(ErrorCode::invalid_argument, "give --sigma or --sparsity");
            const Network net = load_model(model);
            const ActivationLedger ledger = record_ledger(net, load_data(data, labels));
            const double s = sigma ? *sigma : threshold_for_sparsity(net, ledger.scores(), *sparsity);
            const Pruned p = prune(s, net, ledger);
            save_model(p.network, out);
            std::printf("dropped %zu units, sparsity %.4f\n", p.mask.dropped_units(), sparsity_of(p.network).fraction());
        } else if (*sweep_cmd) {
            const GridSpec g = parse_grid(grid_text.empty() ? "0:0.95:0.05" : grid_text);
            const auto grid = make_grid(g.start, g.stop, g.step);
            return run_search("sweep", model, data, labels, eval, folds, seed, out, out_model,
                              [&](const Network& n, const ActivationLedger& l, const LabeledDataset& e) {
                                  return sweep(n, l, e, grid);
                              });
        } else if (*ramp_cmd) {
            return run_search("ramp", model, data, labels, eval, folds, seed, out, out_model,
                              [&](const Network& n, const ActivationLedger& l, const LabeledDataset& e) {
                                  return safe_ramp(n, l, e, ramp_step);
                              });
        } else if (*base_cmd) {
            const Network net = load_model(model);
            Network result;
            switch (baseline_method_from_string(method)) {
            case BaselineMethod::finetune: {
                if (data.empty()) fail(ErrorCode::invalid_argument, "finetune needs labeled --data");
                bcfg.finetune.seed = seed;
                result = finetune_backprop(net, load_data(data, labels), bcfg.finetune).network;
                break;
            }
            case BaselineMethod::svd: {
                SvdCompressed c = svd_compress(net, bcfg.rank_fraction);
                for (const auto& w : c.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
                result = std::move(c.network);
                break;
            }
            case BaselineMethod::magnitude:
                result = magnitude_prune(net, bcfg.target_sparsity).network;
                break;
            case BaselineMethod::random:
                result = random_prune(net, bcfg.target_sparsity, seed).network;
                break;
            }
            save_model(result, out);
            if (!eval.empty())
                std::printf("%s accuracy %.4f (source %.4f)\n", method.c_str(),
                            evaluate_accuracy(result, load_data(eval, "")),
                            evaluate_accuracy(net, load_data(eval, "")));
        } else if (*exp_cmd) {
            const GridSpec g = parse_grid(grid_text.empty() ? "0:1:0.02" : grid_text);
            ecfg.grid_start = g.start;
            ecfg.grid_stop = g.stop;
            ecfg.grid_step = g.step;
            ecfg.seed = seed;
            ecfg.folds = folds;
            ecfg.source_training.epochs = source_epochs;
            ExperimentReport report;
            if (kind == "sparsity") {
                const auto r = experiment_sparsity_curve(ecfg);
                report.append(r.rows);
                for (std::size_t f = 0; f < r.folds.size(); ++f)
                    print_selection(f, r.folds[f].baseline_accuracy, r.folds[f].fine_prune);
            } else if (kind == "data-efficiency") {
                const auto r = experiment_data_efficiency(ecfg, default_fractions());
                report.append(r.rows);
                for (std::size_t f = 0; f < r.folds.size(); ++f)
                    std::printf("fold %zu: min fraction fine_prune %.1f, finetune %.1f\n", f,
                                r.folds[f].fine_prune_min_fraction, r.folds[f].finetune_min_fraction);
            } else {
                const auto r = experiment_class_count(ecfg);
                report.append(r.rows);
                for (std::size_t c = 0; c < r.class_counts.size(); ++c)
                    std::printf("classes %zu: mean gain %.4f\n", r.class_counts[c], r.mean_gains[c]);
                std::printf("spearman %.4f\n", r.spearman);
            }
            report.write(out);
        } else if (*report_cmd) {
            ExperimentReport merged;
            for (const auto& path : inputs) merged.append(ExperimentReport::read(path).rows());
            summarize(merged);
            if (!out.empty()) write_text(out, merged.to_csv());
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return is_io_class(e.code()) ? kExitIo : kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
