// solvuln: command-line entry point for the contract vulnerability pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "solvuln/corpus.hpp"
#include "solvuln/evaluation.hpp"
#include "solvuln/hash.hpp"
#include "solvuln/pipeline.hpp"
#include "solvuln/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace solvuln;

namespace {

enum Exit : int { kOk = 0, kInputError = 2, kMismatch = 3, kTrainingFailure = 4 };

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string format = "human";

    bool structured() const { return format == "structured"; }
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "Run configuration file (JSON)");
    cmd->add_option("--seed", c.seed, "Seed override");
    cmd->add_option("--out", c.out, "Output location");
    cmd->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"human", "structured"}));
}

int fail(const std::string& stage, const std::exception& e, int code) {
    std::cerr << "solvuln " << stage << ": " << e.what() << "\n";
    return code;
}

RunConfig config_or_default(const Common& c) { return c.config.empty() ? RunConfig{} : load_run_config(c.config); }

int cmd_ingest(const Common& c, const std::string& dataset_arg) {
    try {
        RunConfig cfg = config_or_default(c);
        if (!dataset_arg.empty()) cfg.dataset = dataset_arg;
        if (c.seed) cfg.synthetic.seed = *c.seed;
        const bool synthetic = cfg.dataset == kSyntheticDataset;
        const Corpus corpus = load_dataset(cfg.dataset, cfg.synthetic);
        const IngestSummary summary = summarize(corpus, cfg.dataset, synthetic);
        if (!c.out.empty()) write_file(fs::path(c.out) / "ingest_summary.json", summary_to_json(summary).dump(2) + "\n");
        std::cout << (c.structured() ? summary_to_json(summary).dump() + "\n" : format_summary(summary));
        return kOk;
    } catch (const std::exception& e) {
        return fail("ingest", e, kInputError);
    }
}

int cmd_synth(const Common& c, double label_noise) {
    try {
        if (c.out.empty()) throw Error(ErrorKind::InvalidArgument, "--out <file.csv> is required");
        SyntheticOptions opts;
        if (c.seed) opts.seed = *c.seed;
        opts.label_noise = label_noise;
        const Corpus corpus = generate_synthetic_corpus(opts);
        save_corpus(corpus, c.out);
        std::cout << format_summary(summarize(corpus, c.out, true));
        return kOk;
    } catch (const std::exception& e) {
        return fail("synth", e, kInputError);
    }
}

int cmd_split(const Common& c, const std::string& dataset_arg) {
    try {
        RunConfig cfg = config_or_default(c);
        if (!dataset_arg.empty()) cfg.dataset = dataset_arg;
        if (c.seed) cfg.split_seed = *c.seed;
        const Corpus corpus = load_dataset(cfg.dataset, cfg.synthetic);
        const DatasetSplit split = stratified_split(corpus, cfg.ratios, cfg.split_seed);
        if (!c.out.empty()) save_split_manifest(split, c.out);

        json sizes = json::object();
        for (const auto& [name, part] : {std::pair{"train", &split.train}, {"val", &split.val}, {"test", &split.test}}) {
            json counts = json::object();
            for (Label l : kAllLabels) counts[std::string(to_string(l))] = part->count(l);
            sizes[name] = {{"total", part->size()}, {"class_counts", counts}};
        }
        if (c.structured()) {
            std::cout << json{{"schema", "solvuln.split_summary/v1"},
                              {"seed", cfg.split_seed},
                              {"split_hash", split_hash(split)},
                              {"partitions", sizes}}
                             .dump()
                      << "\n";
        } else {
            std::cout << "partition    DD    IO    RE    TD  total\n";
            for (const char* name : {"train", "val", "test"}) {
                const auto& s = sizes[name];
                std::printf("%-9s %5d %5d %5d %5d %6d\n", name, s["class_counts"]["DD"].get<int>(),
                            s["class_counts"]["IO"].get<int>(), s["class_counts"]["RE"].get<int>(),
                            s["class_counts"]["TD"].get<int>(), s["total"].get<int>());
            }
            std::cout << "split hash: " << split_hash(split) << "\n";
        }
        return kOk;
    } catch (const std::exception& e) {
        return fail("split", e, kInputError);
    }
}

int cmd_train(const Common& c, std::optional<int> epochs) {
    RunConfig cfg;
    fs::path run_dir;
    try {
        if (c.config.empty()) throw Error(ErrorKind::InvalidArgument, "--config is required");
        cfg = load_run_config(c.config);
        if (c.seed) {
            cfg.train.seed = *c.seed;
            cfg.model.seed = *c.seed;
        }
        if (epochs) cfg.train.epochs = *epochs;
        validate(cfg.model);
        validate(cfg.train);
        run_dir = c.out.empty() ? fs::path(cfg.output_dir) / cfg.name : fs::path(c.out);
    } catch (const std::exception& e) {
        return fail("train (config)", e, kInputError);
    }

    try {
        const RunResult result = run_training(cfg, run_dir);
        if (c.structured()) {
            std::cout << json{{"run_dir", result.run_dir.string()},
                              {"epochs", result.run.history.size()},
                              {"best_epoch", result.run.best_epoch},
                              {"report", report_to_json(result.report)}}
                             .dump()
                      << "\n";
        } else {
            for (const auto& e : result.run.history) {
                std::printf("epoch %3d  loss %.4f  acc %.4f  val_loss %.4f  val_acc %.4f  (%.1fs)\n", e.epoch,
                            e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy, e.seconds);
            }
            std::cout << format_report_table(result.report, cfg.name) << "run directory: " << result.run_dir.string()
                      << "\n";
        }
        return kOk;
    } catch (const Error& e) {
        switch (e.kind()) {
            case ErrorKind::IOError:
            case ErrorKind::MissingData:
            case ErrorKind::SchemaError:
            case ErrorKind::LabelError:
            case ErrorKind::EncodingMismatch:
            case ErrorKind::DegenerateClass:
                return fail("train (data)", e, kInputError);
            default:
                return fail("train", e, kTrainingFailure);
        }
    } catch (const std::exception& e) {
        return fail("train", e, kTrainingFailure);
    }
}

int cmd_evaluate(const Common& c, const std::string& run_dir) {
    try {
        const EvaluationReport report = evaluate_run(run_dir);
        if (!c.out.empty()) write_file(c.out, report_to_json(report).dump(2) + "\n");
        std::cout << (c.structured() ? report_to_json(report).dump() + "\n" : format_report_table(report, run_dir));
        return kOk;
    } catch (const std::exception& e) {
        return fail("evaluate", e, kInputError);
    }
}

int cmd_scan(const Common& c, const std::string& checkpoint, const std::vector<std::string>& targets,
             double threshold) {
    std::optional<Classifier> model;
    try {
        fs::path dir = checkpoint;
        if (fs::exists(dir / "model" / "manifest.json")) dir /= "model";  // a run directory
        model.emplace(load_checkpoint(dir));
    } catch (const std::exception& e) {
        return fail("scan", e, kInputError);
    }

    std::vector<ScanResult> results;
    for (const auto& t : targets) {
        auto part = scan(*model, t, threshold);
        results.insert(results.end(), part.begin(), part.end());
    }
    std::sort(results.begin(), results.end(), [](const ScanResult& a, const ScanResult& b) { return a.file < b.file; });

    int code = kOk;
    json all = json::array();
    for (const auto& r : results) {
        if (!r.error.empty()) code = kInputError;
        if (c.structured()) {
            std::cout << scan_to_json(r).dump() << "\n";
        } else if (!r.error.empty()) {
            std::cout << r.file << "  ERROR  " << r.error << "\n";
        } else {
            std::printf("%s  %s  DD=%.4f IO=%.4f RE=%.4f TD=%.4f%s\n", r.file.c_str(), to_string(*r.label).data(),
                        r.probabilities[0], r.probabilities[1], r.probabilities[2], r.probabilities[3],
                        r.low_confidence ? "  low-confidence" : "");
        }
        all.push_back(scan_to_json(r));
    }
    if (!c.out.empty()) {
        try {
            write_file(c.out, json{{"schema", "solvuln.scan/v1"}, {"results", all}}.dump(2) + "\n");
        } catch (const std::exception& e) {
            return fail("scan", e, kInputError);
        }
    }
    return code;
}

int cmd_compare(const Common& c, const std::vector<std::string>& run_dirs) {
    try {
        std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
        if (dirs.size() < 2) throw Error(ErrorKind::InvalidArgument, "compare needs at least two run directories");
        const Comparison cmp = compare(load_run_reports(dirs));
        if (!c.out.empty()) write_file(c.out, comparison_to_json(cmp).dump(2) + "\n");
        std::cout << (c.structured() ? comparison_to_json(cmp).dump() + "\n" : format_comparison(cmp));
        return kOk;
    } catch (const Error& e) {
        return fail("compare", e, e.kind() == ErrorKind::SplitMismatch ? kMismatch : kInputError);
    } catch (const std::exception& e) {
        return fail("compare", e, kInputError);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Smart-contract vulnerability classification pipeline"};
    app.require_subcommand(1);

    Common common;
    std::string dataset;
    std::string run_dir;
    std::string checkpoint;
    std::vector<std::string> paths;
    std::optional<int> epochs;
    double threshold = kLowConfidenceThreshold;
    double label_noise = SyntheticOptions{}.label_noise;

    auto* ingest = app.add_subcommand("ingest", "Validate a dataset and print class counts");
    add_common(ingest, common);
    ingest->add_option("dataset", dataset, "CSV path, or 'synthetic' for the generated fixture");

    auto* synth = app.add_subcommand("synth", "Write the synthetic fixture corpus as CSV");
    add_common(synth, common);
    synth->add_option("--label-noise", label_noise, "Fraction of contracts carrying another class's pattern");

    auto* split = app.add_subcommand("split", "Stratified train/val/test split");
    add_common(split, common);
    split->add_option("dataset", dataset, "CSV path, or 'synthetic'");

    auto* train = app.add_subcommand("train", "Run split, training and evaluation from a config file");
    add_common(train, common);
    train->add_option("--epochs", epochs, "Epoch budget override");

    auto* evaluate = app.add_subcommand("evaluate", "Re-score a run directory on its test split");
    add_common(evaluate, common);
    evaluate->add_option("run_dir", run_dir, "Run directory")->required();

    auto* scan_cmd = app.add_subcommand("scan", "Classify Solidity files with a trained model");
    add_common(scan_cmd, common);
    scan_cmd->add_option("--checkpoint", checkpoint, "Checkpoint or run directory")->required();
    scan_cmd->add_option("--threshold", threshold, "Low-confidence marker threshold on the top probability");
    scan_cmd->add_option("paths", paths, "Files or directories")->required();

    auto* compare_cmd = app.add_subcommand("compare", "Compare reports of runs on the same test split");
    add_common(compare_cmd, common);
    compare_cmd->add_option("run_dirs", paths, "Run directories");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kInputError;
    }

    if (*ingest) return cmd_ingest(common, dataset);
    if (*synth) return cmd_synth(common, label_noise);
    if (*split) return cmd_split(common, dataset);
    if (*train) return cmd_train(common, epochs);
    if (*evaluate) return cmd_evaluate(common, run_dir);
    if (*scan_cmd) return cmd_scan(common, checkpoint, paths, threshold);
    if (*compare_cmd) return cmd_compare(common, paths);
    return kInputError;
}
