#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "solvuln/corpus.hpp"
#include "solvuln/evaluation.hpp"
#include "solvuln/model.hpp"
#include "solvuln/synthetic.hpp"
#include "solvuln/training.hpp"

namespace solvuln {

/// Dataset spec value that selects the generated fixture instead of a CSV file.
inline constexpr const char* kSyntheticDataset = "synthetic";

struct PreprocessConfig {
    std::size_t max_vocab = kDefaultMaxVocab;
    std::size_t min_freq = kDefaultMinFreq;
    std::size_t max_len = kDefaultMaxLen;  // recurrent input length; encoders use model.max_positions
};

/// Everything a training run depends on.
struct RunConfig {
    std::string dataset = kSyntheticDataset;
    SyntheticOptions synthetic;
    SplitRatios ratios;
    std::uint64_t split_seed = 42;
    PreprocessConfig preprocess;
    ModelConfig model;
    TrainConfig train;
    std::string output_dir = "runs";
    std::string name = "run";
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing keys take defaults; a missing train.learning_rate follows the model kind.
void from_json(const nlohmann::json& j, RunConfig& c);

/// Parses a config file; a relative dataset path is resolved against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

Corpus load_dataset(const std::string& dataset, const SyntheticOptions& synthetic = {});

struct IngestSummary {
    std::string origin;
    bool synthetic = false;
    std::size_t total = 0;
    ClassCounts counts{};
    std::string content_hash;  // SHA-256 of the canonical CSV rendering
};

IngestSummary summarize(const Corpus& corpus, const std::string& origin, bool synthetic);
nlohmann::json summary_to_json(const IngestSummary& s);
std::string format_summary(const IngestSummary& s);

/// Builds the tokenizer from the training partition and the untrained model.
Classifier build_model(const RunConfig& config, const Corpus& train);

struct RunResult {
    std::filesystem::path run_dir;
    TrainingRun run;
    EvaluationReport report;
};

/// split -> preprocess -> build -> train -> evaluate. Writes into `run_dir`:
/// config.json, split.json, checkpoints/{best,last}, model/ (the evaluated
/// weights), curves.csv, report.{json,txt}, confusion.csv, run_manifest.json.
RunResult run_training(const RunConfig& config, const std::filesystem::path& run_dir);

/// Re-scores the model of an existing run directory on its recorded test split.
EvaluationReport evaluate_run(const std::filesystem::path& run_dir);

struct ScanResult {
    std::string file;
    std::optional<Label> label;
    std::array<double, kNumClasses> probabilities{};
    bool low_confidence = false;
    std::string error;  // non-empty when the file could not be scored
};

inline constexpr double kLowConfidenceThreshold = 0.5;

/// Scores one file, or every *.sol file under a directory; sorted by path.
std::vector<ScanResult> scan(const Classifier& model, const std::filesystem::path& target,
                             double low_confidence_threshold = kLowConfidenceThreshold);
nlohmann::json scan_to_json(const ScanResult& r);

/// Loads report.json of each run directory; names come from run_manifest.json.
std::vector<NamedReport> load_run_reports(const std::vector<std::filesystem::path>& run_dirs);

}  // namespace solvuln
