#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "solvuln/corpus.hpp"
#include "solvuln/errors.hpp"
#include "solvuln/model.hpp"
#include "solvuln/nn/adam.hpp"

namespace solvuln {

struct EncodedDataset {
    std::vector<EncodedSequence> inputs;
    std::vector<Label> labels;

    std::size_t size() const noexcept { return inputs.size(); }
    bool empty() const noexcept { return inputs.empty(); }
};

/// Encodes every contract with the model's own tokenizer and length limit.
EncodedDataset encode_dataset(const Classifier& model, const Corpus& corpus);

struct TrainConfig {
    int epochs = 20;
    int batch_size = 16;
    double learning_rate = 1e-3;
    nn::AdamOptions optimizer;  // learning_rate above overrides optimizer.learning_rate
    std::uint64_t seed = 7;
    int early_stop_patience = 0;  // 0 disables early stopping
    bool class_weighting = false;
    double grad_clip_norm = 1.0;  // global-norm clipping; 0 disables
    bool restore_best = true;     // leave the best-validation weights in the model

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void validate(const TrainConfig& config);

/// Learning-rate default for the model kind (1e-3 recurrent, 2e-5 encoder).
double default_learning_rate(ModelKind kind) noexcept;

struct EpochRecord {
    int epoch = 0;  // 1-based, continuous across resumes
    double train_loss = 0;
    double train_accuracy = 0;
    double val_loss = 0;
    double val_accuracy = 0;
    double seconds = 0;

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingRun {
    std::vector<EpochRecord> history;
    int best_epoch = 0;  // 0 when no epoch ran
    double best_val_accuracy = 0;
    std::string best_checkpoint;
    std::string last_checkpoint;
    bool stopped_early = false;
};

void to_json(nlohmann::json& j, const TrainingRun& run);
void from_json(const nlohmann::json& j, TrainingRun& run);

/// Thrown when the loss stops being finite; carries the history so far, whose
/// last record is the aborted epoch (losses as observed).
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& message, TrainingRun partial)
        : Error(ErrorKind::DivergenceError, message), partial_(std::move(partial)) {}
    const TrainingRun& partial() const noexcept { return partial_; }

private:
    TrainingRun partial_;
};

/// Mean cross-entropy and accuracy of the model in inference mode.
struct LossAccuracy {
    double loss = 0;
    double accuracy = 0;
};
LossAccuracy measure(const Classifier& model, const EncodedDataset& data);

/// Trains for cfg.epochs epochs. Batches are drawn from a shuffle seeded by
/// (cfg.seed, epoch), and dropout masks likewise, so a run is a pure function
/// of its inputs on a fixed runtime. With `checkpoint_dir`, the best-validation
/// model goes to <dir>/best and the final state (weights, optimizer moments,
/// history) to <dir>/last, from which resume() continues.
TrainingRun train(Classifier& model, const EncodedDataset& train_set, const EncodedDataset& val_set,
                  const TrainConfig& cfg, const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

struct ResumedRun {
    Classifier model;
    TrainingRun run;
};

/// Continues a run from a `last` checkpoint for cfg.epochs further epochs.
/// CheckpointError if the checkpoint lacks training state or holds a
/// different model kind than `expected_kind`.
ResumedRun resume(const std::filesystem::path& checkpoint, ModelKind expected_kind,
                  const EncodedDataset& train_set, const EncodedDataset& val_set, const TrainConfig& cfg,
                  const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

}  // namespace solvuln
