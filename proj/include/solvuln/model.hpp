#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "solvuln/label.hpp"
#include "solvuln/nn/networks.hpp"
#include "solvuln/preprocess.hpp"

namespace solvuln {

enum class ModelKind { RecurrentBaseline, TransformerFinetune };

std::string_view to_string(ModelKind kind) noexcept;
ModelKind parse_model_kind(std::string_view text);

struct ModelConfig {
    ModelKind kind = ModelKind::RecurrentBaseline;
    int num_classes = static_cast<int>(kNumClasses);
    std::uint64_t seed = 42;

    // Recurrent baseline.
    int embed_dim = 128;
    int conv_filters = 64;
    int conv_kernel = 5;
    int recurrent_units = 64;  // per direction
    int attention_dim = 64;
    double dropout = 0.3;
    int max_len = static_cast<int>(kDefaultMaxLen);

    // Transformer fine-tuning. The encoder shape comes from the named
    // checkpoint (a built-in preset or a checkpoint directory).
    std::string checkpoint_name = "distil-encoder";
    int max_positions = 256;
    double head_dropout = 0.1;
    int d_model = 0;
    int heads = 0;
    int ff_dim = 0;
    int layers = 0;
    double hidden_dropout = 0.1;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Throws ConfigError on non-positive dimensions or num_classes != 4.
void validate(const ModelConfig& config);

/// Built-in encoder shapes. "distil-encoder" has half the layers of
/// "base-encoder" and otherwise the same widths.
struct EncoderPreset {
    std::string name;
    int d_model;
    int heads;
    int ff_dim;
    int layers;
};
const std::vector<EncoderPreset>& encoder_presets();

/// Environment variable naming a directory searched for named checkpoints.
inline constexpr const char* kCheckpointCacheEnv = "SOLVULN_CHECKPOINT_CACHE";

using ProbabilityMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Classifier {
public:
    using RecurrentNet = nn::RecurrentNet<float>;
    using TransformerNet = nn::TransformerNet<float>;

    Classifier(ModelConfig config, std::optional<TextEncoder> encoder, RecurrentNet net);
    Classifier(ModelConfig config, std::optional<TextEncoder> encoder, TransformerNet net);

    Classifier(Classifier&&) noexcept = default;
    Classifier& operator=(Classifier&&) noexcept = default;

    const ModelConfig& config() const noexcept { return config_; }
    ModelKind kind() const noexcept { return config_.kind; }
    std::size_t parameter_count() const;

    /// Encoded-input length the model expects (max_len or max_positions).
    std::size_t input_length() const noexcept;
    const std::optional<TextEncoder>& encoder() const noexcept { return encoder_; }

    /// Raw source -> model input, using the model's own tokenizer and length.
    EncodedSequence encode(std::string_view source) const;

    /// Inference mode (no dropout). B x 4, rows sum to 1. ShapeError when a
    /// sequence length differs from input_length().
    ProbabilityMatrix predict_proba(std::span<const EncodedSequence> batch) const;

    /// Attention weights over all input positions (zero on padding); recurrent models only.
    std::vector<double> attention_weights(const EncodedSequence& seq) const;

    struct SampleResult {
        double loss;      // weight * cross-entropy, unscaled
        Label predicted;  // argmax of the training-mode forward pass
    };

    /// One sample's forward + backward. Adds scale * d(weight * CE)/d(params)
    /// to the gradients. `dropout_rng` null disables dropout.
    SampleResult accumulate_gradient(const EncodedSequence& seq, Label label, double weight, double scale,
                               Rng* dropout_rng);

    nn::ParamStore<float>& params();
    const nn::ParamStore<float>& params() const;

    std::string checkpoint_hash;  // set when loaded from or saved to a checkpoint

private:
    void check_shape(const EncodedSequence& seq) const;

    ModelConfig config_;
    std::optional<TextEncoder> encoder_;
    std::variant<RecurrentNet, TransformerNet> net_;
};

/// Builds the recurrent baseline; `vocab` becomes the model's tokenizer.
Classifier build_recurrent_classifier(const ModelConfig& config, Vocab vocab);
/// Same, without a tokenizer: only pre-encoded input can be scored.
Classifier build_recurrent_classifier(const ModelConfig& config, std::size_t vocab_size);

/// Builds an encoder classifier. `checkpoint_name` is resolved as a preset
/// name, a checkpoint directory path, or a directory under
/// $SOLVULN_CHECKPOINT_CACHE. Presets need `vocab` (a subword vocab built on
/// the training partition); checkpoint directories bring their own tokenizer
/// and encoder weights, and only the classification head is re-initialized.
Classifier build_transformer_classifier(const ModelConfig& config, std::optional<Vocab> vocab = std::nullopt);

ProbabilityMatrix predict_proba(const Classifier& model, std::span<const EncodedSequence> batch);

/// Checkpoint directory: config.json, weights.bin, vocab.json, any extra
/// files, and manifest.json with a SHA-256 over all of them.
struct ExtraFile {
    std::string name;
    std::string contents;
};
std::string save_checkpoint(Classifier& model, const std::filesystem::path& dir,
                            const std::vector<ExtraFile>& extra = {});
Classifier load_checkpoint(const std::filesystem::path& dir);

/// Validates the manifest and content hash; returns the parsed manifest.
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& dir);

/// Weight blob encoding shared with the optimizer state file.
std::string serialize_tensors(const std::vector<std::pair<std::string, const nn::Matrix<float>*>>& tensors);
std::vector<std::pair<std::string, nn::Matrix<float>>> deserialize_tensors(std::string_view blob);

}  // namespace solvuln
