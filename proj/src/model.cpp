#include "solvuln/model.hpp"

#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <map>

#include <nlohmann/json.hpp>

#include "solvuln/errors.hpp"
#include "solvuln/hash.hpp"

namespace solvuln {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "weight blobs are little-endian");

std::string_view to_string(ModelKind kind) noexcept {
    return kind == ModelKind::RecurrentBaseline ? "recurrent_baseline" : "transformer_finetune";
}

ModelKind parse_model_kind(std::string_view text) {
    if (text == "recurrent_baseline") return ModelKind::RecurrentBaseline;
    if (text == "transformer_finetune") return ModelKind::TransformerFinetune;
    throw Error(ErrorKind::ConfigError, "unknown model kind '" + std::string(text) + "'");
}

void to_json(json& j, const ModelConfig& c) {
    j = json{
        {"kind", to_string(c.kind)},
        {"num_classes", c.num_classes},
        {"seed", c.seed},
        {"embed_dim", c.embed_dim},
        {"conv_filters", c.conv_filters},
        {"conv_kernel", c.conv_kernel},
        {"recurrent_units", c.recurrent_units},
        {"attention_dim", c.attention_dim},
        {"dropout", c.dropout},
        {"max_len", c.max_len},
        {"checkpoint_name", c.checkpoint_name},
        {"max_positions", c.max_positions},
        {"head_dropout", c.head_dropout},
        {"d_model", c.d_model},
        {"heads", c.heads},
        {"ff_dim", c.ff_dim},
        {"layers", c.layers},
        {"hidden_dropout", c.hidden_dropout},
    };
}

void from_json(const json& j, ModelConfig& c) {
    ModelConfig d;
    c.kind = parse_model_kind(j.value("kind", std::string(to_string(d.kind))));
    c.num_classes = j.value("num_classes", d.num_classes);
    c.seed = j.value("seed", d.seed);
    c.embed_dim = j.value("embed_dim", d.embed_dim);
    c.conv_filters = j.value("conv_filters", d.conv_filters);
    c.conv_kernel = j.value("conv_kernel", d.conv_kernel);
    c.recurrent_units = j.value("recurrent_units", d.recurrent_units);
    c.attention_dim = j.value("attention_dim", d.attention_dim);
    c.dropout = j.value("dropout", d.dropout);
    c.max_len = j.value("max_len", d.max_len);
    c.checkpoint_name = j.value("checkpoint_name", d.checkpoint_name);
    c.max_positions = j.value("max_positions", d.max_positions);
    c.head_dropout = j.value("head_dropout", d.head_dropout);
    c.d_model = j.value("d_model", d.d_model);
    c.heads = j.value("heads", d.heads);
    c.ff_dim = j.value("ff_dim", d.ff_dim);
    c.layers = j.value("layers", d.layers);
    c.hidden_dropout = j.value("hidden_dropout", d.hidden_dropout);
}

namespace {

void require_positive(int value, const char* name) {
    if (value <= 0) throw Error(ErrorKind::ConfigError, std::string(name) + " must be positive, got " + std::to_string(value));
}

void require_rate(double value, const char* name) {
    if (!(value >= 0.0 && value < 1.0)) throw Error(ErrorKind::ConfigError, std::string(name) + " must lie in [0, 1)");
}

}  // namespace

void validate(const ModelConfig& c) {
    if (c.num_classes != static_cast<int>(kNumClasses)) {
        throw Error(ErrorKind::ConfigError, "num_classes must be 4, got " + std::to_string(c.num_classes));
    }
    if (c.kind == ModelKind::RecurrentBaseline) {
        require_positive(c.embed_dim, "embed_dim");
        require_positive(c.conv_filters, "conv_filters");
        require_positive(c.conv_kernel, "conv_kernel");
        require_positive(c.recurrent_units, "recurrent_units");
        require_positive(c.attention_dim, "attention_dim");
        require_positive(c.max_len, "max_len");
        require_rate(c.dropout, "dropout");
    } else {
        require_positive(c.max_positions, "max_positions");
        require_rate(c.head_dropout, "head_dropout");
        require_rate(c.hidden_dropout, "hidden_dropout");
        if (c.checkpoint_name.empty()) throw Error(ErrorKind::ConfigError, "checkpoint_name is empty");
    }
}

const std::vector<EncoderPreset>& encoder_presets() {
    static const std::vector<EncoderPreset> kPresets{
        {"distil-encoder", 64, 4, 256, 2},
        {"base-encoder", 64, 4, 256, 4},
    };
    return kPresets;
}

Classifier::Classifier(ModelConfig config, std::optional<TextEncoder> encoder, RecurrentNet net)
    : config_(std::move(config)), encoder_(std::move(encoder)), net_(std::move(net)) {}

Classifier::Classifier(ModelConfig config, std::optional<TextEncoder> encoder, TransformerNet net)
    : config_(std::move(config)), encoder_(std::move(encoder)), net_(std::move(net)) {}

nn::ParamStore<float>& Classifier::params() {
    return std::visit([](auto& net) -> nn::ParamStore<float>& { return net.params(); }, net_);
}

const nn::ParamStore<float>& Classifier::params() const {
    return std::visit([](const auto& net) -> const nn::ParamStore<float>& { return net.params(); }, net_);
}

std::size_t Classifier::parameter_count() const { return params().count(); }

std::size_t Classifier::input_length() const noexcept {
    return static_cast<std::size_t>(config_.kind == ModelKind::RecurrentBaseline ? config_.max_len
                                                                                 : config_.max_positions);
}

EncodedSequence Classifier::encode(std::string_view source) const {
    if (!encoder_) throw Error(ErrorKind::ConfigError, "model has no tokenizer attached");
    return encoder_->encode(source);
}

void Classifier::check_shape(const EncodedSequence& seq) const {
    if (seq.ids.size() != input_length()) {
        throw Error(ErrorKind::ShapeError, "encoded length " + std::to_string(seq.ids.size()) +
                                               " does not match model input length " +
                                               std::to_string(input_length()));
    }
    const auto vocab_rows = static_cast<std::int32_t>(params()[0].value.rows());
    for (std::size_t i = 0; i < seq.true_length && i < seq.ids.size(); ++i) {
        if (seq.ids[i] < 0 || seq.ids[i] >= vocab_rows) {
            throw Error(ErrorKind::ShapeError, "token id " + std::to_string(seq.ids[i]) + " outside vocabulary");
        }
    }
}

namespace {

Eigen::Matrix<double, 1, Eigen::Dynamic> softmax(const nn::RowVector<float>& logits) {
    Eigen::Matrix<double, 1, Eigen::Dynamic> p = logits.cast<double>();
    p.array() -= p.maxCoeff();
    p = p.array().exp().matrix();
    p /= p.sum();
    return p;
}

}  // namespace

ProbabilityMatrix Classifier::predict_proba(std::span<const EncodedSequence> batch) const {
    ProbabilityMatrix out(static_cast<Eigen::Index>(batch.size()), config_.num_classes);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        check_shape(batch[b]);
        const auto logits = std::visit(
            [&](const auto& net) {
                typename std::decay_t<decltype(net)>::Trace trace;
                return net.forward(batch[b].ids, batch[b].true_length, nullptr, trace);
            },
            net_);
        out.row(static_cast<Eigen::Index>(b)) = softmax(logits);
    }
    return out;
}

std::vector<double> Classifier::attention_weights(const EncodedSequence& seq) const {
    const auto* net = std::get_if<RecurrentNet>(&net_);
    if (net == nullptr) throw Error(ErrorKind::ConfigError, "attention pooling exists only in the recurrent model");
    check_shape(seq);
    RecurrentNet::Trace trace;
    net->forward(seq.ids, seq.true_length, nullptr, trace);
    std::vector<double> out(seq.ids.size(), 0.0);
    for (Eigen::Index t = 0; t < trace.attn.alpha.size(); ++t) out[static_cast<std::size_t>(t)] = trace.attn.alpha(t);
    return out;
}

Classifier::SampleResult Classifier::accumulate_gradient(const EncodedSequence& seq, Label label, double weight, double scale,
                                       Rng* dropout_rng) {
    check_shape(seq);
    return std::visit(
        [&](auto& net) {
            typename std::decay_t<decltype(net)>::Trace trace;
            const auto logits = net.forward(seq.ids, seq.true_length, dropout_rng, trace);
            const auto p = softmax(logits);
            const auto y = static_cast<Eigen::Index>(index_of(label));
            nn::RowVector<float> d(p.size());
            for (Eigen::Index k = 0; k < p.size(); ++k)
                d(k) = static_cast<float>(scale * weight * (p(k) - (k == y ? 1.0 : 0.0)));
            net.backward(trace, d);
            Eigen::Index best = 0;
            p.maxCoeff(&best);
            return SampleResult{-weight * std::log(std::max(p(y), 1e-300)), label_from_code(static_cast<int>(best))};
        },
        net_);
}

namespace {

nn::RecurrentDims recurrent_dims(const ModelConfig& c, std::size_t vocab_size) {
    nn::RecurrentDims d;
    d.vocab_size = static_cast<Eigen::Index>(vocab_size);
    d.embed_dim = c.embed_dim;
    d.conv_filters = c.conv_filters;
    d.conv_kernel = c.conv_kernel;
    d.recurrent_units = c.recurrent_units;
    d.attention_dim = c.attention_dim;
    d.dropout = c.dropout;
    d.num_classes = c.num_classes;
    return d;
}

nn::TransformerDims transformer_dims(const ModelConfig& c, std::size_t vocab_size) {
    nn::TransformerDims d;
    d.vocab_size = static_cast<Eigen::Index>(vocab_size);
    d.max_positions = c.max_positions;
    d.d_model = c.d_model;
    d.heads = c.heads;
    d.ff_dim = c.ff_dim;
    d.layers = c.layers;
    d.dropout = c.hidden_dropout;
    d.head_dropout = c.head_dropout;
    d.num_classes = c.num_classes;
    return d;
}

void validate_encoder_shape(const ModelConfig& c) {
    require_positive(c.d_model, "d_model");
    require_positive(c.heads, "heads");
    require_positive(c.ff_dim, "ff_dim");
    require_positive(c.layers, "layers");
    if (c.d_model % c.heads != 0) throw Error(ErrorKind::ConfigError, "d_model must be divisible by heads");
}

std::optional<std::filesystem::path> find_checkpoint_dir(const std::string& name) {
    std::error_code ec;
    if (std::filesystem::is_directory(name, ec)) return std::filesystem::path(name);
    if (const char* cache = std::getenv(kCheckpointCacheEnv); cache != nullptr && *cache != '\0') {
        const auto candidate = std::filesystem::path(cache) / name;
        if (std::filesystem::is_directory(candidate, ec)) return candidate;
    }
    return std::nullopt;
}

struct LoadedCheckpoint {
    ModelConfig config;
    std::optional<Vocab> vocab;
    std::map<std::string, nn::Matrix<float>> weights;
    std::string hash;
};

LoadedCheckpoint read_checkpoint(const std::filesystem::path& dir) {
    const json manifest = read_checkpoint_manifest(dir);
    LoadedCheckpoint out;
    out.hash = manifest.at("content_hash").get<std::string>();
    try {
        out.config = json::parse(read_file(dir / "config.json")).get<ModelConfig>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::CheckpointError, dir.string() + "/config.json: " + e.what());
    }
    for (auto& [name, m] : deserialize_tensors(read_file(dir / "weights.bin"))) out.weights.emplace(name, std::move(m));
    if (std::filesystem::exists(dir / "vocab.json")) {
        try {
            out.vocab = Vocab::load(dir / "vocab.json");
        } catch (const Error& e) {
            throw Error(ErrorKind::CheckpointError, std::string("corrupt tokenizer: ") + e.what());
        }
    }
    return out;
}

const nn::Matrix<float>& tensor(const LoadedCheckpoint& ck, const std::string& name) {
    auto it = ck.weights.find(name);
    if (it == ck.weights.end()) throw Error(ErrorKind::CheckpointError, "checkpoint lacks tensor '" + name + "'");
    return it->second;
}

// Copies checkpoint tensors into `store`; the classifier head only when `include_head`.
void copy_weights(nn::ParamStore<float>& store, const LoadedCheckpoint& ck, bool include_head) {
    for (auto& p : store) {
        if (!include_head && p->name.rfind("classifier.", 0) == 0) continue;
        const auto& src = tensor(ck, p->name);
        if (src.rows() != p->value.rows() || src.cols() != p->value.cols()) {
            throw Error(ErrorKind::CheckpointError, "shape mismatch for tensor '" + p->name + "'");
        }
        p->value = src;
    }
}

}  // namespace

Classifier build_recurrent_classifier(const ModelConfig& config, Vocab vocab) {
    if (config.kind != ModelKind::RecurrentBaseline) {
        throw Error(ErrorKind::ConfigError, "build_recurrent_classifier needs kind recurrent_baseline");
    }
    validate(config);
    const std::size_t vocab_size = vocab.size();
    TextEncoder encoder(TokenizerKind::Lexeme, std::move(vocab), static_cast<std::size_t>(config.max_len));
    return Classifier(config, std::move(encoder), nn::RecurrentNet<float>(recurrent_dims(config, vocab_size), config.seed));
}

Classifier build_recurrent_classifier(const ModelConfig& config, std::size_t vocab_size) {
    if (config.kind != ModelKind::RecurrentBaseline) {
        throw Error(ErrorKind::ConfigError, "build_recurrent_classifier needs kind recurrent_baseline");
    }
    validate(config);
    if (vocab_size < 2) throw Error(ErrorKind::ConfigError, "vocab_size must include PAD and UNK");
    return Classifier(config, std::nullopt, nn::RecurrentNet<float>(recurrent_dims(config, vocab_size), config.seed));
}

Classifier build_transformer_classifier(const ModelConfig& config_in, std::optional<Vocab> vocab) {
    if (config_in.kind != ModelKind::TransformerFinetune) {
        throw Error(ErrorKind::ConfigError, "build_transformer_classifier needs kind transformer_finetune");
    }
    validate(config_in);
    ModelConfig config = config_in;

    for (const auto& preset : encoder_presets()) {
        if (preset.name != config.checkpoint_name) continue;
        if (!vocab) throw Error(ErrorKind::ConfigError, "preset '" + preset.name + "' needs a subword vocab");
        config.d_model = preset.d_model;
        config.heads = preset.heads;
        config.ff_dim = preset.ff_dim;
        config.layers = preset.layers;
        validate_encoder_shape(config);
        const std::size_t vocab_size = vocab->size();
        TextEncoder encoder(TokenizerKind::Subword, std::move(*vocab), static_cast<std::size_t>(config.max_positions));
        return Classifier(config, std::move(encoder),
                          nn::TransformerNet<float>(transformer_dims(config, vocab_size), config.seed));
    }

    const auto dir = find_checkpoint_dir(config.checkpoint_name);
    if (!dir) throw Error(ErrorKind::CheckpointError, "checkpoint '" + config.checkpoint_name + "' not found");
    const LoadedCheckpoint ck = read_checkpoint(*dir);
    if (ck.config.kind != ModelKind::TransformerFinetune) {
        throw Error(ErrorKind::CheckpointError, dir->string() + " does not hold an encoder model");
    }
    if (!ck.vocab) throw Error(ErrorKind::CheckpointError, dir->string() + " has no tokenizer");
    const auto& token_table = tensor(ck, "embeddings.token");
    if (static_cast<std::size_t>(token_table.rows()) != ck.vocab->size()) {
        throw Error(ErrorKind::VocabMismatch, "tokenizer has " + std::to_string(ck.vocab->size()) +
                                                  " entries but the encoder embeds " +
                                                  std::to_string(token_table.rows()));
    }
    if (vocab && !(*vocab == *ck.vocab)) {
        throw Error(ErrorKind::VocabMismatch, "supplied vocab differs from the checkpoint tokenizer");
    }
    config.d_model = ck.config.d_model;
    config.heads = ck.config.heads;
    config.ff_dim = ck.config.ff_dim;
    config.layers = ck.config.layers;
    validate_encoder_shape(config);
    const auto positions = static_cast<int>(tensor(ck, "embeddings.position").rows());
    config.max_positions = std::min(config.max_positions, positions);

    auto dims = transformer_dims(config, ck.vocab->size());
    dims.max_positions = positions;
    nn::TransformerNet<float> net(dims, config.seed);
    copy_weights(net.params(), ck, /*include_head=*/false);
    TextEncoder encoder(TokenizerKind::Subword, *ck.vocab, static_cast<std::size_t>(config.max_positions));
    return Classifier(config, std::move(encoder), std::move(net));
}

ProbabilityMatrix predict_proba(const Classifier& model, std::span<const EncodedSequence> batch) {
    return model.predict_proba(batch);
}

std::string serialize_tensors(const std::vector<std::pair<std::string, const nn::Matrix<float>*>>& tensors) {
    std::string out = "SVT1";
    auto put_u64 = [&](std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); };
    put_u64(tensors.size());
    for (const auto& [name, m] : tensors) {
        put_u64(name.size());
        out += name;
        put_u64(static_cast<std::uint64_t>(m->rows()));
        put_u64(static_cast<std::uint64_t>(m->cols()));
        out.append(reinterpret_cast<const char*>(m->data()), sizeof(float) * static_cast<std::size_t>(m->size()));
    }
    return out;
}

std::vector<std::pair<std::string, nn::Matrix<float>>> deserialize_tensors(std::string_view blob) {
    auto corrupt = [] { return Error(ErrorKind::CheckpointError, "corrupt tensor blob"); };
    if (blob.substr(0, 4) != "SVT1") throw corrupt();
    std::size_t pos = 4;
    auto get_u64 = [&] {
        if (pos + 8 > blob.size()) throw corrupt();
        std::uint64_t v;
        std::memcpy(&v, blob.data() + pos, 8);
        pos += 8;
        return v;
    };
    const auto count = get_u64();
    std::vector<std::pair<std::string, nn::Matrix<float>>> out;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = get_u64();
        if (pos + len > blob.size()) throw corrupt();
        std::string name(blob.substr(pos, len));
        pos += len;
        const auto rows = get_u64(), cols = get_u64();
        const std::uint64_t bytes = rows * cols * sizeof(float);
        if (rows > (1u << 30) || cols > (1u << 30) || pos + bytes > blob.size()) throw corrupt();
        nn::Matrix<float> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        std::memcpy(m.data(), blob.data() + pos, bytes);
        pos += bytes;
        out.emplace_back(std::move(name), std::move(m));
    }
    if (pos != blob.size()) throw corrupt();
    return out;
}

std::string save_checkpoint(Classifier& model, const std::filesystem::path& dir, const std::vector<ExtraFile>& extra) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> files;

    json config = model.config();
    write_file(dir / "config.json", config.dump(2) + "\n");
    files.push_back("config.json");

    std::vector<std::pair<std::string, const nn::Matrix<float>*>> tensors;
    for (const auto& p : model.params()) tensors.emplace_back(p->name, &p->value);
    write_file(dir / "weights.bin", serialize_tensors(tensors));
    files.push_back("weights.bin");

    if (model.encoder()) {
        model.encoder()->vocab().save(dir / "vocab.json");
        files.push_back("vocab.json");
    } else {
        std::filesystem::remove(dir / "vocab.json");
    }
    for (const auto& f : extra) {
        write_file(dir / f.name, f.contents);
        files.push_back(f.name);
    }

    const std::string hash = sha256_files(dir, files);
    json manifest = {
        {"schema", "solvuln.checkpoint/v1"},
        {"kind", to_string(model.kind())},
        {"parameter_count", model.parameter_count()},
        {"files", files},
        {"content_hash", hash},
    };
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    model.checkpoint_hash = hash;
    return hash;
}

json read_checkpoint_manifest(const std::filesystem::path& dir) {
    if (!std::filesystem::is_regular_file(dir / "manifest.json")) {
        throw Error(ErrorKind::CheckpointError, "no checkpoint manifest in " + dir.string());
    }
    json manifest;
    try {
        manifest = json::parse(read_file(dir / "manifest.json"));
        if (manifest.at("schema") != "solvuln.checkpoint/v1") {
            throw Error(ErrorKind::CheckpointError, "unsupported checkpoint schema in " + dir.string());
        }
        const auto files = manifest.at("files").get<std::vector<std::string>>();
        for (const auto& f : files) {
            if (!std::filesystem::is_regular_file(dir / f)) {
                throw Error(ErrorKind::CheckpointError, "checkpoint file missing: " + (dir / f).string());
            }
        }
        if (sha256_files(dir, files) != manifest.at("content_hash").get<std::string>()) {
            throw Error(ErrorKind::CheckpointError, "content hash mismatch in " + dir.string());
        }
        parse_model_kind(manifest.at("kind").get<std::string>());
    } catch (const json::exception& e) {
        throw Error(ErrorKind::CheckpointError, dir.string() + "/manifest.json: " + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::CheckpointError) throw;
        throw Error(ErrorKind::CheckpointError, e.what());
    }
    return manifest;
}

Classifier load_checkpoint(const std::filesystem::path& dir) {
    LoadedCheckpoint ck = read_checkpoint(dir);
    const ModelConfig& config = ck.config;
    try {
        validate(config);
    } catch (const Error& e) {
        throw Error(ErrorKind::CheckpointError, e.what());
    }

    std::optional<Classifier> model;
    if (config.kind == ModelKind::RecurrentBaseline) {
        const auto vocab_size = static_cast<std::size_t>(tensor(ck, "embedding").rows());
        std::optional<TextEncoder> encoder;
        if (ck.vocab) {
            if (ck.vocab->size() != vocab_size) {
                throw Error(ErrorKind::VocabMismatch, "checkpoint vocab and embedding sizes disagree");
            }
            encoder.emplace(TokenizerKind::Lexeme, *ck.vocab, static_cast<std::size_t>(config.max_len));
        }
        model.emplace(config, std::move(encoder), nn::RecurrentNet<float>(recurrent_dims(config, vocab_size), config.seed));
    } else {
        validate_encoder_shape(config);
        const auto vocab_size = static_cast<std::size_t>(tensor(ck, "embeddings.token").rows());
        auto dims = transformer_dims(config, vocab_size);
        dims.max_positions = tensor(ck, "embeddings.position").rows();
        std::optional<TextEncoder> encoder;
        if (ck.vocab) {
            if (ck.vocab->size() != vocab_size) {
                throw Error(ErrorKind::VocabMismatch, "checkpoint vocab and embedding sizes disagree");
            }
            encoder.emplace(TokenizerKind::Subword, *ck.vocab, static_cast<std::size_t>(config.max_positions));
        }
        model.emplace(config, std::move(encoder), nn::TransformerNet<float>(dims, config.seed));
    }
    copy_weights(model->params(), ck, /*include_head=*/true);
    model->checkpoint_hash = ck.hash;
    return std::move(*model);
}

}  // namespace solvuln
