#include "solvuln/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "solvuln/hash.hpp"

namespace solvuln {

using nlohmann::json;

EncodedDataset encode_dataset(const Classifier& model, const Corpus& corpus) {
    EncodedDataset out;
    out.inputs.reserve(corpus.size());
    out.labels.reserve(corpus.size());
    for (const Contract& c : corpus) {
        out.inputs.push_back(model.encode(c.source));
        out.labels.push_back(c.label);
    }
    return out;
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"epochs", c.epochs},
             {"batch_size", c.batch_size},
             {"learning_rate", c.learning_rate},
             {"optimizer",
              {{"name", "adam"},
               {"beta1", c.optimizer.beta1},
               {"beta2", c.optimizer.beta2},
               {"epsilon", c.optimizer.epsilon},
               {"weight_decay", c.optimizer.weight_decay}}},
             {"loss", "categorical_crossentropy"},
             {"seed", c.seed},
             {"early_stop_patience", c.early_stop_patience},
             {"class_weighting", c.class_weighting},
             {"grad_clip_norm", c.grad_clip_norm},
             {"restore_best", c.restore_best}};
}

void from_json(const json& j, TrainConfig& c) {
    const TrainConfig d;
    c.epochs = j.value("epochs", d.epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        if (o.value("name", std::string("adam")) != "adam") {
            throw Error(ErrorKind::ConfigError, "only the adam optimizer is supported");
        }
        c.optimizer.beta1 = o.value("beta1", d.optimizer.beta1);
        c.optimizer.beta2 = o.value("beta2", d.optimizer.beta2);
        c.optimizer.epsilon = o.value("epsilon", d.optimizer.epsilon);
        c.optimizer.weight_decay = o.value("weight_decay", d.optimizer.weight_decay);
    }
    c.seed = j.value("seed", d.seed);
    c.early_stop_patience = j.value("early_stop_patience", d.early_stop_patience);
    c.class_weighting = j.value("class_weighting", d.class_weighting);
    c.grad_clip_norm = j.value("grad_clip_norm", d.grad_clip_norm);
    c.restore_best = j.value("restore_best", d.restore_best);
}

void validate(const TrainConfig& c) {
    if (c.epochs < 0) throw Error(ErrorKind::ConfigError, "epochs must be >= 0");
    if (c.batch_size < 1) throw Error(ErrorKind::ConfigError, "batch_size must be >= 1");
    if (!(c.learning_rate > 0)) throw Error(ErrorKind::ConfigError, "learning_rate must be > 0");
    if (c.early_stop_patience < 0) throw Error(ErrorKind::ConfigError, "early_stop_patience must be >= 0");
    if (c.grad_clip_norm < 0) throw Error(ErrorKind::ConfigError, "grad_clip_norm must be >= 0");
}

double default_learning_rate(ModelKind kind) noexcept {
    return kind == ModelKind::RecurrentBaseline ? 1e-3 : 2e-5;
}

void to_json(json& j, const TrainingRun& run) {
    json history = json::array();
    for (const auto& r : run.history) {
        history.push_back({{"epoch", r.epoch},
                           {"train_loss", r.train_loss},
                           {"train_accuracy", r.train_accuracy},
                           {"val_loss", r.val_loss},
                           {"val_accuracy", r.val_accuracy},
                           {"seconds", r.seconds}});
    }
    j = json{{"history", history},
             {"best_epoch", run.best_epoch},
             {"best_val_accuracy", run.best_val_accuracy},
             {"best_checkpoint", run.best_checkpoint},
             {"last_checkpoint", run.last_checkpoint},
             {"stopped_early", run.stopped_early}};
}

void from_json(const json& j, TrainingRun& run) {
    run.history.clear();
    for (const auto& r : j.at("history")) {
        run.history.push_back({r.at("epoch").get<int>(), r.at("train_loss").get<double>(),
                               r.at("train_accuracy").get<double>(), r.at("val_loss").get<double>(),
                               r.at("val_accuracy").get<double>(), r.value("seconds", 0.0)});
    }
    run.best_epoch = j.at("best_epoch").get<int>();
    run.best_val_accuracy = j.at("best_val_accuracy").get<double>();
    run.best_checkpoint = j.value("best_checkpoint", std::string());
    run.last_checkpoint = j.value("last_checkpoint", std::string());
    run.stopped_early = j.value("stopped_early", false);
}

LossAccuracy measure(const Classifier& model, const EncodedDataset& data) {
    if (data.empty()) return {};
    const ProbabilityMatrix probs = model.predict_proba(data.inputs);
    double loss = 0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto row = probs.row(static_cast<Eigen::Index>(i));
        const auto y = static_cast<Eigen::Index>(index_of(data.labels[i]));
        loss -= std::log(std::max(row(y), 1e-300));
        Eigen::Index best = 0;
        row.maxCoeff(&best);
        correct += best == y ? 1 : 0;
    }
    const auto n = static_cast<double>(data.size());
    return {loss / n, static_cast<double>(correct) / n};
}

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kDropoutStream = 0x44524f50ULL;

std::array<double, kNumClasses> class_weights(const EncodedDataset& data, bool enabled) {
    std::array<double, kNumClasses> w{1.0, 1.0, 1.0, 1.0};
    if (!enabled || data.empty()) return w;
    std::array<std::size_t, kNumClasses> counts{};
    for (Label l : data.labels) ++counts[index_of(l)];
    for (std::size_t k = 0; k < kNumClasses; ++k)
        w[k] = counts[k] == 0 ? 0.0 : static_cast<double>(data.size()) / (kNumClasses * static_cast<double>(counts[k]));
    return w;
}

void clip_gradients(nn::ParamStore<float>& params, double max_norm) {
    if (max_norm <= 0) return;
    double sq = 0;
    for (const auto& p : params) sq += p->grad.template cast<double>().squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const auto factor = static_cast<float>(max_norm / norm);
        for (auto& p : params) p->grad *= factor;
    }
}

std::string optimizer_blob(nn::Adam<float>& adam, const nn::ParamStore<float>& params) {
    std::vector<std::pair<std::string, const nn::Matrix<float>*>> tensors;
    for (std::size_t i = 0; i < params.size(); ++i) {
        tensors.emplace_back("m." + params[i].name, &adam.first_moments()[i]);
        tensors.emplace_back("v." + params[i].name, &adam.second_moments()[i]);
    }
    return serialize_tensors(tensors);
}

void restore_optimizer(nn::Adam<float>& adam, const nn::ParamStore<float>& params, std::string_view blob,
                       std::uint64_t steps) {
    auto tensors = deserialize_tensors(blob);
    if (tensors.size() != 2 * params.size()) throw Error(ErrorKind::CheckpointError, "optimizer state size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = tensors[2 * i];
        auto& v = tensors[2 * i + 1];
        if (m.first != "m." + params[i].name || v.first != "v." + params[i].name ||
            m.second.rows() != params[i].value.rows() || m.second.cols() != params[i].value.cols()) {
            throw Error(ErrorKind::CheckpointError, "optimizer state does not match parameter " + params[i].name);
        }
        adam.first_moments()[i] = std::move(m.second);
        adam.second_moments()[i] = std::move(v.second);
    }
    adam.set_steps(steps);
}

nn::AdamOptions adam_options(const TrainConfig& cfg) {
    nn::AdamOptions o = cfg.optimizer;
    o.learning_rate = cfg.learning_rate;
    return o;
}

// Shared epoch loop for train() and resume(); `run` already holds any prior history.
void run_epochs(Classifier& model, nn::Adam<float>& adam, const EncodedDataset& train_set,
                const EncodedDataset& val_set, const TrainConfig& cfg, TrainingRun& run,
                std::optional<std::vector<nn::Matrix<float>>> best_weights,
                const std::optional<std::filesystem::path>& checkpoint_dir) {
    const auto weights = class_weights(train_set, cfg.class_weighting);
    const std::size_t n = train_set.size();
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    const int first_epoch = static_cast<int>(run.history.size()) + 1;
    int since_best = 0;
    if (run.best_epoch > 0) since_best = static_cast<int>(run.history.size()) - run.best_epoch;

    for (int epoch = first_epoch; epoch < first_epoch + cfg.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(Rng::derive(cfg.seed ^ kShuffleStream, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        Rng dropout_rng(Rng::derive(cfg.seed ^ kDropoutStream, static_cast<std::uint64_t>(epoch)));

        double loss_sum = 0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t stop = std::min(n, start + batch);
            const double scale = 1.0 / static_cast<double>(stop - start);
            model.params().zero_grad();
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t i = order[k];
                const Label y = train_set.labels[i];
                const auto r = model.accumulate_gradient(train_set.inputs[i], y, weights[index_of(y)], scale, &dropout_rng);
                loss_sum += r.loss;
                correct += r.predicted == y ? 1 : 0;
            }
            clip_gradients(model.params(), cfg.grad_clip_norm);
            adam.step(model.params());
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(n);
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
        const LossAccuracy val = measure(model, val_set);
        rec.val_loss = val.loss;
        rec.val_accuracy = val.accuracy;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        run.history.push_back(rec);

        if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
            throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch), run);
        }

        if (run.best_epoch == 0 || rec.val_accuracy > run.best_val_accuracy) {
            run.best_epoch = epoch;
            run.best_val_accuracy = rec.val_accuracy;
            since_best = 0;
            if (cfg.restore_best) best_weights = model.params().snapshot();
            if (checkpoint_dir) {
                save_checkpoint(model, *checkpoint_dir / "best");
                run.best_checkpoint = (*checkpoint_dir / "best").string();
            }
        } else {
            ++since_best;
        }
        if (cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience) {
            run.stopped_early = true;
            break;
        }
    }

    if (checkpoint_dir) {
        const auto last = *checkpoint_dir / "last";
        run.last_checkpoint = last.string();
        json state = {{"schema", "solvuln.training_state/v1"},
                      {"train_config", cfg},
                      {"run", run},
                      {"optimizer_steps", adam.steps()}};
        save_checkpoint(model, last,
                        {{"training_state.json", state.dump(2) + "\n"},
                         {"optimizer.bin", optimizer_blob(adam, model.params())}});
    }
    if (cfg.restore_best && best_weights) model.params().restore(*best_weights);
}

}  // namespace

TrainingRun train(Classifier& model, const EncodedDataset& train_set, const EncodedDataset& val_set,
                  const TrainConfig& cfg, const std::optional<std::filesystem::path>& checkpoint_dir) {
    validate(cfg);
    TrainingRun run;
    if (cfg.epochs == 0) return run;
    if (train_set.empty()) throw Error(ErrorKind::EmptyDataset, "training set is empty");
    if (val_set.empty()) throw Error(ErrorKind::EmptyDataset, "validation set is empty");
    nn::Adam<float> adam(model.params(), adam_options(cfg));
    run_epochs(model, adam, train_set, val_set, cfg, run, std::nullopt, checkpoint_dir);
    return run;
}

ResumedRun resume(const std::filesystem::path& checkpoint, ModelKind expected_kind, const EncodedDataset& train_set,
                  const EncodedDataset& val_set, const TrainConfig& cfg,
                  const std::optional<std::filesystem::path>& checkpoint_dir) {
    validate(cfg);
    const json manifest = read_checkpoint_manifest(checkpoint);
    if (parse_model_kind(manifest.at("kind").get<std::string>()) != expected_kind) {
        throw Error(ErrorKind::CheckpointError, "checkpoint holds a " + manifest.at("kind").get<std::string>() +
                                                    " model, expected " + std::string(to_string(expected_kind)));
    }
    const auto files = manifest.at("files").get<std::vector<std::string>>();
    const bool has_state = std::find(files.begin(), files.end(), "training_state.json") != files.end() &&
                           std::find(files.begin(), files.end(), "optimizer.bin") != files.end();
    if (!has_state) throw Error(ErrorKind::CheckpointError, checkpoint.string() + " carries no training state");

    ResumedRun out{load_checkpoint(checkpoint), {}};
    json state;
    try {
        state = json::parse(read_file(checkpoint / "training_state.json"));
        out.run = state.at("run").get<TrainingRun>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::CheckpointError, std::string("training state: ") + e.what());
    }
    if (cfg.epochs > 0 && train_set.empty()) throw Error(ErrorKind::EmptyDataset, "training set is empty");
    if (cfg.epochs > 0 && val_set.empty()) throw Error(ErrorKind::EmptyDataset, "validation set is empty");

    nn::Adam<float> adam(out.model.params(), adam_options(cfg));
    restore_optimizer(adam, out.model.params(), read_file(checkpoint / "optimizer.bin"),
                      state.at("optimizer_steps").get<std::uint64_t>());

    std::optional<std::vector<nn::Matrix<float>>> best;
    if (cfg.restore_best && out.run.best_epoch > 0 && !out.run.best_checkpoint.empty() &&
        std::filesystem::exists(out.run.best_checkpoint)) {
        best = load_checkpoint(out.run.best_checkpoint).params().snapshot();
    }
    if (cfg.epochs > 0) {
        run_epochs(out.model, adam, train_set, val_set, cfg, out.run, std::move(best), checkpoint_dir);
    } else if (best) {
        out.model.params().restore(*best);
    }
    return out;
}

}  // namespace solvuln
