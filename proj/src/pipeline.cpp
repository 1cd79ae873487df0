#include "solvuln/pipeline.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

#include "solvuln/hash.hpp"

namespace solvuln {

namespace fs = std::filesystem;
using nlohmann::json;

void to_json(json& j, const RunConfig& c) {
    j = json{{"dataset", c.dataset},
             {"synthetic",
              {{"seed", c.synthetic.seed},
               {"counts", c.synthetic.counts},
               {"label_noise", c.synthetic.label_noise},
               {"decoy_rate", c.synthetic.decoy_rate}}},
             {"split",
              {{"train", c.ratios.train}, {"val", c.ratios.val}, {"test", c.ratios.test}, {"seed", c.split_seed}}},
             {"preprocess",
              {{"max_vocab", c.preprocess.max_vocab},
               {"min_freq", c.preprocess.min_freq},
               {"max_len", c.preprocess.max_len}}},
             {"model", c.model},
             {"train", c.train},
             {"output_dir", c.output_dir},
             {"name", c.name}};
}

void from_json(const json& j, RunConfig& c) {
    const RunConfig d;
    c.dataset = j.value("dataset", d.dataset);
    if (j.contains("synthetic")) {
        const auto& s = j.at("synthetic");
        c.synthetic.seed = s.value("seed", d.synthetic.seed);
        c.synthetic.counts = s.value("counts", d.synthetic.counts);
        c.synthetic.label_noise = s.value("label_noise", d.synthetic.label_noise);
        c.synthetic.decoy_rate = s.value("decoy_rate", d.synthetic.decoy_rate);
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        c.ratios = {s.value("train", d.ratios.train), s.value("val", d.ratios.val), s.value("test", d.ratios.test)};
        c.split_seed = s.value("seed", d.split_seed);
    }
    if (j.contains("preprocess")) {
        const auto& p = j.at("preprocess");
        c.preprocess.max_vocab = p.value("max_vocab", d.preprocess.max_vocab);
        c.preprocess.min_freq = p.value("min_freq", d.preprocess.min_freq);
        c.preprocess.max_len = p.value("max_len", d.preprocess.max_len);
    }
    c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
    c.train = j.contains("train") ? j.at("train").get<TrainConfig>() : d.train;
    if (!j.contains("train") || !j.at("train").contains("learning_rate")) {
        c.train.learning_rate = default_learning_rate(c.model.kind);
    }
    c.output_dir = j.value("output_dir", d.output_dir);
    c.name = j.value("name", d.name);
}

RunConfig load_run_config(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw Error(ErrorKind::IOError, "config file not found: " + path.string());
    RunConfig cfg;
    try {
        cfg = json::parse(read_file(path)).get<RunConfig>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
    }
    if (cfg.dataset != kSyntheticDataset && fs::path(cfg.dataset).is_relative()) {
        cfg.dataset = (path.parent_path() / cfg.dataset).lexically_normal().string();
    }
    return cfg;
}

Corpus load_dataset(const std::string& dataset, const SyntheticOptions& synthetic) {
    if (dataset == kSyntheticDataset) return generate_synthetic_corpus(synthetic);
    return load_corpus(dataset);
}

IngestSummary summarize(const Corpus& corpus, const std::string& origin, bool synthetic) {
    return {origin, synthetic, corpus.size(), corpus.class_counts(), sha256_hex(format_corpus(corpus))};
}

json summary_to_json(const IngestSummary& s) {
    json counts = json::object();
    for (Label l : kAllLabels) counts[std::string(to_string(l))] = s.counts[index_of(l)];
    return {{"schema", "solvuln.ingest/v1"},
            {"origin", s.origin},
            {"synthetic", s.synthetic},
            {"total", s.total},
            {"class_counts", counts},
            {"content_hash", s.content_hash}};
}

std::string format_summary(const IngestSummary& s) {
    std::ostringstream out;
    out << "dataset: " << s.origin << (s.synthetic ? " (synthetic fixture)" : "") << "\n";
    out << "contracts: " << s.total << "\n";
    for (Label l : {Label::RE, Label::IO, Label::TD, Label::DD}) {
        out << "  " << to_string(l) << "  " << s.counts[index_of(l)] << "  " << long_name(l) << "\n";
    }
    out << "sha256: " << s.content_hash << "\n";
    return out.str();
}

Classifier build_model(const RunConfig& config, const Corpus& train) {
    const TokenizerKind kind =
        config.model.kind == ModelKind::RecurrentBaseline ? TokenizerKind::Lexeme : TokenizerKind::Subword;
    std::vector<TokenSequence> sequences;
    sequences.reserve(train.size());
    for (const Contract& c : train) sequences.push_back(TextEncoder::tokens_for(kind, c.source, c.filename));
    Vocab vocab = build_vocab(sequences, config.preprocess.max_vocab, config.preprocess.min_freq,
                              TextEncoder::specials_for(kind));

    if (config.model.kind == ModelKind::RecurrentBaseline) {
        ModelConfig mc = config.model;
        mc.max_len = static_cast<int>(config.preprocess.max_len);
        return build_recurrent_classifier(mc, std::move(vocab));
    }
    const bool is_preset = std::any_of(encoder_presets().begin(), encoder_presets().end(),
                                       [&](const EncoderPreset& p) { return p.name == config.model.checkpoint_name; });
    return build_transformer_classifier(config.model, is_preset ? std::optional<Vocab>(std::move(vocab)) : std::nullopt);
}

namespace {

std::string checkpoint_content_hash(const fs::path& dir) {
    return read_checkpoint_manifest(dir).at("content_hash").get<std::string>();
}

void write_manifest(const fs::path& run_dir, const RunConfig& config, const IngestSummary& data,
                    const std::string& split_digest, const TrainingRun& run, const EvaluationReport& report,
                    const std::string& status) {
    json files = json::object();
    for (const char* name : {"config.json", "split.json", "curves.csv", "report.json"}) {
        if (fs::exists(run_dir / name)) files[name] = sha256_hex(read_file(run_dir / name));
    }
    const json manifest = {{"schema", "solvuln.run/v1"},
                           {"name", config.name},
                           {"status", status},
                           {"model_kind", to_string(config.model.kind)},
                           {"dataset", summary_to_json(data)},
                           {"seeds",
                            {{"split", config.split_seed},
                             {"model", config.model.seed},
                             {"train", config.train.seed},
                             {"synthetic", config.synthetic.seed}}},
                           {"split_hash", split_digest},
                           {"checkpoint_hash", report.checkpoint_hash},
                           {"epochs_run", run.history.size()},
                           {"best_epoch", run.best_epoch},
                           {"files", files}};
    write_file(run_dir / "run_manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

RunResult run_training(const RunConfig& config, const fs::path& run_dir) {
    validate(config.model);
    validate(config.train);
    const Corpus corpus = load_dataset(config.dataset, config.synthetic);
    const IngestSummary data = summarize(corpus, config.dataset, config.dataset == kSyntheticDataset);
    const DatasetSplit split = stratified_split(corpus, config.ratios, config.split_seed);
    const std::string split_digest = split_hash(split);

    fs::create_directories(run_dir);
    RunConfig snapshot = config;
    if (snapshot.dataset != kSyntheticDataset) snapshot.dataset = fs::absolute(snapshot.dataset).string();
    write_file(run_dir / "config.json", json(snapshot).dump(2) + "\n");
    save_split_manifest(split, run_dir / "split.json");

    Classifier model = build_model(config, split.train);
    const EncodedDataset train_set = encode_dataset(model, split.train);
    const EncodedDataset val_set = encode_dataset(model, split.val);
    const EncodedDataset test_set = encode_dataset(model, split.test);

    RunResult result{run_dir, {}, {}};
    try {
        result.run = train(model, train_set, val_set, config.train, run_dir / "checkpoints");
    } catch (const DivergenceError& e) {
        write_file(run_dir / "curves.csv", format_curves_csv(e.partial()));
        write_manifest(run_dir, config, data, split_digest, e.partial(), {}, "diverged");
        throw;
    }

    save_checkpoint(model, run_dir / "model");
    model.checkpoint_hash = checkpoint_content_hash(run_dir / "model");
    result.report = evaluate(model, test_set);
    result.report.split_hash = split_digest;
    emit_report(result.report, result.run, run_dir);
    write_manifest(run_dir, config, data, split_digest, result.run, result.report, "completed");
    return result;
}

EvaluationReport evaluate_run(const fs::path& run_dir) {
    for (const char* name : {"config.json", "split.json", "model"}) {
        if (!fs::exists(run_dir / name)) {
            throw Error(ErrorKind::MissingData, (run_dir / name).string() + " not found; is this a run directory?");
        }
    }
    const RunConfig config = load_run_config(run_dir / "config.json");
    Classifier model = load_checkpoint(run_dir / "model");
    const Corpus corpus = load_dataset(config.dataset, config.synthetic);
    const DatasetSplit split = apply_split_manifest(corpus, load_split_manifest(run_dir / "split.json"));
    EvaluationReport report = evaluate(model, encode_dataset(model, split.test));
    report.split_hash = split_hash(split);
    return report;
}

std::vector<ScanResult> scan(const Classifier& model, const fs::path& target, double threshold) {
    std::vector<fs::path> files;
    if (fs::is_directory(target)) {
        for (const auto& entry : fs::recursive_directory_iterator(target)) {
            if (entry.is_regular_file() && entry.path().extension() == ".sol") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(target);
    }

    std::vector<ScanResult> results;
    for (const auto& path : files) {
        ScanResult r;
        r.file = path.string();
        try {
            if (!fs::is_regular_file(path)) throw Error(ErrorKind::IOError, "no such file");
            const std::string source = read_file(path);
            if (normalize_source(source).text.empty()) throw Error(ErrorKind::EmptyInput, "file has no code");
            const EncodedSequence seq = model.encode(source);
            const ProbabilityMatrix p = model.predict_proba(std::span<const EncodedSequence>(&seq, 1));
            Eigen::Index best = 0;
            p.row(0).maxCoeff(&best);
            for (std::size_t k = 0; k < kNumClasses; ++k) r.probabilities[k] = p(0, static_cast<Eigen::Index>(k));
            r.label = kAllLabels[static_cast<std::size_t>(best)];
            r.low_confidence = p(0, best) < threshold;
        } catch (const std::exception& e) {
            r.error = e.what();
        }
        results.push_back(std::move(r));
    }
    return results;
}

json scan_to_json(const ScanResult& r) {
    json j = {{"file", r.file}};
    if (!r.error.empty()) {
        j["error"] = r.error;
        return j;
    }
    json probs = json::object();
    for (Label l : kAllLabels) probs[std::string(to_string(l))] = r.probabilities[index_of(l)];
    j["label"] = to_string(*r.label);
    j["probabilities"] = probs;
    j["low_confidence"] = r.low_confidence;
    return j;
}

std::vector<NamedReport> load_run_reports(const std::vector<fs::path>& run_dirs) {
    std::vector<NamedReport> out;
    for (const auto& dir : run_dirs) {
        if (!fs::is_regular_file(dir / "report.json")) {
            throw Error(ErrorKind::MissingData, (dir / "report.json").string() + " not found");
        }
        std::string name = dir.filename().string();
        if (fs::is_regular_file(dir / "run_manifest.json")) {
            try {
                name = json::parse(read_file(dir / "run_manifest.json")).value("name", name);
            } catch (const json::exception&) {
            }
        }
        out.push_back({name, load_report(dir / "report.json")});
    }
    return out;
}

}  // namespace solvuln
