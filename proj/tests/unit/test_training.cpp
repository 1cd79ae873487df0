#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "solvuln/synthetic.hpp"
#include "solvuln/training.hpp"
#include "support/helpers.hpp"

using namespace solvuln;
using solvuln::testing::error_kind;

namespace {

Corpus toy_corpus(std::size_t per_class, std::uint64_t seed) {
    Corpus c;
    std::size_t row = 0;
    for (std::size_t i = 0; i < per_class; ++i)
        for (Label l : kAllLabels) {
            c.add({"t" + std::to_string(row) + ".sol", generate_contract_source(l, seed + row, 0.0), l, encode(l), row});
            ++row;
        }
    return c;
}

Classifier tiny_model(const Corpus& train, std::uint64_t seed = 3) {
    std::vector<TokenSequence> seqs;
    for (const auto& c : train) seqs.push_back(TextEncoder::tokens_for(TokenizerKind::Lexeme, c.source));
    ModelConfig cfg;
    cfg.embed_dim = 16;
    cfg.conv_filters = 16;
    cfg.conv_kernel = 3;
    cfg.recurrent_units = 12;
    cfg.attention_dim = 12;
    cfg.dropout = 0.1;
    cfg.max_len = 96;
    cfg.seed = seed;
    return build_recurrent_classifier(cfg, build_vocab(seqs, 2000, 1));
}

struct Fixture {
    Corpus train_c = toy_corpus(6, 10);
    Corpus val_c = toy_corpus(3, 900);
    Classifier model = tiny_model(train_c);
    EncodedDataset train = encode_dataset(model, train_c);
    EncodedDataset val = encode_dataset(model, val_c);
};

TrainConfig quick(int epochs) {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = 4;
    t.learning_rate = 3e-3;
    t.seed = 21;
    return t;
}

void same_history(const TrainingRun& a, const TrainingRun& b) {
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].epoch == b.history[i].epoch);
        CHECK(a.history[i].train_loss == b.history[i].train_loss);
        CHECK(a.history[i].train_accuracy == b.history[i].train_accuracy);
        CHECK(a.history[i].val_loss == b.history[i].val_loss);
        CHECK(a.history[i].val_accuracy == b.history[i].val_accuracy);
    }
}

}  // namespace

TEST_CASE("train config validation and JSON") {
    TrainConfig t = quick(3);
    t.optimizer.weight_decay = 0.01;
    t.class_weighting = true;
    CHECK(nlohmann::json(t).get<TrainConfig>() == t);
    CHECK(nlohmann::json(t)["loss"] == "categorical_crossentropy");

    TrainConfig bad = t;
    bad.epochs = -1;
    CHECK(error_kind([&] { validate(bad); }) == ErrorKind::ConfigError);
    bad = t;
    bad.batch_size = 0;
    CHECK(error_kind([&] { validate(bad); }) == ErrorKind::ConfigError);
    bad = t;
    bad.learning_rate = 0;
    CHECK(error_kind([&] { validate(bad); }) == ErrorKind::ConfigError);
    CHECK(default_learning_rate(ModelKind::RecurrentBaseline) == 1e-3);
    CHECK(default_learning_rate(ModelKind::TransformerFinetune) == 2e-5);
}

TEST_CASE("zero epochs leaves the model untouched") {
    Fixture f;
    const auto before = f.model.params().snapshot();
    const TrainingRun run = train(f.model, f.train, f.val, quick(0));
    CHECK(run.history.empty());
    CHECK(run.best_epoch == 0);
    CHECK(f.model.params().snapshot() == before);

    // No data is needed when nothing is trained.
    CHECK_NOTHROW(train(f.model, {}, {}, quick(0)));
    CHECK(error_kind([&] { train(f.model, {}, f.val, quick(1)); }) == ErrorKind::EmptyDataset);
    CHECK(error_kind([&] { train(f.model, f.train, {}, quick(1)); }) == ErrorKind::EmptyDataset);
}

TEST_CASE("history bookkeeping and best epoch") {
    Fixture f;
    const TrainingRun run = train(f.model, f.train, f.val, quick(4));
    REQUIRE(run.history.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(run.history[i].epoch == i + 1);
    const auto& best = run.history[run.best_epoch - 1];
    CHECK(best.val_accuracy == run.best_val_accuracy);
    for (const auto& r : run.history) {
        CHECK(r.val_accuracy <= run.best_val_accuracy);
        if (r.epoch < run.best_epoch) CHECK(r.val_accuracy < run.best_val_accuracy);
        CHECK(r.train_accuracy >= 0.0);
        CHECK(r.train_accuracy <= 1.0);
    }
    // Best-validation weights are left in the model.
    CHECK(measure(f.model, f.val).accuracy == run.best_val_accuracy);
}

TEST_CASE("training is a pure function of its inputs") {
    Fixture a, b;
    const TrainingRun ra = train(a.model, a.train, a.val, quick(3));
    const TrainingRun rb = train(b.model, b.train, b.val, quick(3));
    same_history(ra, rb);
    CHECK(a.model.params().snapshot() == b.model.params().snapshot());

    Fixture c;
    TrainConfig other = quick(3);
    other.seed = 22;
    const TrainingRun rc = train(c.model, c.train, c.val, other);
    CHECK(rc.history[0].train_loss != ra.history[0].train_loss);
}

TEST_CASE("resume continues numbering and matches an unbroken run") {
    const auto dir = solvuln::testing::scratch_dir("resume");
    TrainConfig cfg = quick(4);
    cfg.restore_best = false;

    Fixture unbroken;
    TrainConfig seven = cfg;
    seven.epochs = 7;
    const TrainingRun full = train(unbroken.model, unbroken.train, unbroken.val, seven);

    Fixture first;
    const TrainingRun part = train(first.model, first.train, first.val, cfg, dir / "a");
    CHECK(part.last_checkpoint == (dir / "a" / "last").string());
    TrainConfig three = cfg;
    three.epochs = 3;
    ResumedRun resumed = resume(dir / "a" / "last", ModelKind::RecurrentBaseline, first.train, first.val, three, dir / "b");
    REQUIRE(resumed.run.history.size() == 7);
    for (int i = 0; i < 7; ++i) CHECK(resumed.run.history[i].epoch == i + 1);
    CHECK(std::abs(resumed.run.history.back().val_accuracy - full.history.back().val_accuracy) < 1e-6);
    same_history(resumed.run, full);
    CHECK(resumed.model.params().snapshot() == unbroken.model.params().snapshot());
    CHECK(resumed.run.best_epoch == full.best_epoch);

    CHECK(error_kind([&] {
              resume(dir / "a" / "last", ModelKind::TransformerFinetune, first.train, first.val, three);
          }) == ErrorKind::CheckpointError);
    CHECK(error_kind([&] {
              resume(dir / "a" / "best", ModelKind::RecurrentBaseline, first.train, first.val, three);
          }) == ErrorKind::CheckpointError);
    CHECK(error_kind([&] { resume(dir / "nowhere", ModelKind::RecurrentBaseline, first.train, first.val, three); }) ==
          ErrorKind::CheckpointError);
}

TEST_CASE("non-finite loss aborts with the partial history") {
    Fixture f;
    TrainConfig cfg = quick(5);
    cfg.learning_rate = 1e30;
    cfg.grad_clip_norm = 0;
    try {
        train(f.model, f.train, f.val, cfg);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.kind() == ErrorKind::DivergenceError);
        REQUIRE_FALSE(e.partial().history.empty());
        CHECK(e.partial().history.size() <= 5);
        const auto& last = e.partial().history.back();
        CHECK((!std::isfinite(last.train_loss) || !std::isfinite(last.val_loss)));
    }
}

TEST_CASE("early stopping halts once validation stops improving") {
    Fixture f;
    TrainConfig cfg = quick(30);
    cfg.early_stop_patience = 2;
    const TrainingRun run = train(f.model, f.train, f.val, cfg);
    if (run.stopped_early) {
        CHECK(static_cast<int>(run.history.size()) == run.best_epoch + 2);
    } else {
        CHECK(run.history.size() == 30);
    }
}

TEST_CASE("class weighting changes only the loss") {
    Fixture a, b;
    TrainConfig weighted = quick(1);
    weighted.class_weighting = true;
    // Balanced data gives unit weights, so unbalance it first.
    a.train.inputs.resize(22);
    a.train.labels.resize(22);
    b.train.inputs.resize(22);
    b.train.labels.resize(22);
    const auto inputs = a.train.inputs;
    const TrainingRun rw = train(a.model, a.train, a.val, weighted);
    const TrainingRun ru = train(b.model, b.train, b.val, quick(1));
    CHECK(a.train.inputs == inputs);
    CHECK(rw.history[0].train_loss != ru.history[0].train_loss);
}

TEST_CASE("a small balanced set can be memorized") {
    const Corpus c = toy_corpus(4, 50);
    Classifier m = tiny_model(c);
    const EncodedDataset d = encode_dataset(m, c);
    TrainConfig cfg = quick(40);
    cfg.learning_rate = 1e-2;
    const TrainingRun run = train(m, d, d, cfg);
    for (std::size_t i = 1; i < 5; ++i) CHECK(run.history[i].train_loss <= run.history[i - 1].train_loss * 1.05);
    CHECK(run.best_val_accuracy == 1.0);
    CHECK(measure(m, d).accuracy == 1.0);
}
