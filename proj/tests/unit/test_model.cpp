#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <numeric>

#include <nlohmann/json.hpp>

#include "solvuln/hash.hpp"
#include "solvuln/model.hpp"
#include "solvuln/synthetic.hpp"
#include "support/gradcheck.hpp"
#include "support/helpers.hpp"

using namespace solvuln;
using solvuln::testing::error_kind;

namespace {

ModelConfig small_recurrent(int max_len = 512) {
    ModelConfig c;
    c.kind = ModelKind::RecurrentBaseline;
    c.embed_dim = 16;
    c.conv_filters = 12;
    c.conv_kernel = 3;
    c.recurrent_units = 8;
    c.attention_dim = 10;
    c.max_len = max_len;
    c.seed = 5;
    return c;
}

ModelConfig encoder_config(const std::string& name, int positions = 64) {
    ModelConfig c;
    c.kind = ModelKind::TransformerFinetune;
    c.checkpoint_name = name;
    c.max_positions = positions;
    c.seed = 9;
    return c;
}

std::vector<TokenSequence> contract_tokens(TokenizerKind kind, int n) {
    std::vector<TokenSequence> out;
    for (int i = 0; i < n; ++i)
        out.push_back(TextEncoder::tokens_for(kind, generate_contract_source(kAllLabels[i % 4], 100 + i)));
    return out;
}

Vocab lexeme_vocab() { return build_vocab(contract_tokens(TokenizerKind::Lexeme, 16), 500, 1); }
Vocab subword_vocab() {
    return build_vocab(contract_tokens(TokenizerKind::Subword, 16), 500, 1, TextEncoder::specials_for(TokenizerKind::Subword));
}

std::vector<EncodedSequence> encode_contracts(const Classifier& m, int n, std::uint64_t seed0 = 500) {
    std::vector<EncodedSequence> out;
    for (int i = 0; i < n; ++i) out.push_back(m.encode(generate_contract_source(kAllLabels[i % 4], seed0 + i)));
    return out;
}

void check_row_stochastic(const ProbabilityMatrix& p) {
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        CHECK(std::abs(p.row(r).sum() - 1.0) < 1e-5);
        CHECK(p.row(r).minCoeff() >= 0.0);
    }
}

}  // namespace

TEST_CASE("model config validation and JSON round-trip") {
    ModelConfig c = small_recurrent();
    CHECK_NOTHROW(validate(c));
    const ModelConfig back = nlohmann::json(c).get<ModelConfig>();
    CHECK(back == c);

    for (auto mutate : std::vector<void (*)(ModelConfig&)>{
             [](ModelConfig& m) { m.embed_dim = 0; }, [](ModelConfig& m) { m.conv_filters = -1; },
             [](ModelConfig& m) { m.recurrent_units = 0; }, [](ModelConfig& m) { m.num_classes = 3; },
             [](ModelConfig& m) { m.dropout = 1.0; }, [](ModelConfig& m) { m.max_len = 0; }}) {
        ModelConfig bad = small_recurrent();
        mutate(bad);
        CHECK(error_kind([&] { validate(bad); }) == ErrorKind::ConfigError);
    }
    CHECK(parse_model_kind("recurrent_baseline") == ModelKind::RecurrentBaseline);
    CHECK(parse_model_kind("transformer_finetune") == ModelKind::TransformerFinetune);
    CHECK(error_kind([] { parse_model_kind("cnn"); }) == ErrorKind::ConfigError);
}

TEST_CASE("recurrent classifier outputs a row-stochastic 8x4 matrix") {
    const Classifier m = build_recurrent_classifier(small_recurrent(), lexeme_vocab());
    const auto batch = encode_contracts(m, 8);
    for (const auto& s : batch) CHECK(s.ids.size() == 512);
    const ProbabilityMatrix p = m.predict_proba(batch);
    CHECK(p.rows() == 8);
    CHECK(p.cols() == 4);
    check_row_stochastic(p);
}

TEST_CASE("seeded builds are identical") {
    const Classifier a = build_recurrent_classifier(small_recurrent(), lexeme_vocab());
    const Classifier b = build_recurrent_classifier(small_recurrent(), lexeme_vocab());
    CHECK(a.parameter_count() == b.parameter_count());
    const auto batch = encode_contracts(a, 4);
    CHECK(a.predict_proba(batch) == b.predict_proba(batch));

    ModelConfig other = small_recurrent();
    other.seed = 6;
    const Classifier c = build_recurrent_classifier(other, lexeme_vocab());
    CHECK(c.parameter_count() == a.parameter_count());
    CHECK(c.predict_proba(batch) != a.predict_proba(batch));
}

TEST_CASE("attention weights form a distribution over real tokens") {
    const Classifier m = build_recurrent_classifier(small_recurrent(64), lexeme_vocab());
    for (const auto& seq : encode_contracts(m, 6)) {
        const auto w = m.attention_weights(seq);
        REQUIRE(w.size() == 64);
        double total = 0;
        for (std::size_t t = 0; t < w.size(); ++t) {
            CHECK(w[t] >= 0.0);
            if (t >= seq.true_length) CHECK(w[t] == 0.0);
            total += w[t];
        }
        CHECK(std::abs(total - 1.0) < 1e-5);
    }
    EncodedSequence shortie{std::vector<std::int32_t>(64, kPadId), 3};
    shortie.ids[0] = 5;
    shortie.ids[1] = 6;
    shortie.ids[2] = 7;
    const auto w = m.attention_weights(shortie);
    CHECK(std::abs(w[0] + w[1] + w[2] - 1.0) < 1e-6);
}

TEST_CASE("inference is deterministic and validates shapes") {
    const Classifier m = build_recurrent_classifier(small_recurrent(32), lexeme_vocab());
    const auto one = encode_contracts(m, 1).front();
    const std::vector<EncodedSequence> thrice{one, one, one};
    const ProbabilityMatrix p = predict_proba(m, thrice);
    CHECK(p.row(0) == p.row(1));
    CHECK(p.row(1) == p.row(2));

    EncodedSequence wrong = one;
    wrong.ids.resize(31);
    CHECK(error_kind([&] { m.predict_proba(std::vector<EncodedSequence>{wrong}); }) == ErrorKind::ShapeError);
    EncodedSequence outside = one;
    outside.ids[0] = 1 << 20;
    CHECK(error_kind([&] { m.predict_proba(std::vector<EncodedSequence>{outside}); }) == ErrorKind::ShapeError);

    const EncodedSequence empty{std::vector<std::int32_t>(32, kPadId), 0};
    check_row_stochastic(m.predict_proba(std::vector<EncodedSequence>{empty}));
}

TEST_CASE("encoder presets") {
    const Classifier distil = build_transformer_classifier(encoder_config("distil-encoder"), subword_vocab());
    const Classifier base = build_transformer_classifier(encoder_config("base-encoder"), subword_vocab());
    CHECK(distil.parameter_count() < base.parameter_count());
    CHECK(distil.config().layers < base.config().layers);

    const auto batch = encode_contracts(distil, 4);
    for (const auto& s : batch) {
        CHECK(s.ids.size() == 64);
        CHECK(s.ids[0] == distil.encoder()->vocab().id("[CLS]"));
    }
    const ProbabilityMatrix p = distil.predict_proba(batch);
    CHECK(p.rows() == 4);
    CHECK(p.cols() == 4);
    check_row_stochastic(p);

    // A contract longer than max_positions is cut, not rejected.
    std::string big = "contract Big {";
    for (int i = 0; i < 200; ++i) big += " uint256 v" + std::to_string(i) + ";";
    big += " }";
    const auto enc = distil.encode(big);
    CHECK(enc.ids.size() == 64);
    CHECK(enc.true_length == 64);
    check_row_stochastic(distil.predict_proba(std::vector<EncodedSequence>{enc}));

    CHECK(error_kind([] { build_transformer_classifier(encoder_config("distil-encoder")); }) == ErrorKind::ConfigError);
    CHECK(error_kind([] { build_transformer_classifier(encoder_config("no-such-encoder"), subword_vocab()); }) ==
          ErrorKind::CheckpointError);
}

TEST_CASE("recurrent gradients match finite differences") {
    nn::RecurrentDims dims;
    dims.vocab_size = 30;
    dims.embed_dim = 6;
    dims.conv_filters = 5;
    dims.conv_kernel = 3;
    dims.recurrent_units = 4;
    dims.attention_dim = 5;
    nn::RecurrentNet<double> net(dims, 77);
    const std::vector<std::int32_t> ids = {3, 7, 2, 29, 11, 11, 5, 8, 1, 0, 0, 0};
    const std::size_t len = 9;
    const auto result = solvuln::testing::gradient_check(net, ids, len, 2, 3, 1234, [&](const std::string& name) {
        std::vector<Eigen::Index> rows;
        if (name == "embedding")
            for (std::size_t i = 0; i < len; ++i) rows.push_back(ids[i]);
        return rows;
    });
    CHECK(result.samples.size() >= 20);
    for (const auto& s : result.samples) {
        INFO(s.param << "[" << s.index << "] analytic " << s.analytic << " numeric " << s.numeric);
        CHECK(s.rel_error < 1e-3);
    }
}

TEST_CASE("transformer gradients match finite differences") {
    nn::TransformerDims dims;
    dims.vocab_size = 25;
    dims.max_positions = 12;
    dims.d_model = 8;
    dims.heads = 2;
    dims.ff_dim = 12;
    dims.layers = 2;
    nn::TransformerNet<double> net(dims, 31);
    const std::vector<std::int32_t> ids = {2, 9, 4, 17, 24, 6, 3, 0, 0, 0, 0, 0};
    const std::size_t len = 7;
    const auto result = solvuln::testing::gradient_check(net, ids, len, 1, 2, 99, [&](const std::string& name) {
        std::vector<Eigen::Index> rows;
        if (name == "embeddings.token")
            for (std::size_t i = 0; i < len; ++i) rows.push_back(ids[i]);
        if (name == "embeddings.position")
            for (std::size_t i = 0; i < len; ++i) rows.push_back(static_cast<Eigen::Index>(i));
        return rows;
    });
    CHECK(result.samples.size() >= 20);
    for (const auto& s : result.samples) {
        INFO(s.param << "[" << s.index << "] analytic " << s.analytic << " numeric " << s.numeric);
        CHECK(s.rel_error < 1e-3);
    }
}

TEST_CASE("checkpoints reproduce predictions and detect corruption") {
    Classifier m = build_recurrent_classifier(small_recurrent(48), lexeme_vocab());
    const auto dir = solvuln::testing::scratch_dir("ckpt");
    const std::string hash = save_checkpoint(m, dir / "m");
    CHECK(hash.size() == 64);
    CHECK(m.checkpoint_hash == hash);

    const Classifier back = load_checkpoint(dir / "m");
    CHECK(back.checkpoint_hash == hash);
    CHECK(back.config() == m.config());
    CHECK(back.encoder()->vocab() == m.encoder()->vocab());
    const auto batch = encode_contracts(m, 5);
    CHECK(back.predict_proba(batch) == m.predict_proba(batch));

    Classifier again = load_checkpoint(dir / "m");
    CHECK(save_checkpoint(again, dir / "m2") == hash);

    write_file(dir / "m" / "weights.bin", read_file(dir / "m" / "weights.bin") + "x");
    CHECK(error_kind([&] { load_checkpoint(dir / "m"); }) == ErrorKind::CheckpointError);
    CHECK(error_kind([&] { load_checkpoint(dir / "missing"); }) == ErrorKind::CheckpointError);
}

TEST_CASE("encoder checkpoints load encoder weights and re-initialize the head") {
    Classifier pre = build_transformer_classifier(encoder_config("distil-encoder", 32), subword_vocab());
    const auto dir = solvuln::testing::scratch_dir("enc");
    save_checkpoint(pre, dir / "tiny-encoder");

    ModelConfig cfg = encoder_config((dir / "tiny-encoder").string(), 32);
    cfg.seed = 1234;
    const Classifier tuned = build_transformer_classifier(cfg);
    REQUIRE(tuned.params().size() == pre.params().size());
    for (std::size_t i = 0; i < pre.params().size(); ++i) {
        const auto& a = pre.params()[i];
        const auto& b = tuned.params()[i];
        CHECK(a.name == b.name);
        if (a.name.rfind("classifier.", 0) == 0) {
            if (a.name == "classifier.weight") CHECK(a.value != b.value);
        } else {
            CHECK(a.value == b.value);
        }
    }

    ::setenv(kCheckpointCacheEnv, dir.c_str(), 1);
    CHECK_NOTHROW(build_transformer_classifier(encoder_config("tiny-encoder", 32)));
    ::unsetenv(kCheckpointCacheEnv);
    CHECK(error_kind([] { build_transformer_classifier(encoder_config("tiny-encoder", 32)); }) ==
          ErrorKind::CheckpointError);

    Vocab other = lexeme_vocab();
    CHECK(error_kind([&] { build_transformer_classifier(cfg, other); }) == ErrorKind::VocabMismatch);

    // A tokenizer whose size disagrees with the embedding table.
    Vocab grown = pre.encoder()->vocab();
    grown.add("extra-piece", 1);
    grown.save(dir / "tiny-encoder" / "vocab.json");
    nlohmann::json manifest = nlohmann::json::parse(read_file(dir / "tiny-encoder" / "manifest.json"));
    manifest["content_hash"] = sha256_files(dir / "tiny-encoder", manifest["files"].get<std::vector<std::string>>());
    write_file(dir / "tiny-encoder" / "manifest.json", manifest.dump(2));
    CHECK(error_kind([&] { build_transformer_classifier(cfg); }) == ErrorKind::VocabMismatch);
}
