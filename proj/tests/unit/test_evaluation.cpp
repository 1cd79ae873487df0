#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "solvuln/evaluation.hpp"
#include "solvuln/hash.hpp"
#include "solvuln/rng.hpp"
#include "solvuln/synthetic.hpp"
#include "support/helpers.hpp"
#include "support/metrics_oracle.hpp"

using namespace solvuln;
using solvuln::testing::error_kind;
using L = std::vector<Label>;

namespace {

constexpr Label DD = Label::DD, IO = Label::IO, RE = Label::RE, TD = Label::TD;

std::vector<int> codes(const L& v) {
    std::vector<int> out;
    for (Label l : v) out.push_back(encode(l));
    return out;
}

void check_against_oracle(const L& t, const L& p) {
    const EvaluationReport r = compute_metrics(t, p);
    const auto o = solvuln::testing::oracle_metrics(codes(t), codes(p));
    CHECK(std::abs(r.accuracy - o.accuracy) < 1e-9);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(std::abs(r.per_class[k].precision - o.per_class[k].precision) < 1e-9);
        CHECK(std::abs(r.per_class[k].recall - o.per_class[k].recall) < 1e-9);
        CHECK(std::abs(r.per_class[k].f1 - o.per_class[k].f1) < 1e-9);
        CHECK(static_cast<double>(r.per_class[k].support) == o.per_class[k].support);
        for (std::size_t b = 0; b < 4; ++b) CHECK(r.confusion.counts[k][b] == o.cells[k][b]);
    }
    for (auto [mine, theirs] : {std::pair{r.macro_avg, o.macro}, std::pair{r.weighted_avg, o.weighted}}) {
        CHECK(std::abs(mine.precision - theirs.precision) < 1e-9);
        CHECK(std::abs(mine.recall - theirs.recall) < 1e-9);
        CHECK(std::abs(mine.f1 - theirs.f1) < 1e-9);
        CHECK(static_cast<double>(mine.support) == theirs.support);
    }
    CHECK(r.weighted_avg.recall == r.accuracy);
    CHECK(r.confusion.total() == static_cast<std::int64_t>(t.size()));
}

L random_labels(Rng& rng, std::size_t n) {
    L out(n);
    for (auto& l : out) l = kAllLabels[rng.below(4)];
    return out;
}

EvaluationReport sample_report() {
    EvaluationReport r = compute_metrics(L{RE, RE, IO, TD, DD, RE, TD}, L{RE, TD, IO, TD, RE, RE, IO});
    r.test_loss = 0.4321;
    r.split_hash = "abc";
    r.checkpoint_hash = "def";
    return r;
}

TrainingRun fake_run(int epochs) {
    TrainingRun run;
    for (int e = 1; e <= epochs; ++e) run.history.push_back({e, 1.0 / e, 0.5 + e / 100.0, 1.1 / e, 0.4 + e / 100.0, 0.1});
    run.best_epoch = epochs;
    run.best_val_accuracy = run.history.empty() ? 0 : run.history.back().val_accuracy;
    return run;
}

}  // namespace

TEST_CASE("perfect predictions score 1 everywhere") {
    const L y{DD, IO, RE, TD, RE, RE, IO};
    const EvaluationReport r = compute_metrics(y, y);
    CHECK(r.accuracy == 1.0);
    for (const auto& c : r.per_class) {
        CHECK(c.precision == 1.0);
        CHECK(c.recall == 1.0);
        CHECK(c.f1 == 1.0);
    }
    const ConfusionMatrix m = confusion(y, y);
    CHECK(m.counts[0][0] == 1);
    CHECK(m.counts[1][1] == 2);
    CHECK(m.counts[2][2] == 3);
    CHECK(m.counts[3][3] == 1);
    CHECK(m.trace() == m.total());
}

TEST_CASE("four-item hand example") {
    const EvaluationReport r = compute_metrics(L{RE, RE, IO, TD}, L{RE, IO, IO, TD});
    CHECK(r.accuracy == 0.75);
    const auto& re = r.per_class[index_of(RE)];
    CHECK(re.precision == 1.0);
    CHECK(re.recall == 0.5);
    CHECK(re.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    const auto& io = r.per_class[index_of(IO)];
    CHECK(io.precision == 0.5);
    CHECK(io.recall == 1.0);
    CHECK(io.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    const auto& td = r.per_class[index_of(TD)];
    CHECK(td.precision == 1.0);
    CHECK(td.recall == 1.0);
    CHECK(td.f1 == 1.0);
    const auto& dd = r.per_class[index_of(DD)];
    CHECK(dd.support == 0);
    CHECK(dd.precision == 0.0);
    CHECK(dd.f1 == 0.0);
    CHECK(r.macro_avg.support == 4);
    CHECK(r.weighted_avg.recall == 0.75);
}

TEST_CASE("six-item hand example with two RE to TD errors") {
    const ConfusionMatrix m = confusion(L{RE, RE, RE, TD, IO, DD}, L{TD, RE, TD, TD, IO, DD});
    CHECK(m.counts[index_of(RE)][index_of(TD)] == 2);
    CHECK(m.counts[index_of(RE)][index_of(RE)] == 1);
    CHECK(m.row_sum(index_of(RE)) == 3);
    CHECK(m.col_sum(index_of(TD)) == 3);
    CHECK(m.trace() == 4);
}

TEST_CASE("metric input errors") {
    CHECK(error_kind([] { compute_metrics(L{RE}, L{RE, IO}); }) == ErrorKind::LengthMismatch);
    CHECK(error_kind([] { compute_metrics(L{}, L{}); }) == ErrorKind::EmptyInput);
    CHECK(error_kind([] { confusion(L{RE, RE}, L{RE}); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("metrics agree with the counting oracle") {
    Rng rng(2024);
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 1 + rng.below(200);
        const L t = random_labels(rng, n);
        L p = t;
        // Mix of near-perfect and random predictors.
        const double flip = rng.uniform();
        for (auto& l : p)
            if (rng.chance(flip)) l = kAllLabels[rng.below(4)];
        check_against_oracle(t, p);
    }
}

TEST_CASE("metrics are invariant under joint permutation") {
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        const std::size_t n = 1 + rng.below(120);
        L t = random_labels(rng, n), p = random_labels(rng, n);
        const EvaluationReport before = compute_metrics(t, p);
        std::vector<std::size_t> order(n);
        for (std::size_t k = 0; k < n; ++k) order[k] = k;
        rng.shuffle(order);
        L t2(n), p2(n);
        for (std::size_t k = 0; k < n; ++k) {
            t2[k] = t[order[k]];
            p2[k] = p[order[k]];
        }
        const EvaluationReport after = compute_metrics(t2, p2);
        CHECK(after.confusion == before.confusion);
        CHECK(after.accuracy == before.accuracy);
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(after.per_class[k] == before.per_class[k]);
        }
        CHECK(std::abs(after.macro_avg.f1 - before.macro_avg.f1) < 1e-12);
        CHECK(std::abs(after.weighted_avg.f1 - before.weighted_avg.f1) < 1e-12);
        CHECK(after.weighted_avg.recall == before.weighted_avg.recall);
    }
}

TEST_CASE("evaluate scores a model and is deterministic") {
    Corpus corpus;
    for (std::size_t i = 0; i < 40; ++i) {
        const Label l = kAllLabels[i % 4];
        corpus.add({"e" + std::to_string(i), generate_contract_source(l, 300 + i), l, encode(l), i});
    }
    std::vector<TokenSequence> seqs;
    for (const auto& c : corpus) seqs.push_back(TextEncoder::tokens_for(TokenizerKind::Lexeme, c.source));
    ModelConfig cfg;
    cfg.embed_dim = 8;
    cfg.conv_filters = 8;
    cfg.recurrent_units = 8;
    cfg.attention_dim = 8;
    cfg.max_len = 64;
    const Classifier m = build_recurrent_classifier(cfg, build_vocab(seqs, 1000, 1));
    const EncodedDataset data = encode_dataset(m, corpus);

    const EvaluationReport a = evaluate(m, data);
    const EvaluationReport b = evaluate(m, data);
    CHECK(a == b);
    REQUIRE(a.test_loss.has_value());
    CHECK(*a.test_loss == doctest::Approx(std::log(4.0)).epsilon(0.1));
    CHECK(a.accuracy >= 0.1);
    CHECK(a.accuracy <= 0.45);
    for (const auto& c : a.per_class) CHECK(c.support == 10);
    CHECK(measure(m, data).loss == doctest::Approx(*a.test_loss).epsilon(1e-12));

    CHECK(error_kind([&] { evaluate(m, EncodedDataset{}); }) == ErrorKind::EmptyDataset);
}

TEST_CASE("report files round-trip and have the expected shape") {
    const auto dir = solvuln::testing::scratch_dir("report");
    const EvaluationReport r = sample_report();
    emit_report(r, fake_run(20), dir);
    CHECK(load_report(dir / "report.json") == r);

    std::istringstream curves(read_file(dir / "curves.csv"));
    std::string line;
    std::getline(curves, line);
    CHECK(line == "epoch,train_loss,train_acc,val_loss,val_acc");
    int rows = 0;
    while (std::getline(curves, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 4);
    }
    CHECK(rows == 20);

    CHECK(read_file(dir / "confusion.csv").rfind("true\\pred,DD,IO,RE,TD\n", 0) == 0);
    const auto j = nlohmann::json::parse(read_file(dir / "report.json"));
    CHECK(j["schema"] == "solvuln.report/v1");
    CHECK(j["labels"] == nlohmann::json({"DD", "IO", "RE", "TD"}));

    EvaluationReport no_loss = r;
    no_loss.test_loss.reset();
    CHECK(report_from_json(report_to_json(no_loss)) == no_loss);
    CHECK(error_kind([] { report_from_json(nlohmann::json{{"schema", "other"}}); }) == ErrorKind::SchemaError);
}

TEST_CASE("a zero-support class prints as zeros") {
    const EvaluationReport r = compute_metrics(L{RE, IO, TD}, L{RE, IO, IO});
    const std::string table = format_report_table(r);
    CHECK(table.find("DD              0.00      0.00      0.00         0") != std::string::npos);
    CHECK(table.find("macro avg") != std::string::npos);
    CHECK(table.find("weighted avg") != std::string::npos);
}

TEST_CASE("comparison needs two reports on one split") {
    EvaluationReport a = sample_report(), b = sample_report(), c = sample_report();
    b.accuracy = 0.9;
    c.test_loss = 0.1;
    const Comparison cmp = compare({{"lstm", a}, {"distil", b}, {"base", c}});
    CHECK(cmp.names == std::vector<std::string>{"lstm", "distil", "base"});
    const auto acc = std::find(cmp.metrics.begin(), cmp.metrics.end(), "accuracy") - cmp.metrics.begin();
    CHECK(cmp.best[acc] == 1);
    const auto loss = std::find(cmp.metrics.begin(), cmp.metrics.end(), "test loss") - cmp.metrics.begin();
    CHECK(cmp.best[loss] == 2);
    CHECK(format_comparison(cmp).find("RE f1") != std::string::npos);
    CHECK(comparison_to_json(cmp)["models"].size() == 3);

    CHECK(error_kind([&] { compare({{"only", a}}); }) == ErrorKind::InvalidArgument);
    b.split_hash = "other";
    CHECK(error_kind([&] { compare({{"a", a}, {"b", b}}); }) == ErrorKind::SplitMismatch);
}
