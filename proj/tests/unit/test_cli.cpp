#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "solvuln/corpus.hpp"
#include "solvuln/hash.hpp"
#include "solvuln/pipeline.hpp"
#include "solvuln/synthetic.hpp"
#include "support/helpers.hpp"

using namespace solvuln;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
};

Outcome run_cli(const std::string& args) {
    const std::string cmd = std::string(SOLVULN_CLI) + " " + args + " 2>/dev/null";
    Outcome r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::vector<json> json_lines(const std::string& text) {
    std::vector<json> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(json::parse(line));
    return out;
}

fs::path small_dataset(const fs::path& dir) {
    SyntheticOptions o;
    o.counts = {10, 10, 10, 10};
    o.seed = 5;
    o.label_noise = 0.0;
    save_corpus(generate_synthetic_corpus(o), dir / "small.csv");
    return dir / "small.csv";
}

fs::path write_config(const fs::path& dir, const std::string& name, int epochs, std::uint64_t split_seed,
                      double lr = 3e-3) {
    RunConfig cfg;
    cfg.dataset = "small.csv";
    cfg.name = name;
    cfg.split_seed = split_seed;
    cfg.preprocess.min_freq = 1;
    cfg.preprocess.max_len = 96;
    cfg.model.embed_dim = 12;
    cfg.model.conv_filters = 12;
    cfg.model.conv_kernel = 3;
    cfg.model.recurrent_units = 8;
    cfg.model.attention_dim = 8;
    cfg.train.epochs = epochs;
    cfg.train.batch_size = 4;
    cfg.train.learning_rate = lr;
    cfg.output_dir = (dir / "runs").string();
    const fs::path path = dir / (name + ".json");
    write_file(path, json(cfg).dump(2));
    return path;
}

}  // namespace

TEST_CASE("ingest summarizes a hand fixture") {
    const auto dir = solvuln::testing::scratch_dir("cli_ingest");
    write_file(dir / "four.csv",
               "filename,code,label,encoded_label\n"
               "a.sol,\"contract A { function f() { msg.sender.call.value(1)(); } }\",RE,2\n"
               "b.sol,\"contract B { uint8 x; function g() { x += 1; } }\",IO,1\n"
               "c.sol,\"contract C { function h() { require(now > 1); } }\",TD,3\n"
               "d.sol,\"contract D { function k(address t) { t.delegatecall(msg.data); } }\",DD,0\n");
    const Outcome r = run_cli("ingest " + (dir / "four.csv").string() + " --format structured --out " +
                              (dir / "summary").string());
    CHECK(r.code == 0);
    const json j = json::parse(r.out);
    CHECK(j["total"] == 4);
    for (const char* l : {"DD", "IO", "RE", "TD"}) CHECK(j["class_counts"][l] == 1);
    CHECK(fs::exists(dir / "summary" / "ingest_summary.json"));

    const Outcome synth = run_cli("ingest synthetic --format structured");
    CHECK(synth.code == 0);
    const json s = json::parse(synth.out);
    CHECK(s["total"] == 2217);
    CHECK(s["synthetic"] == true);
    CHECK(s["class_counts"]["RE"] == 1218);
}

TEST_CASE("ingest failures exit 2 without writing outputs") {
    const auto dir = solvuln::testing::scratch_dir("cli_ingest_bad");
    CHECK(run_cli("ingest " + (dir / "nope.csv").string() + " --out " + (dir / "out").string()).code == 2);
    CHECK_FALSE(fs::exists(dir / "out"));
    write_file(dir / "bad.csv", "filename,code,label,encoded_label\na,x,ZZ,2\n");
    CHECK(run_cli("ingest " + (dir / "bad.csv").string()).code == 2);
    CHECK(run_cli("frobnicate").code == 2);
}

TEST_CASE("split prints the partition sizes") {
    const Outcome r = run_cli("split synthetic --seed 42 --format structured");
    CHECK(r.code == 0);
    const json j = json::parse(r.out);
    CHECK(j["partitions"]["test"]["total"] == 222);
    CHECK(j["partitions"]["test"]["class_counts"]["DD"] == 10);
}

TEST_CASE("train, evaluate, scan and compare") {
    const auto dir = solvuln::testing::scratch_dir("cli_pipeline");
    small_dataset(dir);

    // Zero epochs: empty curves, untrained model evaluated.
    const auto cfg0 = write_config(dir, "zero", 0, 1);
    REQUIRE(run_cli("train --config " + cfg0.string()).code == 0);
    const fs::path zero = dir / "runs" / "zero";
    for (const char* f : {"config.json", "split.json", "curves.csv", "report.json", "report.txt", "confusion.csv",
                          "run_manifest.json", "model/manifest.json"})
        CHECK(fs::exists(zero / f));
    CHECK(read_file(zero / "curves.csv") == "epoch,train_loss,train_acc,val_loss,val_acc\n");

    // Same config twice gives identical split manifests and reports.
    const auto cfg = write_config(dir, "one", 2, 1);
    REQUIRE(run_cli("train --config " + cfg.string() + " --out " + (dir / "r1").string()).code == 0);
    REQUIRE(run_cli("train --config " + cfg.string() + " --out " + (dir / "r2").string()).code == 0);
    CHECK(read_file(dir / "r1" / "split.json") == read_file(dir / "r2" / "split.json"));
    CHECK(read_file(dir / "r1" / "report.json") == read_file(dir / "r2" / "report.json"));
    const json manifest = json::parse(read_file(dir / "r1" / "run_manifest.json"));
    CHECK(manifest["status"] == "completed");
    CHECK(manifest["split_hash"].get<std::string>().size() == 64);
    CHECK(manifest["seeds"]["split"] == 1);

    // evaluate reproduces the stored report.
    const Outcome ev = run_cli("evaluate " + (dir / "r1").string() + " --format structured");
    CHECK(ev.code == 0);
    CHECK(report_from_json(json::parse(ev.out)) == load_report(dir / "r1" / "report.json"));

    // compare: same split works, a different split is refused.
    CHECK(run_cli("compare " + (dir / "r1").string() + " " + zero.string()).code == 0);
    const auto other = write_config(dir, "other", 0, 2);
    REQUIRE(run_cli("train --config " + other.string()).code == 0);
    CHECK(run_cli("compare " + (dir / "r1").string() + " " + (dir / "runs" / "other").string()).code == 3);
    CHECK(run_cli("compare " + (dir / "r1").string()).code == 2);

    // scan: three contracts and one empty file.
    fs::create_directories(dir / "scan");
    for (int i = 0; i < 3; ++i)
        write_file(dir / "scan" / ("c" + std::to_string(i) + ".sol"), generate_contract_source(kAllLabels[i], 77 + i));
    write_file(dir / "scan" / "empty.sol", "  // nothing\n");
    const Outcome sc = run_cli("scan --checkpoint " + (dir / "r1").string() + " " + (dir / "scan").string() +
                               " --format structured");
    CHECK(sc.code == 2);
    const auto rows = json_lines(sc.out);
    REQUIRE(rows.size() == 4);
    int scored = 0;
    for (const auto& row : rows) {
        if (row.contains("error")) {
            CHECK(row["file"].get<std::string>().find("empty.sol") != std::string::npos);
            continue;
        }
        ++scored;
        double total = 0;
        for (auto& [k, v] : row["probabilities"].items()) total += v.get<double>();
        CHECK(std::abs(total - 1.0) < 1e-6);
        const std::string label = row["label"];
        CHECK((label == "RE" || label == "IO" || label == "TD" || label == "DD"));
    }
    CHECK(scored == 3);
    // Sorted by file name.
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1]["file"] < rows[i]["file"]);

    fs::remove(dir / "scan" / "empty.sol");
    CHECK(run_cli("scan --checkpoint " + (dir / "r1" / "model").string() + " " + (dir / "scan").string()).code == 0);
    CHECK(run_cli("scan --checkpoint " + (dir / "missing").string() + " " + (dir / "scan").string()).code == 2);
}

TEST_CASE("a contract the model memorized is scanned as its training label") {
    const auto dir = solvuln::testing::scratch_dir("cli_overfit");
    Corpus c;
    for (std::size_t i = 0; i < 16; ++i) {
        const Label l = kAllLabels[i % 4];
        c.add({"m" + std::to_string(i) + ".sol", generate_contract_source(l, 40 + i, 0.0), l, encode(l), i});
    }
    save_corpus(c, dir / "small.csv");
    const auto cfg = write_config(dir, "fit", 40, 3, 1e-2);
    json j = json::parse(read_file(cfg));
    j["split"] = {{"train", 0.5}, {"val", 0.25}, {"test", 0.25}, {"seed", 3}};
    write_file(cfg, j.dump());
    REQUIRE(run_cli("train --config " + cfg.string()).code == 0);

    const DatasetSplit split = apply_split_manifest(c, load_split_manifest(dir / "runs" / "fit" / "split.json"));
    const Classifier model = load_checkpoint(dir / "runs" / "fit" / "checkpoints" / "last");
    for (const auto& contract : split.train) {
        const fs::path f = dir / contract.filename;
        write_file(f, contract.source);
        const auto res = scan(model, f);
        REQUIRE(res.size() == 1);
        CHECK(res[0].label == contract.label);
    }
}

TEST_CASE("bad configs are input errors") {
    const auto dir = solvuln::testing::scratch_dir("cli_badcfg");
    write_file(dir / "bad.json", "{\"train\": {\"epochs\": -3}}");
    CHECK(run_cli("train --config " + (dir / "bad.json").string()).code == 2);
    write_file(dir / "broken.json", "{not json");
    CHECK(run_cli("train --config " + (dir / "broken.json").string()).code == 2);
    CHECK(run_cli("train --config " + (dir / "absent.json").string()).code == 2);
    write_file(dir / "nodata.json", "{\"dataset\": \"missing.csv\", \"train\": {\"epochs\": 1}}");
    CHECK(run_cli("train --config " + (dir / "nodata.json").string() + " --out " + (dir / "o").string()).code == 2);
}
