#include "solvuln/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "solvuln/errors.hpp"
#include "solvuln/hash.hpp"
#include "solvuln/rng.hpp"

namespace solvuln {

using nlohmann::json;

namespace {

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::optional<int> parse_int(std::string_view s) {
    std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    std::size_t i = (t[0] == '-' || t[0] == '+') ? 1 : 0;
    if (i == t.size()) return std::nullopt;
    for (std::size_t k = i; k < t.size(); ++k)
        if (!std::isdigit(static_cast<unsigned char>(t[k]))) return std::nullopt;
    if (t.size() > 9) return std::nullopt;
    return std::stoi(t);
}

std::string where(const std::string& origin, std::size_t line) {
    return origin + ":" + std::to_string(line);
}

long long round_half_up(double x) { return static_cast<long long>(std::floor(x + 0.5)); }

}  // namespace

Corpus::Corpus(std::vector<Contract> contracts) {
    contracts_.reserve(contracts.size());
    for (auto& c : contracts) add(std::move(c));
}

void Corpus::add(Contract contract) {
    if (contract.encoded_label != encode(contract.label)) {
        throw Error(ErrorKind::EncodingMismatch,
                    "contract '" + contract.filename + "' has encoded_label " +
                        std::to_string(contract.encoded_label) + " but label " +
                        std::string(to_string(contract.label)));
    }
    counts_[index_of(contract.label)] += 1;
    contracts_.push_back(std::move(contract));
}

Corpus parse_corpus(const std::string& text, const std::string& origin) {
    const csv::ParseResult parsed = csv::parse(text);
    if (parsed.unterminated_quote) {
        throw Error(ErrorKind::SchemaError,
                    where(origin, parsed.unterminated_line) + ": unterminated quoted field");
    }
    if (parsed.rows.empty()) throw Error(ErrorKind::MissingData, origin + ": file is empty");

    const csv::Row& header = parsed.rows.front();
    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < header.fields.size(); ++i) column.emplace(trim(header.fields[i]), i);

    std::array<std::size_t, 4> idx{};
    const std::array<const char*, 4> required{"filename", "code", "label", "encoded_label"};
    for (std::size_t k = 0; k < required.size(); ++k) {
        auto it = column.find(required[k]);
        if (it == column.end()) {
            throw Error(ErrorKind::SchemaError,
                        where(origin, header.line) + ": missing column '" + required[k] + "'");
        }
        idx[k] = it->second;
    }
    if (parsed.rows.size() == 1) throw Error(ErrorKind::MissingData, origin + ": no data rows");

    Corpus corpus;
    for (std::size_t r = 1; r < parsed.rows.size(); ++r) {
        const csv::Row& row = parsed.rows[r];
        if (row.fields.size() != header.fields.size()) {
            throw Error(ErrorKind::SchemaError,
                        where(origin, row.line) + ": expected " + std::to_string(header.fields.size()) +
                            " fields, found " + std::to_string(row.fields.size()));
        }
        Contract c;
        c.filename = row.fields[idx[0]];
        c.source = row.fields[idx[1]];
        c.row = r - 1;
        if (is_blank(c.source)) {
            throw Error(ErrorKind::MissingData, where(origin, row.line) + ": empty code field");
        }
        try {
            c.label = parse_label(trim(row.fields[idx[2]]));
        } catch (const Error& e) {
            throw Error(ErrorKind::LabelError,
                        where(origin, row.line) + ": unknown label '" + row.fields[idx[2]] + "'");
        }
        auto code = parse_int(row.fields[idx[3]]);
        if (!code) {
            throw Error(ErrorKind::SchemaError, where(origin, row.line) +
                                                    ": encoded_label is not an integer: '" +
                                                    row.fields[idx[3]] + "'");
        }
        if (*code != encode(c.label)) {
            throw Error(ErrorKind::EncodingMismatch,
                        where(origin, row.line) + ": encoded_label " + std::to_string(*code) +
                            " disagrees with label " + std::string(to_string(c.label)) + " (" +
                            std::to_string(encode(c.label)) + ")");
        }
        c.encoded_label = *code;
        corpus.add(std::move(c));
    }
    return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) {
        throw Error(ErrorKind::IOError, "dataset not found: " + path.string());
    }
    return parse_corpus(read_file(path), path.string());
}

std::string format_corpus(const Corpus& corpus) {
    std::string out = "filename,code,label,encoded_label\n";
    for (const Contract& c : corpus) {
        out += csv::quote(c.filename);
        out += ',';
        out += csv::quote(c.source);
        out += ',';
        out += to_string(c.label);
        out += ',';
        out += std::to_string(c.encoded_label);
        out += '\n';
    }
    return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    write_file(path, format_corpus(corpus));
}

std::string_view to_string(Partition partition) noexcept {
    switch (partition) {
        case Partition::Train: return "train";
        case Partition::Val: return "val";
        case Partition::Test: return "test";
    }
    return "?";
}

Partition parse_partition(std::string_view text) {
    if (text == "train") return Partition::Train;
    if (text == "val") return Partition::Val;
    if (text == "test") return Partition::Test;
    throw Error(ErrorKind::SchemaError, "unknown partition '" + std::string(text) + "'");
}

namespace {

void validate_ratios(const SplitRatios& r) {
    const bool nonneg = r.train >= 0 && r.val >= 0 && r.test >= 0;
    if (!nonneg || std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
        throw Error(ErrorKind::InvalidArgument,
                    "split ratios must be non-negative and sum to 1 (got " + std::to_string(r.train) +
                        ", " + std::to_string(r.val) + ", " + std::to_string(r.test) + ")");
    }
}

// Per-class share of one partition: round-half-up, then move single units on
// the largest eligible class until the sum matches the rounded overall size.
ClassCounts allocate(const ClassCounts& counts, double fraction) {
    ClassCounts out{};
    std::array<double, kNumClasses> exact{};
    std::size_t total = 0;
    long long sum = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        exact[k] = static_cast<double>(counts[k]) * fraction;
        out[k] = static_cast<std::size_t>(round_half_up(exact[k]));
        total += counts[k];
        sum += static_cast<long long>(out[k]);
    }
    const long long target = round_half_up(static_cast<double>(total) * fraction);
    while (sum != target) {
        const int step = sum > target ? -1 : 1;
        std::optional<std::size_t> best;
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            const double moved = static_cast<double>(out[k]) + step;
            if (moved < 0 || moved > static_cast<double>(counts[k])) continue;
            if (std::abs(moved - exact[k]) >= 1.0) continue;
            if (!best || counts[k] > counts[*best]) best = k;
        }
        if (!best) break;
        out[*best] = static_cast<std::size_t>(static_cast<long long>(out[*best]) + step);
        sum += step;
    }
    return out;
}

}  // namespace

PartitionSizes partition_sizes(const ClassCounts& counts, const SplitRatios& ratios) {
    validate_ratios(ratios);
    const int needed = (ratios.train > 0) + (ratios.val > 0) + (ratios.test > 0);
    for (Label label : kAllLabels) {
        const std::size_t n = counts[index_of(label)];
        if (n < static_cast<std::size_t>(needed)) {
            throw Error(ErrorKind::DegenerateClass,
                        "class " + std::string(to_string(label)) + " has " + std::to_string(n) +
                            " member(s) but must appear in " + std::to_string(needed) +
                            " partitions");
        }
    }

    PartitionSizes sizes;
    sizes.test = allocate(counts, ratios.test);
    sizes.val = allocate(counts, ratios.val);
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        const std::size_t n = counts[k];
        // Every nonzero partition gets at least one member of every class.
        if (ratios.test > 0 && sizes.test[k] == 0) sizes.test[k] = 1;
        if (ratios.val > 0 && sizes.val[k] == 0) sizes.val[k] = 1;
        if (ratios.test == 0) sizes.test[k] = 0;
        if (ratios.val == 0) sizes.val[k] = 0;
        while (sizes.test[k] + sizes.val[k] > n) {
            if (sizes.val[k] > (ratios.val > 0 ? 1u : 0u)) --sizes.val[k];
            else --sizes.test[k];
        }
        sizes.train[k] = n - sizes.test[k] - sizes.val[k];
        if (ratios.train > 0 && sizes.train[k] == 0) {
            if (sizes.val[k] > 1) --sizes.val[k];
            else --sizes.test[k];
            sizes.train[k] = 1;
        }
    }
    return sizes;
}

DatasetSplit stratified_split(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed) {
    const PartitionSizes sizes = partition_sizes(corpus.class_counts(), ratios);

    std::array<std::vector<std::size_t>, kNumClasses> members;
    for (std::size_t i = 0; i < corpus.size(); ++i)
        members[index_of(corpus.contracts()[i].label)].push_back(i);

    std::vector<Partition> assignment(corpus.size(), Partition::Train);
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        Rng rng(Rng::derive(seed, k));
        rng.shuffle(members[k]);
        std::size_t pos = 0;
        for (std::size_t t = 0; t < sizes.test[k]; ++t) assignment[members[k][pos++]] = Partition::Test;
        for (std::size_t t = 0; t < sizes.val[k]; ++t) assignment[members[k][pos++]] = Partition::Val;
    }

    DatasetSplit split;
    split.seed = seed;
    split.ratios = ratios;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const Contract& c = corpus.contracts()[i];
        switch (assignment[i]) {
            case Partition::Train: split.train.add(c); break;
            case Partition::Val: split.val.add(c); break;
            case Partition::Test: split.test.add(c); break;
        }
    }
    return split;
}

std::string format_split_manifest(const DatasetSplit& split) {
    json entries = json::array();
    std::vector<std::pair<const Contract*, Partition>> all;
    for (const auto& c : split.train) all.emplace_back(&c, Partition::Train);
    for (const auto& c : split.val) all.emplace_back(&c, Partition::Val);
    for (const auto& c : split.test) all.emplace_back(&c, Partition::Test);
    std::sort(all.begin(), all.end(),
              [](const auto& a, const auto& b) { return a.first->row < b.first->row; });
    for (const auto& [c, p] : all) {
        entries.push_back({{"filename", c->filename}, {"row", c->row}, {"partition", to_string(p)}});
    }
    json doc = {
        {"schema", "solvuln.split/v1"},
        {"seed", split.seed},
        {"ratios", {split.ratios.train, split.ratios.val, split.ratios.test}},
        {"entries", std::move(entries)},
    };
    return doc.dump(1) + "\n";
}

void save_split_manifest(const DatasetSplit& split, const std::filesystem::path& path) {
    write_file(path, format_split_manifest(split));
}

SplitManifest load_split_manifest(const std::filesystem::path& path) {
    SplitManifest m;
    try {
        const json doc = json::parse(read_file(path));
        if (doc.at("schema") != "solvuln.split/v1") {
            throw Error(ErrorKind::SchemaError, "unsupported split manifest schema");
        }
        m.seed = doc.at("seed").get<std::uint64_t>();
        const auto& r = doc.at("ratios");
        m.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
        for (const auto& e : doc.at("entries")) {
            m.entries.push_back({e.at("filename").get<std::string>(), e.at("row").get<std::size_t>(),
                                 parse_partition(e.at("partition").get<std::string>())});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::SchemaError, path.string() + ": " + e.what());
    }
    return m;
}

DatasetSplit apply_split_manifest(const Corpus& corpus, const SplitManifest& manifest) {
    std::map<std::size_t, const ManifestEntry*> by_row;
    for (const auto& e : manifest.entries) by_row[e.row] = &e;
    if (by_row.size() != corpus.size()) {
        throw Error(ErrorKind::SchemaError, "split manifest lists " + std::to_string(by_row.size()) +
                                                " rows but corpus has " +
                                                std::to_string(corpus.size()));
    }
    DatasetSplit split;
    split.seed = manifest.seed;
    split.ratios = manifest.ratios;
    for (const Contract& c : corpus) {
        auto it = by_row.find(c.row);
        if (it == by_row.end() || it->second->filename != c.filename) {
            throw Error(ErrorKind::SchemaError,
                        "split manifest does not match corpus at row " + std::to_string(c.row));
        }
        switch (it->second->partition) {
            case Partition::Train: split.train.add(c); break;
            case Partition::Val: split.val.add(c); break;
            case Partition::Test: split.test.add(c); break;
        }
    }
    return split;
}

std::string split_hash(const DatasetSplit& split) { return sha256_hex(format_split_manifest(split)); }

}  // namespace solvuln
