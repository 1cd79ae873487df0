#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "solvuln/label.hpp"

namespace solvuln {

struct Contract {
    std::string filename;
    std::string source;
    Label label = Label::RE;
    int encoded_label = encode(Label::RE);
    /// Zero-based data-row index in the originating file. Together with the
    /// filename it identifies a contract, since filenames may repeat.
    std::size_t row = 0;

    friend bool operator==(const Contract&, const Contract&) = default;
};

using ClassCounts = std::array<std::size_t, kNumClasses>;

class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<Contract> contracts);

    void add(Contract contract);

    const std::vector<Contract>& contracts() const noexcept { return contracts_; }
    const ClassCounts& class_counts() const noexcept { return counts_; }
    std::size_t count(Label label) const noexcept { return counts_[index_of(label)]; }
    std::size_t size() const noexcept { return contracts_.size(); }
    bool empty() const noexcept { return contracts_.empty(); }

    auto begin() const noexcept { return contracts_.begin(); }
    auto end() const noexcept { return contracts_.end(); }

    friend bool operator==(const Corpus&, const Corpus&) = default;

private:
    std::vector<Contract> contracts_;
    ClassCounts counts_{};
};

/// Reads the labeled dataset table (header `filename,code,label,encoded_label`,
/// RFC 4180 quoting, UTF-8). Extra columns such as a leading row index are
/// ignored. Errors name the offending file line.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(const std::string& text, const std::string& origin = "<memory>");

/// Writes exactly the four dataset columns; load_corpus reproduces the corpus.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string format_corpus(const Corpus& corpus);

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;

    friend bool operator==(const SplitRatios&, const SplitRatios&) = default;
};

enum class Partition { Train, Val, Test };
std::string_view to_string(Partition partition) noexcept;
Partition parse_partition(std::string_view text);

struct DatasetSplit {
    Corpus train;
    Corpus val;
    Corpus test;
    std::uint64_t seed = 0;
    SplitRatios ratios;
};

/// Stratified partition. Per class, the test share is round-half-up of
/// count * test fraction, then val likewise, remainder to train; when the
/// rounded totals drift from the rounded overall size, the largest class that
/// can absorb a unit without leaving the < 1 band is adjusted. Every class
/// appears in every partition with a nonzero fraction.
DatasetSplit stratified_split(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed);

/// Per-class partition sizes the rule above produces, without assigning rows.
struct PartitionSizes {
    ClassCounts train{};
    ClassCounts val{};
    ClassCounts test{};
};
PartitionSizes partition_sizes(const ClassCounts& counts, const SplitRatios& ratios);

/// Split manifest: JSON listing (filename, row, partition) plus seed/ratios.
std::string format_split_manifest(const DatasetSplit& split);
void save_split_manifest(const DatasetSplit& split, const std::filesystem::path& path);

struct ManifestEntry {
    std::string filename;
    std::size_t row = 0;
    Partition partition = Partition::Train;
};
struct SplitManifest {
    std::uint64_t seed = 0;
    SplitRatios ratios;
    std::vector<ManifestEntry> entries;
};
SplitManifest load_split_manifest(const std::filesystem::path& path);

/// Rebuilds a split from a corpus and a previously written manifest.
DatasetSplit apply_split_manifest(const Corpus& corpus, const SplitManifest& manifest);

/// SHA-256 of the canonical manifest text; identifies a split across runs.
std::string split_hash(const DatasetSplit& split);

}  // namespace solvuln
