#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "solvuln/label.hpp"
#include "solvuln/training.hpp"

namespace solvuln {

/// Rows are the true class, columns the predicted class, both in DD, IO, RE, TD order.
struct ConfusionMatrix {
    std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> counts{};

    std::int64_t total() const noexcept;
    std::int64_t row_sum(std::size_t k) const noexcept;
    std::int64_t col_sum(std::size_t k) const noexcept;
    std::int64_t trace() const noexcept;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct ClassMetrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::int64_t support = 0;

    friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

struct EvaluationReport {
    double accuracy = 0;
    std::array<ClassMetrics, kNumClasses> per_class{};
    ClassMetrics macro_avg;
    ClassMetrics weighted_avg;  // support equals the total, like macro_avg
    ConfusionMatrix confusion;
    std::optional<double> test_loss;
    std::string split_hash;
    std::string checkpoint_hash;

    friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

/// Undefined precision, recall or F1 (zero denominator) is reported as 0.
EvaluationReport compute_metrics(std::span<const Label> y_true, std::span<const Label> y_pred);
ConfusionMatrix confusion(std::span<const Label> y_true, std::span<const Label> y_pred);

/// Metrics plus mean cross-entropy; checkpoint_hash is copied from the model.
EvaluationReport evaluate(const Classifier& model, const EncodedDataset& test);

nlohmann::json report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const nlohmann::json& j);

/// Per-class rows, accuracy, macro and weighted averages.
std::string format_report_table(const EvaluationReport& report, const std::string& title = {});

std::string format_curves_csv(const TrainingRun& run);
std::string format_confusion_csv(const ConfusionMatrix& matrix);

/// Writes report.json, report.txt, curves.csv and confusion.csv into `dest`.
void emit_report(const EvaluationReport& report, const TrainingRun& run, const std::filesystem::path& dest);
EvaluationReport load_report(const std::filesystem::path& report_json);

struct NamedReport {
    std::string name;
    EvaluationReport report;
};

struct Comparison {
    std::vector<std::string> names;
    std::vector<std::string> metrics;           // row labels, e.g. "RE f1"
    std::vector<std::vector<double>> values;    // values[metric][model]
    std::vector<std::size_t> best;              // best model index per metric
    std::string split_hash;
};

/// Needs at least two reports sharing one split hash (SplitMismatch otherwise).
Comparison compare(const std::vector<NamedReport>& reports);
std::string format_comparison(const Comparison& comparison);
nlohmann::json comparison_to_json(const Comparison& comparison);

}  // namespace solvuln
