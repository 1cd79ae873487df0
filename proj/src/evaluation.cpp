#include "solvuln/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "solvuln/hash.hpp"

namespace solvuln {

using nlohmann::json;

std::int64_t ConfusionMatrix::total() const noexcept {
    std::int64_t t = 0;
    for (const auto& row : counts)
        for (auto c : row) t += c;
    return t;
}

std::int64_t ConfusionMatrix::row_sum(std::size_t k) const noexcept {
    std::int64_t t = 0;
    for (auto c : counts[k]) t += c;
    return t;
}

std::int64_t ConfusionMatrix::col_sum(std::size_t k) const noexcept {
    std::int64_t t = 0;
    for (const auto& row : counts) t += row[k];
    return t;
}

std::int64_t ConfusionMatrix::trace() const noexcept {
    std::int64_t t = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) t += counts[k][k];
    return t;
}

ConfusionMatrix confusion(std::span<const Label> y_true, std::span<const Label> y_pred) {
    if (y_true.size() != y_pred.size()) {
        throw Error(ErrorKind::LengthMismatch, "y_true has " + std::to_string(y_true.size()) + " labels, y_pred has " +
                                                   std::to_string(y_pred.size()));
    }
    if (y_true.empty()) throw Error(ErrorKind::EmptyInput, "no labels to score");
    ConfusionMatrix m;
    for (std::size_t i = 0; i < y_true.size(); ++i) ++m.counts[index_of(y_true[i])][index_of(y_pred[i])];
    return m;
}

namespace {

double ratio(std::int64_t num, std::int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r == 0 ? 0.0 : 2 * p * r / (p + r); }

}  // namespace

EvaluationReport compute_metrics(std::span<const Label> y_true, std::span<const Label> y_pred) {
    EvaluationReport rep;
    rep.confusion = confusion(y_true, y_pred);
    const auto& m = rep.confusion;
    const std::int64_t n = m.total();
    std::int64_t tp_sum = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        const std::int64_t tp = m.counts[k][k];
        ClassMetrics& c = rep.per_class[k];
        c.support = m.row_sum(k);
        c.precision = ratio(tp, m.col_sum(k));
        c.recall = ratio(tp, c.support);
        c.f1 = harmonic(c.precision, c.recall);
        tp_sum += tp;

        rep.macro_avg.precision += c.precision / kNumClasses;
        rep.macro_avg.recall += c.recall / kNumClasses;
        rep.macro_avg.f1 += c.f1 / kNumClasses;
        const double w = static_cast<double>(c.support) / static_cast<double>(n);
        rep.weighted_avg.precision += w * c.precision;
        rep.weighted_avg.f1 += w * c.f1;
    }
    rep.accuracy = ratio(m.trace(), n);
    // support_k * (TP_k / support_k) summed over classes is exactly the trace.
    rep.weighted_avg.recall = ratio(tp_sum, n);
    rep.macro_avg.support = n;
    rep.weighted_avg.support = n;
    return rep;
}

EvaluationReport evaluate(const Classifier& model, const EncodedDataset& test) {
    if (test.empty()) throw Error(ErrorKind::EmptyDataset, "test set is empty");
    const ProbabilityMatrix probs = model.predict_proba(test.inputs);
    std::vector<Label> pred(test.size());
    double loss = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto row = probs.row(static_cast<Eigen::Index>(i));
        Eigen::Index best = 0;
        row.maxCoeff(&best);
        pred[i] = kAllLabels[static_cast<std::size_t>(best)];
        loss -= std::log(std::max(row(static_cast<Eigen::Index>(index_of(test.labels[i]))), 1e-300));
    }
    EvaluationReport rep = compute_metrics(test.labels, pred);
    rep.test_loss = loss / static_cast<double>(test.size());
    rep.checkpoint_hash = model.checkpoint_hash;
    return rep;
}

namespace {

json metrics_json(const ClassMetrics& c) {
    return {{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
}

ClassMetrics metrics_from(const json& j) {
    return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>(),
            j.at("support").get<std::int64_t>()};
}

}  // namespace

json report_to_json(const EvaluationReport& r) {
    json labels = json::array();
    json precision = json::array(), recall = json::array(), f1 = json::array(), support = json::array();
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        labels.push_back(to_string(kAllLabels[k]));
        precision.push_back(r.per_class[k].precision);
        recall.push_back(r.per_class[k].recall);
        f1.push_back(r.per_class[k].f1);
        support.push_back(r.per_class[k].support);
    }
    json matrix = json::array();
    for (const auto& row : r.confusion.counts) matrix.push_back(row);
    return {{"schema", "solvuln.report/v1"},
            {"labels", labels},
            {"accuracy", r.accuracy},
            {"test_loss", r.test_loss ? json(*r.test_loss) : json(nullptr)},
            {"per_class", {{"precision", precision}, {"recall", recall}, {"f1", f1}, {"support", support}}},
            {"macro_avg", metrics_json(r.macro_avg)},
            {"weighted_avg", metrics_json(r.weighted_avg)},
            {"confusion", matrix},
            {"split_hash", r.split_hash},
            {"checkpoint_hash", r.checkpoint_hash}};
}

EvaluationReport report_from_json(const json& j) {
    try {
        if (j.at("schema").get<std::string>() != "solvuln.report/v1") {
            throw Error(ErrorKind::SchemaError, "unsupported report schema " + j.at("schema").dump());
        }
        EvaluationReport r;
        r.accuracy = j.at("accuracy").get<double>();
        if (!j.at("test_loss").is_null()) r.test_loss = j.at("test_loss").get<double>();
        const auto& pc = j.at("per_class");
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            r.per_class[k] = {pc.at("precision").at(k).get<double>(), pc.at("recall").at(k).get<double>(),
                              pc.at("f1").at(k).get<double>(), pc.at("support").at(k).get<std::int64_t>()};
        }
        r.macro_avg = metrics_from(j.at("macro_avg"));
        r.weighted_avg = metrics_from(j.at("weighted_avg"));
        const auto& m = j.at("confusion");
        for (std::size_t a = 0; a < kNumClasses; ++a)
            for (std::size_t b = 0; b < kNumClasses; ++b) r.confusion.counts[a][b] = m.at(a).at(b).get<std::int64_t>();
        r.split_hash = j.value("split_hash", std::string());
        r.checkpoint_hash = j.value("checkpoint_hash", std::string());
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::SchemaError, std::string("malformed report: ") + e.what());
    }
}

namespace {

std::string fmt(const char* pattern, double a, double b, double c, std::int64_t d) {
    char buf[96];
    std::snprintf(buf, sizeof buf, pattern, a, b, c, static_cast<long long>(d));
    return buf;
}

}  // namespace

std::string format_report_table(const EvaluationReport& r, const std::string& title) {
    std::ostringstream out;
    if (!title.empty()) out << title << "\n";
    out << "               precision    recall  f1-score   support\n\n";
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        const auto& c = r.per_class[k];
        out << "  " << to_string(kAllLabels[k]) << "         "
            << fmt("%9.2f %9.2f %9.2f %9lld\n", c.precision, c.recall, c.f1, c.support);
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "\n  accuracy                       %9.2f %9lld\n", r.accuracy,
                  static_cast<long long>(r.confusion.total()));
    out << buf;
    out << "  macro avg    " << fmt("%9.2f %9.2f %9.2f %9lld\n", r.macro_avg.precision, r.macro_avg.recall,
                                    r.macro_avg.f1, r.macro_avg.support);
    out << "  weighted avg " << fmt("%9.2f %9.2f %9.2f %9lld\n", r.weighted_avg.precision, r.weighted_avg.recall,
                                    r.weighted_avg.f1, r.weighted_avg.support);
    if (r.test_loss) {
        std::snprintf(buf, sizeof buf, "\n  test loss %.4f\n", *r.test_loss);
        out << buf;
    }
    return out.str();
}

std::string format_curves_csv(const TrainingRun& run) {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    for (const auto& e : run.history)
        out << e.epoch << ',' << e.train_loss << ',' << e.train_accuracy << ',' << e.val_loss << ',' << e.val_accuracy
            << '\n';
    return out.str();
}

std::string format_confusion_csv(const ConfusionMatrix& m) {
    std::ostringstream out;
    out << "true\\pred";
    for (Label l : kAllLabels) out << ',' << to_string(l);
    out << '\n';
    for (std::size_t a = 0; a < kNumClasses; ++a) {
        out << to_string(kAllLabels[a]);
        for (auto c : m.counts[a]) out << ',' << c;
        out << '\n';
    }
    return out.str();
}

void emit_report(const EvaluationReport& report, const TrainingRun& run, const std::filesystem::path& dest) {
    write_file(dest / "report.json", report_to_json(report).dump(2) + "\n");
    write_file(dest / "report.txt", format_report_table(report));
    write_file(dest / "curves.csv", format_curves_csv(run));
    write_file(dest / "confusion.csv", format_confusion_csv(report.confusion));
}

EvaluationReport load_report(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::SchemaError, path.string() + ": " + e.what());
    }
    return report_from_json(j);
}

Comparison compare(const std::vector<NamedReport>& reports) {
    if (reports.size() < 2) throw Error(ErrorKind::InvalidArgument, "comparison needs at least two reports");
    Comparison cmp;
    cmp.split_hash = reports.front().report.split_hash;
    for (const auto& r : reports) {
        if (r.report.split_hash != cmp.split_hash) {
            throw Error(ErrorKind::SplitMismatch, "report '" + r.name + "' was scored on a different test split");
        }
        cmp.names.push_back(r.name);
    }

    auto add = [&](std::string metric, auto get, bool lower_is_better = false) {
        std::vector<double> row;
        for (const auto& r : reports) row.push_back(get(r.report));
        std::size_t best = 0;
        for (std::size_t i = 1; i < row.size(); ++i)
            if (lower_is_better ? row[i] < row[best] : row[i] > row[best]) best = i;
        cmp.metrics.push_back(std::move(metric));
        cmp.values.push_back(std::move(row));
        cmp.best.push_back(best);
    };
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        const std::string name(to_string(kAllLabels[k]));
        add(name + " precision", [k](const EvaluationReport& r) { return r.per_class[k].precision; });
        add(name + " recall", [k](const EvaluationReport& r) { return r.per_class[k].recall; });
        add(name + " f1", [k](const EvaluationReport& r) { return r.per_class[k].f1; });
    }
    add("macro precision", [](const EvaluationReport& r) { return r.macro_avg.precision; });
    add("macro recall", [](const EvaluationReport& r) { return r.macro_avg.recall; });
    add("macro f1", [](const EvaluationReport& r) { return r.macro_avg.f1; });
    add("weighted precision", [](const EvaluationReport& r) { return r.weighted_avg.precision; });
    add("weighted recall", [](const EvaluationReport& r) { return r.weighted_avg.recall; });
    add("weighted f1", [](const EvaluationReport& r) { return r.weighted_avg.f1; });
    add("accuracy", [](const EvaluationReport& r) { return r.accuracy; });
    const bool all_losses = std::all_of(reports.begin(), reports.end(),
                                        [](const NamedReport& r) { return r.report.test_loss.has_value(); });
    if (all_losses) add("test loss", [](const EvaluationReport& r) { return *r.test_loss; }, true);
    return cmp;
}

std::string format_comparison(const Comparison& cmp) {
    std::ostringstream out;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-20s", "metric");
    out << buf;
    for (const auto& n : cmp.names) {
        std::snprintf(buf, sizeof buf, " %14s", n.substr(0, 14).c_str());
        out << buf;
    }
    out << "\n";
    for (std::size_t m = 0; m < cmp.metrics.size(); ++m) {
        std::snprintf(buf, sizeof buf, "%-20s", cmp.metrics[m].c_str());
        out << buf;
        for (std::size_t i = 0; i < cmp.names.size(); ++i) {
            std::snprintf(buf, sizeof buf, " %13.4f%c", cmp.values[m][i], cmp.best[m] == i ? '*' : ' ');
            out << buf;
        }
        out << "\n";
    }
    out << "(* best per metric; split " << cmp.split_hash.substr(0, 12) << ")\n";
    return out.str();
}

json comparison_to_json(const Comparison& cmp) {
    json rows = json::array();
    for (std::size_t m = 0; m < cmp.metrics.size(); ++m) {
        rows.push_back({{"metric", cmp.metrics[m]},
                        {"values", cmp.values[m]},
                        {"best", cmp.names[cmp.best[m]]}});
    }
    return {{"schema", "solvuln.comparison/v1"}, {"models", cmp.names}, {"split_hash", cmp.split_hash}, {"rows", rows}};
}

}  // namespace solvuln
