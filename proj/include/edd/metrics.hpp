#pragma once

#include <array>
#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "edd/dataset.hpp"
#include "edd/network.hpp"
#include "edd/verify.hpp"

namespace edd {

/// Locale-independent fixed-point formatting (two decimals by default).
inline std::string format_fixed(double v, int decimals = 2) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, decimals);
    return std::string(buf, res.ptr);
}

/// Table-row metrics for one trained model. Accuracy fields are percentages.
/// Absent fields (attribute and reject metrics for the class-only reference
/// model, accepted-subset accuracy when nothing was accepted) stay unset and
/// render as "n/a".
struct ModelMetrics {
    std::string model;
    double acc_y = 0.0;
    std::optional<double> acc_z;          // mean over per-group accuracies
    std::optional<double> acc_z_strict;   // all groups correct at once
    std::optional<double> acc_y_accept;   // class accuracy on the accepted subset
    std::optional<double> rejection_rate;
    int n_test = 0;
    std::optional<int> n_accepted;
    std::optional<std::array<int, 4>> belnap_counts;  // True, Both, False, None
};

struct MetricsReport {
    std::vector<ModelMetrics> models;
};

/// Per-sample predicted labels for the whole test split; attr_pred stays
/// empty for class-only models.
struct TestPredictions {
    std::string model;
    std::vector<int> class_pred;
    std::vector<std::vector<int>> attr_pred;  // [group][sample]
};

/// Scores predicted labels against the test split: plain class and attribute
/// accuracy, then the attribute-based reject option, keeping class accuracy
/// on the accepted subset only. Samples without a class label stay out of
/// every class metric.
inline ModelMetrics evaluate_predictions(const TestPredictions& preds, const DatasetSplit& split,
                                         const ConditionKB& kb,
                                         RejectPolicy policy = RejectPolicy::kStrictTrue) {
    ModelMetrics m;
    m.model = preds.model;
    m.n_test = static_cast<int>(split.test.size());
    if (m.n_test == 0) throw std::invalid_argument("evaluate: empty test split");
    if (preds.class_pred.size() != split.test.size())
        throw std::invalid_argument("evaluate: prediction count does not match test split");
    const bool has_attrs = !preds.attr_pred.empty();
    const size_t e = split.schema.group_count();

    int class_hits = 0, class_total = 0;
    std::vector<int> attr_hits(e, 0);
    int strict_hits = 0;
    int accepted = 0, accepted_hits = 0;
    std::array<int, 4> belnap{0, 0, 0, 0};

    for (size_t i = 0; i < split.test.size(); ++i) {
        const Sample& sample = split.test[i];
        const bool has_class = sample.has_class();
        const bool class_hit = has_class && preds.class_pred[i] == sample.class_index;
        if (has_class) {
            ++class_total;
            if (class_hit) ++class_hits;
        }
        if (!has_attrs) continue;

        bool all_correct = true;
        for (size_t k = 0; k < e; ++k) {
            if (preds.attr_pred[k][i] == sample.attributes[k])
                ++attr_hits[k];
            else
                all_correct = false;
        }
        if (all_correct) ++strict_hits;

        if (!has_class) continue;
        HardAttributes attrs;
        for (size_t k = 0; k < e; ++k) attrs.values.push_back(preds.attr_pred[k][i]);
        const CandidateSet candidates = candidate_classes(attrs, kb, split.schema);
        const Belnap category = belnap_category(preds.class_pred[i], candidates);
        ++belnap[static_cast<size_t>(category)];
        if (decide(preds.class_pred[i], candidates, policy)) {
            ++accepted;
            if (class_hit) ++accepted_hits;
        }
    }

    if (class_total == 0) throw std::invalid_argument("evaluate: no class-labeled test samples");
    m.acc_y = 100.0 * class_hits / class_total;
    if (has_attrs) {
        double mean = 0.0;
        for (int hits : attr_hits) mean += static_cast<double>(hits) / m.n_test;
        m.acc_z = 100.0 * mean / static_cast<double>(e);
        m.acc_z_strict = 100.0 * strict_hits / m.n_test;
        m.n_accepted = accepted;
        m.rejection_rate = 100.0 * (class_total - accepted) / class_total;
        m.belnap_counts = belnap;
        if (accepted > 0) m.acc_y_accept = 100.0 * accepted_hits / accepted;
    }
    return m;
}

/// Runs the network over the test split and scores the greedy predictions.
inline ModelMetrics evaluate(const EddNetwork& net, const DatasetSplit& split,
                             const ConditionKB& kb,
                             RejectPolicy policy = RejectPolicy::kStrictTrue) {
    NoGradGuard no_grad;
    TestPredictions preds;
    preds.model = net.plan.label;
    if (net.plan.has_attribute_heads) preds.attr_pred.resize(split.schema.group_count());
    const int bs = std::max(1, net.arch.batch_size);
    for (size_t start = 0; start < split.test.size(); start += bs) {
        std::vector<int> idx;
        for (size_t i = start; i < std::min(split.test.size(), start + bs); ++i)
            idx.push_back(static_cast<int>(i));
        Batch batch = make_batch(split, split.test, idx);
        auto out = predict_batch(net, batch);
        preds.class_pred.insert(preds.class_pred.end(), out.class_pred.begin(),
                                out.class_pred.end());
        for (size_t k = 0; k < out.attr_pred.size(); ++k)
            preds.attr_pred[k].insert(preds.attr_pred[k].end(), out.attr_pred[k].begin(),
                                      out.attr_pred[k].end());
    }
    return evaluate_predictions(preds, split, kb, policy);
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

enum class ReportFormat { kTabularText, kCommaSeparated, kStructured };

namespace metrics_detail {

inline const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols = {
        "model",      "acc_y",      "acc_z",       "acc_y_reject", "rejection_rate", "n_test",
        "n_accepted", "belnap_true", "belnap_both", "belnap_false", "belnap_none"};
    return cols;
}

inline std::vector<std::string> row_cells(const ModelMetrics& m) {
    auto opt = [](const std::optional<double>& v) {
        return v ? format_fixed(*v) : std::string("n/a");
    };
    auto opt_int = [](const std::optional<int>& v) {
        return v ? std::to_string(*v) : std::string("n/a");
    };
    auto belnap_cell = [&](size_t i) {
        return m.belnap_counts ? std::to_string((*m.belnap_counts)[i]) : std::string("n/a");
    };
    return {m.model,
            format_fixed(m.acc_y),
            opt(m.acc_z),
            opt(m.acc_y_accept),
            opt(m.rejection_rate),
            std::to_string(m.n_test),
            opt_int(m.n_accepted),
            belnap_cell(0),
            belnap_cell(1),
            belnap_cell(2),
            belnap_cell(3)};
}

}  // namespace metrics_detail

inline std::string render_tabular(const MetricsReport& report) {
    using namespace metrics_detail;
    std::vector<std::vector<std::string>> rows = {report_columns()};
    for (const auto& m : report.models) rows.push_back(row_cells(m));
    std::vector<size_t> widths(report_columns().size(), 0);
    for (const auto& row : rows)
        for (size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
    std::ostringstream out;
    for (size_t r = 0; r < rows.size(); ++r) {
        for (size_t i = 0; i < rows[r].size(); ++i) {
            if (i) out << "  ";
            out << rows[r][i];
            for (size_t pad = rows[r][i].size(); pad < widths[i]; ++pad) out << ' ';
        }
        out << "\n";
        if (r == 0) {
            for (size_t i = 0; i < widths.size(); ++i) {
                if (i) out << "  ";
                out << std::string(widths[i], '-');
            }
            out << "\n";
        }
    }
    return out.str();
}

inline std::string render_csv(const MetricsReport& report) {
    using namespace metrics_detail;
    std::ostringstream out;
    const auto& cols = report_columns();
    for (size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << "\n";
    for (const auto& m : report.models) {
        const auto cells = row_cells(m);
        for (size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << "\n";
    }
    return out.str();
}

inline nlohmann::json report_json(const MetricsReport& report) {
    nlohmann::json models = nlohmann::json::array();
    auto round2 = [](double v) { return std::stod(format_fixed(v)); };
    for (const auto& m : report.models) {
        nlohmann::json j;
        j["model"] = m.model;
        j["acc_y"] = round2(m.acc_y);
        j["acc_z"] = m.acc_z ? nlohmann::json(round2(*m.acc_z)) : nlohmann::json();
        j["acc_z_strict"] =
            m.acc_z_strict ? nlohmann::json(round2(*m.acc_z_strict)) : nlohmann::json();
        j["acc_y_reject"] =
            m.acc_y_accept ? nlohmann::json(round2(*m.acc_y_accept)) : nlohmann::json();
        j["rejection_rate"] =
            m.rejection_rate ? nlohmann::json(round2(*m.rejection_rate)) : nlohmann::json();
        j["n_test"] = m.n_test;
        j["n_accepted"] = m.n_accepted ? nlohmann::json(*m.n_accepted) : nlohmann::json();
        if (m.belnap_counts) {
            j["belnap_true"] = (*m.belnap_counts)[0];
            j["belnap_both"] = (*m.belnap_counts)[1];
            j["belnap_false"] = (*m.belnap_counts)[2];
            j["belnap_none"] = (*m.belnap_counts)[3];
        } else {
            j["belnap_true"] = nullptr;
            j["belnap_both"] = nullptr;
            j["belnap_false"] = nullptr;
            j["belnap_none"] = nullptr;
        }
        models.push_back(j);
    }
    return nlohmann::json{{"models", models}};
}

/// Writes the requested formats into out_dir as report.txt / report.csv /
/// report.json; returns the written paths.
inline std::vector<std::string> emit_report(const MetricsReport& report,
                                            const std::vector<ReportFormat>& formats,
                                            const std::string& out_dir) {
    std::vector<std::string> written;
    auto write_file = [&](const std::string& name, const std::string& contents) {
        const std::string path = out_dir + "/" + name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open '" + path + "' for writing");
        out << contents;
        if (!out) throw IoError("write failed for '" + path + "'");
        written.push_back(path);
    };
    for (ReportFormat f : formats) {
        switch (f) {
            case ReportFormat::kTabularText: write_file("report.txt", render_tabular(report)); break;
            case ReportFormat::kCommaSeparated: write_file("report.csv", render_csv(report)); break;
            case ReportFormat::kStructured:
                write_file("report.json", report_json(report).dump(2) + "\n");
                break;
        }
    }
    return written;
}

/// Parses the comma-separated form back (2-decimal precision), for round-trip
/// checks and downstream tooling.
inline MetricsReport parse_report_csv(const std::string& text) {
    using namespace metrics_detail;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FileFormatError("empty report");
    MetricsReport report;
    auto split_cells = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream row(s);
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        return cells;
    };
    if (split_cells(line) != report_columns())
        throw FileFormatError("unexpected report header: " + line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_cells(line);
        if (cells.size() != report_columns().size())
            throw FileFormatError("bad report row: " + line);
        ModelMetrics m;
        m.model = cells[0];
        auto opt = [](const std::string& s) -> std::optional<double> {
            if (s == "n/a") return std::nullopt;
            return std::stod(s);
        };
        m.acc_y = std::stod(cells[1]);
        m.acc_z = opt(cells[2]);
        m.acc_y_accept = opt(cells[3]);
        m.rejection_rate = opt(cells[4]);
        m.n_test = std::stoi(cells[5]);
        if (cells[6] != "n/a") m.n_accepted = std::stoi(cells[6]);
        if (cells[7] != "n/a")
            m.belnap_counts = std::array<int, 4>{std::stoi(cells[7]), std::stoi(cells[8]),
                                                 std::stoi(cells[9]), std::stoi(cells[10])};
        report.models.push_back(std::move(m));
    }
    return report;
}

}  // namespace edd
