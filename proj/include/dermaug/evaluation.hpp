#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dermaug/dataset_io.hpp"
#include "dermaug/errors.hpp"
#include "dermaug/manifest.hpp"
#include "dermaug/parallel.hpp"
#include "dermaug/training.hpp"

namespace dermaug {

// Fraction of items whose true label ranks among the k highest-scored
// classes. Equal scores rank by taxonomy order: the true label is beaten by
// classes with a strictly higher score and by equal-scored classes of lower
// index.
inline double top_k_accuracy(const std::vector<std::vector<double>>& scores,
                             const std::vector<int>& labels, int k) {
    if (scores.size() != labels.size())
        throw ConfigError("top_k_accuracy: " + std::to_string(scores.size()) + " score rows vs " +
                          std::to_string(labels.size()) + " labels");
    if (scores.empty()) throw ConfigError("top_k_accuracy: empty input");
    const int n_classes = int(scores.front().size());
    if (k < 1 || k > n_classes)
        throw ConfigError("top_k_accuracy: k=" + std::to_string(k) + " out of [1," +
                          std::to_string(n_classes) + "]");

    std::size_t hits = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto& row = scores[i];
        if (int(row.size()) != n_classes) throw ConfigError("top_k_accuracy: ragged score rows");
        int label = labels[i];
        if (label < 0 || label >= n_classes)
            throw ConfigError("top_k_accuracy: label out of range");
        double own = row[std::size_t(label)];
        int rank = 0;
        for (int c = 0; c < n_classes; ++c) {
            if (c == label) continue;
            if (row[std::size_t(c)] > own || (row[std::size_t(c)] == own && c < label)) ++rank;
        }
        if (rank < k) ++hits;
    }
    return double(hits) / double(scores.size());
}

struct EvalRow {
    std::string scenario;
    std::size_t real_per_class = 0;
    std::size_t synthetic_per_class = 0;
    std::vector<double> accuracy_pct;  // top-1..top-K, percentages

    nlohmann::json to_json() const {
        return {{"scenario", scenario},
                {"real_per_class", real_per_class},
                {"synthetic_per_class", synthetic_per_class},
                {"top_k_accuracy_pct", accuracy_pct}};
    }

    static EvalRow from_json(const nlohmann::json& j) {
        EvalRow r;
        r.scenario = j.at("scenario").get<std::string>();
        r.real_per_class = j.at("real_per_class").get<std::size_t>();
        r.synthetic_per_class = j.at("synthetic_per_class").get<std::size_t>();
        r.accuracy_pct = j.at("top_k_accuracy_pct").get<std::vector<double>>();
        return r;
    }
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::string test_set_id;
    nlohmann::json config_echo = nlohmann::json::object();

    void validate() const {
        for (const auto& row : rows) {
            double prev = 0.0;
            for (double a : row.accuracy_pct) {
                if (!(a >= 0.0 && a <= 100.0))
                    throw DataError("report accuracy " + std::to_string(a) + " outside [0,100]");
                if (a + 1e-9 < prev)
                    throw DataError("report row '" + row.scenario + "' is not monotone in k");
                prev = a;
            }
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json rows_json = nlohmann::json::array();
        for (const auto& r : rows) rows_json.push_back(r.to_json());
        return {{"rows", rows_json}, {"test_set_id", test_set_id}, {"config_echo", config_echo}};
    }

    static EvalReport from_json(const nlohmann::json& j) {
        EvalReport r;
        for (const auto& row : j.at("rows")) r.rows.push_back(EvalRow::from_json(row));
        r.test_set_id = j.value("test_set_id", std::string());
        if (j.contains("config_echo")) r.config_echo = j.at("config_echo");
        r.validate();
        return r;
    }
};

enum class ReportFormat { plain, csv, json };

// Byte-deterministic rendering; percentages carry two decimals. The csv
// format is the bare numeric grid (real, synthetic, top-1..top-5 columns) in
// row order; names live in the json and plain formats.
inline std::string render_report(const EvalReport& report, ReportFormat format) {
    report.validate();
    if (format == ReportFormat::json) return report.to_json().dump(2) + "\n";

    auto fmt_pct = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return std::string(buf);
    };
    std::size_t n_k = 0;
    for (const auto& r : report.rows) n_k = std::max(n_k, r.accuracy_pct.size());

    if (format == ReportFormat::csv) {
        std::string out = "real_per_class,synthetic_per_class";
        for (std::size_t k = 1; k <= n_k; ++k) out += ",top" + std::to_string(k);
        out += "\n";
        for (const auto& r : report.rows) {
            out += std::to_string(r.real_per_class) + "," + std::to_string(r.synthetic_per_class);
            for (double a : r.accuracy_pct) out += "," + fmt_pct(a);
            out += "\n";
        }
        return out;
    }

    // plain table; per-column maxima are starred, ties noted below
    std::vector<std::string> headers = {"scenario", "real", "synthetic"};
    for (std::size_t k = 1; k <= n_k; ++k) headers.push_back("top-" + std::to_string(k));
    std::vector<double> col_max(n_k, -1.0);
    std::vector<int> max_count(n_k, 0);
    for (const auto& r : report.rows)
        for (std::size_t k = 0; k < r.accuracy_pct.size(); ++k) {
            if (r.accuracy_pct[k] > col_max[k]) { col_max[k] = r.accuracy_pct[k]; max_count[k] = 1; }
            else if (r.accuracy_pct[k] == col_max[k]) ++max_count[k];
        }

    std::vector<std::vector<std::string>> cells;
    for (const auto& r : report.rows) {
        std::vector<std::string> row = {r.scenario, std::to_string(r.real_per_class),
                                        std::to_string(r.synthetic_per_class)};
        for (std::size_t k = 0; k < r.accuracy_pct.size(); ++k) {
            std::string cell = fmt_pct(r.accuracy_pct[k]);
            if (!report.rows.empty() && r.accuracy_pct[k] == col_max[k]) cell += "*";
            row.push_back(cell);
        }
        cells.push_back(std::move(row));
    }
    std::vector<std::size_t> widths(headers.size(), 0);
    for (std::size_t c = 0; c < headers.size(); ++c) widths[c] = headers[c].size();
    for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());

    auto pad = [](const std::string& s, std::size_t w) {
        return s + std::string(w - s.size(), ' ');
    };
    std::string out;
    for (std::size_t c = 0; c < headers.size(); ++c)
        out += (c ? "  " : "") + pad(headers[c], widths[c]);
    out += "\n";
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < headers.size(); ++c)
            out += (c ? "  " : "") + pad(c < row.size() ? row[c] : "", widths[c]);
        out += "\n";
    }
    bool any_tie = false;
    for (std::size_t k = 0; k < n_k; ++k)
        if (max_count[k] > 1) {
            if (!any_tie) out += "ties at column maximum:";
            any_tie = true;
            out += " top-" + std::to_string(k + 1);
        }
    if (any_tie) out += "\n";
    return out;
}

struct ScenarioScores {
    std::string scenario;
    std::vector<std::string> record_ids;
    std::vector<int> labels;
    std::vector<std::vector<double>> scores;  // per record, taxonomy order
};

// "%.17g" round-trips doubles exactly, so accuracies recomputed from the
// dump match the report bit-for-bit.
inline std::string scores_to_csv(const ScenarioScores& s, const ClassTaxonomy& taxonomy) {
    std::string out = "record_id,label";
    for (std::size_t c = 1; c <= taxonomy.size(); ++c) out += ",s" + std::to_string(c);
    out += "\n";
    char buf[64];
    for (std::size_t i = 0; i < s.record_ids.size(); ++i) {
        out += s.record_ids[i] + "," + taxonomy.at(std::size_t(s.labels[i])).class_id;
        for (double v : s.scores[i]) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out += ",";
            out += buf;
        }
        out += "\n";
    }
    return out;
}

struct EvaluationResult {
    EvalReport report;
    std::vector<ScenarioScores> scores;  // one per scenario, report order
};

// Runs every ensemble over the full test manifest and assembles the
// Table-style comparison grid. The test set must be disjoint (by record_id)
// from every ensemble's training records.
inline EvaluationResult evaluate_scenarios(
    const std::vector<std::pair<std::string, const EnsembleModel*>>& ensembles,
    const Manifest& test, int max_k = 5, int workers = 1) {
    if (ensembles.empty()) throw ConfigError("evaluate: no ensembles given");
    if (test.records.empty()) throw DataError("evaluate: empty test manifest");

    for (const auto& [name, ensemble] : ensembles) {
        std::set<std::string> train_ids(ensemble->train_record_ids.begin(),
                                        ensemble->train_record_ids.end());
        for (const auto& r : test.records)
            if (train_ids.count(r.record_id))
                throw DataError("test manifest overlaps scenario '" + name + "' training set at '" +
                                r.record_id + "'");
    }

    auto records = all_records(test);
    const auto& first = *ensembles.front().second;
    nn::MatrixF rows01 =
        load_image_rows(test, records, first.config.height, first.config.width);
    std::vector<int> labels = record_label_indices(test, records);
    int k_limit = std::min(max_k, int(test.taxonomy.size()));

    EvaluationResult result;
    result.report.test_set_id = test.created_by + ":" + std::to_string(test.records.size());
    for (const auto& [name, ensemble] : ensembles) {
        ScenarioScores sc;
        sc.scenario = name;
        sc.labels = labels;
        for (const auto* r : records) sc.record_ids.push_back(r->record_id);
        sc.scores.resize(records.size());

        parallel_chunks(records.size(), 64, workers, [&](std::size_t begin, std::size_t end) {
            nn::MatrixF chunk = rows01.middleRows(Eigen::Index(begin), Eigen::Index(end - begin));
            nn::MatrixF probs = ensemble->predict_rows01(chunk);
            for (std::size_t i = begin; i < end; ++i) {
                auto& row = sc.scores[i];
                row.resize(test.taxonomy.size());
                for (std::size_t c = 0; c < row.size(); ++c)
                    row[c] = double(probs(Eigen::Index(i - begin), Eigen::Index(c)));
            }
        });

        EvalRow row;
        row.scenario = name;
        row.real_per_class = ensemble->real_per_class;
        row.synthetic_per_class = ensemble->synthetic_per_class;
        for (int k = 1; k <= k_limit; ++k)
            row.accuracy_pct.push_back(100.0 * top_k_accuracy(sc.scores, labels, k));
        result.report.rows.push_back(std::move(row));
        result.scores.push_back(std::move(sc));
    }
    result.report.validate();
    return result;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f << text;
    if (!f) throw IoError("failed writing: " + path.string());
}

}  // namespace dermaug
