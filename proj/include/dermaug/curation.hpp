#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dermaug/errors.hpp"
#include "dermaug/image.hpp"
#include "dermaug/manifest.hpp"
#include "dermaug/parallel.hpp"
#include "dermaug/png_io.hpp"

namespace dermaug {

// Abstract pretrained binary classifier: image -> P(in-domain).
struct DomainScorer {
    virtual ~DomainScorer() = default;
    virtual double score(const Image& img) const = 0;
};

// Abstract pretrained multi-class model: image -> score vector over the
// taxonomy, normalized to sum 1.
struct LabelScorer {
    virtual ~LabelScorer() = default;
    virtual std::vector<double> scores(const Image& img) const = 0;
};

struct FunctionDomainScorer final : DomainScorer {
    std::function<double(const Image&)> fn;
    explicit FunctionDomainScorer(std::function<double(const Image&)> f) : fn(std::move(f)) {}
    double score(const Image& img) const override { return fn(img); }
};

struct FunctionLabelScorer final : LabelScorer {
    std::function<std::vector<double>(const Image&)> fn;
    explicit FunctionLabelScorer(std::function<std::vector<double>(const Image&)> f)
        : fn(std::move(f)) {}
    std::vector<double> scores(const Image& img) const override { return fn(img); }
};

enum class FilterStage { domain, label };

inline std::string to_string(FilterStage s) { return s == FilterStage::domain ? "domain" : "label"; }

struct FilterDecision {
    std::string record_id;
    FilterStage stage = FilterStage::domain;
    bool accepted = false;
    double score = 0.0;
    std::optional<std::string> predicted_label;
    std::optional<std::string> note;  // e.g. unreadable-image diagnostics

    nlohmann::json to_json() const {
        nlohmann::json j = {{"record_id", record_id},
                            {"stage", to_string(stage)},
                            {"accepted", accepted},
                            {"score", score}};
        if (predicted_label) j["predicted_label"] = *predicted_label;
        if (note) j["note"] = *note;
        return j;
    }
};

struct CurationReport {
    std::map<std::string, std::size_t> input_per_class;
    std::map<std::string, std::size_t> domain_accepted_per_class;
    std::map<std::string, std::size_t> label_accepted_per_class;
    std::size_t input_total = 0;
    std::size_t domain_accepted_total = 0;
    std::size_t label_accepted_total = 0;
    double domain_threshold = 0.5;

    // accepted / input, per stage; each stage's input is the previous
    // stage's accepted set
    double domain_rate() const {
        return input_total == 0 ? 0.0 : double(domain_accepted_total) / double(input_total);
    }
    double label_rate() const {
        return domain_accepted_total == 0 ? 0.0
                                          : double(label_accepted_total) / double(domain_accepted_total);
    }
    double overall_rate() const {
        return input_total == 0 ? 0.0 : double(label_accepted_total) / double(input_total);
    }

    nlohmann::json to_json() const {
        return {{"input_per_class", input_per_class},
                {"domain_accepted_per_class", domain_accepted_per_class},
                {"label_accepted_per_class", label_accepted_per_class},
                {"input_total", input_total},
                {"domain_accepted_total", domain_accepted_total},
                {"label_accepted_total", label_accepted_total},
                {"domain_threshold", domain_threshold},
                {"domain_rate", domain_rate()},
                {"label_rate", label_rate()},
                {"overall_rate", overall_rate()}};
    }
};

namespace detail {

struct LoadedScore {
    double value = 0.0;
    std::vector<double> vec;
    bool load_failed = false;
    std::string error;
};

}  // namespace detail

// Fig-3 step 2: keep records the binary scorer rates >= threshold. Unreadable
// images are rejected with score 0 and a note; the run continues.
inline std::pair<Manifest, std::vector<FilterDecision>> domain_filter(const Manifest& m,
                                                                      const DomainScorer& scorer,
                                                                      double threshold,
                                                                      int workers = 1) {
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw ConfigError("domain threshold must be in [0,1]");

    std::vector<detail::LoadedScore> scored(m.records.size());
    parallel_chunks(m.records.size(), 16, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            try {
                Image img = png::load_image(m.resolve_image_path(m.records[i]));
                scored[i].value = scorer.score(img);
            } catch (const std::exception& e) {
                scored[i].load_failed = true;
                scored[i].error = e.what();
            }
        }
    });

    Manifest out(m.taxonomy, "filter-domain");
    out.parent = m.stage_chain();
    out.set_base_dir(m.base_dir());
    std::vector<FilterDecision> decisions;
    decisions.reserve(m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        const auto& rec = m.records[i];
        FilterDecision d;
        d.record_id = rec.record_id;
        d.stage = FilterStage::domain;
        if (scored[i].load_failed) {
            d.score = 0.0;
            d.accepted = false;
            d.note = "unreadable image: " + scored[i].error;
        } else {
            double s = scored[i].value;
            if (!(s >= 0.0 && s <= 1.0))
                throw ConfigError("domain scorer returned " + std::to_string(s) +
                                  " outside [0,1] for '" + rec.record_id + "'");
            d.score = s;
            d.accepted = s >= threshold;
        }
        if (d.accepted) {
            ImageRecord kept = rec;
            kept.filter_scores.domain_score = d.score;
            out.records.push_back(std::move(kept));
        }
        decisions.push_back(std::move(d));
    }
    out.validate();
    return {std::move(out), std::move(decisions)};
}

// Fig-3 steps 3-4: a record survives iff the ensemble's top-1 prediction
// (ties broken by taxonomy order) equals its conditioning label.
inline std::pair<Manifest, std::vector<FilterDecision>> label_filter(const Manifest& m,
                                                                     const LabelScorer& ensemble,
                                                                     int workers = 1) {
    std::vector<detail::LoadedScore> scored(m.records.size());
    parallel_chunks(m.records.size(), 16, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Image img;
            try {
                img = png::load_image(m.resolve_image_path(m.records[i]));
            } catch (const std::exception& e) {
                throw IoError("label filter: unreadable image for '" + m.records[i].record_id +
                              "': " + e.what());
            }
            scored[i].vec = ensemble.scores(img);
        }
    });

    Manifest out(m.taxonomy, "filter-label");
    out.parent = m.stage_chain();
    out.set_base_dir(m.base_dir());
    std::vector<FilterDecision> decisions;
    decisions.reserve(m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        const auto& rec = m.records[i];
        const auto& scores = scored[i].vec;
        if (scores.size() != m.taxonomy.size())
            throw ConfigError("label scorer returned " + std::to_string(scores.size()) +
                              " scores, expected " + std::to_string(m.taxonomy.size()));
        double sum = 0.0;
        for (double s : scores) sum += s;
        if (std::abs(sum - 1.0) > 1e-6)
            throw ConfigError("label scorer vector for '" + rec.record_id +
                              "' sums to " + std::to_string(sum) + ", expected 1");

        std::size_t argmax = 0;  // first maximum wins: taxonomy-order tie-break
        for (std::size_t c = 1; c < scores.size(); ++c)
            if (scores[c] > scores[argmax]) argmax = c;

        FilterDecision d;
        d.record_id = rec.record_id;
        d.stage = FilterStage::label;
        d.score = scores[argmax];
        d.predicted_label = m.taxonomy.at(argmax).class_id;
        d.accepted = *d.predicted_label == rec.label;
        if (d.accepted) {
            ImageRecord kept = rec;
            kept.filter_scores.predicted_label = d.predicted_label;
            kept.filter_scores.label_confidence = d.score;
            out.records.push_back(std::move(kept));
        }
        decisions.push_back(std::move(d));
    }
    out.validate();
    return {std::move(out), std::move(decisions)};
}

struct CurationResult {
    Manifest curated;
    CurationReport report;
    std::vector<FilterDecision> decisions;  // domain stage first, then label
};

// Domain filter, then label filter; the stage order is fixed.
inline CurationResult curate(const Manifest& generated, const DomainScorer& scorer,
                             const LabelScorer& ensemble, double threshold, int workers = 1) {
    CurationResult result;
    result.report.domain_threshold = threshold;
    result.report.input_total = generated.records.size();
    for (const auto& [cls, n] : generated.class_counts()) result.report.input_per_class[cls] = n;

    auto [domain_kept, domain_decisions] = domain_filter(generated, scorer, threshold, workers);
    result.report.domain_accepted_total = domain_kept.records.size();
    for (const auto& [cls, n] : domain_kept.class_counts())
        result.report.domain_accepted_per_class[cls] = n;

    auto [label_kept, label_decisions] = label_filter(domain_kept, ensemble, workers);
    result.report.label_accepted_total = label_kept.records.size();
    for (const auto& [cls, n] : label_kept.class_counts())
        result.report.label_accepted_per_class[cls] = n;

    result.curated = std::move(label_kept);
    result.decisions = std::move(domain_decisions);
    result.decisions.insert(result.decisions.end(), label_decisions.begin(), label_decisions.end());
    return result;
}

inline void save_decisions(const std::vector<FilterDecision>& decisions,
                           const std::filesystem::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open decisions file: " + path.string());
    for (const auto& d : decisions) f << d.to_json().dump() << '\n';
    if (!f) throw IoError("failed writing decisions file: " + path.string());
}

}  // namespace dermaug
