#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "dermaug/errors.hpp"
#include "dermaug/taxonomy.hpp"

namespace dermaug {

enum class ImageSource { real, synthetic };
enum class Split { train, val, test };

inline std::string to_string(ImageSource s) { return s == ImageSource::real ? "real" : "synthetic"; }
inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

inline ImageSource source_from_string(const std::string& s) {
    if (s == "real") return ImageSource::real;
    if (s == "synthetic") return ImageSource::synthetic;
    throw DataError("unknown source: '" + s + "'");
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw DataError("unknown split: '" + s + "'");
}

struct Provenance {
    std::string generator_run_id;
    std::uint64_t seed = 0;
    std::string prompt;
    int sampler_steps = 0;

    bool operator==(const Provenance&) const = default;
};

struct FilterScores {
    std::optional<double> domain_score;
    std::optional<std::string> predicted_label;
    std::optional<double> label_confidence;

    bool empty() const { return !domain_score && !predicted_label && !label_confidence; }
    bool operator==(const FilterScores&) const = default;
};

struct ImageRecord {
    std::string record_id;
    std::string image_path;  // relative to the manifest's directory
    std::string label;
    ImageSource source = ImageSource::real;
    std::optional<Split> split;
    std::optional<Provenance> provenance;
    FilterScores filter_scores;
    nlohmann::json extra = nlohmann::json::object();  // unknown fields, preserved on round-trip

    bool operator==(const ImageRecord&) const = default;
};

namespace detail {

inline nlohmann::json record_to_json(const ImageRecord& r) {
    nlohmann::json j = r.extra.is_object() ? r.extra : nlohmann::json::object();
    j["record_id"] = r.record_id;
    j["image_path"] = r.image_path;
    j["label"] = r.label;
    j["source"] = to_string(r.source);
    if (r.split) j["split"] = to_string(*r.split);
    if (r.provenance) {
        j["provenance"] = {{"generator_run_id", r.provenance->generator_run_id},
                           {"seed", r.provenance->seed},
                           {"prompt", r.provenance->prompt},
                           {"sampler_steps", r.provenance->sampler_steps}};
    }
    if (!r.filter_scores.empty()) {
        nlohmann::json fs = nlohmann::json::object();
        if (r.filter_scores.domain_score) fs["domain_score"] = *r.filter_scores.domain_score;
        if (r.filter_scores.predicted_label) fs["predicted_label"] = *r.filter_scores.predicted_label;
        if (r.filter_scores.label_confidence) fs["label_confidence"] = *r.filter_scores.label_confidence;
        j["filter_scores"] = fs;
    }
    return j;
}

inline ImageRecord record_from_json(const nlohmann::json& j) {
    ImageRecord r;
    r.record_id = j.at("record_id").get<std::string>();
    r.image_path = j.at("image_path").get<std::string>();
    r.label = j.at("label").get<std::string>();
    r.source = source_from_string(j.at("source").get<std::string>());
    if (j.contains("split") && !j.at("split").is_null())
        r.split = split_from_string(j.at("split").get<std::string>());
    if (j.contains("provenance") && !j.at("provenance").is_null()) {
        const auto& p = j.at("provenance");
        Provenance prov;
        prov.generator_run_id = p.value("generator_run_id", std::string());
        prov.seed = p.value("seed", std::uint64_t(0));
        prov.prompt = p.value("prompt", std::string());
        prov.sampler_steps = p.value("sampler_steps", 0);
        r.provenance = prov;
    }
    if (j.contains("filter_scores") && !j.at("filter_scores").is_null()) {
        const auto& fs = j.at("filter_scores");
        if (fs.contains("domain_score")) r.filter_scores.domain_score = fs.at("domain_score").get<double>();
        if (fs.contains("predicted_label"))
            r.filter_scores.predicted_label = fs.at("predicted_label").get<std::string>();
        if (fs.contains("label_confidence"))
            r.filter_scores.label_confidence = fs.at("label_confidence").get<double>();
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        static const std::unordered_set<std::string> known = {
            "record_id", "image_path", "label", "source", "split", "provenance", "filter_scores"};
        if (!known.count(it.key())) r.extra[it.key()] = it.value();
    }
    return r;
}

}  // namespace detail

// Rewrites record image paths when records move to a manifest rooted elsewhere.
inline std::string rebase_image_path(const std::string& image_path,
                                     const std::filesystem::path& old_base,
                                     const std::filesystem::path& new_base) {
    namespace fs = std::filesystem;
    fs::path abs_old = fs::absolute(old_base) / image_path;
    fs::path rel = abs_old.lexically_normal().lexically_relative(fs::absolute(new_base).lexically_normal());
    if (rel.empty()) throw DataError("cannot rebase image path '" + image_path + "'");
    return rel.generic_string();
}

// The persisted record-of-truth for one pipeline dataset. Immutable after
// load; every derivation produces a new manifest with an extended stage chain.
class Manifest {
public:
    static constexpr int format_version = 1;

    ClassTaxonomy taxonomy;
    std::vector<ImageRecord> records;
    std::string created_by;           // stage name that produced this manifest
    std::optional<std::string> parent;  // full stage chain of the parent manifest
    nlohmann::json header_extra = nlohmann::json::object();

    Manifest() = default;
    Manifest(ClassTaxonomy tax, std::string stage) : taxonomy(std::move(tax)), created_by(std::move(stage)) {}

    // "parentchain/created_by"; chains grow by construction so they cannot cycle.
    std::string stage_chain() const {
        if (parent && !parent->empty()) return *parent + "/" + created_by;
        return created_by;
    }

    bool chain_contains(const std::string& stage) const {
        std::string chain = stage_chain();
        std::size_t pos = 0;
        while (pos <= chain.size()) {
            std::size_t next = chain.find('/', pos);
            std::string seg = chain.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
            if (seg == stage) return true;
            if (next == std::string::npos) break;
            pos = next + 1;
        }
        return false;
    }

    // Directory the image paths are relative to. Runtime-only, set on load/save.
    const std::filesystem::path& base_dir() const { return base_dir_; }
    void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }

    std::filesystem::path resolve_image_path(const ImageRecord& r) const {
        return (base_dir_ / r.image_path).lexically_normal();
    }

    void validate() const {
        if (created_by.empty()) throw DataError("manifest created_by must be non-empty");
        std::unordered_set<std::string> seen;
        seen.reserve(records.size());
        for (const auto& r : records) {
            if (r.record_id.empty()) throw DataError("record_id must be non-empty");
            if (!seen.insert(r.record_id).second)
                throw DataError("duplicate record_id: '" + r.record_id + "'");
            if (!taxonomy.contains(r.label))
                throw DataError("record '" + r.record_id + "' has unknown label '" + r.label + "'");
            if (r.image_path.empty() || std::filesystem::path(r.image_path).is_absolute())
                throw DataError("record '" + r.record_id + "' image_path must be a relative path");
            if (r.source == ImageSource::synthetic && !r.provenance)
                throw DataError("synthetic record '" + r.record_id + "' is missing provenance");
            if (r.source == ImageSource::real && r.provenance && !r.provenance->generator_run_id.empty())
                throw DataError("real record '" + r.record_id + "' carries generator provenance");
            auto check_prob = [&](const std::optional<double>& v, const char* name) {
                if (v && !(*v >= 0.0 && *v <= 1.0))
                    throw DataError("record '" + r.record_id + "' " + name + " out of [0,1]");
            };
            check_prob(r.filter_scores.domain_score, "domain_score");
            check_prob(r.filter_scores.label_confidence, "label_confidence");
            if (r.filter_scores.predicted_label && !taxonomy.contains(*r.filter_scores.predicted_label))
                throw DataError("record '" + r.record_id + "' predicted_label '" +
                                *r.filter_scores.predicted_label + "' not in taxonomy");
        }
    }

    // Counts per class, in taxonomy order; classes absent from records map to 0.
    std::map<std::string, std::size_t> class_counts(std::optional<ImageSource> source_filter = {}) const {
        std::map<std::string, std::size_t> counts;
        for (const auto& e : taxonomy.entries()) counts[e.class_id] = 0;
        for (const auto& r : records) {
            if (source_filter && r.source != *source_filter) continue;
            counts[r.label] += 1;
        }
        return counts;
    }

    std::vector<std::size_t> class_counts_vec(std::optional<ImageSource> source_filter = {}) const {
        std::vector<std::size_t> counts(taxonomy.size(), 0);
        for (const auto& r : records) {
            if (source_filter && r.source != *source_filter) continue;
            counts[taxonomy.index_of(r.label)] += 1;
        }
        return counts;
    }

    bool equal_content(const Manifest& other) const {
        return taxonomy == other.taxonomy && records == other.records &&
               created_by == other.created_by && parent == other.parent &&
               header_extra == other.header_extra;
    }

    std::string to_jsonl() const {
        nlohmann::json header = header_extra.is_object() ? header_extra : nlohmann::json::object();
        header["format_version"] = format_version;
        header["taxonomy"] = taxonomy.to_json();
        header["created_by"] = created_by;
        header["parent"] = parent ? nlohmann::json(*parent) : nlohmann::json(nullptr);
        std::string out = header.dump();
        out += '\n';
        for (const auto& r : records) {
            out += detail::record_to_json(r).dump();
            out += '\n';
        }
        return out;
    }

    // Saving to a different directory rebases image paths so they keep
    // resolving to the same files.
    void save(const std::filesystem::path& path) {
        namespace fs = std::filesystem;
        fs::path target_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
        if (fs::absolute(target_dir).lexically_normal() !=
            fs::absolute(base_dir_).lexically_normal()) {
            for (auto& r : records) r.image_path = rebase_image_path(r.image_path, base_dir_, target_dir);
            base_dir_ = target_dir;
        }
        validate();
        std::error_code ec;
        if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open manifest for writing: " + path.string());
        f << to_jsonl();
        if (!f) throw IoError("failed writing manifest: " + path.string());
    }

    static Manifest from_jsonl(const std::string& text, const std::string& origin = "<string>") {
        Manifest m;
        std::istringstream in(text);
        std::string line;
        std::size_t line_no = 0;
        bool have_header = false;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw DataError(origin + ":" + std::to_string(line_no) + ": malformed JSON line: " + e.what());
            }
            try {
                if (!have_header) {
                    if (!j.contains("format_version"))
                        throw DataError("first line must be a manifest header with format_version");
                    int version = j.at("format_version").get<int>();
                    if (version != format_version)
                        throw DataError("unsupported manifest format_version " + std::to_string(version));
                    m.taxonomy = ClassTaxonomy::from_json(j.at("taxonomy"));
                    m.created_by = j.at("created_by").get<std::string>();
                    if (j.contains("parent") && !j.at("parent").is_null())
                        m.parent = j.at("parent").get<std::string>();
                    for (auto it = j.begin(); it != j.end(); ++it) {
                        static const std::unordered_set<std::string> known = {
                            "format_version", "taxonomy", "created_by", "parent"};
                        if (!known.count(it.key())) m.header_extra[it.key()] = it.value();
                    }
                    have_header = true;
                } else {
                    m.records.push_back(detail::record_from_json(j));
                }
            } catch (const nlohmann::json::exception& e) {
                throw DataError(origin + ":" + std::to_string(line_no) + ": " + e.what());
            }
        }
        if (!have_header) throw DataError(origin + ": empty manifest file (missing header line)");
        m.validate();
        return m;
    }

    static Manifest load(const std::filesystem::path& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open manifest: " + path.string());
        std::ostringstream buf;
        buf << f.rdbuf();
        Manifest m = from_jsonl(buf.str(), path.string());
        m.base_dir_ = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
        return m;
    }

private:
    mutable std::filesystem::path base_dir_ = ".";
};

}  // namespace dermaug
