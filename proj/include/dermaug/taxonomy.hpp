#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dermaug/errors.hpp"

namespace dermaug {

enum class DiseaseCategory { benign, pre_malignant, malignant };

inline std::string to_string(DiseaseCategory c) {
    switch (c) {
        case DiseaseCategory::benign: return "benign";
        case DiseaseCategory::pre_malignant: return "pre-malignant";
        case DiseaseCategory::malignant: return "malignant";
    }
    return "benign";
}

inline DiseaseCategory category_from_string(const std::string& s) {
    if (s == "benign") return DiseaseCategory::benign;
    if (s == "pre-malignant") return DiseaseCategory::pre_malignant;
    if (s == "malignant") return DiseaseCategory::malignant;
    throw DataError("unknown disease category: '" + s + "'");
}

struct ClassEntry {
    std::string class_id;      // lowercase snake_case, stable identifier
    std::string display_name;  // human-readable spelling, used as the prompt
    DiseaseCategory category = DiseaseCategory::benign;

    bool operator==(const ClassEntry&) const = default;
};

// Ordered class list. The order is fixed and serves as the global tie-break
// order for score ranking everywhere in the pipeline.
class ClassTaxonomy {
public:
    ClassTaxonomy() = default;

    explicit ClassTaxonomy(std::vector<ClassEntry> entries) : entries_(std::move(entries)) {
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const auto& id = entries_[i].class_id;
            if (id.empty()) throw DataError("taxonomy class_id must be non-empty");
            if (!index_.emplace(id, i).second)
                throw DataError("duplicate taxonomy class_id: '" + id + "'");
        }
    }

    std::size_t size() const { return entries_.size(); }
    const std::vector<ClassEntry>& entries() const { return entries_; }
    const ClassEntry& at(std::size_t i) const { return entries_.at(i); }

    bool contains(const std::string& class_id) const { return index_.count(class_id) != 0; }

    std::size_t index_of(const std::string& class_id) const {
        auto it = index_.find(class_id);
        if (it == index_.end()) throw DataError("unknown class: '" + class_id + "'");
        return it->second;
    }

    std::optional<std::size_t> find(const std::string& class_id) const {
        auto it = index_.find(class_id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::vector<std::string> class_ids() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) out.push_back(e.class_id);
        return out;
    }

    bool operator==(const ClassTaxonomy& other) const { return entries_ == other.entries_; }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& e : entries_) {
            arr.push_back({{"class_id", e.class_id},
                           {"display_name", e.display_name},
                           {"category", to_string(e.category)}});
        }
        return arr;
    }

    static ClassTaxonomy from_json(const nlohmann::json& arr) {
        if (!arr.is_array()) throw DataError("taxonomy must be a JSON array");
        std::vector<ClassEntry> entries;
        for (const auto& e : arr) {
            ClassEntry entry;
            entry.class_id = e.at("class_id").get<std::string>();
            entry.display_name = e.at("display_name").get<std::string>();
            entry.category = category_from_string(e.at("category").get<std::string>());
            entries.push_back(std::move(entry));
        }
        return ClassTaxonomy(std::move(entries));
    }

private:
    std::vector<ClassEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// The six skin diseases this pipeline ships with, in canonical order.
inline ClassTaxonomy default_skin_taxonomy() {
    return ClassTaxonomy({
        {"seborrheic_keratosis", "Seborrheic keratosis", DiseaseCategory::benign},
        {"lentigo", "Lentigo", DiseaseCategory::benign},
        {"actinic_keratosis", "Actinic keratosis", DiseaseCategory::pre_malignant},
        {"atypical_melanocytic_nevus", "Atypical melanocytic nevus", DiseaseCategory::pre_malignant},
        {"basal_cell_carcinoma", "Basal cell carcinoma", DiseaseCategory::malignant},
        {"melanoma", "Melanoma", DiseaseCategory::malignant},
    });
}

}  // namespace dermaug
