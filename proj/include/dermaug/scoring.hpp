#pragma once

#include <string>
#include <vector>

#include "dermaug/curation.hpp"
#include "dermaug/training.hpp"

namespace dermaug {

// P(in-domain) taken from a binary classifier's score for its in-domain class.
class EnsembleDomainScorer final : public DomainScorer {
public:
    EnsembleDomainScorer(const EnsembleModel& model, const std::string& in_domain_class)
        : model_(model), class_idx_(model.taxonomy.index_of(in_domain_class)) {}

    double score(const Image& img) const override { return model_.predict(img)[class_idx_]; }

private:
    const EnsembleModel& model_;
    std::size_t class_idx_;
};

// Score vector over the taxonomy from a trained classifier ensemble.
class EnsembleLabelScorer final : public LabelScorer {
public:
    explicit EnsembleLabelScorer(const EnsembleModel& model) : model_(model) {}

    std::vector<double> scores(const Image& img) const override { return model_.predict(img); }

private:
    const EnsembleModel& model_;
};

}  // namespace dermaug
