#include <gtest/gtest.h>

#include <map>

#include "dermaug/manifest.hpp"
#include "dermaug/taxonomy.hpp"
#include "test_support.hpp"

using namespace dermaug;
using testing_support::make_fake_manifest;
using testing_support::make_record;
using testing_support::TempDir;

namespace {

Manifest counts_fixture(const std::map<std::string, std::size_t>& counts) {
    Manifest m(default_skin_taxonomy(), "fixture");
    for (const auto& [cls, n] : counts)
        for (std::size_t i = 0; i < n; ++i)
            m.records.push_back(make_record(cls + "_" + std::to_string(i), cls));
    return m;
}

}  // namespace

TEST(Taxonomy, DefaultOrderAndCategories) {
    auto tax = default_skin_taxonomy();
    ASSERT_EQ(tax.size(), 6u);
    EXPECT_EQ(tax.at(0).class_id, "seborrheic_keratosis");
    EXPECT_EQ(tax.at(1).class_id, "lentigo");
    EXPECT_EQ(tax.at(2).class_id, "actinic_keratosis");
    EXPECT_EQ(tax.at(3).class_id, "atypical_melanocytic_nevus");
    EXPECT_EQ(tax.at(4).class_id, "basal_cell_carcinoma");
    EXPECT_EQ(tax.at(5).class_id, "melanoma");
    EXPECT_EQ(tax.at(0).category, DiseaseCategory::benign);
    EXPECT_EQ(tax.at(2).category, DiseaseCategory::pre_malignant);
    EXPECT_EQ(tax.at(5).category, DiseaseCategory::malignant);
    EXPECT_THROW(tax.index_of("nope"), DataError);
}

TEST(Taxonomy, RejectsDuplicateIds) {
    EXPECT_THROW(ClassTaxonomy({{"a", "A", DiseaseCategory::benign},
                                {"a", "A2", DiseaseCategory::benign}}),
                 DataError);
}

TEST(Manifest, EmptyRecordListWithValidHeader) {
    Manifest m(default_skin_taxonomy(), "fixture");
    Manifest parsed = Manifest::from_jsonl(m.to_jsonl());
    EXPECT_EQ(parsed.records.size(), 0u);
    EXPECT_EQ(parsed.created_by, "fixture");
}

TEST(Manifest, OnePerClassFixture) {
    Manifest m = make_fake_manifest(1);
    Manifest parsed = Manifest::from_jsonl(m.to_jsonl());
    for (const auto& [cls, n] : parsed.class_counts()) EXPECT_EQ(n, 1u) << cls;
}

TEST(Manifest, DuplicateIdNamesTheId) {
    Manifest m = make_fake_manifest(1);
    m.records.push_back(m.records.front());
    try {
        m.validate();
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find(m.records.front().record_id), std::string::npos);
    }
}

TEST(Manifest, ParseErrorCarriesLineNumber) {
    Manifest m = make_fake_manifest(1);
    std::string text = m.to_jsonl() + "{not json\n";
    try {
        Manifest::from_jsonl(text, "fixture.jsonl");
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("fixture.jsonl:8"), std::string::npos) << e.what();
    }
}

TEST(Manifest, UnknownLabelRejected) {
    Manifest m = make_fake_manifest(1);
    m.records.front().label = "unknown_disease";
    EXPECT_THROW(m.validate(), DataError);
}

TEST(Manifest, ProbabilityRangeValidated) {
    Manifest m = make_fake_manifest(1);
    m.records.front().filter_scores.domain_score = 1.5;
    EXPECT_THROW(m.validate(), DataError);
}

TEST(Manifest, SyntheticRequiresProvenance) {
    Manifest m = make_fake_manifest(1);
    m.records.front().source = ImageSource::synthetic;
    EXPECT_THROW(m.validate(), DataError);
}

TEST(Manifest, RealMustNotCarryGeneratorProvenance) {
    Manifest m = make_fake_manifest(1);
    Provenance p;
    p.generator_run_id = "gen";
    m.records.front().provenance = p;
    EXPECT_THROW(m.validate(), DataError);
}

TEST(Manifest, AbsoluteImagePathRejected) {
    Manifest m = make_fake_manifest(1);
    m.records.front().image_path = "/abs/path.png";
    EXPECT_THROW(m.validate(), DataError);
}

TEST(Manifest, RoundTripPreservesEverything) {
    TempDir dir("manifest_rt");
    Manifest m = make_fake_manifest(3, ImageSource::synthetic, "generate");
    m.parent = "make-toy";
    m.records[0].split = Split::train;
    m.records[1].filter_scores.domain_score = 0.75;
    m.records[1].filter_scores.predicted_label = "melanoma";
    m.records[1].filter_scores.label_confidence = 0.5;
    m.records[2].extra["custom_field"] = {{"nested", 42}};
    m.header_extra["pipeline_note"] = "kept";
    m.save(dir.path() / "m.jsonl");
    Manifest loaded = Manifest::load(dir.path() / "m.jsonl");
    EXPECT_TRUE(m.equal_content(loaded));
    // unknown fields survive a second round trip byte-for-byte
    EXPECT_EQ(loaded.to_jsonl(), m.to_jsonl());
}

TEST(Manifest, ClassCountsMatchPaperTrainingTable) {
    Manifest m = counts_fixture({{"seborrheic_keratosis", 2134},
                                 {"lentigo", 680},
                                 {"actinic_keratosis", 3298},
                                 {"atypical_melanocytic_nevus", 623},
                                 {"basal_cell_carcinoma", 7081},
                                 {"melanoma", 3381}});
    auto counts = m.class_counts();
    EXPECT_EQ(counts["seborrheic_keratosis"], 2134u);
    EXPECT_EQ(counts["lentigo"], 680u);
    EXPECT_EQ(counts["actinic_keratosis"], 3298u);
    EXPECT_EQ(counts["atypical_melanocytic_nevus"], 623u);
    EXPECT_EQ(counts["basal_cell_carcinoma"], 7081u);
    EXPECT_EQ(counts["melanoma"], 3381u);
}

TEST(Manifest, TestDistributionSumsTo3582) {
    Manifest m = counts_fixture({{"seborrheic_keratosis", 1597},
                                 {"lentigo", 293},
                                 {"actinic_keratosis", 282},
                                 {"atypical_melanocytic_nevus", 885},
                                 {"basal_cell_carcinoma", 345},
                                 {"melanoma", 180}});
    std::size_t total = 0;
    for (const auto& [cls, n] : m.class_counts()) total += n;
    EXPECT_EQ(total, 3582u);
}

TEST(Manifest, EmptyManifestCountsAllZero) {
    Manifest m(default_skin_taxonomy(), "fixture");
    for (const auto& [cls, n] : m.class_counts()) EXPECT_EQ(n, 0u) << cls;
}

TEST(Manifest, SourceFilterPartitionsCounts) {
    Manifest m = make_fake_manifest(2);
    for (std::size_t i = 0; i < 4; ++i) {
        auto rec = make_record("synth_" + std::to_string(i),
                               m.taxonomy.at(i % 6).class_id, ImageSource::synthetic);
        m.records.push_back(rec);
    }
    auto all = m.class_counts();
    auto real = m.class_counts(ImageSource::real);
    auto synth = m.class_counts(ImageSource::synthetic);
    for (const auto& entry : m.taxonomy.entries()) {
        const auto& cls = entry.class_id;
        EXPECT_EQ(all[cls], real[cls] + synth[cls]) << cls;
    }
}

TEST(Manifest, StageChainMembership) {
    Manifest m(default_skin_taxonomy(), "filter-label");
    m.parent = "make-toy/generate/filter-domain";
    EXPECT_EQ(m.stage_chain(), "make-toy/generate/filter-domain/filter-label");
    EXPECT_TRUE(m.chain_contains("filter-label"));
    EXPECT_TRUE(m.chain_contains("generate"));
    EXPECT_FALSE(m.chain_contains("scenario"));
    EXPECT_FALSE(m.chain_contains("filter"));
}

TEST(Manifest, MissingHeaderIsParseError) {
    EXPECT_THROW(Manifest::from_jsonl("{\"record_id\":\"x\"}\n"), DataError);
    EXPECT_THROW(Manifest::from_jsonl(""), DataError);
}
