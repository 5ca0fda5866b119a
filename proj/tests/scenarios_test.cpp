#include <gtest/gtest.h>

#include <set>

#include "dermaug/scenarios.hpp"
#include "test_support.hpp"

using namespace dermaug;
using testing_support::make_fake_manifest;
using testing_support::make_record;

namespace {

Manifest curated_pool(std::size_t per_class) {
    Manifest m = make_fake_manifest(per_class, ImageSource::synthetic, "filter-label");
    m.parent = "generate/filter-domain";
    return m;
}

std::set<std::string> ids_of(const Manifest& m, std::optional<ImageSource> source = {}) {
    std::set<std::string> out;
    for (const auto& r : m.records)
        if (!source || r.source == *source) out.insert(r.record_id);
    return out;
}

}  // namespace

TEST(BuildScenario, ExactCountsPerSourceAndClass) {
    Manifest real = make_fake_manifest(60);
    Manifest synth = curated_pool(60);
    ScenarioSpec spec{"hybrid", 25, 25, 3};
    Manifest out = build_scenario(spec, real, synth);
    auto real_counts = out.class_counts(ImageSource::real);
    auto synth_counts = out.class_counts(ImageSource::synthetic);
    for (const auto& entry : out.taxonomy.entries()) {
        EXPECT_EQ(real_counts[entry.class_id], 25u);
        EXPECT_EQ(synth_counts[entry.class_id], 25u);
    }
    EXPECT_EQ(out.created_by, "scenario:hybrid");
}

TEST(BuildScenario, AllZeroCountsGiveEmptyManifest) {
    Manifest real = make_fake_manifest(5);
    Manifest synth = curated_pool(5);
    Manifest out = build_scenario({"empty", 0, 0, 1}, real, synth);
    EXPECT_TRUE(out.records.empty());
}

TEST(BuildScenario, PaperScaleSpecs) {
    auto specs = standard_scenario_specs(500, 1);
    EXPECT_EQ(specs[0].name, "real-small");
    EXPECT_EQ(specs[0].per_class_real, 250u);
    EXPECT_EQ(specs[0].per_class_synthetic, 0u);
    EXPECT_EQ(specs[1].name, "real");
    EXPECT_EQ(specs[1].per_class_real, 500u);
    EXPECT_EQ(specs[2].name, "hybrid");
    EXPECT_EQ(specs[2].per_class_real, 250u);
    EXPECT_EQ(specs[2].per_class_synthetic, 250u);
    EXPECT_EQ(specs[3].name, "synthetic");
    EXPECT_EQ(specs[3].per_class_synthetic, 500u);
}

TEST(BuildScenario, UncuratedSyntheticRejected) {
    Manifest real = make_fake_manifest(10);
    Manifest synth = make_fake_manifest(10, ImageSource::synthetic, "generate");
    EXPECT_THROW(build_scenario({"synthetic", 0, 5, 1}, real, synth), DataError);
}

TEST(BuildScenario, InsufficientPoolNamesClassAndShortfall) {
    Manifest real = make_fake_manifest(10);
    Manifest synth = curated_pool(10);
    try {
        build_scenario({"real", 12, 0, 1}, real, synth);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("short by 2"), std::string::npos) << msg;
    }
}

TEST(StandardSuite, OddBaseCountRejected) {
    Manifest real = make_fake_manifest(10);
    Manifest synth = curated_pool(10);
    EXPECT_THROW(standard_suite(7, real, synth, 1), ConfigError);
}

TEST(StandardSuite, SmallestEvenCase) {
    Manifest real = make_fake_manifest(2);
    Manifest synth = curated_pool(2);
    ScenarioSuite suite = standard_suite(2, real, synth, 5);
    EXPECT_EQ(suite.by_name("real-small").records.size(), 6u);   // 1 per class
    EXPECT_EQ(suite.by_name("real").records.size(), 12u);        // 2 per class
    EXPECT_EQ(suite.by_name("hybrid").records.size(), 12u);      // 1 + 1 per class
    EXPECT_EQ(suite.by_name("synthetic").records.size(), 12u);   // 2 per class
}

TEST(StandardSuite, CountsAndBalanceAtToyScale) {
    Manifest real = make_fake_manifest(120);
    Manifest synth = curated_pool(120);
    ScenarioSuite suite = standard_suite(100, real, synth, 7);
    struct Expect {
        const char* name;
        std::size_t real_n, synth_n;
    };
    for (auto [name, real_n, synth_n] : {Expect{"real-small", 50, 0}, Expect{"real", 100, 0},
                                         Expect{"hybrid", 50, 50}, Expect{"synthetic", 0, 100}}) {
        const Manifest& m = suite.by_name(name);
        auto rc = m.class_counts(ImageSource::real);
        auto sc = m.class_counts(ImageSource::synthetic);
        for (const auto& entry : m.taxonomy.entries()) {
            EXPECT_EQ(rc[entry.class_id], real_n) << name << " " << entry.class_id;
            EXPECT_EQ(sc[entry.class_id], synth_n) << name << " " << entry.class_id;
        }
    }
}

TEST(StandardSuite, PairingProperties) {
    Manifest real = make_fake_manifest(120);
    Manifest synth = curated_pool(120);
    ScenarioSuite suite = standard_suite(100, real, synth, 11, true);

    auto real_small = ids_of(suite.by_name("real-small"));
    auto real_full = ids_of(suite.by_name("real"));
    auto hybrid_real = ids_of(suite.by_name("hybrid"), ImageSource::real);

    // real-small ⊂ real
    for (const auto& id : real_small) EXPECT_TRUE(real_full.count(id));
    // hybrid ∩ real-source == real-small
    EXPECT_EQ(hybrid_real, real_small);
    // synthetic parts of hybrid nest in the synthetic scenario
    auto hybrid_synth = ids_of(suite.by_name("hybrid"), ImageSource::synthetic);
    auto synth_full = ids_of(suite.by_name("synthetic"));
    for (const auto& id : hybrid_synth) EXPECT_TRUE(synth_full.count(id));
}

TEST(StandardSuite, UnpairedSamplingBreaksNesting) {
    Manifest real = make_fake_manifest(200);
    Manifest synth = curated_pool(200);
    ScenarioSuite suite = standard_suite(100, real, synth, 11, false);
    auto real_small = ids_of(suite.by_name("real-small"));
    auto real_full = ids_of(suite.by_name("real"));
    std::size_t contained = 0;
    for (const auto& id : real_small)
        if (real_full.count(id)) ++contained;
    // with independent draws from a 200-pool, full nesting is (100/200 choose…)
    // essentially impossible
    EXPECT_LT(contained, real_small.size());
}

TEST(StandardSuite, DeterministicBytes) {
    Manifest real = make_fake_manifest(30);
    Manifest synth = curated_pool(30);
    ScenarioSuite a = standard_suite(20, real, synth, 9);
    ScenarioSuite b = standard_suite(20, real, synth, 9);
    for (std::size_t i = 0; i < a.scenarios.size(); ++i)
        EXPECT_EQ(a.scenarios[i].second.to_jsonl(), b.scenarios[i].second.to_jsonl());
    ScenarioSuite c = standard_suite(20, real, synth, 10);
    bool all_same = true;
    for (std::size_t i = 0; i < a.scenarios.size(); ++i)
        if (a.scenarios[i].second.to_jsonl() != c.scenarios[i].second.to_jsonl()) all_same = false;
    EXPECT_FALSE(all_same);
}

TEST(StandardSuite, ScenarioRecordsHaveNoSplit) {
    Manifest real = make_fake_manifest(30);
    for (auto& r : real.records) r.split = Split::train;
    Manifest synth = curated_pool(30);
    ScenarioSuite suite = standard_suite(20, real, synth, 9);
    for (const auto& [spec, m] : suite.scenarios)
        for (const auto& r : m.records) EXPECT_FALSE(r.split.has_value());
}
