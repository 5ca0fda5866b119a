#include <gtest/gtest.h>

#include <cmath>

#include "dermaug/diffusion.hpp"
#include "dermaug/generate.hpp"
#include "dermaug/sampler.hpp"
#include "dermaug/toy_data.hpp"
#include "test_support.hpp"

using namespace dermaug;
using testing_support::TempDir;

namespace {

struct ToyFixture {
    TempDir dir{"gen"};
    Manifest manifest;
    NoiseSchedule schedule = NoiseSchedule::linear(40);
    DenoiserConfig arch;

    explicit ToyFixture(std::size_t per_class = 6, int size = 16) {
        manifest = make_toy_dataset(dir.path(), per_class, 77, size);
        arch.height = arch.width = size;
        arch.hidden = 96;
        arch.blocks = 2;
        arch.cond_dim = 32;
    }
};

GeneratorTrainConfig quick_config(int steps, std::uint64_t seed = 5) {
    GeneratorTrainConfig c;
    c.seed = seed;
    c.steps = steps;
    c.lr = 2e-3f;
    c.batch_size = 8;
    return c;
}

}  // namespace

TEST(EncodePrompt, ReturnsStoredVectorUnchanged) {
    EmbeddingTable table = EmbeddingTable::init(default_skin_taxonomy(), 16, 3);
    auto vec = encode_prompt("melanoma", table);
    auto idx = Eigen::Index(table.index_of("melanoma"));
    ASSERT_EQ(vec.size(), 16u);
    for (Eigen::Index j = 0; j < 16; ++j) EXPECT_EQ(vec[std::size_t(j)], table.vectors.value(idx, j));
}

TEST(EncodePrompt, UnknownClassErrors) {
    EmbeddingTable table = EmbeddingTable::init(default_skin_taxonomy(), 16, 3);
    EXPECT_THROW(encode_prompt("warts", table), DataError);
}

TEST(EmbeddingTable, InitScaledByDimension) {
    EmbeddingTable table = EmbeddingTable::init(default_skin_taxonomy(), 64, 3);
    // unit gaussian / sqrt(d): value variance should be near 1/64
    double sumsq = 0;
    for (Eigen::Index i = 0; i < table.vectors.value.size(); ++i)
        sumsq += double(table.vectors.value.data()[i]) * table.vectors.value.data()[i];
    double var = sumsq / double(table.vectors.value.size());
    EXPECT_NEAR(var, 1.0 / 64.0, 0.5 / 64.0);
}

TEST(TrainDenoiser, ZeroStepsEqualsInitialization) {
    ToyFixture fix;
    auto result = train_denoiser(fix.manifest, fix.schedule, fix.arch, quick_config(0));
    DenoiserModel fresh = DenoiserModel::init(fix.arch, quick_config(0).seed);
    EXPECT_EQ(result.model.checksum(), fresh.checksum());
    EmbeddingTable fresh_table =
        EmbeddingTable::init(fix.manifest.taxonomy, fix.arch.cond_dim, quick_config(0).seed);
    EXPECT_TRUE(result.embeddings.vectors.value.isApprox(fresh_table.vectors.value));
    EXPECT_TRUE(result.curve.raw.empty());
}

TEST(TrainDenoiser, LossDecreasesOnToyData) {
    ToyFixture fix;
    auto result = train_denoiser(fix.manifest, fix.schedule, fix.arch, quick_config(400));
    ASSERT_EQ(result.curve.smoothed.size(), 400u);
    EXPECT_LT(result.curve.smoothed.back(), result.curve.smoothed.front());
}

TEST(TrainDenoiser, DeterministicForSameSeed) {
    ToyFixture fix;
    auto a = train_denoiser(fix.manifest, fix.schedule, fix.arch, quick_config(50, 9));
    auto b = train_denoiser(fix.manifest, fix.schedule, fix.arch, quick_config(50, 9));
    EXPECT_EQ(a.curve.raw.back(), b.curve.raw.back());
    EXPECT_EQ(a.model.checksum(), b.model.checksum());
    auto c = train_denoiser(fix.manifest, fix.schedule, fix.arch, quick_config(50, 10));
    EXPECT_NE(c.model.checksum(), a.model.checksum());
}

TEST(TrainDenoiser, EmptyManifestRejected) {
    ToyFixture fix;
    Manifest empty(fix.manifest.taxonomy, "fixture");
    EXPECT_THROW(train_denoiser(empty, fix.schedule, fix.arch, quick_config(1)), DataError);
}

TEST(TrainEmbeddings, ZeroStepsEqualsInitialization) {
    ToyFixture fix;
    auto base = train_denoiser(fix.manifest, fix.schedule, fix.arch, quick_config(30));
    EmbeddingTable initial = base.embeddings;
    auto [table, curve] = train_embeddings(base.model, std::move(initial), fix.manifest,
                                           fix.schedule, quick_config(0));
    EXPECT_TRUE(table.vectors.value.isApprox(base.embeddings.vectors.value));
}

TEST(TrainEmbeddings, DenoiserFrozenEmbeddingsMove) {
    ToyFixture fix;
    auto base = train_denoiser(fix.manifest, fix.schedule, fix.arch, quick_config(60));
    std::string before = base.model.checksum();
    nn::MatrixF initial_vectors = base.embeddings.vectors.value;
    auto [table, curve] = train_embeddings(base.model, std::move(base.embeddings), fix.manifest,
                                           fix.schedule, quick_config(40));
    EXPECT_EQ(base.model.checksum(), before);  // bit-identical freeze
    double moved = double((table.vectors.value - initial_vectors).norm());
    EXPECT_GT(moved, 0.0);
}

TEST(TrainEmbeddings, EmbeddingsDifferAcrossClassesAfterTraining) {
    ToyFixture fix(8);
    auto result = train_denoiser(fix.manifest, fix.schedule, fix.arch, quick_config(300));
    const auto& v = result.embeddings.vectors.value;
    for (Eigen::Index a = 0; a < v.rows(); ++a)
        for (Eigen::Index b = a + 1; b < v.rows(); ++b)
            EXPECT_GT((v.row(a) - v.row(b)).norm(), 0.0f);
}

TEST(Sample, ZeroCountGivesEmptyList) {
    ToyFixture fix;
    auto result = train_denoiser(fix.manifest, fix.schedule, fix.arch, quick_config(10));
    auto images = sample(result.model, result.embeddings, fix.schedule, "melanoma", 0, 1);
    EXPECT_TRUE(images.empty());
}

TEST(Sample, DeterministicBitIdentical) {
    ToyFixture fix;
    auto result = train_denoiser(fix.manifest, fix.schedule, fix.arch, quick_config(50));
    auto a = sample(result.model, result.embeddings, fix.schedule, "lentigo", 4, 123);
    auto b = sample(result.model, result.embeddings, fix.schedule, "lentigo", 4, 123);
    ASSERT_EQ(a.size(), 4u);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].data, b[i].data);
}

TEST(Sample, WorkerCountDoesNotChangeOutput) {
    ToyFixture fix;
    auto result = train_denoiser(fix.manifest, fix.schedule, fix.arch, quick_config(30));
    auto one = sample(result.model, result.embeddings, fix.schedule, "melanoma", 70, 5, 1);
    auto two = sample(result.model, result.embeddings, fix.schedule, "melanoma", 70, 5, 2);
    ASSERT_EQ(one.size(), two.size());
    for (std::size_t i = 0; i < one.size(); ++i) EXPECT_EQ(one[i].data, two[i].data);
}

TEST(Sample, OutputsFiniteAndInRangeEvenUntrained) {
    ToyFixture fix;
    DenoiserModel model = DenoiserModel::init(fix.arch, 4);
    EmbeddingTable table = EmbeddingTable::init(fix.manifest.taxonomy, fix.arch.cond_dim, 4);
    auto images = sample(model, table, fix.schedule, "melanoma", 2, 9);
    for (const auto& img : images) {
        EXPECT_EQ(img.height, fix.arch.height);
        EXPECT_EQ(img.width, fix.arch.width);
        for (float v : img.data) {
            EXPECT_TRUE(std::isfinite(v));
            EXPECT_GE(v, 0.0f);
            EXPECT_LE(v, 1.0f);
        }
    }
}

TEST(Sample, UnknownClassErrors) {
    ToyFixture fix;
    DenoiserModel model = DenoiserModel::init(fix.arch, 4);
    EmbeddingTable table = EmbeddingTable::init(fix.manifest.taxonomy, fix.arch.cond_dim, 4);
    EXPECT_THROW(sample(model, table, fix.schedule, "warts", 1, 1), DataError);
}

TEST(GenerateToManifest, ZeroRequestedGivesEmptyManifest) {
    ToyFixture fix;
    DenoiserModel model = DenoiserModel::init(fix.arch, 4);
    EmbeddingTable table = EmbeddingTable::init(fix.manifest.taxonomy, fix.arch.cond_dim, 4);
    TempDir out("gen_out0");
    GeneratorRun run;
    run.run_id = "g0";
    run.seed = 1;
    run.out_dir = out.path();
    Manifest m = generate_to_manifest(run, model, table, fix.schedule, fix.manifest.taxonomy);
    EXPECT_TRUE(m.records.empty());
}

TEST(GenerateToManifest, CountContractAndProvenance) {
    ToyFixture fix;
    auto result = train_denoiser(fix.manifest, fix.schedule, fix.arch, quick_config(20));
    TempDir out("gen_out");
    GeneratorRun run;
    run.run_id = "g1";
    run.seed = 42;
    run.out_dir = out.path();
    for (const auto& e : fix.manifest.taxonomy.entries()) run.per_class_counts[e.class_id] = 3;
    Manifest m = generate_to_manifest(run, result.model, result.embeddings, fix.schedule,
                                      fix.manifest.taxonomy, 2);
    for (const auto& [cls, n] : m.class_counts()) EXPECT_EQ(n, 3u) << cls;
    for (const auto& [cls, n] : m.class_counts(ImageSource::synthetic)) EXPECT_EQ(n, 3u) << cls;
    for (const auto& r : m.records) {
        ASSERT_TRUE(r.provenance.has_value());
        EXPECT_EQ(r.provenance->generator_run_id, "g1");
        EXPECT_EQ(r.provenance->sampler_steps, fix.schedule.timesteps);
        auto display =
            fix.manifest.taxonomy.at(fix.manifest.taxonomy.index_of(r.label)).display_name;
        EXPECT_EQ(r.provenance->prompt, display);
        EXPECT_TRUE(std::filesystem::exists(m.resolve_image_path(r))) << r.image_path;
    }
    EXPECT_EQ(m.created_by, "generate");
}

TEST(GenerateToManifest, RerunBitIdentical) {
    ToyFixture fix;
    auto result = train_denoiser(fix.manifest, fix.schedule, fix.arch, quick_config(20));
    TempDir out_a("gen_ra"), out_b("gen_rb");
    GeneratorRun run;
    run.run_id = "g2";
    run.seed = 7;
    run.per_class_counts = {{"melanoma", 2}, {"lentigo", 2}};
    run.out_dir = out_a.path();
    Manifest a = generate_to_manifest(run, result.model, result.embeddings, fix.schedule,
                                      fix.manifest.taxonomy, 1);
    run.out_dir = out_b.path();
    Manifest b = generate_to_manifest(run, result.model, result.embeddings, fix.schedule,
                                      fix.manifest.taxonomy, 2);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        Image ia = png::load_image(a.resolve_image_path(a.records[i]));
        Image ib = png::load_image(b.resolve_image_path(b.records[i]));
        EXPECT_EQ(ia.data, ib.data);
    }
}

// Textual-inversion transfer: freeze a denoiser trained on five classes, learn
// only the sixth class's embedding, and check the sixth's samples read as that
// class above chance under an independent oracle.
TEST(TrainEmbeddings, NewClassLearnableWithFrozenDenoiser) {
    const int size = 16;
    TempDir dir("ti");
    Manifest all = make_toy_dataset(dir.path(), 24, 31, size);
    const std::string new_class = "melanoma";  // taxonomy index 5

    Manifest five(all.taxonomy, "five");
    five.set_base_dir(all.base_dir());
    Manifest sixth(all.taxonomy, "sixth");
    sixth.set_base_dir(all.base_dir());
    for (const auto& r : all.records)
        (r.label == new_class ? sixth : five).records.push_back(r);

    DenoiserConfig arch;
    arch.height = arch.width = size;
    arch.hidden = 128;
    arch.blocks = 2;
    arch.cond_dim = 32;
    NoiseSchedule schedule = NoiseSchedule::linear(60);

    GeneratorTrainConfig base_cfg = quick_config(1200, 3);
    auto base = train_denoiser(five, schedule, arch, base_cfg);

    GeneratorTrainConfig emb_cfg = quick_config(600, 4);
    emb_cfg.lr = 1e-2f;
    auto [table, curve] =
        train_embeddings(base.model, std::move(base.embeddings), sixth, schedule, emb_cfg);

    // oracle trained on real data for all six classes
    std::vector<Image> oracle_imgs;
    std::vector<int> oracle_labels;
    for (const auto& r : all.records) {
        oracle_imgs.push_back(png::load_image(all.resolve_image_path(r)));
        oracle_labels.push_back(int(all.taxonomy.index_of(r.label)));
    }
    testing_support::OracleClassifier oracle;
    oracle.fit(oracle_imgs, oracle_labels, 6);

    auto samples = sample(base.model, table, schedule, new_class, 60, 99, 2);
    std::size_t hits = 0;
    for (const auto& img : samples)
        if (oracle.predict(img) == int(all.taxonomy.index_of(new_class))) ++hits;
    double rate = double(hits) / double(samples.size());
    EXPECT_GT(rate, 1.0 / 6.0);
}

// Trained-generator sample quality: per-class oracle label-match above chance.
TEST(Sample, TrainedModelBeatsChancePerClass) {
    const int size = 16;
    TempDir dir("sq");
    Manifest all = make_toy_dataset(dir.path(), 24, 13, size);
    DenoiserConfig arch;
    arch.height = arch.width = size;
    arch.hidden = 128;
    arch.blocks = 2;
    arch.cond_dim = 32;
    NoiseSchedule schedule = NoiseSchedule::linear(60);
    auto result = train_denoiser(all, schedule, arch, quick_config(2500, 21));

    std::vector<Image> oracle_imgs;
    std::vector<int> oracle_labels;
    for (const auto& r : all.records) {
        oracle_imgs.push_back(png::load_image(all.resolve_image_path(r)));
        oracle_labels.push_back(int(all.taxonomy.index_of(r.label)));
    }
    testing_support::OracleClassifier oracle;
    oracle.fit(oracle_imgs, oracle_labels, 6);

    for (const auto& entry : all.taxonomy.entries()) {
        auto samples =
            sample(result.model, result.embeddings, schedule, entry.class_id, 30, 55, 2);
        std::size_t hits = 0;
        for (const auto& img : samples)
            if (oracle.predict(img) == int(all.taxonomy.index_of(entry.class_id))) ++hits;
        EXPECT_GT(double(hits) / double(samples.size()), 1.0 / 6.0) << entry.class_id;
    }
}
