#include <gtest/gtest.h>

#include <cmath>

#include "dermaug/checkpoint.hpp"
#include "dermaug/evaluation.hpp"
#include "dermaug/sampler.hpp"
#include "dermaug/split.hpp"
#include "dermaug/toy_data.hpp"
#include "dermaug/training.hpp"
#include "test_support.hpp"

using namespace dermaug;
using testing_support::TempDir;

namespace {

// Scripted member: ignores training, predicts so that exactly
// correct_count(epoch) validation items are right. Needs the val labels in
// evaluation order (trainer contract: val records in manifest order).
class ScriptedMember final : public MemberModel {
public:
    ScriptedMember(std::vector<int> val_labels, int n_classes,
                   std::function<std::size_t(int)> correct_count)
        : val_labels_(std::move(val_labels)),
          n_classes_(n_classes),
          correct_count_(std::move(correct_count)) {}

    std::string arch_id() const override { return "scripted"; }
    void begin_epoch(int epoch) override { epoch_ = epoch; }

    float train_batch(const nn::MatrixF&, const std::vector<int>&, float, float) override {
        return 0.5f;
    }

    nn::MatrixF predict_batch(const nn::MatrixF& x) const override {
        nn::MatrixF probs = nn::MatrixF::Zero(x.rows(), n_classes_);
        std::size_t correct = correct_count_(epoch_);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            int label = val_labels_[std::size_t(i) % val_labels_.size()];
            int pick = std::size_t(i) < correct ? label : (label + 1) % n_classes_;
            probs(i, pick) = 1.0f;
        }
        return probs;
    }

    std::vector<float> save_params() override { return {1.0f}; }
    void load_params(const std::vector<float>&) override {}

private:
    std::vector<int> val_labels_;
    int n_classes_;
    std::function<std::size_t(int)> correct_count_;
    int epoch_ = 1;
};

struct ScriptedFixture {
    TempDir dir{"train_stub"};
    Manifest split_manifest;
    std::vector<int> val_labels;
    TrainConfig config;

    ScriptedFixture() {
        Manifest m = make_toy_dataset(dir.path(), 90, 3, 8);
        split_manifest = stratified_split(m, 17);
        for (const auto& r : split_manifest.records)
            if (r.split && *r.split == Split::val)
                val_labels.push_back(int(split_manifest.taxonomy.index_of(r.label)));
        config.height = config.width = 8;
        config.epochs = 100;
        config.patience = 10;
        config.seed = 5;
    }
};

}  // namespace

TEST(Normalization, UniformMidGrayIsDegenerate) {
    nn::MatrixF rows(1, 12);
    rows.setConstant(0.5f);
    EXPECT_THROW(compute_normalization(rows), DataError);
}

TEST(Normalization, BlackAndWhiteGiveHalfHalf) {
    nn::MatrixF rows(2, 12);
    rows.row(0).setConstant(0.0f);
    rows.row(1).setConstant(1.0f);
    NormalizationStats stats = compute_normalization(rows);
    for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(stats.mean[std::size_t(c)], 0.5, 1e-9);
        EXPECT_NEAR(stats.std[std::size_t(c)], 0.5, 1e-9);  // population std
    }
}

TEST(Normalization, MatchesIndependentRecomputation) {
    RngStream rng(3, "norm");
    nn::MatrixF rows(100, 48);
    for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] = float(rng.uniform());
    NormalizationStats stats = compute_normalization(rows);
    // direct single-pass oracle per channel
    for (int c = 0; c < 3; ++c) {
        double sum = 0, sumsq = 0;
        std::size_t n = 0;
        for (Eigen::Index i = 0; i < rows.rows(); ++i)
            for (Eigen::Index j = c; j < rows.cols(); j += 3) {
                sum += rows(i, j);
                sumsq += double(rows(i, j)) * rows(i, j);
                ++n;
            }
        double mean = sum / double(n);
        double std_dev = std::sqrt(sumsq / double(n) - mean * mean);
        EXPECT_NEAR(stats.mean[std::size_t(c)], mean, 1e-6);
        EXPECT_NEAR(stats.std[std::size_t(c)], std_dev, 1e-6);
    }
}

TEST(Normalization, EmptySplitRejected) {
    EXPECT_THROW(compute_normalization(nn::MatrixF(0, 12)), DataError);
}

TEST(EarlyStopping, ConstantSequenceStopsAtOnePlusPatience) {
    auto history = run_early_stopping(100, 10, "val_accuracy", [](int) {
        EpochStats s;
        s.val_accuracy = 0.5;
        return s;
    });
    EXPECT_EQ(history.best_epoch, 1);
    EXPECT_EQ(history.stopped_epoch, 11);
    EXPECT_EQ(history.epochs.size(), 11u);
}

TEST(EarlyStopping, StrictlyImprovingRunsAllEpochs) {
    auto history = run_early_stopping(100, 10, "val_accuracy", [](int epoch) {
        EpochStats s;
        s.val_accuracy = 0.001 * epoch;
        return s;
    });
    EXPECT_EQ(history.stopped_epoch, 100);
    EXPECT_EQ(history.best_epoch, 100);
}

TEST(EarlyStopping, StopsAtBestPlusPatience) {
    // improves until epoch 7, then flat: stop at 17
    auto history = run_early_stopping(100, 10, "val_accuracy", [](int epoch) {
        EpochStats s;
        s.val_accuracy = epoch <= 7 ? 0.1 * epoch : 0.7;
        return s;
    });
    EXPECT_EQ(history.best_epoch, 7);
    EXPECT_EQ(history.stopped_epoch, 17);
}

TEST(EarlyStopping, ValLossMonitorUsesLowerIsBetter) {
    auto history = run_early_stopping(50, 5, "val_loss", [](int epoch) {
        EpochStats s;
        s.val_loss = epoch <= 3 ? 1.0 / epoch : 1.0;
        return s;
    });
    EXPECT_EQ(history.best_epoch, 3);
    EXPECT_EQ(history.stopped_epoch, 8);
}

TEST(TrainMember, StubbedConstantAccuracyStopsAtEpoch11) {
    ScriptedFixture fix;
    register_member_arch("stub_constant", [&](const MemberInit& init) -> MemberPtr {
        return std::make_unique<ScriptedMember>(fix.val_labels, init.n_classes,
                                                [](int) { return std::size_t(5); });
    });
    auto result = train_member("stub_constant", fix.split_manifest, fix.config);
    EXPECT_EQ(result.history.best_epoch, 1);
    EXPECT_EQ(result.history.stopped_epoch, 11);
}

TEST(TrainMember, StubbedStrictlyImprovingRunsAll100Epochs) {
    ScriptedFixture fix;
    ASSERT_GE(fix.val_labels.size(), 100u);  // enough items for 100 strict improvements
    register_member_arch("stub_improving", [&](const MemberInit& init) -> MemberPtr {
        return std::make_unique<ScriptedMember>(fix.val_labels, init.n_classes,
                                                [](int epoch) { return std::size_t(epoch); });
    });
    auto result = train_member("stub_improving", fix.split_manifest, fix.config);
    EXPECT_EQ(result.history.stopped_epoch, 100);
    for (std::size_t e = 1; e < result.history.epochs.size(); ++e)
        EXPECT_GT(result.history.epochs[e].val_accuracy, result.history.epochs[e - 1].val_accuracy);
}

TEST(TrainMember, NonFiniteLossAborts) {
    ScriptedFixture fix;
    class NanMember final : public MemberModel {
    public:
        std::string arch_id() const override { return "nan"; }
        float train_batch(const nn::MatrixF&, const std::vector<int>&, float, float) override {
            return std::nanf("");
        }
        nn::MatrixF predict_batch(const nn::MatrixF& x) const override {
            return nn::MatrixF::Ones(x.rows(), 6) / 6.0f;
        }
        std::vector<float> save_params() override { return {}; }
        void load_params(const std::vector<float>&) override {}
    };
    register_member_arch("stub_nan",
                         [](const MemberInit&) -> MemberPtr { return std::make_unique<NanMember>(); });
    EXPECT_THROW(train_member("stub_nan", fix.split_manifest, fix.config), TrainingError);
}

TEST(TrainEnsemble, ThreeStubMembersShareOneStats) {
    ScriptedFixture fix;
    for (const char* name : {"stub_a", "stub_b", "stub_c"})
        register_member_arch(name, [&](const MemberInit& init) -> MemberPtr {
            return std::make_unique<ScriptedMember>(fix.val_labels, init.n_classes,
                                                    [](int) { return std::size_t(3); });
        });
    TrainConfig cfg = fix.config;
    cfg.epochs = 3;
    cfg.patience = 10;
    cfg.archs = {"stub_a", "stub_b", "stub_c"};
    EnsembleModel ensemble = train_ensemble(fix.split_manifest, cfg);
    EXPECT_EQ(ensemble.members.size(), 3u);
    EXPECT_EQ(ensemble.histories.size(), 3u);
    for (int c = 0; c < 3; ++c) EXPECT_GT(ensemble.stats.std[std::size_t(c)], 0.0);
}

TEST(TrainEnsemble, DeterministicHistories) {
    TempDir dir("train_det");
    Manifest m = make_toy_dataset(dir.path(), 12, 7, 8);
    TrainConfig cfg;
    cfg.height = cfg.width = 8;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 21;
    EnsembleModel a = train_ensemble(m, cfg, 2);
    EnsembleModel b = train_ensemble(m, cfg, 1);
    ASSERT_EQ(a.histories.size(), b.histories.size());
    for (std::size_t i = 0; i < a.histories.size(); ++i) {
        ASSERT_EQ(a.histories[i].epochs.size(), b.histories[i].epochs.size());
        for (std::size_t e = 0; e < a.histories[i].epochs.size(); ++e) {
            EXPECT_EQ(a.histories[i].epochs[e].train_loss, b.histories[i].epochs[e].train_loss);
            EXPECT_EQ(a.histories[i].epochs[e].val_accuracy, b.histories[i].epochs[e].val_accuracy);
        }
    }
}

TEST(TrainEnsemble, LearnsTheToyClasses) {
    TempDir dir("train_learn");
    Manifest m = make_toy_dataset(dir.path(), 20, 11, 16);
    TrainConfig cfg;
    cfg.height = cfg.width = 16;
    cfg.epochs = 12;
    cfg.seed = 4;
    EnsembleModel ensemble = train_ensemble(m, cfg, 2);
    double best_val = 0;
    for (const auto& h : ensemble.histories)
        best_val = std::max(best_val, h.epochs[std::size_t(h.best_epoch - 1)].val_accuracy);
    EXPECT_GT(best_val, 0.5);  // far above 1/6 chance
}

namespace {

class FixedMember final : public MemberModel {
public:
    explicit FixedMember(std::vector<float> probs) : probs_(std::move(probs)) {}
    std::string arch_id() const override { return "fixed"; }
    float train_batch(const nn::MatrixF&, const std::vector<int>&, float, float) override {
        return 0;
    }
    nn::MatrixF predict_batch(const nn::MatrixF& x) const override {
        nn::MatrixF out(x.rows(), Eigen::Index(probs_.size()));
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (std::size_t c = 0; c < probs_.size(); ++c) out(i, Eigen::Index(c)) = probs_[c];
        return out;
    }
    std::vector<float> save_params() override { return probs_; }
    void load_params(const std::vector<float>&) override {}

private:
    std::vector<float> probs_;
};

EnsembleModel fixed_ensemble(std::vector<std::vector<float>> member_probs,
                             const std::string& aggregate = "mean") {
    EnsembleModel e;
    e.taxonomy = default_skin_taxonomy();
    e.config.height = e.config.width = 8;
    e.config.aggregate = aggregate;
    e.stats.mean = {0.5, 0.5, 0.5};
    e.stats.std = {0.25, 0.25, 0.25};
    for (auto& p : member_probs) e.members.push_back(std::make_unique<FixedMember>(std::move(p)));
    return e;
}

}  // namespace

TEST(Predict, IdenticalMembersReturnTheirVector) {
    std::vector<float> v = {0.1f, 0.2f, 0.3f, 0.25f, 0.1f, 0.05f};
    EnsembleModel e = fixed_ensemble({v, v, v});
    Image img(8, 8);
    auto out = e.predict(img);
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(out[c], double(v[c]), 1e-6);
}

TEST(Predict, OneHotMembersAverageToThirds) {
    std::vector<float> a(6, 0.0f), b(6, 0.0f), c(6, 0.0f);
    a[0] = 1.0f;
    b[2] = 1.0f;
    c[4] = 1.0f;
    EnsembleModel e = fixed_ensemble({a, b, c});
    Image img(8, 8);
    auto out = e.predict(img);
    EXPECT_NEAR(out[0], 1.0 / 3.0, 1e-6);
    EXPECT_NEAR(out[2], 1.0 / 3.0, 1e-6);
    EXPECT_NEAR(out[4], 1.0 / 3.0, 1e-6);
    EXPECT_NEAR(out[1] + out[3] + out[5], 0.0, 1e-9);
}

TEST(Predict, MeanMatchesDirectRecomputation) {
    RngStream rng(8, "pred");
    std::vector<std::vector<float>> members;
    for (int m = 0; m < 3; ++m) {
        std::vector<float> p(6);
        float sum = 0;
        for (auto& v : p) {
            v = float(rng.uniform()) + 0.01f;
            sum += v;
        }
        for (auto& v : p) v /= sum;
        members.push_back(p);
    }
    EnsembleModel e = fixed_ensemble(members);
    Image img(8, 8);
    auto out = e.predict(img);
    double total = 0;
    for (std::size_t c = 0; c < 6; ++c) {
        double expected = (members[0][c] + members[1][c] + members[2][c]) / 3.0;
        EXPECT_NEAR(out[c], expected, 1e-6);
        total += out[c];
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(Predict, VoteAggregationCountsArgmaxes) {
    std::vector<float> a(6, 0.0f), b(6, 0.0f), c(6, 0.0f);
    a[1] = 1.0f;
    b[1] = 1.0f;
    c[3] = 1.0f;
    EnsembleModel e = fixed_ensemble({a, b, c}, "vote");
    Image img(8, 8);
    auto out = e.predict(img);
    EXPECT_NEAR(out[1], 2.0 / 3.0, 1e-6);
    EXPECT_NEAR(out[3], 1.0 / 3.0, 1e-6);
}

TEST(Checkpoint, EnsembleRoundTrip) {
    TempDir dir("ckpt_ens");
    Manifest m = make_toy_dataset(dir.path(), 8, 5, 8);
    TrainConfig cfg;
    cfg.height = cfg.width = 8;
    cfg.epochs = 2;
    cfg.seed = 33;
    EnsembleModel trained = train_ensemble(m, cfg);
    trained.scenario_name = "real";
    trained.real_per_class = 8;
    save_ensemble(trained, dir.path() / "e.ckpt");
    EnsembleModel loaded = load_ensemble(dir.path() / "e.ckpt");

    EXPECT_EQ(loaded.scenario_name, "real");
    EXPECT_EQ(loaded.arch_ids, trained.arch_ids);
    EXPECT_EQ(loaded.stats, trained.stats);
    EXPECT_EQ(loaded.train_record_ids, trained.train_record_ids);
    ASSERT_EQ(loaded.histories.size(), trained.histories.size());
    EXPECT_EQ(loaded.histories[0].best_epoch, trained.histories[0].best_epoch);

    Image img = png::load_image(m.resolve_image_path(m.records[0]));
    auto a = trained.predict(img);
    auto b = loaded.predict(img);
    for (std::size_t c = 0; c < a.size(); ++c) EXPECT_EQ(a[c], b[c]);
}

TEST(Checkpoint, GeneratorRoundTrip) {
    TempDir dir("ckpt_gen");
    Manifest m = make_toy_dataset(dir.path(), 4, 5, 8);
    DenoiserConfig arch;
    arch.height = arch.width = 8;
    arch.hidden = 32;
    arch.blocks = 1;
    arch.cond_dim = 16;
    NoiseSchedule schedule = NoiseSchedule::linear(10);
    GeneratorTrainConfig tc;
    tc.seed = 2;
    tc.steps = 10;
    tc.batch_size = 4;
    auto trained = train_denoiser(m, schedule, arch, tc);

    GeneratorCheckpoint ckpt;
    ckpt.model = std::move(trained.model);
    ckpt.embeddings = std::move(trained.embeddings);
    ckpt.schedule = schedule;
    ckpt.taxonomy = m.taxonomy;
    save_generator(ckpt, dir.path() / "g.ckpt");
    GeneratorCheckpoint loaded = load_generator(dir.path() / "g.ckpt");

    EXPECT_EQ(loaded.model.checksum(), ckpt.model.checksum());
    EXPECT_TRUE(loaded.embeddings.vectors.value.isApprox(ckpt.embeddings.vectors.value));
    EXPECT_EQ(loaded.schedule.timesteps, schedule.timesteps);
    auto a = sample(ckpt.model, ckpt.embeddings, schedule, "melanoma", 1, 3);
    auto b = sample(loaded.model, loaded.embeddings, loaded.schedule, "melanoma", 1, 3);
    EXPECT_EQ(a[0].data, b[0].data);
}

TEST(Checkpoint, RejectsWrongTypeAndGarbage) {
    TempDir dir("ckpt_bad");
    write_text_file(dir.path() / "junk.ckpt", "not a checkpoint");
    EXPECT_THROW(load_ensemble(dir.path() / "junk.ckpt"), DataError);
    EXPECT_THROW(load_generator(dir.path() / "junk.ckpt"), DataError);
}

TEST(TrainConfig, ValidationAndJsonRoundTrip) {
    TrainConfig c;
    c.epochs = 50;
    c.monitor = "val_loss";
    TrainConfig back = TrainConfig::from_json(c.to_json());
    EXPECT_EQ(back.epochs, 50);
    EXPECT_EQ(back.monitor, "val_loss");
    nlohmann::json bad = c.to_json();
    bad["monitor"] = "train_loss";
    EXPECT_THROW(TrainConfig::from_json(bad), ConfigError);
    bad = c.to_json();
    bad["patience"] = 0;
    EXPECT_THROW(TrainConfig::from_json(bad), ConfigError);
}
