#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dermaug/classifiers.hpp"
#include "dermaug/dataset_io.hpp"
#include "dermaug/errors.hpp"
#include "dermaug/manifest.hpp"
#include "dermaug/normalization.hpp"
#include "dermaug/parallel.hpp"
#include "dermaug/rng.hpp"
#include "dermaug/split.hpp"

namespace dermaug {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 8;
    float lr = 0.01f;
    float momentum = 0.9f;
    int patience = 10;
    std::uint64_t seed = 0;
    int height = 32;
    int width = 32;
    std::string monitor = "val_accuracy";  // or "val_loss"
    std::vector<std::string> archs = {"cnn_small", "cnn_wide", "attn_tiny"};
    std::string aggregate = "mean";  // or "vote"

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (patience < 1) throw ConfigError("train: patience must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (monitor != "val_accuracy" && monitor != "val_loss")
            throw ConfigError("train: monitor must be val_accuracy or val_loss");
        if (aggregate != "mean" && aggregate != "vote")
            throw ConfigError("train: aggregate must be mean or vote");
        if (archs.empty()) throw ConfigError("train: at least one member architecture required");
    }

    nlohmann::json to_json() const {
        return {{"epochs", epochs},       {"batch_size", batch_size}, {"lr", lr},
                {"momentum", momentum},   {"patience", patience},     {"seed", seed},
                {"height", height},       {"width", width},           {"monitor", monitor},
                {"archs", archs},         {"aggregate", aggregate}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.lr = j.value("lr", c.lr);
        c.momentum = j.value("momentum", c.momentum);
        c.patience = j.value("patience", c.patience);
        c.seed = j.value("seed", c.seed);
        c.height = j.value("height", c.height);
        c.width = j.value("width", c.width);
        c.monitor = j.value("monitor", c.monitor);
        if (j.contains("archs")) c.archs = j.at("archs").get<std::vector<std::string>>();
        c.aggregate = j.value("aggregate", c.aggregate);
        c.validate();
        return c;
    }
};

struct EpochStats {
    int epoch = 0;  // 1-based
    float train_loss = 0.0f;
    double val_accuracy = 0.0;
    double val_loss = 0.0;
};

struct MemberHistory {
    std::string arch_id;
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
    int stopped_epoch = 0;

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& e : epochs)
            rows.push_back({{"epoch", e.epoch},
                            {"train_loss", e.train_loss},
                            {"val_accuracy", e.val_accuracy},
                            {"val_loss", e.val_loss}});
        return {{"arch_id", arch_id},
                {"epochs", rows},
                {"best_epoch", best_epoch},
                {"stopped_epoch", stopped_epoch}};
    }

    static MemberHistory from_json(const nlohmann::json& j) {
        MemberHistory h;
        h.arch_id = j.at("arch_id").get<std::string>();
        h.best_epoch = j.at("best_epoch").get<int>();
        h.stopped_epoch = j.at("stopped_epoch").get<int>();
        for (const auto& row : j.at("epochs"))
            h.epochs.push_back({row.at("epoch").get<int>(), row.at("train_loss").get<float>(),
                                row.at("val_accuracy").get<double>(),
                                row.at("val_loss").get<double>()});
        return h;
    }
};

// Early-stopping bookkeeping: training stops after epoch e when
// e >= best_epoch + patience; best_epoch is the earliest epoch achieving the
// best monitored value (strict improvement).
class EarlyStopper {
public:
    EarlyStopper(int patience, bool higher_is_better)
        : patience_(patience), higher_better_(higher_is_better) {}

    // Returns true when training should stop after this epoch.
    bool observe(int epoch, double value) {
        bool improved = best_epoch_ == 0 ||
                        (higher_better_ ? value > best_value_ : value < best_value_);
        if (improved) {
            best_value_ = value;
            best_epoch_ = epoch;
        }
        return epoch >= best_epoch_ + patience_;
    }

    int best_epoch() const { return best_epoch_; }
    double best_value() const { return best_value_; }

private:
    int patience_;
    bool higher_better_;
    int best_epoch_ = 0;
    double best_value_ = 0.0;
};

// Pure early-stopping loop over an epoch callback; used by train_member and
// directly testable with scripted sequences.
inline MemberHistory run_early_stopping(int max_epochs, int patience, const std::string& monitor,
                                        const std::function<EpochStats(int)>& run_epoch) {
    MemberHistory history;
    EarlyStopper stopper(patience, monitor == "val_accuracy");
    for (int epoch = 1; epoch <= max_epochs; ++epoch) {
        EpochStats stats = run_epoch(epoch);
        stats.epoch = epoch;
        history.epochs.push_back(stats);
        double monitored = monitor == "val_accuracy" ? stats.val_accuracy : stats.val_loss;
        bool stop = stopper.observe(epoch, monitored);
        history.best_epoch = stopper.best_epoch();
        history.stopped_epoch = epoch;
        if (stop) break;
    }
    return history;
}

struct MemberTrainResult {
    MemberPtr model;
    MemberHistory history;
};

namespace detail {

struct SplitData {
    nn::MatrixF x_train;  // normalized
    std::vector<int> y_train;
    nn::MatrixF x_val;
    std::vector<int> y_val;
    NormalizationStats stats;
    std::vector<std::string> train_record_ids;
};

inline SplitData prepare_split_data(const Manifest& split_manifest, const TrainConfig& config) {
    auto train_recs = records_in_split(split_manifest, Split::train);
    auto val_recs = records_in_split(split_manifest, Split::val);
    if (train_recs.empty()) throw DataError("training split is empty");
    if (val_recs.empty()) throw DataError("validation split is empty");

    SplitData d;
    nn::MatrixF train01 = load_image_rows(split_manifest, train_recs, config.height, config.width);
    d.stats = compute_normalization(train01);
    d.x_train = apply_normalization(train01, d.stats);
    d.y_train = record_label_indices(split_manifest, train_recs);
    nn::MatrixF val01 = load_image_rows(split_manifest, val_recs, config.height, config.width);
    d.x_val = apply_normalization(val01, d.stats);
    d.y_val = record_label_indices(split_manifest, val_recs);
    for (const auto* r : train_recs) d.train_record_ids.push_back(r->record_id);
    return d;
}

inline std::pair<double, double> evaluate_member(const MemberModel& member, const nn::MatrixF& x,
                                                 const std::vector<int>& y) {
    // validation is evaluated in record order, one pass
    nn::MatrixF probs = member.predict_batch(x);
    std::size_t correct = 0;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index argmax = 0;
        probs.row(i).maxCoeff(&argmax);
        if (int(argmax) == y[std::size_t(i)]) ++correct;
        loss -= std::log(std::max(double(probs(i, y[std::size_t(i)])), 1e-12));
    }
    return {double(correct) / double(probs.rows()), loss / double(probs.rows())};
}

}  // namespace detail

// Trains one member with SGD + early stopping and restores the weights of the
// best-validation epoch. The manifest must already carry train/val splits
// (stratified_split); if it carries none, a split is derived from config.seed.
inline MemberTrainResult train_member(const std::string& arch_id, const Manifest& scenario,
                                      const TrainConfig& config,
                                      const detail::SplitData* prepared = nullptr,
                                      std::uint64_t member_seed_override = 0) {
    config.validate();
    std::optional<detail::SplitData> local;
    const detail::SplitData* data = prepared;
    if (!data) {
        bool has_split = false;
        for (const auto& r : scenario.records)
            if (r.split) { has_split = true; break; }
        Manifest split_manifest =
            has_split ? scenario : stratified_split(scenario, derive_seed(config.seed, "split"));
        local = detail::prepare_split_data(split_manifest, config);
        data = &*local;
    }

    std::uint64_t member_seed = member_seed_override
                                    ? member_seed_override
                                    : derive_seed(config.seed, "member/" + arch_id);
    MemberInit init{config.height, config.width, int(scenario.taxonomy.size()), member_seed};
    MemberPtr member = make_member(arch_id, init);

    const auto n_train = std::size_t(data->x_train.rows());
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);

    std::vector<float> best_params = member->save_params();
    EarlyStopper stopper(config.patience, config.monitor == "val_accuracy");
    MemberHistory history;
    history.arch_id = arch_id;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        member->begin_epoch(epoch);
        RngStream shuffle_rng(member_seed, "shuffle", std::uint64_t(epoch));
        shuffle_rng.shuffle(order.begin(), order.end());

        float epoch_loss = 0.0f;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < n_train; start += std::size_t(config.batch_size)) {
            std::size_t stop = std::min(n_train, start + std::size_t(config.batch_size));
            nn::MatrixF xb(Eigen::Index(stop - start), data->x_train.cols());
            std::vector<int> yb(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                xb.row(Eigen::Index(i - start)) = data->x_train.row(Eigen::Index(order[i]));
                yb[i - start] = data->y_train[order[i]];
            }
            float loss = member->train_batch(xb, yb, config.lr, config.momentum);
            if (!std::isfinite(loss))
                throw TrainingError("non-finite loss training " + arch_id + " at epoch " +
                                    std::to_string(epoch));
            epoch_loss += loss;
            ++n_batches;
        }

        auto [val_acc, val_loss] = detail::evaluate_member(*member, data->x_val, data->y_val);
        EpochStats stats{epoch, epoch_loss / float(n_batches), val_acc, val_loss};
        history.epochs.push_back(stats);

        double monitored = config.monitor == "val_accuracy" ? val_acc : val_loss;
        int prev_best = stopper.best_epoch();
        bool stop = stopper.observe(epoch, monitored);
        if (stopper.best_epoch() != prev_best) best_params = member->save_params();
        history.best_epoch = stopper.best_epoch();
        history.stopped_epoch = epoch;
        if (stop) break;
    }

    member->load_params(best_params);
    return {std::move(member), std::move(history)};
}

// The three-member classifier ensemble plus everything needed to reuse it:
// shared normalization stats, taxonomy, config echo and training lineage.
struct EnsembleModel {
    std::vector<MemberPtr> members;
    std::vector<std::string> arch_ids;
    std::vector<MemberHistory> histories;
    NormalizationStats stats;
    ClassTaxonomy taxonomy;
    TrainConfig config;
    std::vector<std::string> train_record_ids;  // sorted
    std::string scenario_name;
    std::size_t real_per_class = 0;
    std::size_t synthetic_per_class = 0;

    std::size_t n_classes() const { return taxonomy.size(); }

    // Mean of member score vectors ("mean"), or normalized argmax votes
    // ("vote"); rows sum to 1 either way.
    nn::MatrixF predict_rows01(const nn::MatrixF& rows01) const {
        nn::MatrixF x = apply_normalization(rows01, stats);
        return predict_normalized(x);
    }

    nn::MatrixF predict_normalized(const nn::MatrixF& x) const {
        if (members.empty()) throw ConfigError("ensemble has no members");
        if (config.aggregate == "vote") {
            nn::MatrixF votes = nn::MatrixF::Zero(x.rows(), Eigen::Index(n_classes()));
            for (const auto& m : members) {
                nn::MatrixF p = m->predict_batch(x);
                for (Eigen::Index i = 0; i < p.rows(); ++i) {
                    Eigen::Index argmax = 0;
                    p.row(i).maxCoeff(&argmax);
                    votes(i, argmax) += 1.0f;
                }
            }
            votes /= float(members.size());
            return votes;
        }
        nn::MatrixF sum = nn::MatrixF::Zero(x.rows(), Eigen::Index(n_classes()));
        for (const auto& m : members) sum += m->predict_batch(x);
        sum /= float(members.size());
        return sum;
    }

    std::vector<double> predict(const Image& img) const {
        nn::MatrixF row(1, Eigen::Index(img.value_count()));
        std::copy(img.data.begin(), img.data.end(), row.row(0).data());
        nn::MatrixF p = predict_rows01(row);
        std::vector<double> out(n_classes());
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = double(p(0, Eigen::Index(c)));
        return out;
    }
};

// Trains the members independently on the same split with member-specific
// seeds derived from config.seed. Members may run in parallel; results are
// assembled in architecture order.
inline EnsembleModel train_ensemble(const Manifest& scenario, const TrainConfig& config,
                                    int workers = 1) {
    config.validate();
    bool has_split = false;
    for (const auto& r : scenario.records)
        if (r.split) { has_split = true; break; }
    Manifest split_manifest =
        has_split ? scenario : stratified_split(scenario, derive_seed(config.seed, "split"));
    detail::SplitData data = detail::prepare_split_data(split_manifest, config);

    EnsembleModel ensemble;
    ensemble.arch_ids = config.archs;
    ensemble.stats = data.stats;
    ensemble.taxonomy = scenario.taxonomy;
    ensemble.config = config;
    ensemble.train_record_ids = data.train_record_ids;
    std::sort(ensemble.train_record_ids.begin(), ensemble.train_record_ids.end());
    for (const auto& r : scenario.records) {
        if (r.source == ImageSource::real) ++ensemble.real_per_class;
        else ++ensemble.synthetic_per_class;
    }
    ensemble.real_per_class /= scenario.taxonomy.size();
    ensemble.synthetic_per_class /= scenario.taxonomy.size();

    std::vector<MemberTrainResult> results(config.archs.size());
    parallel_chunks(config.archs.size(), 1, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            std::uint64_t seed = derive_seed(config.seed, "member", i);
            results[i] = train_member(config.archs[i], scenario, config, &data, seed);
        }
    });
    for (auto& r : results) {
        ensemble.members.push_back(std::move(r.model));
        ensemble.histories.push_back(std::move(r.history));
    }
    return ensemble;
}

}  // namespace dermaug
