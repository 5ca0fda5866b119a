#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dermaug/checkpoint.hpp"
#include "dermaug/curation.hpp"
#include "dermaug/diffusion.hpp"
#include "dermaug/errors.hpp"
#include "dermaug/evaluation.hpp"
#include "dermaug/generate.hpp"
#include "dermaug/manifest.hpp"
#include "dermaug/scenarios.hpp"
#include "dermaug/scoring.hpp"
#include "dermaug/split.hpp"
#include "dermaug/toy_data.hpp"
#include "dermaug/training.hpp"

namespace dermaug {

namespace config_detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& known,
                                const std::string& where) {
    if (!j.is_object()) throw ConfigError("config section '" + where + "' must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : known)
            if (it.key() == k) { ok = true; break; }
        if (!ok) throw ConfigError("unknown config key '" + where + "." + it.key() + "'");
    }
}

}  // namespace config_detail

struct ToyDataConfig {
    std::size_t per_class = 200;       // real pool images per class
    std::size_t test_per_class = 60;   // held-out test images per class
    int image_size = 32;

    nlohmann::json to_json() const {
        return {{"per_class", per_class}, {"test_per_class", test_per_class},
                {"image_size", image_size}};
    }
    static ToyDataConfig from_json(const nlohmann::json& j) {
        config_detail::reject_unknown_keys(j, {"per_class", "test_per_class", "image_size"}, "toy");
        ToyDataConfig c;
        c.per_class = j.value("per_class", c.per_class);
        c.test_per_class = j.value("test_per_class", c.test_per_class);
        c.image_size = j.value("image_size", c.image_size);
        if (c.per_class < 2) throw ConfigError("toy.per_class must be >= 2");
        if (c.test_per_class < 1) throw ConfigError("toy.test_per_class must be >= 1");
        return c;
    }
};

struct GeneratorConfig {
    int steps = 2000;
    int batch_size = 16;
    float lr = 1e-3f;
    int timesteps = 100;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int hidden = 256;
    int blocks = 2;
    int embedding_dim = 64;

    nlohmann::json to_json() const {
        return {{"steps", steps},       {"batch_size", batch_size},
                {"lr", lr},             {"timesteps", timesteps},
                {"beta_start", beta_start}, {"beta_end", beta_end},
                {"hidden", hidden},     {"blocks", blocks},
                {"embedding_dim", embedding_dim}};
    }
    static GeneratorConfig from_json(const nlohmann::json& j) {
        config_detail::reject_unknown_keys(
            j, {"steps", "batch_size", "lr", "timesteps", "beta_start", "beta_end", "hidden",
                "blocks", "embedding_dim"},
            "generator");
        GeneratorConfig c;
        c.steps = j.value("steps", c.steps);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.lr = j.value("lr", c.lr);
        c.timesteps = j.value("timesteps", c.timesteps);
        c.beta_start = j.value("beta_start", c.beta_start);
        c.beta_end = j.value("beta_end", c.beta_end);
        c.hidden = j.value("hidden", c.hidden);
        c.blocks = j.value("blocks", c.blocks);
        c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
        if (c.steps < 0) throw ConfigError("generator.steps must be >= 0");
        if (c.batch_size < 1) throw ConfigError("generator.batch_size must be >= 1");
        if (c.timesteps < 1) throw ConfigError("generator.timesteps must be >= 1");
        return c;
    }
};

struct GenerationConfig {
    std::string run_id = "gen";
    std::size_t per_class = 300;  // paper-scale default is 30000 per class

    nlohmann::json to_json() const {
        return {{"run_id", run_id}, {"per_class", per_class}};
    }
    static GenerationConfig from_json(const nlohmann::json& j) {
        config_detail::reject_unknown_keys(j, {"run_id", "per_class"}, "generation");
        GenerationConfig c;
        c.run_id = j.value("run_id", c.run_id);
        c.per_class = j.value("per_class", c.per_class);
        if (c.run_id.empty()) throw ConfigError("generation.run_id must be non-empty");
        return c;
    }
};

struct CurationConfig {
    double threshold = 0.5;
    std::size_t domain_per_class = 100;  // in-domain training images per class
    std::size_t noise_images = 600;      // out-of-domain training images
    int domain_epochs = 6;

    nlohmann::json to_json() const {
        return {{"threshold", threshold},
                {"domain_per_class", domain_per_class},
                {"noise_images", noise_images},
                {"domain_epochs", domain_epochs}};
    }
    static CurationConfig from_json(const nlohmann::json& j) {
        config_detail::reject_unknown_keys(
            j, {"threshold", "domain_per_class", "noise_images", "domain_epochs"}, "curation");
        CurationConfig c;
        c.threshold = j.value("threshold", c.threshold);
        c.domain_per_class = j.value("domain_per_class", c.domain_per_class);
        c.noise_images = j.value("noise_images", c.noise_images);
        c.domain_epochs = j.value("domain_epochs", c.domain_epochs);
        if (!(c.threshold >= 0.0 && c.threshold <= 1.0))
            throw ConfigError("curation.threshold must be in [0,1]");
        return c;
    }
};

struct ScenarioConfig {
    std::size_t base_count = 100;
    bool pairing = true;

    nlohmann::json to_json() const {
        return {{"base_count", base_count}, {"pairing", pairing}};
    }
    static ScenarioConfig from_json(const nlohmann::json& j) {
        config_detail::reject_unknown_keys(j, {"base_count", "pairing"}, "scenarios");
        ScenarioConfig c;
        c.base_count = j.value("base_count", c.base_count);
        c.pairing = j.value("pairing", c.pairing);
        if (c.base_count < 2 || c.base_count % 2)
            throw ConfigError("scenarios.base_count must be even and >= 2");
        return c;
    }
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::filesystem::path work_dir = "work";
    int workers = 1;
    std::optional<std::filesystem::path> real_manifest;  // external corpus instead of toy data
    std::optional<std::filesystem::path> test_manifest;
    ToyDataConfig toy;
    GeneratorConfig generator;
    GenerationConfig generation;
    CurationConfig curation;
    ScenarioConfig scenarios;
    TrainConfig train;       // scenario ensembles
    TrainConfig pretrain;    // curation ensemble, trained on the full real pool
    int eval_max_k = 5;

    ExperimentConfig() {
        pretrain.epochs = 40;
        train.epochs = 100;
    }

    // config echo embedded into artifacts; work_dir is location-dependent and
    // deliberately excluded so reruns in fresh directories are byte-identical
    nlohmann::json echo_json() const {
        return {{"seed", seed},
                {"workers", workers},
                {"toy", toy.to_json()},
                {"generator", generator.to_json()},
                {"generation", generation.to_json()},
                {"curation", curation.to_json()},
                {"scenarios", scenarios.to_json()},
                {"train", train.to_json()},
                {"pretrain", pretrain.to_json()},
                {"eval_max_k", eval_max_k}};
    }

    static ExperimentConfig from_json(const nlohmann::json& j) {
        config_detail::reject_unknown_keys(
            j,
            {"seed", "work_dir", "workers", "real_manifest", "test_manifest", "toy", "generator",
             "generation", "curation", "scenarios", "train", "pretrain", "eval_max_k"},
            "experiment");
        ExperimentConfig c;
        c.seed = j.value("seed", c.seed);
        if (j.contains("work_dir")) c.work_dir = j.at("work_dir").get<std::string>();
        c.workers = j.value("workers", c.workers);
        if (c.workers < 1) throw ConfigError("workers must be >= 1");
        if (j.contains("real_manifest") && !j.at("real_manifest").is_null())
            c.real_manifest = j.at("real_manifest").get<std::string>();
        if (j.contains("test_manifest") && !j.at("test_manifest").is_null())
            c.test_manifest = j.at("test_manifest").get<std::string>();
        if (c.real_manifest.has_value() != c.test_manifest.has_value())
            throw ConfigError("real_manifest and test_manifest must be given together");
        if (j.contains("toy")) c.toy = ToyDataConfig::from_json(j.at("toy"));
        if (j.contains("generator")) c.generator = GeneratorConfig::from_json(j.at("generator"));
        if (j.contains("generation")) c.generation = GenerationConfig::from_json(j.at("generation"));
        if (j.contains("curation")) c.curation = CurationConfig::from_json(j.at("curation"));
        if (j.contains("scenarios")) c.scenarios = ScenarioConfig::from_json(j.at("scenarios"));
        if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
        if (j.contains("pretrain")) c.pretrain = TrainConfig::from_json(j.at("pretrain"));
        c.eval_max_k = j.value("eval_max_k", c.eval_max_k);
        if (c.eval_max_k < 1) throw ConfigError("eval_max_k must be >= 1");
        // image sizes must agree across stages
        c.train.height = c.train.width = c.toy.image_size;
        c.pretrain.height = c.pretrain.width = c.toy.image_size;
        return c;
    }
};

// ---- stage cache ----

inline std::string file_digest(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for digest: " + path.string());
    Sha256 h;
    char buf[1 << 16];
    while (f) {
        f.read(buf, sizeof(buf));
        h.update(buf, std::size_t(f.gcount()));
    }
    return hex_digest(h.finish());
}

// Content-digest stage cache: a stage is skipped when its stamped config
// digest and input/output digests all match the current files.
class StageRunner {
public:
    StageRunner(std::filesystem::path work_dir, bool force = false)
        : work_dir_(std::move(work_dir)), force_(force) {}

    const std::filesystem::path& work_dir() const { return work_dir_; }

    // Returns true if the body executed, false if the stage was cached.
    bool run(const std::string& stage, const nlohmann::json& config_subtree,
             const std::vector<std::filesystem::path>& inputs,
             const std::vector<std::filesystem::path>& outputs,
             const std::function<void()>& body) {
        namespace fs = std::filesystem;
        fs::path stamp_path = work_dir_ / stage / "stamp.json";
        std::string config_digest = sha256_hex(config_subtree.dump());

        std::map<std::string, std::string> input_digests;
        for (const auto& in : inputs) {
            if (!fs::exists(in)) throw DataError("stage '" + stage + "': missing input " + in.string());
            input_digests[in.filename().string()] = file_digest(in);
        }

        if (!force_ && fs::exists(stamp_path)) {
            try {
                nlohmann::json stamp = nlohmann::json::parse(std::ifstream(stamp_path));
                bool match = stamp.value("config_digest", "") == config_digest;
                if (match)
                    for (const auto& [name, digest] : input_digests)
                        if (stamp.at("inputs").value(name, "") != digest) { match = false; break; }
                if (match)
                    for (const auto& out : outputs) {
                        std::string name = out.filename().string();
                        if (!fs::exists(out) ||
                            stamp.at("outputs").value(name, "") != file_digest(out)) {
                            match = false;
                            break;
                        }
                    }
                if (match) {
                    std::cout << "[" << stage << "] up to date, skipping\n";
                    return false;
                }
            } catch (const nlohmann::json::exception&) {
                // unreadable stamp: fall through and rerun
            }
        }

        std::cout << "[" << stage << "] running\n";
        fs::create_directories(work_dir_ / stage);
        body();

        nlohmann::json stamp;
        stamp["stage"] = stage;
        stamp["config_digest"] = config_digest;
        stamp["inputs"] = input_digests;
        nlohmann::json outs = nlohmann::json::object();
        for (const auto& out : outputs) {
            if (!fs::exists(out))
                throw IoError("stage '" + stage + "' did not produce output " + out.string());
            outs[out.filename().string()] = file_digest(out);
        }
        stamp["outputs"] = outs;
        write_text_file(stamp_path, stamp.dump(2) + "\n");
        return true;
    }

private:
    std::filesystem::path work_dir_;
    bool force_;
};

struct PipelineArtifacts {
    std::filesystem::path pool_manifest;
    std::filesystem::path test_manifest;
    std::filesystem::path domain_scorer_ckpt;
    std::filesystem::path pretrained_ckpt;
    std::filesystem::path generator_ckpt;
    std::filesystem::path loss_curve_csv;
    std::filesystem::path generated_manifest;
    std::filesystem::path curated_manifest;
    std::filesystem::path decisions_file;
    std::filesystem::path curation_report;
    std::map<std::string, std::filesystem::path> scenario_manifests;
    std::filesystem::path suite_summary;
    std::map<std::string, std::filesystem::path> ensemble_ckpts;
    std::filesystem::path report_json;
    std::filesystem::path report_csv;
    std::filesystem::path report_txt;
    std::map<std::string, std::filesystem::path> score_dumps;
};

inline ClassTaxonomy binary_domain_taxonomy() {
    return ClassTaxonomy({{"in_domain", "In-domain", DiseaseCategory::benign},
                          {"out_domain", "Out-of-domain", DiseaseCategory::malignant}});
}

// The full loop: data, filters' models, generator, generation, curation,
// scenario suite, per-scenario ensembles, evaluation. Every stage is
// digest-cached and resumable.
inline PipelineArtifacts run_pipeline(const ExperimentConfig& config, bool force = false) {
    namespace fs = std::filesystem;
    const auto& work = config.work_dir;
    StageRunner runner(work, force);
    PipelineArtifacts art;
    const std::vector<std::string> scenario_names = {"real-small", "real", "hybrid", "synthetic"};

    // -- stage: toy-data (or external ingest) --
    art.pool_manifest = work / "toy-data" / "pool.jsonl";
    art.test_manifest = work / "toy-data" / "test.jsonl";
    if (config.real_manifest) {
        if (!fs::exists(*config.real_manifest))
            throw DataError("real manifest not found: " + config.real_manifest->string());
        if (!fs::exists(*config.test_manifest))
            throw DataError("test manifest not found: " + config.test_manifest->string());
        art.pool_manifest = *config.real_manifest;
        art.test_manifest = *config.test_manifest;
    } else {
        nlohmann::json cfg = {{"seed", config.seed}, {"toy", config.toy.to_json()}};
        runner.run("toy-data", cfg, {}, {art.pool_manifest, art.test_manifest}, [&]() {
            std::size_t total = config.toy.per_class + config.toy.test_per_class;
            Manifest all = make_toy_dataset(work / "toy-data", total, derive_seed(config.seed, "toy"),
                                            config.toy.image_size);
            auto test_idx = sample_per_class(all, config.toy.test_per_class,
                                             derive_seed(config.seed, "holdout"));
            std::vector<bool> is_test(all.records.size(), false);
            for (auto i : test_idx) is_test[i] = true;
            Manifest pool(all.taxonomy, "toy-pool");
            pool.parent = all.stage_chain();
            pool.set_base_dir(all.base_dir());
            Manifest test(all.taxonomy, "toy-test");
            test.parent = all.stage_chain();
            test.set_base_dir(all.base_dir());
            for (std::size_t i = 0; i < all.records.size(); ++i)
                (is_test[i] ? test : pool).records.push_back(all.records[i]);
            pool.save(art.pool_manifest);
            test.save(art.test_manifest);
        });
    }

    // -- stage: domain-scorer (binary in/out-of-domain classifier) --
    art.domain_scorer_ckpt = work / "domain-scorer" / "domain_scorer.ckpt";
    {
        nlohmann::json cfg = {{"seed", config.seed},
                              {"curation", config.curation.to_json()},
                              {"image_size", config.toy.image_size}};
        runner.run("domain-scorer", cfg, {art.pool_manifest}, {art.domain_scorer_ckpt}, [&]() {
            Manifest pool = Manifest::load(art.pool_manifest);
            ClassTaxonomy tax = binary_domain_taxonomy();
            Manifest binary(tax, "domain-train");
            binary.set_base_dir(work / "domain-scorer");

            std::size_t min_class = pool.records.size();
            for (auto n : pool.class_counts_vec()) min_class = std::min(min_class, n);
            auto in_idx = sample_per_class(pool,
                                           std::min(config.curation.domain_per_class, min_class),
                                           derive_seed(config.seed, "domain-in"));
            for (auto i : in_idx) {
                ImageRecord rec = pool.records[i];
                rec.record_id = "domain-in/" + rec.record_id;
                rec.label = "in_domain";
                rec.split.reset();
                rec.image_path = rebase_image_path(rec.image_path, pool.base_dir(), binary.base_dir());
                binary.records.push_back(std::move(rec));
            }
            for (std::size_t i = 0; i < config.curation.noise_images; ++i) {
                RngStream rng(config.seed, "domain-noise", i);
                Image img = render_noise_image(config.toy.image_size, rng);
                char name[32];
                std::snprintf(name, sizeof(name), "%05zu.png", i);
                fs::path rel = fs::path("noise") / name;
                png::save_image(img, binary.base_dir() / rel);
                ImageRecord rec;
                rec.record_id = "domain-out/" + std::to_string(i);
                rec.image_path = rel.generic_string();
                rec.label = "out_domain";
                rec.source = ImageSource::real;
                binary.records.push_back(std::move(rec));
            }

            TrainConfig dc = config.pretrain;
            dc.archs = {"cnn_small"};
            dc.epochs = config.curation.domain_epochs;
            dc.seed = derive_seed(config.seed, "domain-train");
            EnsembleModel scorer = train_ensemble(binary, dc, config.workers);
            scorer.scenario_name = "domain";
            save_ensemble(scorer, art.domain_scorer_ckpt);
        });
    }

    // -- stage: pretrain-ensemble (label filter model, full real pool) --
    art.pretrained_ckpt = work / "pretrain-ensemble" / "pretrained.ckpt";
    {
        nlohmann::json cfg = {{"seed", config.seed}, {"pretrain", config.pretrain.to_json()}};
        runner.run("pretrain-ensemble", cfg, {art.pool_manifest}, {art.pretrained_ckpt}, [&]() {
            Manifest pool = Manifest::load(art.pool_manifest);
            TrainConfig pc = config.pretrain;
            pc.seed = derive_seed(config.seed, "pretrain");
            EnsembleModel pretrained = train_ensemble(pool, pc, config.workers);
            pretrained.scenario_name = "pretrain";
            save_ensemble(pretrained, art.pretrained_ckpt);
        });
    }

    // -- stage: train-generator --
    art.generator_ckpt = work / "train-generator" / "generator.ckpt";
    art.loss_curve_csv = work / "train-generator" / "loss_curve.csv";
    {
        nlohmann::json cfg = {{"seed", config.seed}, {"generator", config.generator.to_json()},
                              {"image_size", config.toy.image_size}};
        runner.run("train-generator", cfg, {art.pool_manifest},
                   {art.generator_ckpt, art.loss_curve_csv}, [&]() {
                       Manifest pool = Manifest::load(art.pool_manifest);
                       NoiseSchedule schedule = NoiseSchedule::linear(
                           config.generator.timesteps, config.generator.beta_start,
                           config.generator.beta_end);
                       DenoiserConfig arch;
                       arch.height = arch.width = config.toy.image_size;
                       arch.hidden = config.generator.hidden;
                       arch.blocks = config.generator.blocks;
                       arch.cond_dim = config.generator.embedding_dim;
                       GeneratorTrainConfig tc;
                       tc.seed = derive_seed(config.seed, "train-generator");
                       tc.steps = config.generator.steps;
                       tc.lr = config.generator.lr;
                       tc.batch_size = config.generator.batch_size;
                       GeneratorTrainResult r = train_denoiser(pool, schedule, arch, tc);

                       GeneratorCheckpoint ckpt;
                       ckpt.model = std::move(r.model);
                       ckpt.embeddings = std::move(r.embeddings);
                       ckpt.schedule = schedule;
                       ckpt.taxonomy = pool.taxonomy;
                       ckpt.config_echo = cfg;
                       save_generator(ckpt, art.generator_ckpt);

                       std::string csv = "step,loss,smoothed\n";
                       char buf[96];
                       for (std::size_t i = 0; i < r.curve.raw.size(); ++i) {
                           std::snprintf(buf, sizeof(buf), "%zu,%.8g,%.8g\n", i + 1,
                                         double(r.curve.raw[i]), double(r.curve.smoothed[i]));
                           csv += buf;
                       }
                       write_text_file(art.loss_curve_csv, csv);
                   });
    }

    // -- stage: generate --
    art.generated_manifest = work / "generate" / "generated.jsonl";
    {
        nlohmann::json cfg = {{"seed", config.seed}, {"generation", config.generation.to_json()}};
        runner.run("generate", cfg, {art.generator_ckpt}, {art.generated_manifest}, [&]() {
            GeneratorCheckpoint g = load_generator(art.generator_ckpt);
            GeneratorRun run;
            run.run_id = config.generation.run_id;
            run.seed = derive_seed(config.seed, "generate");
            run.out_dir = work / "generate";
            for (const auto& entry : g.taxonomy.entries())
                run.per_class_counts[entry.class_id] = config.generation.per_class;
            Manifest generated = generate_to_manifest(run, g.model, g.embeddings, g.schedule,
                                                      g.taxonomy, config.workers);
            generated.save(art.generated_manifest);
        });
    }

    // -- stage: curate (domain filter then label filter) --
    art.curated_manifest = work / "curate" / "curated.jsonl";
    art.decisions_file = work / "curate" / "decisions.jsonl";
    art.curation_report = work / "curate" / "curation_report.json";
    {
        nlohmann::json cfg = {{"seed", config.seed}, {"curation", config.curation.to_json()}};
        runner.run("curate", cfg,
                   {art.generated_manifest, art.domain_scorer_ckpt, art.pretrained_ckpt},
                   {art.curated_manifest, art.decisions_file, art.curation_report}, [&]() {
                       Manifest generated = Manifest::load(art.generated_manifest);
                       EnsembleModel domain_model = load_ensemble(art.domain_scorer_ckpt);
                       EnsembleModel pretrained = load_ensemble(art.pretrained_ckpt);
                       EnsembleDomainScorer domain_scorer(domain_model, "in_domain");
                       EnsembleLabelScorer label_scorer(pretrained);
                       CurationResult result = curate(generated, domain_scorer, label_scorer,
                                                      config.curation.threshold, config.workers);
                       result.curated.save(art.curated_manifest);
                       save_decisions(result.decisions, art.decisions_file);
                       write_text_file(art.curation_report, result.report.to_json().dump(2) + "\n");
                   });
    }

    // -- stage: scenarios --
    for (const auto& name : scenario_names)
        art.scenario_manifests[name] = work / "scenarios" / ("scenario_" + name + ".jsonl");
    art.suite_summary = work / "scenarios" / "suite.json";
    {
        nlohmann::json cfg = {{"seed", config.seed}, {"scenarios", config.scenarios.to_json()}};
        std::vector<fs::path> outputs;
        for (const auto& name : scenario_names) outputs.push_back(art.scenario_manifests.at(name));
        outputs.push_back(art.suite_summary);
        runner.run("scenarios", cfg, {art.pool_manifest, art.curated_manifest}, outputs, [&]() {
            Manifest pool = Manifest::load(art.pool_manifest);
            Manifest curated = Manifest::load(art.curated_manifest);
            ScenarioSuite suite =
                standard_suite(config.scenarios.base_count, pool, curated,
                               derive_seed(config.seed, "scenarios"), config.scenarios.pairing);
            nlohmann::json summary;
            summary["base_count"] = config.scenarios.base_count;
            summary["pairing"] = config.scenarios.pairing;
            nlohmann::json rows = nlohmann::json::array();
            for (auto& [spec, manifest] : suite.scenarios) {
                manifest.save(art.scenario_manifests.at(spec.name));
                nlohmann::json row = spec.to_json();
                row["records"] = manifest.records.size();
                rows.push_back(row);
            }
            summary["scenarios"] = rows;
            write_text_file(art.suite_summary, summary.dump(2) + "\n");
        });
    }

    // -- stage: train-scenarios --
    for (const auto& name : scenario_names)
        art.ensemble_ckpts[name] = work / "train-scenarios" / ("ensemble_" + name + ".ckpt");
    {
        nlohmann::json cfg = {{"seed", config.seed}, {"train", config.train.to_json()}};
        std::vector<fs::path> inputs;
        for (const auto& name : scenario_names) inputs.push_back(art.scenario_manifests.at(name));
        std::vector<fs::path> outputs;
        for (const auto& name : scenario_names) outputs.push_back(art.ensemble_ckpts.at(name));
        runner.run("train-scenarios", cfg, inputs, outputs, [&]() {
            for (const auto& name : scenario_names) {
                Manifest scenario = Manifest::load(art.scenario_manifests.at(name));
                TrainConfig tc = config.train;
                tc.seed = derive_seed(config.seed, "train/" + name);
                EnsembleModel ensemble = train_ensemble(scenario, tc, config.workers);
                ensemble.scenario_name = name;
                save_ensemble(ensemble, art.ensemble_ckpts.at(name));
                std::cout << "  trained '" << name << "' (stops:";
                for (const auto& h : ensemble.histories) std::cout << " " << h.stopped_epoch;
                std::cout << ")\n";
            }
        });
    }

    // -- stage: evaluate --
    art.report_json = work / "evaluate" / "report.json";
    art.report_csv = work / "evaluate" / "report.csv";
    art.report_txt = work / "evaluate" / "report.txt";
    for (const auto& name : scenario_names)
        art.score_dumps[name] = work / "evaluate" / "scores" / (name + ".csv");
    {
        nlohmann::json cfg = {{"seed", config.seed}, {"eval_max_k", config.eval_max_k}};
        std::vector<fs::path> inputs = {art.test_manifest};
        for (const auto& name : scenario_names) inputs.push_back(art.ensemble_ckpts.at(name));
        std::vector<fs::path> outputs = {art.report_json, art.report_csv, art.report_txt};
        for (const auto& name : scenario_names) outputs.push_back(art.score_dumps.at(name));
        runner.run("evaluate", cfg, inputs, outputs, [&]() {
            Manifest test = Manifest::load(art.test_manifest);
            std::vector<EnsembleModel> models;
            models.reserve(scenario_names.size());
            for (const auto& name : scenario_names)
                models.push_back(load_ensemble(art.ensemble_ckpts.at(name)));
            std::vector<std::pair<std::string, const EnsembleModel*>> named;
            for (std::size_t i = 0; i < models.size(); ++i)
                named.emplace_back(scenario_names[i], &models[i]);
            EvaluationResult result =
                evaluate_scenarios(named, test, config.eval_max_k, config.workers);
            result.report.config_echo = config.echo_json();
            write_text_file(art.report_json, render_report(result.report, ReportFormat::json));
            write_text_file(art.report_csv, render_report(result.report, ReportFormat::csv));
            write_text_file(art.report_txt, render_report(result.report, ReportFormat::plain));
            for (const auto& sc : result.scores)
                write_text_file(art.score_dumps.at(sc.scenario), scores_to_csv(sc, test.taxonomy));
        });
    }

    return art;
}

}  // namespace dermaug
