// dermaug: class-conditional diffusion augmentation pipeline for skin-disease
// classification experiments. Subcommands cover each pipeline stage plus a
// one-shot desk-scale reproduction.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dermaug/dermaug.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw dermaug::IoError("cannot open config: " + path.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw dermaug::ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

fs::path resolve_work_dir(const std::string& flag_value, const std::string& config_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("DERMAUG_WORK_DIR"); env && *env) return env;
    if (!config_value.empty()) return config_value;
    return "work";
}

std::string scenario_name_from_manifest(const dermaug::Manifest& m) {
    const std::string prefix = "scenario:";
    if (m.created_by.rfind(prefix, 0) == 0) return m.created_by.substr(prefix.size());
    return m.created_by;
}

dermaug::GeneratorTrainConfig generator_train_config(const json& j, std::uint64_t seed) {
    dermaug::GeneratorConfig g = j.is_null() ? dermaug::GeneratorConfig{}
                                             : dermaug::GeneratorConfig::from_json(j);
    dermaug::GeneratorTrainConfig tc;
    tc.seed = seed;
    tc.steps = g.steps;
    tc.lr = g.lr;
    tc.batch_size = g.batch_size;
    return tc;
}

int run(int argc, char** argv) {
    CLI::App app{"class-conditional diffusion augmentation pipeline"};
    app.require_subcommand(1);

    // ---- make-toy ----
    auto* make_toy = app.add_subcommand("make-toy", "render the procedural toy dataset");
    std::string mt_out;
    std::size_t mt_per_class = 200;
    std::uint64_t mt_seed = 1;
    int mt_image_size = 32;
    make_toy->add_option("--out", mt_out, "output directory")->required();
    make_toy->add_option("--per-class", mt_per_class, "images per class");
    make_toy->add_option("--seed", mt_seed, "random seed");
    make_toy->add_option("--image-size", mt_image_size, "square image size");
    make_toy->callback([&]() {
        dermaug::Manifest m =
            dermaug::make_toy_dataset(mt_out, mt_per_class, mt_seed, mt_image_size);
        m.save(fs::path(mt_out) / "manifest.jsonl");
        std::cout << "wrote " << m.records.size() << " records to " << mt_out << "/manifest.jsonl\n";
    });

    // ---- train-generator ----
    auto* train_gen = app.add_subcommand("train-generator",
                                         "train the conditional denoiser and class embeddings");
    std::string tg_manifest, tg_config, tg_out;
    std::uint64_t tg_seed = 1;
    int tg_image_size = 32;
    train_gen->add_option("--manifest", tg_manifest, "training manifest")->required();
    train_gen->add_option("--config", tg_config, "generator config JSON");
    train_gen->add_option("--seed", tg_seed, "random seed");
    train_gen->add_option("--image-size", tg_image_size, "square image size");
    train_gen->add_option("--out", tg_out, "output checkpoint path")->required();
    train_gen->callback([&]() {
        dermaug::Manifest m = dermaug::Manifest::load(tg_manifest);
        json cfg_json = tg_config.empty() ? json(nullptr) : load_json_file(tg_config);
        dermaug::GeneratorConfig g = cfg_json.is_null()
                                         ? dermaug::GeneratorConfig{}
                                         : dermaug::GeneratorConfig::from_json(cfg_json);
        dermaug::NoiseSchedule schedule =
            dermaug::NoiseSchedule::linear(g.timesteps, g.beta_start, g.beta_end);
        dermaug::DenoiserConfig arch;
        arch.height = arch.width = tg_image_size;
        arch.hidden = g.hidden;
        arch.blocks = g.blocks;
        arch.cond_dim = g.embedding_dim;
        auto tc = generator_train_config(cfg_json, tg_seed);
        auto result = dermaug::train_denoiser(m, schedule, arch, tc);
        dermaug::GeneratorCheckpoint ckpt;
        ckpt.model = std::move(result.model);
        ckpt.embeddings = std::move(result.embeddings);
        ckpt.schedule = schedule;
        ckpt.taxonomy = m.taxonomy;
        ckpt.config_echo = {{"generator", g.to_json()}, {"seed", tg_seed}};
        dermaug::save_generator(ckpt, tg_out);
        std::cout << "trained " << tc.steps << " steps; final smoothed loss "
                  << (result.curve.smoothed.empty() ? 0.0 : double(result.curve.smoothed.back()))
                  << "; wrote " << tg_out << "\n";
    });

    // ---- train-embeddings ----
    auto* train_emb = app.add_subcommand(
        "train-embeddings", "textual-inversion mode: optimize embeddings, denoiser frozen");
    std::string te_generator, te_manifest, te_config, te_out;
    std::uint64_t te_seed = 1;
    train_emb->add_option("--generator", te_generator, "generator checkpoint")->required();
    train_emb->add_option("--manifest", te_manifest, "training manifest")->required();
    train_emb->add_option("--config", te_config, "generator config JSON");
    train_emb->add_option("--seed", te_seed, "random seed");
    train_emb->add_option("--out", te_out, "output checkpoint path")->required();
    train_emb->callback([&]() {
        dermaug::GeneratorCheckpoint g = dermaug::load_generator(te_generator);
        dermaug::Manifest m = dermaug::Manifest::load(te_manifest);
        json cfg_json = te_config.empty() ? json(nullptr) : load_json_file(te_config);
        auto tc = generator_train_config(cfg_json, te_seed);
        std::string before = g.model.checksum();
        auto [table, curve] =
            dermaug::train_embeddings(g.model, std::move(g.embeddings), m, g.schedule, tc);
        if (g.model.checksum() != before)
            throw dermaug::TrainingError("denoiser changed during embedding-only training");
        g.embeddings = std::move(table);
        dermaug::save_generator(g, te_out);
        std::cout << "embeddings updated over " << tc.steps << " steps; denoiser checksum "
                  << before.substr(0, 12) << " unchanged; wrote " << te_out << "\n";
    });

    // ---- generate ----
    auto* generate = app.add_subcommand("generate", "sample images into a synthetic manifest");
    std::string gen_generator, gen_config, gen_out_manifest;
    int gen_workers = 1;
    generate->add_option("--generator", gen_generator, "generator checkpoint")->required();
    generate->add_option("--config", gen_config,
                         "generation config JSON {run_id, seed, per_class_counts, sampler_steps, out_dir}")
        ->required();
    generate->add_option("--out-manifest", gen_out_manifest,
                         "manifest path (default <out_dir>/generated.jsonl)");
    generate->add_option("--workers", gen_workers, "worker threads");
    generate->callback([&]() {
        dermaug::GeneratorCheckpoint g = dermaug::load_generator(gen_generator);
        json cfg = load_json_file(gen_config);
        dermaug::config_detail::reject_unknown_keys(
            cfg, {"run_id", "seed", "per_class_counts", "sampler_steps", "out_dir"}, "generation");
        dermaug::GeneratorRun run;
        run.run_id = cfg.at("run_id").get<std::string>();
        run.seed = cfg.at("seed").get<std::uint64_t>();
        run.out_dir = cfg.at("out_dir").get<std::string>();
        run.sampler_steps = cfg.value("sampler_steps", 0);
        if (cfg.contains("per_class_counts"))
            for (auto it = cfg.at("per_class_counts").begin(); it != cfg.at("per_class_counts").end();
                 ++it)
                run.per_class_counts[it.key()] = it.value().get<std::size_t>();
        dermaug::Manifest m = dermaug::generate_to_manifest(run, g.model, g.embeddings, g.schedule,
                                                            g.taxonomy, gen_workers);
        fs::path out = gen_out_manifest.empty() ? run.out_dir / "generated.jsonl"
                                                : fs::path(gen_out_manifest);
        m.save(out);
        std::cout << "generated " << m.records.size() << " images; manifest " << out << "\n";
    });

    // ---- filter-domain ----
    auto* fdomain = app.add_subcommand("filter-domain", "drop records the domain scorer rejects");
    std::string fd_in, fd_scorer, fd_out, fd_decisions;
    double fd_threshold = 0.5;
    int fd_workers = 1;
    fdomain->add_option("--in", fd_in, "input manifest")->required();
    fdomain->add_option("--scorer", fd_scorer, "domain scorer checkpoint")->required();
    fdomain->add_option("--threshold", fd_threshold, "acceptance threshold");
    fdomain->add_option("--out", fd_out, "output manifest")->required();
    fdomain->add_option("--decisions", fd_decisions, "decisions sidecar path");
    fdomain->add_option("--workers", fd_workers, "worker threads");
    fdomain->callback([&]() {
        dermaug::Manifest m = dermaug::Manifest::load(fd_in);
        dermaug::EnsembleModel scorer_model = dermaug::load_ensemble(fd_scorer);
        dermaug::EnsembleDomainScorer scorer(scorer_model, "in_domain");
        auto [kept, decisions] = dermaug::domain_filter(m, scorer, fd_threshold, fd_workers);
        kept.save(fd_out);
        if (!fd_decisions.empty()) dermaug::save_decisions(decisions, fd_decisions);
        std::cout << "kept " << kept.records.size() << "/" << m.records.size() << " records\n";
    });

    // ---- filter-label ----
    auto* flabel = app.add_subcommand("filter-label",
                                      "keep records whose label matches the ensemble's top-1");
    std::string fl_in, fl_ensemble, fl_out, fl_decisions;
    int fl_workers = 1;
    flabel->add_option("--in", fl_in, "input manifest")->required();
    flabel->add_option("--ensemble", fl_ensemble, "label ensemble checkpoint")->required();
    flabel->add_option("--out", fl_out, "output manifest")->required();
    flabel->add_option("--decisions", fl_decisions, "decisions sidecar path");
    flabel->add_option("--workers", fl_workers, "worker threads");
    flabel->callback([&]() {
        dermaug::Manifest m = dermaug::Manifest::load(fl_in);
        dermaug::EnsembleModel ensemble = dermaug::load_ensemble(fl_ensemble);
        dermaug::EnsembleLabelScorer scorer(ensemble);
        auto [kept, decisions] = dermaug::label_filter(m, scorer, fl_workers);
        kept.save(fl_out);
        if (!fl_decisions.empty()) dermaug::save_decisions(decisions, fl_decisions);
        std::cout << "kept " << kept.records.size() << "/" << m.records.size() << " records\n";
    });

    // ---- augment ----
    auto* augment = app.add_subcommand(
        "augment", "full curation: domain filter, label filter, acceptance report");
    std::string au_in, au_scorer, au_ensemble, au_out, au_decisions, au_report;
    double au_threshold = 0.5;
    int au_workers = 1;
    augment->add_option("--in", au_in, "generated manifest")->required();
    augment->add_option("--scorer", au_scorer, "domain scorer checkpoint")->required();
    augment->add_option("--ensemble", au_ensemble, "label ensemble checkpoint")->required();
    augment->add_option("--threshold", au_threshold, "domain threshold");
    augment->add_option("--out", au_out, "curated manifest")->required();
    augment->add_option("--decisions", au_decisions, "decisions sidecar path");
    augment->add_option("--report", au_report, "curation report JSON path");
    augment->add_option("--workers", au_workers, "worker threads");
    augment->callback([&]() {
        dermaug::Manifest m = dermaug::Manifest::load(au_in);
        dermaug::EnsembleModel scorer_model = dermaug::load_ensemble(au_scorer);
        dermaug::EnsembleModel ensemble = dermaug::load_ensemble(au_ensemble);
        dermaug::EnsembleDomainScorer scorer(scorer_model, "in_domain");
        dermaug::EnsembleLabelScorer label_scorer(ensemble);
        auto result = dermaug::curate(m, scorer, label_scorer, au_threshold, au_workers);
        result.curated.save(au_out);
        if (!au_decisions.empty()) dermaug::save_decisions(result.decisions, au_decisions);
        if (!au_report.empty())
            dermaug::write_text_file(au_report, result.report.to_json().dump(2) + "\n");
        std::cout << "curated " << result.curated.records.size() << "/" << m.records.size()
                  << " (domain rate " << result.report.domain_rate() << ", label rate "
                  << result.report.label_rate() << ")\n";
    });

    // ---- scenario ----
    auto* scenario = app.add_subcommand("scenario", "build the four balanced dataset scenarios");
    std::string sc_real, sc_synth, sc_config, sc_out;
    scenario->add_option("--real", sc_real, "real manifest")->required();
    scenario->add_option("--synthetic", sc_synth, "curated synthetic manifest")->required();
    scenario->add_option("--config", sc_config, "suite config JSON {base_count, seed, pairing}")
        ->required();
    scenario->add_option("--out", sc_out, "output directory")->required();
    scenario->callback([&]() {
        dermaug::Manifest real = dermaug::Manifest::load(sc_real);
        dermaug::Manifest synth = dermaug::Manifest::load(sc_synth);
        json cfg = load_json_file(sc_config);
        dermaug::config_detail::reject_unknown_keys(cfg, {"base_count", "seed", "pairing"},
                                                    "scenario-suite");
        std::size_t base_count = cfg.at("base_count").get<std::size_t>();
        std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
        bool pairing = cfg.value("pairing", true);
        dermaug::ScenarioSuite suite =
            dermaug::standard_suite(base_count, real, synth, seed, pairing);
        json summary = {{"base_count", base_count}, {"pairing", pairing}};
        json rows = json::array();
        for (auto& [spec, manifest] : suite.scenarios) {
            fs::path out = fs::path(sc_out) / ("scenario_" + spec.name + ".jsonl");
            manifest.save(out);
            json row = spec.to_json();
            row["records"] = manifest.records.size();
            rows.push_back(row);
            std::cout << "wrote " << out << " (" << manifest.records.size() << " records)\n";
        }
        summary["scenarios"] = rows;
        dermaug::write_text_file(fs::path(sc_out) / "suite.json", summary.dump(2) + "\n");
    });

    // ---- train ----
    auto* train = app.add_subcommand("train", "train the classifier ensemble on one scenario");
    std::string tr_scenario, tr_config, tr_out;
    int tr_workers = 1;
    train->add_option("--scenario", tr_scenario, "scenario manifest")->required();
    train->add_option("--config", tr_config, "train config JSON");
    train->add_option("--out", tr_out, "output directory")->required();
    train->add_option("--workers", tr_workers, "worker threads");
    train->callback([&]() {
        dermaug::Manifest m = dermaug::Manifest::load(tr_scenario);
        dermaug::TrainConfig cfg = tr_config.empty()
                                       ? dermaug::TrainConfig{}
                                       : dermaug::TrainConfig::from_json(load_json_file(tr_config));
        dermaug::EnsembleModel ensemble = dermaug::train_ensemble(m, cfg, tr_workers);
        ensemble.scenario_name = scenario_name_from_manifest(m);
        fs::path out = fs::path(tr_out) / ("ensemble_" + ensemble.scenario_name + ".ckpt");
        dermaug::save_ensemble(ensemble, out);
        std::cout << "trained ensemble '" << ensemble.scenario_name << "':";
        for (const auto& h : ensemble.histories)
            std::cout << " " << h.arch_id << "(best " << h.best_epoch << ", stop " << h.stopped_epoch
                      << ", val " << h.epochs[std::size_t(h.best_epoch - 1)].val_accuracy << ")";
        std::cout << "; wrote " << out << "\n";
    });

    // ---- evaluate ----
    auto* evaluate = app.add_subcommand("evaluate", "top-k accuracy of ensembles on a test set");
    std::string ev_ensembles, ev_test, ev_out;
    int ev_max_k = 5, ev_workers = 1;
    evaluate->add_option("--ensembles", ev_ensembles, "directory of ensemble_*.ckpt")->required();
    evaluate->add_option("--test", ev_test, "test manifest")->required();
    evaluate->add_option("--out", ev_out, "output directory")->required();
    evaluate->add_option("--max-k", ev_max_k, "largest k in the report");
    evaluate->add_option("--workers", ev_workers, "worker threads");
    evaluate->callback([&]() {
        dermaug::Manifest test = dermaug::Manifest::load(ev_test);
        std::vector<std::string> names;
        for (const auto& entry : fs::directory_iterator(ev_ensembles)) {
            std::string fname = entry.path().filename().string();
            if (fname.rfind("ensemble_", 0) == 0 && entry.path().extension() == ".ckpt")
                names.push_back(fname.substr(9, fname.size() - 9 - 5));
        }
        if (names.empty())
            throw dermaug::DataError("no ensemble_*.ckpt files in " + ev_ensembles);
        // canonical scenario order first, extras alphabetically
        std::vector<std::string> ordered;
        for (const std::string& want : {"real-small", "real", "hybrid", "synthetic"})
            for (auto it = names.begin(); it != names.end(); ++it)
                if (*it == want) { ordered.push_back(*it); names.erase(it); break; }
        std::sort(names.begin(), names.end());
        ordered.insert(ordered.end(), names.begin(), names.end());

        std::vector<dermaug::EnsembleModel> models;
        models.reserve(ordered.size());
        for (const auto& name : ordered)
            models.push_back(
                dermaug::load_ensemble(fs::path(ev_ensembles) / ("ensemble_" + name + ".ckpt")));
        std::vector<std::pair<std::string, const dermaug::EnsembleModel*>> named;
        for (std::size_t i = 0; i < models.size(); ++i) named.emplace_back(ordered[i], &models[i]);

        auto result = dermaug::evaluate_scenarios(named, test, ev_max_k, ev_workers);
        dermaug::write_text_file(fs::path(ev_out) / "report.json",
                                 dermaug::render_report(result.report, dermaug::ReportFormat::json));
        dermaug::write_text_file(fs::path(ev_out) / "report.csv",
                                 dermaug::render_report(result.report, dermaug::ReportFormat::csv));
        std::string table = dermaug::render_report(result.report, dermaug::ReportFormat::plain);
        dermaug::write_text_file(fs::path(ev_out) / "report.txt", table);
        for (const auto& sc : result.scores)
            dermaug::write_text_file(fs::path(ev_out) / "scores" / (sc.scenario + ".csv"),
                                     dermaug::scores_to_csv(sc, test.taxonomy));
        std::cout << table;
    });

    // ---- report ----
    auto* report = app.add_subcommand("report", "re-render a report.json");
    std::string rp_in, rp_format = "plain", rp_out;
    report->add_option("--in", rp_in, "report.json path")->required();
    report->add_option("--format", rp_format, "plain|csv|json")
        ->check(CLI::IsMember({"plain", "csv", "json"}));
    report->add_option("--out", rp_out, "output path (default stdout)");
    report->callback([&]() {
        dermaug::EvalReport rep = dermaug::EvalReport::from_json(load_json_file(rp_in));
        dermaug::ReportFormat fmt = rp_format == "csv"
                                        ? dermaug::ReportFormat::csv
                                        : (rp_format == "json" ? dermaug::ReportFormat::json
                                                               : dermaug::ReportFormat::plain);
        std::string text = dermaug::render_report(rep, fmt);
        if (rp_out.empty())
            std::cout << text;
        else
            dermaug::write_text_file(rp_out, text);
    });

    // ---- reproduce-toy ----
    auto* reproduce = app.add_subcommand(
        "reproduce-toy", "run the whole desk-scale experiment: data, generator, curation, "
                         "scenarios, ensembles, evaluation");
    std::string rt_config, rt_work_dir;
    std::uint64_t rt_seed = 0;
    int rt_workers = 0;
    bool rt_force = false;
    reproduce->add_option("--config", rt_config, "experiment config JSON (defaults are desk-scale)");
    reproduce->add_option("--work-dir", rt_work_dir, "working directory (env DERMAUG_WORK_DIR)");
    reproduce->add_option("--seed", rt_seed, "root seed (overrides config)");
    reproduce->add_option("--workers", rt_workers, "worker threads (overrides config)");
    reproduce->add_flag("--force", rt_force, "ignore cached stages");
    reproduce->callback([&]() {
        dermaug::ExperimentConfig cfg;
        std::string cfg_work;
        if (!rt_config.empty()) {
            json j = load_json_file(rt_config);
            cfg = dermaug::ExperimentConfig::from_json(j);
            cfg_work = cfg.work_dir.string();
        }
        cfg.work_dir = resolve_work_dir(rt_work_dir, cfg_work);
        if (rt_seed != 0) cfg.seed = rt_seed;
        if (rt_workers != 0) cfg.workers = rt_workers;
        auto art = dermaug::run_pipeline(cfg, rt_force);
        std::ifstream table(art.report_txt);
        std::cout << table.rdbuf();
        std::cout << "artifacts under " << cfg.work_dir << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : int(dermaug::ExitCode::config_error);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return int(dermaug::exit_code_for(e));
    }
}
