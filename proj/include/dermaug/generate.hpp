#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dermaug/errors.hpp"
#include "dermaug/manifest.hpp"
#include "dermaug/parallel.hpp"
#include "dermaug/png_io.hpp"
#include "dermaug/sampler.hpp"

namespace dermaug {

struct GeneratorRun {
    std::string run_id;
    std::uint64_t seed = 0;
    std::map<std::string, std::size_t> per_class_counts;  // class_id -> requested count
    int sampler_steps = 0;  // 0 means the schedule's full T
    std::filesystem::path out_dir;
};

// Fig-style batch generation: sample every requested image, write lossless
// PNGs under <out_dir>/<run_id>/<class_id>/, and assemble a synthetic-source
// manifest with full provenance. Assembly order is (class, index) regardless
// of worker scheduling.
inline Manifest generate_to_manifest(const GeneratorRun& run, const DenoiserModel& model,
                                     const EmbeddingTable& table, const NoiseSchedule& schedule,
                                     const ClassTaxonomy& taxonomy, int workers = 1) {
    if (run.sampler_steps != 0 && run.sampler_steps != schedule.timesteps)
        throw ConfigError("sampler_steps must equal the schedule's timestep count (ancestral sampling)");

    struct Job {
        std::size_t class_idx;
        std::size_t index_in_class;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < taxonomy.size(); ++c) {
        const auto& entry = taxonomy.at(c);
        auto it = run.per_class_counts.find(entry.class_id);
        std::size_t count = it == run.per_class_counts.end() ? 0 : it->second;
        for (std::size_t i = 0; i < count; ++i)
            jobs.push_back({c, i, derive_seed(run.seed, "generate", jobs.size())});
    }

    const int dim = model.config.input_dim();
    std::vector<float> rows(jobs.size() * std::size_t(dim));
    std::vector<std::uint64_t> seeds(jobs.size());
    for (std::size_t i = 0; i < jobs.size(); ++i) seeds[i] = jobs[i].seed;

    parallel_chunks(jobs.size(), detail::kSamplerChunk, workers, [&](std::size_t b, std::size_t e) {
        // jobs are laid out class-major, so a chunk can span a class boundary;
        // split it at boundaries to keep one embedding per call
        std::size_t start = b;
        while (start < e) {
            std::size_t stop = start;
            while (stop < e && jobs[stop].class_idx == jobs[start].class_idx) ++stop;
            auto emb = encode_prompt(taxonomy.at(jobs[start].class_idx).class_id, table);
            detail::sample_chunk_into(model, schedule, emb, seeds, start, stop, rows.data());
            start = stop;
        }
    });

    Manifest m(taxonomy, "generate");
    m.set_base_dir(run.out_dir);
    std::size_t written = 0;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& job = jobs[i];
        const auto& entry = taxonomy.at(job.class_idx);
        char name[32];
        std::snprintf(name, sizeof(name), "%05zu.png", job.index_in_class);
        std::filesystem::path rel =
            std::filesystem::path(run.run_id) / entry.class_id / name;
        Image img = detail::row_to_image(rows.data() + i * std::size_t(dim), model.config.height,
                                         model.config.width);
        try {
            png::save_image(img, run.out_dir / rel);
        } catch (const std::exception& e) {
            throw IoError("generation failed after writing " + std::to_string(written) + "/" +
                          std::to_string(jobs.size()) + " images: " + e.what());
        }
        ++written;

        ImageRecord rec;
        rec.record_id = run.run_id + "/" + entry.class_id + "/" + std::to_string(job.index_in_class);
        rec.image_path = rel.generic_string();
        rec.label = entry.class_id;
        rec.source = ImageSource::synthetic;
        Provenance prov;
        prov.generator_run_id = run.run_id;
        prov.seed = job.seed;
        prov.prompt = entry.display_name;
        prov.sampler_steps = schedule.timesteps;
        rec.provenance = prov;
        m.records.push_back(std::move(rec));
    }
    m.validate();
    return m;
}

}  // namespace dermaug
