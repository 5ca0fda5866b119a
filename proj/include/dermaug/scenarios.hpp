#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dermaug/errors.hpp"
#include "dermaug/manifest.hpp"
#include "dermaug/rng.hpp"
#include "dermaug/split.hpp"

namespace dermaug {

// A balanced dataset mix: fixed per-class counts of real and synthetic images.
struct ScenarioSpec {
    std::string name;
    std::size_t per_class_real = 0;
    std::size_t per_class_synthetic = 0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        return {{"name", name},
                {"per_class_real", per_class_real},
                {"per_class_synthetic", per_class_synthetic},
                {"seed", seed}};
    }
};

namespace detail {

// With pairing enabled every scenario draws from one shared per-source
// ordering, so smaller real subsets nest inside larger ones. Without pairing
// each scenario gets an independent substream.
inline std::uint64_t scenario_sample_seed(const ScenarioSpec& spec, const std::string& source,
                                          bool paired) {
    if (paired) return derive_seed(spec.seed, "scenario-sample/" + source);
    return derive_seed(spec.seed, "scenario-sample/" + source + "/" + spec.name);
}

inline void append_sampled(Manifest& out, const Manifest& pool, std::size_t per_class,
                           std::uint64_t sample_seed) {
    if (per_class == 0) return;
    auto picked = sample_per_class(pool, per_class, sample_seed);
    for (std::size_t idx : picked) {
        ImageRecord rec = pool.records[idx];
        rec.split.reset();  // training performs its own split
        rec.image_path = rebase_image_path(rec.image_path, pool.base_dir(), out.base_dir());
        out.records.push_back(std::move(rec));
    }
}

}  // namespace detail

// Draws exactly per_class_real real and per_class_synthetic synthetic records
// per class, without replacement, deterministic in (seed, record_ids). The
// synthetic pool must be curation output.
inline Manifest build_scenario(const ScenarioSpec& spec, const Manifest& real,
                               const Manifest& synthetic, bool paired = true) {
    if (spec.name.empty()) throw ConfigError("scenario name must be non-empty");
    if (!(real.taxonomy == synthetic.taxonomy) && spec.per_class_synthetic > 0 &&
        spec.per_class_real > 0)
        throw DataError("real and synthetic manifests carry different taxonomies");
    if (spec.per_class_synthetic > 0 && !synthetic.chain_contains("filter-label"))
        throw DataError("synthetic manifest is not curation output (stage chain '" +
                        synthetic.stage_chain() + "' lacks filter-label)");

    Manifest out(spec.per_class_real > 0 ? real.taxonomy : synthetic.taxonomy,
                 "scenario:" + spec.name);
    std::string parent_chain = real.stage_chain();
    if (spec.per_class_synthetic > 0) parent_chain += "+" + synthetic.stage_chain();
    out.parent = parent_chain;
    out.set_base_dir(real.base_dir());

    detail::append_sampled(out, real, spec.per_class_real,
                           detail::scenario_sample_seed(spec, "real", paired));
    detail::append_sampled(out, synthetic, spec.per_class_synthetic,
                           detail::scenario_sample_seed(spec, "synthetic", paired));
    out.validate();
    return out;
}

struct ScenarioSuite {
    std::vector<std::pair<ScenarioSpec, Manifest>> scenarios;  // fixed order

    const Manifest& by_name(const std::string& name) const {
        for (const auto& [spec, m] : scenarios)
            if (spec.name == name) return m;
        throw DataError("no scenario named '" + name + "'");
    }
};

inline std::array<ScenarioSpec, 4> standard_scenario_specs(std::size_t base_count,
                                                           std::uint64_t seed) {
    if (base_count % 2 != 0)
        throw ConfigError("standard suite base count must be even, got " +
                          std::to_string(base_count));
    std::size_t half = base_count / 2;
    return {ScenarioSpec{"real-small", half, 0, seed}, ScenarioSpec{"real", base_count, 0, seed},
            ScenarioSpec{"hybrid", half, half, seed},
            ScenarioSpec{"synthetic", 0, base_count, seed}};
}

// The four balanced mixes at scale n: real-small (n/2 real), real (n real),
// hybrid (n/2 + n/2) and synthetic (n synthetic). With pairing enabled the
// hybrid's real half equals the real-small set and real-small nests in real.
inline ScenarioSuite standard_suite(std::size_t base_count, const Manifest& real,
                                    const Manifest& synthetic, std::uint64_t seed,
                                    bool paired = true) {
    ScenarioSuite suite;
    for (const auto& spec : standard_scenario_specs(base_count, seed))
        suite.scenarios.emplace_back(spec, build_scenario(spec, real, synthetic, paired));
    return suite;
}

}  // namespace dermaug
