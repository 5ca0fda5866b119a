#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dermaug/denoiser.hpp"
#include "dermaug/diffusion.hpp"
#include "dermaug/embedding.hpp"
#include "dermaug/errors.hpp"
#include "dermaug/schedule.hpp"
#include "dermaug/training.hpp"

namespace dermaug {

// One-file checkpoint container: versioned header JSON plus named float
// sections, little-endian.
namespace checkpoint {

inline constexpr char magic[8] = {'D', 'M', 'A', 'U', 'G', 'C', 'K', '1'};
inline constexpr std::uint32_t version = 1;

struct Archive {
    nlohmann::json header;
    std::vector<std::pair<std::string, std::vector<float>>> sections;

    const std::vector<float>& section(const std::string& name) const {
        for (const auto& [n, data] : sections)
            if (n == name) return data;
        throw DataError("checkpoint missing section '" + name + "'");
    }
};

namespace detail {

template <typename T>
void write_pod(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw DataError("checkpoint truncated");
    return v;
}

}  // namespace detail

inline void save(const Archive& a, const std::filesystem::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path.string());
    f.write(magic, 8);
    detail::write_pod(f, version);
    std::string header = a.header.dump();
    detail::write_pod(f, std::uint64_t(header.size()));
    f.write(header.data(), std::streamsize(header.size()));
    detail::write_pod(f, std::uint32_t(a.sections.size()));
    for (const auto& [name, data] : a.sections) {
        detail::write_pod(f, std::uint32_t(name.size()));
        f.write(name.data(), std::streamsize(name.size()));
        detail::write_pod(f, std::uint64_t(data.size()));
        f.write(reinterpret_cast<const char*>(data.data()),
                std::streamsize(data.size() * sizeof(float)));
    }
    if (!f) throw IoError("failed writing checkpoint: " + path.string());
}

inline Archive load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path.string());
    char m[8];
    f.read(m, 8);
    if (!f || std::memcmp(m, magic, 8) != 0)
        throw DataError("not a checkpoint file: " + path.string());
    auto v = detail::read_pod<std::uint32_t>(f);
    if (v != version)
        throw DataError("unsupported checkpoint version " + std::to_string(v) + ": " + path.string());
    auto header_len = detail::read_pod<std::uint64_t>(f);
    std::string header(header_len, '\0');
    f.read(header.data(), std::streamsize(header_len));
    if (!f) throw DataError("checkpoint truncated: " + path.string());
    Archive a;
    try {
        a.header = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint header is not valid JSON: " + std::string(e.what()));
    }
    auto n_sections = detail::read_pod<std::uint32_t>(f);
    for (std::uint32_t i = 0; i < n_sections; ++i) {
        auto name_len = detail::read_pod<std::uint32_t>(f);
        std::string name(name_len, '\0');
        f.read(name.data(), std::streamsize(name_len));
        auto count = detail::read_pod<std::uint64_t>(f);
        std::vector<float> data(count);
        f.read(reinterpret_cast<char*>(data.data()), std::streamsize(count * sizeof(float)));
        if (!f) throw DataError("checkpoint truncated: " + path.string());
        a.sections.emplace_back(std::move(name), std::move(data));
    }
    return a;
}

}  // namespace checkpoint

struct GeneratorCheckpoint {
    DenoiserModel model;
    EmbeddingTable embeddings;
    NoiseSchedule schedule;
    ClassTaxonomy taxonomy;
    nlohmann::json config_echo = nlohmann::json::object();
};

inline void save_generator(GeneratorCheckpoint& g, const std::filesystem::path& path) {
    checkpoint::Archive a;
    a.header = {
        {"type", "generator"},
        {"schedule", {{"timesteps", g.schedule.timesteps}, {"betas", g.schedule.betas}}},
        {"denoiser",
         {{"height", g.model.config.height},
          {"width", g.model.config.width},
          {"hidden", g.model.config.hidden},
          {"blocks", g.model.config.blocks},
          {"cond_dim", g.model.config.cond_dim}}},
        {"taxonomy", g.taxonomy.to_json()},
        {"embedding_class_ids", g.embeddings.class_ids},
        {"config_echo", g.config_echo},
    };
    a.sections.emplace_back("denoiser_params", g.model.serialize());
    const auto& emb = g.embeddings.vectors.value;
    a.sections.emplace_back("embeddings",
                            std::vector<float>(emb.data(), emb.data() + emb.size()));
    checkpoint::save(a, path);
}

inline GeneratorCheckpoint load_generator(const std::filesystem::path& path) {
    checkpoint::Archive a = checkpoint::load(path);
    if (a.header.value("type", "") != "generator")
        throw DataError("checkpoint is not a generator checkpoint: " + path.string());
    GeneratorCheckpoint g;
    const auto& dj = a.header.at("denoiser");
    DenoiserConfig cfg;
    cfg.height = dj.at("height").get<int>();
    cfg.width = dj.at("width").get<int>();
    cfg.hidden = dj.at("hidden").get<int>();
    cfg.blocks = dj.at("blocks").get<int>();
    cfg.cond_dim = dj.at("cond_dim").get<int>();
    g.model = DenoiserModel::init(cfg, 0);
    g.model.deserialize(a.section("denoiser_params"));
    g.schedule = NoiseSchedule(a.header.at("schedule").at("betas").get<std::vector<double>>());
    g.taxonomy = ClassTaxonomy::from_json(a.header.at("taxonomy"));
    g.embeddings.class_ids = a.header.at("embedding_class_ids").get<std::vector<std::string>>();
    const auto& emb = a.section("embeddings");
    Eigen::Index rows = Eigen::Index(g.embeddings.class_ids.size());
    Eigen::Index cols = Eigen::Index(cfg.cond_dim);
    if (Eigen::Index(emb.size()) != rows * cols)
        throw DataError("embedding section size mismatch in " + path.string());
    g.embeddings.vectors.value.resize(rows, cols);
    std::copy(emb.begin(), emb.end(), g.embeddings.vectors.value.data());
    g.embeddings.vectors.grad = nn::MatrixF::Zero(rows, cols);
    if (a.header.contains("config_echo")) g.config_echo = a.header.at("config_echo");
    return g;
}

inline void save_ensemble(EnsembleModel& e, const std::filesystem::path& path) {
    checkpoint::Archive a;
    nlohmann::json histories = nlohmann::json::array();
    for (const auto& h : e.histories) histories.push_back(h.to_json());
    a.header = {
        {"type", "ensemble"},
        {"arch_ids", e.arch_ids},
        {"taxonomy", e.taxonomy.to_json()},
        {"stats", e.stats.to_json()},
        {"stats_source", "train-split"},
        {"train_config", e.config.to_json()},
        {"histories", histories},
        {"train_record_ids", e.train_record_ids},
        {"scenario",
         {{"name", e.scenario_name},
          {"real_per_class", e.real_per_class},
          {"synthetic_per_class", e.synthetic_per_class}}},
    };
    for (std::size_t i = 0; i < e.members.size(); ++i)
        a.sections.emplace_back("member" + std::to_string(i), e.members[i]->save_params());
    checkpoint::save(a, path);
}

inline EnsembleModel load_ensemble(const std::filesystem::path& path) {
    checkpoint::Archive a = checkpoint::load(path);
    if (a.header.value("type", "") != "ensemble")
        throw DataError("checkpoint is not an ensemble checkpoint: " + path.string());
    EnsembleModel e;
    e.arch_ids = a.header.at("arch_ids").get<std::vector<std::string>>();
    e.taxonomy = ClassTaxonomy::from_json(a.header.at("taxonomy"));
    e.stats = NormalizationStats::from_json(a.header.at("stats"));
    e.config = TrainConfig::from_json(a.header.at("train_config"));
    for (const auto& h : a.header.at("histories")) e.histories.push_back(MemberHistory::from_json(h));
    e.train_record_ids = a.header.at("train_record_ids").get<std::vector<std::string>>();
    const auto& sc = a.header.at("scenario");
    e.scenario_name = sc.at("name").get<std::string>();
    e.real_per_class = sc.at("real_per_class").get<std::size_t>();
    e.synthetic_per_class = sc.at("synthetic_per_class").get<std::size_t>();
    for (std::size_t i = 0; i < e.arch_ids.size(); ++i) {
        MemberInit init{e.config.height, e.config.width, int(e.taxonomy.size()), 0};
        MemberPtr member = make_member(e.arch_ids[i], init);
        member->load_params(a.section("member" + std::to_string(i)));
        e.members.push_back(std::move(member));
    }
    return e;
}

}  // namespace dermaug
