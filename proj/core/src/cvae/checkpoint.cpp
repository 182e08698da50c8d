#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "softperc/cvae/checkpoint.hpp"

namespace softperc::cvae {

namespace {

using nlohmann::json;

constexpr int kCheckpointSchema = 1;

json config_to_json(const ModalityConfig& c) {
    return {
        {"in_proprio", c.in_proprio},   {"in_vision", c.in_vision}, {"in_force", c.in_force},
        {"out_proprio", c.out_proprio}, {"out_force", c.out_force}, {"out_flow", c.out_flow},
        {"latent_dim", c.latent_dim},   {"w_proprio", c.w_proprio}, {"w_force", c.w_force},
        {"w_flow", c.w_flow},           {"beta", c.beta},
    };
}

ModalityConfig config_from_json(const json& j) {
    ModalityConfig c;
    c.in_proprio = j.at("in_proprio");
    c.in_vision = j.at("in_vision");
    c.in_force = j.at("in_force");
    c.out_proprio = j.at("out_proprio");
    c.out_force = j.at("out_force");
    c.out_flow = j.at("out_flow");
    c.latent_dim = j.at("latent_dim");
    c.w_proprio = j.at("w_proprio");
    c.w_force = j.at("w_force");
    c.w_flow = j.at("w_flow");
    c.beta = j.at("beta");
    return c;
}

}  // namespace

void save_checkpoint(const std::string& dir, const WorldModel& model, std::int64_t step,
                     const std::string& rng_state) {
    std::filesystem::create_directories(dir);

    json layers = json::array();
    const auto& names = model.parameter_names();
    const auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
        layers.push_back({{"name", names[i]}, {"shape", params[i].value().shape}});

    json j = {
        {"schema_version", kCheckpointSchema},
        {"config", config_to_json(model.config())},
        {"step", step},
        {"rng", rng_state},
        {"layers", layers},
    };
    const std::string man_path = dir + "/model.json";
    std::ofstream out(man_path);
    if (!out) throw DataFormatError("checkpoint: cannot write " + man_path);
    out << j.dump(2) << "\n";
    out.close();

    const std::string bin_path = dir + "/weights.bin";
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw DataFormatError("checkpoint: cannot write " + bin_path);
    for (const auto& p : params) {
        const auto& t = p.value();
        bin.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!bin) throw DataFormatError("checkpoint: short write to " + bin_path);
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
    const std::string man_path = dir + "/model.json";
    std::ifstream in(man_path);
    if (!in) throw DataFormatError("checkpoint: cannot open " + man_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataFormatError("checkpoint: model.json is not valid JSON: " + std::string(e.what()));
    }

    ModalityConfig cfg;
    std::int64_t step = 0;
    std::string rng_state;
    std::vector<std::pair<std::string, num::Shape>> layers;
    try {
        if (j.at("schema_version").get<int>() != kCheckpointSchema)
            throw DataFormatError("checkpoint: unsupported schema_version " +
                                  j.at("schema_version").dump());
        cfg = config_from_json(j.at("config"));
        step = j.at("step");
        rng_state = j.at("rng");
        for (const auto& l : j.at("layers"))
            layers.emplace_back(l.at("name").get<std::string>(), l.at("shape").get<num::Shape>());
    } catch (const json::exception& e) {
        throw DataFormatError("checkpoint: model.json is missing fields: " +
                              std::string(e.what()));
    }

    // Rebuild the architecture from the config, then overwrite every weight;
    // the init stream here is irrelevant.
    Rng scratch(0);
    WorldModel model(cfg, scratch);
    auto& params = model.parameters();
    const auto& names = model.parameter_names();
    if (layers.size() != params.size())
        throw DataFormatError("checkpoint: model.json lists " + std::to_string(layers.size()) +
                              " layers, expected " + std::to_string(params.size()));
    std::int64_t total_floats = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (layers[i].first != names[i])
            throw DataFormatError("checkpoint: layer " + std::to_string(i) + " is '" +
                                  layers[i].first + "', expected '" + names[i] + "'");
        if (layers[i].second != params[i].value().shape)
            throw DataFormatError("checkpoint: layer '" + names[i] + "' has the wrong shape");
        total_floats += params[i].value().numel();
    }

    const std::string bin_path = dir + "/weights.bin";
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw DataFormatError("checkpoint: cannot open " + bin_path);
    bin.seekg(0, std::ios::end);
    const auto size = static_cast<std::int64_t>(bin.tellg());
    bin.seekg(0);
    if (size != total_floats * static_cast<std::int64_t>(sizeof(float)))
        throw DataFormatError("checkpoint: weights.bin is " + std::to_string(size) +
                              " bytes, expected " + std::to_string(total_floats * 4));
    for (auto& p : params) {
        auto& t = p.mutable_value();
        bin.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!bin) throw DataFormatError("checkpoint: short read from " + bin_path);

    return LoadedCheckpoint{std::move(model), step, std::move(rng_state)};
}

}  // namespace softperc::cvae
