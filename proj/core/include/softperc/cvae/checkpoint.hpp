#pragma once

#include <cstdint>
#include <string>

#include "softperc/cvae/model.hpp"

namespace softperc::cvae {

/// A checkpoint is a directory: model.json (config, step, rng state, layer
/// names + shapes in registry order) and weights.bin (the parameters as
/// little-endian f32, concatenated in that same order). Reloading reproduces
/// forward passes bit for bit.
void save_checkpoint(const std::string& dir, const WorldModel& model, std::int64_t step,
                     const std::string& rng_state);

struct LoadedCheckpoint {
    WorldModel model;
    std::int64_t step = 0;
    std::string rng_state;
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace softperc::cvae
