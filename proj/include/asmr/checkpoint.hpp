#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "asmr/objective.hpp"
#include "asmr/trainer.hpp"

namespace asmr {

// Checkpoint file: one JSON document holding every parameter block with shape
// metadata, the run seed, and optionally the optimizer state for resuming.
// Doubles round-trip exactly (shortest-representation serialization).
struct LoadedCheckpoint {
    ModelState state;
    std::uint64_t seed = 0;
    std::optional<OptimizerState> optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const ModelState& state,
                     std::uint64_t seed, const OptimizerState* optimizer = nullptr);

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace asmr
