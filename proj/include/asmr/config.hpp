#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asmr/data.hpp"
#include "asmr/objective.hpp"
#include "asmr/trainer.hpp"

namespace asmr {

struct RunPaths {
    std::filesystem::path out_dir;   // from config, --out, or $ASMR_OUT_DIR; default "out"
    std::filesystem::path schema;    // default <out>/schema.json
    std::filesystem::path samples;   // default <out>/samples.jsonl
    std::filesystem::path splits;    // default <out>/splits.json
    std::filesystem::path pretrain_checkpoint;  // default <out>/pretrain.ckpt.json
    std::filesystem::path checkpoint;           // default <out>/model.ckpt.json
    std::filesystem::path init_checkpoint;      // optional warm start for train
};

struct RunConfig {
    std::uint64_t seed = 1;
    RunPaths paths;
    SynthConfig synth;
    EncoderDims encoder;
    LossConfig loss;
    TrainConfig train;
    std::vector<std::size_t> eval_ks{1, 5, 10};
    std::vector<std::uint64_t> ablate_seeds{1, 2, 3, 4, 5};
};

// Effective config as one canonical JSON document (every field explicit).
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);

// Dataset-named presets set (lambda, sigma, gamma) only:
// peta (4, 32, 0.1), market (6, 12, 0.2), pa100k (5, 48, 0.1).
void apply_preset(nlohmann::json& j, const std::string& name);

// "a.b.c=value"; value parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

struct CliOptions {
    std::optional<std::filesystem::path> config_file;
    std::optional<std::string> preset;
    std::vector<std::string> overrides;            // --set
    std::optional<std::uint64_t> seed;             // --seed: run, synth and train seeds
    std::optional<std::filesystem::path> out_dir;  // --out
    std::optional<std::filesystem::path> checkpoint;  // --checkpoint
};

RunConfig resolve_config(const CliOptions& opts);

std::string config_hash(const RunConfig& cfg);

}  // namespace asmr
