#pragma once

#include <filesystem>
#include <string>

#include "asmr/config.hpp"

namespace asmr {

void run_synth(const RunConfig& cfg);
void run_pretrain(const RunConfig& cfg);
// resume: checkpoint with optimizer state to continue from; empty = fresh run
// (warm-started from paths.init_checkpoint when that is set).
void run_train(const RunConfig& cfg, const std::filesystem::path& resume = {});
void run_eval(const RunConfig& cfg);
// query_spec: comma-separated group=attribute pairs; omitted groups are blanks.
void run_retrieve(const RunConfig& cfg, const std::string& query_spec, std::size_t k,
                  const std::string& split_name);
void run_ablate(const RunConfig& cfg);
// Returns true when every instance passes at the tolerance.
bool run_gradcheck(const RunConfig& cfg, double tolerance = 1e-4, bool inject_bug = false);

}  // namespace asmr
