#pragma once

#include <functional>
#include <string>
#include <vector>

#include "asmr/objective.hpp"

namespace asmr {

enum class ParamGroup { Image, CategoryAndW, Head };

// Flat view over one named parameter block of a ModelState (or the matching
// gradient block of a tape). Blocks traverse in a fixed order so state and
// tape views line up index for index.
struct ParamBlock {
    std::string name;
    double* data;
    std::size_t size;
    ParamGroup group;
};

struct ConstParamBlock {
    std::string name;
    const double* data;
    std::size_t size;
    ParamGroup group;
};

std::vector<ParamBlock> param_blocks(ModelState& state);
std::vector<ParamBlock> tape_blocks(GradientTape& tape);
std::vector<ConstParamBlock> tape_blocks(const GradientTape& tape);

struct BlockCheck {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<BlockCheck> blocks;
    double worst = 0.0;
    double tolerance = 0.0;
    bool pass = true;
};

// Central-difference check of an analytic gradient. Relative error uses a
// 1e-3 denominator floor: below that magnitude the comparison is effectively
// absolute, which keeps finite-difference truncation noise from failing
// near-zero gradients.
GradCheckReport grad_check(const std::function<double(const ModelState&)>& f, ModelState state,
                           const GradientTape& analytic, double step, double tolerance);

// Seeded toy problem: small random encoders, a 4-image batch over 3
// categories, and the combined objective. Used by the gradcheck command and
// the acceptance suite. inject_bug corrupts one analytic entry to prove the
// check can fail.
GradCheckReport run_toy_gradcheck(std::uint64_t seed, double step, double tolerance,
                                  bool inject_bug = false);

}  // namespace asmr
