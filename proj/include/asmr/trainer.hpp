#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "asmr/data.hpp"
#include "asmr/gradcheck.hpp"
#include "asmr/objective.hpp"

namespace asmr {

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 128;
    double lr_image = 1e-3;
    double lr_category_and_w = 1e-2;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double decay_factor = 0.1;
    std::size_t decay_every = 5;
    std::uint64_t seed = 1;
    std::size_t pretrain_epochs = 20;
    double pretrain_lr = 0.05;
    std::size_t checkpoint_every = 0;  // epochs between mid-run checkpoints; 0 = final only

    void validate() const;
};

struct LearningRates {
    double image = 0.0;
    double category_and_w = 0.0;
};

// base_lr * decay_factor^floor(epoch / decay_every), per parameter group
LearningRates lr_schedule(std::size_t epoch, const TrainConfig& cfg);

struct OptimizerState {
    GradientTape velocity;  // same layout as the gradients it integrates
    std::size_t epoch = 0;
    LearningRates rates;

    static OptimizerState like(const ModelState& state);
};

// v <- momentum v + (grad + weight_decay * theta); theta <- theta - lr v.
// lr comes from opt.rates by parameter group. groups_mask limits the update
// (pretraining touches only the image trunk and the heads).
void sgd_step(ModelState& state, const GradientTape& grads, OptimizerState& opt,
              const TrainConfig& cfg,
              const std::vector<ParamGroup>& groups_mask = {
                  ParamGroup::Image, ParamGroup::CategoryAndW, ParamGroup::Head});

// Deterministic per-epoch sample order: a fresh generator is derived from
// (seed, epoch), so resuming at any epoch reproduces the interrupted run.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

struct EpochMetrics {
    std::size_t epoch = 0;
    double lr_image = 0.0;
    double lr_category = 0.0;
    double loss_total = 0.0;
    double loss_ma = 0.0;
    double asmr_value = 0.0;
};

struct PretrainEpochMetrics {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double accuracy_mean = 0.0;
    double accuracy_min = 0.0;
};

// Attribute-classification pretraining of the image encoder: per-group heads
// are attached, trunk + heads minimize the summed cross-entropy, then the
// heads are discarded.
std::vector<PretrainEpochMetrics> pretrain(ModelState& state, const Dataset& ds,
                                           const TrainConfig& cfg);

using TrainCallback =
    std::function<void(const ModelState&, const OptimizerState&, const EpochMetrics&)>;

// Joint training of both encoders and the Hamming weights. Runs epochs
// [opt.epoch, cfg.epochs); pass a fresh OptimizerState to start from scratch
// or a checkpointed one to resume.
std::vector<EpochMetrics> train(ModelState& state, const Dataset& ds, const LossConfig& loss_cfg,
                                const TrainConfig& cfg, OptimizerState& opt,
                                const TrainCallback& callback = {});

}  // namespace asmr
