#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "asmr/errors.hpp"
#include "asmr/trainer.hpp"

using namespace asmr;

namespace {

AttributeSchema toy_schema() {
    return AttributeSchema({{"g0", {"a0", "a1"}}, {"g1", {"b0", "b1", "b2"}}});
}

// a one-parameter model: handy for exact SGD arithmetic
struct ScalarRig {
    ModelState state;
    GradientTape tape;
    OptimizerState opt;
    TrainConfig cfg;

    ScalarRig() {
        state.image_encoder.normalize_output = false;
        DenseLayer layer;
        layer.weight = Matrix(1, 1);
        layer.bias.assign(1, 0.0);
        state.image_encoder.layers.push_back(layer);
        state.category_encoder = state.image_encoder;
        state.hamming_weights.assign(1, 0.0);
        state.n_groups = 1;
        tape = GradientTape::like(state);
        opt = OptimizerState::like(state);
        cfg.momentum = 0.0;
        cfg.weight_decay = 0.0;
    }

    double& theta() { return state.image_encoder.layers[0].weight(0, 0); }
    double& grad() { return tape.image.layers[0].d_weight(0, 0); }
    void step(double lr_img = 0.1, double lr_cat = 0.1) {
        opt.rates = {lr_img, lr_cat};
        sgd_step(state, tape, opt, cfg);
    }
};

SynthConfig toy_synth(std::uint64_t seed) {
    SynthConfig cfg;
    cfg.group_sizes = {2, 3};
    cfg.n_categories = 6;
    cfg.images_per_category_min = cfg.images_per_category_max = 8;
    cfg.feature_dim = 12;
    cfg.noise_std = 0.15;
    cfg.seed = seed;
    return cfg;
}

Dataset toy_dataset(std::uint64_t seed, double unseen = 0.0) {
    Dataset ds = generate(toy_synth(seed));
    split_dataset(ds, unseen, 0.25, seed);
    return ds;
}

TrainConfig quick_train_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 16;
    cfg.pretrain_epochs = 6;
    cfg.seed = seed;
    return cfg;
}

EncoderDims small_dims() { return {16, 12, 8}; }

bool states_equal(const ModelState& a, const ModelState& b) {
    auto nets_equal = [](const EncoderNet& x, const EncoderNet& y) {
        if (x.layers.size() != y.layers.size()) return false;
        for (std::size_t l = 0; l < x.layers.size(); ++l) {
            if (x.layers[l].weight.data != y.layers[l].weight.data) return false;
            if (x.layers[l].bias != y.layers[l].bias) return false;
        }
        return true;
    };
    return nets_equal(a.image_encoder, b.image_encoder) &&
           nets_equal(a.category_encoder, b.category_encoder) &&
           a.hamming_weights == b.hamming_weights &&
           a.pretrain_heads.size() == b.pretrain_heads.size();
}

}  // namespace

TEST_CASE("sgd_step hand-iterated examples") {
    // vanilla step: theta = 1, grad = 1, lr = 0.1 -> 0.9
    {
        ScalarRig rig;
        rig.theta() = 1.0;
        rig.grad() = 1.0;
        rig.step();
        CHECK(rig.theta() == doctest::Approx(0.9).epsilon(1e-15));
    }
    // two steps of momentum 0.9 on constant gradient 1 from theta = 0
    {
        ScalarRig rig;
        rig.cfg.momentum = 0.9;
        rig.grad() = 1.0;
        rig.step();
        CHECK(rig.theta() == doctest::Approx(-0.1).epsilon(1e-15));
        rig.step();
        CHECK(rig.theta() == doctest::Approx(-0.29).epsilon(1e-15));
    }
    // zero gradients, zero weight decay: parameters unchanged, velocity decays
    {
        ScalarRig rig;
        rig.cfg.momentum = 0.9;
        rig.grad() = 1.0;
        rig.step();
        rig.grad() = 0.0;
        const double before = rig.theta();
        rig.step();
        CHECK(rig.theta() == doctest::Approx(before - 0.1 * 0.9).epsilon(1e-12));
        CHECK(rig.opt.velocity.image.layers[0].d_weight(0, 0) ==
              doctest::Approx(0.9).epsilon(1e-15));
    }
}

TEST_CASE("weight decay contracts parameters uniformly under zero gradients") {
    const AttributeSchema schema = toy_schema();
    ModelState state = init_model(schema, 6, small_dims(), 3);
    ModelState before = state;
    GradientTape tape = GradientTape::like(state);
    OptimizerState opt = OptimizerState::like(state);
    TrainConfig cfg;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.01;
    opt.rates = {0.5, 0.5};  // equal rates so every block contracts identically
    sgd_step(state, tape, opt, cfg);

    const double factor = 1.0 - 0.5 * 0.01;
    std::vector<ParamBlock> pa = param_blocks(before);
    std::vector<ParamBlock> pb = param_blocks(state);
    for (std::size_t b = 0; b < pa.size(); ++b)
        for (std::size_t i = 0; i < pa[b].size; ++i)
            CHECK(pb[b].data[i] == doctest::Approx(pa[b].data[i] * factor).epsilon(1e-14));
}

TEST_CASE("image and category parameter groups use their own learning rates") {
    const AttributeSchema schema = toy_schema();
    ModelState state = init_model(schema, 6, small_dims(), 3);
    ModelState before = state;
    GradientTape tape = GradientTape::like(state);
    // unit gradients everywhere
    std::vector<ParamBlock> tb = tape_blocks(tape);
    for (auto& b : tb)
        for (std::size_t i = 0; i < b.size; ++i) b.data[i] = 1.0;

    OptimizerState opt = OptimizerState::like(state);
    TrainConfig cfg;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    opt.rates = {1e-3, 1e-2};
    sgd_step(state, tape, opt, cfg);

    std::vector<ParamBlock> pa = param_blocks(before);
    std::vector<ParamBlock> pb = param_blocks(state);
    for (std::size_t b = 0; b < pa.size(); ++b) {
        const double lr = pa[b].group == ParamGroup::CategoryAndW ? 1e-2 : 1e-3;
        for (std::size_t i = 0; i < pa[b].size; ++i)
            CHECK(pb[b].data[i] == doctest::Approx(pa[b].data[i] - lr).epsilon(1e-13));
    }
}

TEST_CASE("sgd_step aborts on non-finite gradients") {
    ScalarRig rig;
    rig.grad() = std::nan("");
    CHECK_THROWS_AS(rig.step(), NumericError);
}

TEST_CASE("lr_schedule applies the step decay per group") {
    TrainConfig cfg;  // defaults: 1e-3 / 1e-2, decay 0.1 every 5
    const LearningRates e0 = lr_schedule(0, cfg);
    CHECK(e0.image == doctest::Approx(1e-3).epsilon(1e-12));
    CHECK(e0.category_and_w == doctest::Approx(1e-2).epsilon(1e-12));
    const LearningRates e5 = lr_schedule(5, cfg);
    CHECK(e5.image == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(e5.category_and_w == doctest::Approx(1e-3).epsilon(1e-12));
    const LearningRates e9 = lr_schedule(9, cfg);
    CHECK(e9.image == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(e9.category_and_w == doctest::Approx(1e-3).epsilon(1e-12));
}

TEST_CASE("epoch order is a deterministic permutation per (seed, epoch)") {
    const auto a = epoch_order(100, 42, 1);
    const auto b = epoch_order(100, 42, 1);
    CHECK(a == b);
    CHECK(epoch_order(100, 42, 2) != a);
    CHECK(epoch_order(100, 43, 1) != a);
    std::vector<std::size_t> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}

TEST_CASE("pretraining fits the toy set and discards the heads") {
    const Dataset ds = toy_dataset(11);
    ModelState state = init_model(ds.schema, ds.feature_dim, small_dims(), 11);
    TrainConfig cfg = quick_train_config(11);
    cfg.pretrain_epochs = 20;

    const auto log = pretrain(state, ds, cfg);
    REQUIRE(log.size() == 20);
    CHECK(log.back().loss < log.front().loss);
    CHECK(log.back().accuracy_min > 0.95);
    CHECK(state.pretrain_heads.empty());
}

TEST_CASE("joint training is bit-reproducible and lowers the loss") {
    const Dataset ds = toy_dataset(13, 0.0);
    TrainConfig cfg = quick_train_config(13);
    LossConfig loss;
    loss.sigma = 8.0;
    loss.gamma = 0.1;
    loss.lambda = 2.0;

    ModelState s1 = init_model(ds.schema, ds.feature_dim, small_dims(), 13);
    OptimizerState o1 = OptimizerState::like(s1);
    const auto log1 = train(s1, ds, loss, cfg, o1);

    ModelState s2 = init_model(ds.schema, ds.feature_dim, small_dims(), 13);
    OptimizerState o2 = OptimizerState::like(s2);
    const auto log2 = train(s2, ds, loss, cfg, o2);

    CHECK(states_equal(s1, s2));
    REQUIRE(log1.size() == log2.size());
    for (std::size_t i = 0; i < log1.size(); ++i)
        CHECK(log1[i].loss_total == log2[i].loss_total);
    CHECK(log1.back().loss_total < log1.front().loss_total);
}

TEST_CASE("lambda 0 and a structurally disabled regularizer take the same path") {
    const Dataset ds = toy_dataset(17);
    TrainConfig cfg = quick_train_config(17);

    LossConfig by_lambda;
    by_lambda.sigma = 8.0;
    by_lambda.lambda = 0.0;
    ModelState s1 = init_model(ds.schema, ds.feature_dim, small_dims(), 17);
    OptimizerState o1 = OptimizerState::like(s1);
    train(s1, ds, by_lambda, cfg, o1);

    LossConfig by_flag;
    by_flag.sigma = 8.0;
    by_flag.lambda = 4.0;
    by_flag.regularizer_enabled = false;
    ModelState s2 = init_model(ds.schema, ds.feature_dim, small_dims(), 17);
    OptimizerState o2 = OptimizerState::like(s2);
    train(s2, ds, by_flag, cfg, o2);

    CHECK(states_equal(s1, s2));
}

TEST_CASE("training resumes from optimizer state without divergence") {
    const Dataset ds = toy_dataset(19);
    TrainConfig cfg = quick_train_config(19);
    cfg.epochs = 6;
    LossConfig loss;
    loss.sigma = 8.0;
    loss.lambda = 1.0;

    // one uninterrupted run
    ModelState full = init_model(ds.schema, ds.feature_dim, small_dims(), 19);
    OptimizerState full_opt = OptimizerState::like(full);
    train(full, ds, loss, cfg, full_opt);

    // same run split at epoch 3
    ModelState part = init_model(ds.schema, ds.feature_dim, small_dims(), 19);
    OptimizerState part_opt = OptimizerState::like(part);
    TrainConfig first_half = cfg;
    first_half.epochs = 3;
    train(part, ds, loss, first_half, part_opt);
    CHECK(part_opt.epoch == 3);
    train(part, ds, loss, cfg, part_opt);  // continues at epoch 3

    CHECK(states_equal(full, part));
}

TEST_CASE("train rejects an empty training split") {
    Dataset ds = toy_dataset(23);
    for (auto& s : ds.samples) s.split = Split::TestSeen;
    TrainConfig cfg = quick_train_config(23);
    LossConfig loss;
    ModelState state = init_model(ds.schema, ds.feature_dim, small_dims(), 23);
    OptimizerState opt = OptimizerState::like(state);
    CHECK_THROWS_AS(train(state, ds, loss, cfg, opt), DataError);
}
