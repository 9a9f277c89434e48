#include "asmr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "asmr/errors.hpp"

namespace asmr {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr_image > 0.0) || !(lr_category_and_w > 0.0) || !(pretrain_lr > 0.0))
        throw ConfigError("train: learning rates must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must lie in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (!(decay_factor > 0.0) || decay_factor > 1.0)
        throw ConfigError("train: decay_factor must lie in (0,1]");
    if (decay_every < 1) throw ConfigError("train: decay_every must be >= 1");
}

LearningRates lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
    const double scale =
        std::pow(cfg.decay_factor, static_cast<double>(epoch / cfg.decay_every));
    return {cfg.lr_image * scale, cfg.lr_category_and_w * scale};
}

OptimizerState OptimizerState::like(const ModelState& state) {
    OptimizerState opt;
    opt.velocity = GradientTape::like(state);
    return opt;
}

namespace {

void sgd_update_block(double* theta, const double* grad, double* velocity, std::size_t n,
                      double lr, double momentum, double weight_decay, const char* name) {
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(grad[i]))
            throw NumericError(std::string("sgd_step: non-finite gradient in ") + name);
        velocity[i] = momentum * velocity[i] + (grad[i] + weight_decay * theta[i]);
        theta[i] -= lr * velocity[i];
    }
}

}  // namespace

void sgd_step(ModelState& state, const GradientTape& grads, OptimizerState& opt,
              const TrainConfig& cfg, const std::vector<ParamGroup>& groups_mask) {
    std::vector<ParamBlock> params = param_blocks(state);
    std::vector<ConstParamBlock> gblocks = tape_blocks(grads);
    std::vector<ParamBlock> vblocks = tape_blocks(opt.velocity);

    if (params.size() != gblocks.size() || params.size() != vblocks.size())
        throw NumericError("sgd_step: state/tape/velocity layouts disagree");

    for (std::size_t b = 0; b < params.size(); ++b) {
        const ParamGroup group = params[b].group;
        if (std::find(groups_mask.begin(), groups_mask.end(), group) == groups_mask.end())
            continue;
        const double lr =
            group == ParamGroup::CategoryAndW ? opt.rates.category_and_w : opt.rates.image;
        sgd_update_block(params[b].data, gblocks[b].data, vblocks[b].data, params[b].size, lr,
                         cfg.momentum, cfg.weight_decay, params[b].name.c_str());
    }
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, 0x44, epoch));
    rng.shuffle(order);
    return order;
}

namespace {

Matrix gather_features(const Dataset& ds, const std::vector<std::size_t>& idx, std::size_t lo,
                       std::size_t hi) {
    Matrix X(hi - lo, ds.feature_dim);
    for (std::size_t r = lo; r < hi; ++r) {
        const Sample& s = ds.samples[idx[r]];
        std::copy(s.features.begin(), s.features.end(), X.row(r - lo));
    }
    return X;
}

}  // namespace

std::vector<PretrainEpochMetrics> pretrain(ModelState& state, const Dataset& ds,
                                           const TrainConfig& cfg) {
    cfg.validate();
    const std::vector<std::size_t> train_idx = ds.indices(Split::Train);
    if (train_idx.empty()) throw DataError("pretrain: empty training split");

    attach_pretrain_heads(state, ds.schema, cfg.seed);
    OptimizerState opt = OptimizerState::like(state);

    std::vector<std::vector<std::size_t>> labels(ds.samples.size());
    for (std::size_t i : train_idx) labels[i] = category_labels(ds.samples[i].category, ds.schema);

    std::vector<PretrainEpochMetrics> log;
    const std::vector<ParamGroup> mask{ParamGroup::Image, ParamGroup::Head};
    TrainConfig stage_cfg = cfg;  // the classification stage has its own base rate
    stage_cfg.lr_image = cfg.pretrain_lr;
    for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        opt.rates = lr_schedule(epoch, stage_cfg);
        std::vector<std::size_t> order = epoch_order(train_idx.size(), cfg.seed, epoch);

        double loss_sum = 0.0;
        for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
            const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
            std::vector<std::size_t> batch_idx;
            for (std::size_t r = lo; r < hi; ++r) batch_idx.push_back(train_idx[order[r]]);

            Matrix X(hi - lo, ds.feature_dim);
            std::vector<std::vector<std::size_t>> batch_labels;
            for (std::size_t r = 0; r < batch_idx.size(); ++r) {
                const Sample& s = ds.samples[batch_idx[r]];
                std::copy(s.features.begin(), s.features.end(), X.row(r));
                batch_labels.push_back(labels[batch_idx[r]]);
            }

            ForwardCache cache;
            forward_batch(state.image_encoder, X, cache);
            ClsLossResult cls = cls_pretrain_loss(cache.output, state.pretrain_heads, batch_labels);
            if (!std::isfinite(cls.value)) throw NumericError("pretrain: non-finite loss");

            GradientTape tape = GradientTape::like(state);
            backward_batch(state.image_encoder, cache, cls.d_trunk, tape.image);
            tape.heads = std::move(cls.head_grads);
            sgd_step(state, tape, opt, cfg, mask);
            loss_sum += cls.value * static_cast<double>(hi - lo);
        }

        // end-of-epoch training accuracy per group
        Matrix X_all = gather_features(ds, train_idx, 0, train_idx.size());
        ForwardCache cache;
        forward_batch(state.image_encoder, X_all, cache);
        std::vector<double> acc(state.pretrain_heads.size(), 0.0);
        for (std::size_t g = 0; g < state.pretrain_heads.size(); ++g) {
            ForwardCache head_cache;
            forward_batch(state.pretrain_heads[g], cache.output, head_cache);
            std::size_t correct = 0;
            for (std::size_t r = 0; r < train_idx.size(); ++r) {
                const double* row = head_cache.output.row(r);
                std::size_t best = 0;
                for (std::size_t c = 1; c < head_cache.output.cols; ++c)
                    if (row[c] > row[best]) best = c;
                if (best == labels[train_idx[r]][g]) ++correct;
            }
            acc[g] = static_cast<double>(correct) / static_cast<double>(train_idx.size());
        }

        PretrainEpochMetrics m;
        m.epoch = epoch;
        m.lr = opt.rates.image;
        m.loss = loss_sum / static_cast<double>(train_idx.size());
        m.accuracy_mean = 0.0;
        m.accuracy_min = acc.empty() ? 0.0 : acc[0];
        for (double a : acc) {
            m.accuracy_mean += a;
            m.accuracy_min = std::min(m.accuracy_min, a);
        }
        m.accuracy_mean /= static_cast<double>(acc.size());
        log.push_back(m);
    }

    // the classification stage ends here; only the trunk moves on
    state.pretrain_heads.clear();
    return log;
}

std::vector<EpochMetrics> train(ModelState& state, const Dataset& ds, const LossConfig& loss_cfg,
                                const TrainConfig& cfg, OptimizerState& opt,
                                const TrainCallback& callback) {
    cfg.validate();
    loss_cfg.validate();
    const std::vector<std::size_t> train_idx = ds.indices(Split::Train);
    if (train_idx.empty()) throw DataError("train: empty training split");

    CategoryTable table = make_category_table(ds.unique_categories(Split::Train));
    std::map<std::string, std::size_t> cat_pos;
    for (std::size_t i = 0; i < table.categories.size(); ++i)
        cat_pos[table.categories[i].category_id] = i;

    std::vector<EpochMetrics> log;
    for (std::size_t epoch = opt.epoch; epoch < cfg.epochs; ++epoch) {
        opt.rates = lr_schedule(epoch, cfg);
        std::vector<std::size_t> order = epoch_order(train_idx.size(), cfg.seed, epoch);

        double ma_sum = 0.0, reg_sum = 0.0, total_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
            const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
            Batch batch;
            batch.table = &table;
            batch.features = Matrix(hi - lo, ds.feature_dim);
            for (std::size_t r = lo; r < hi; ++r) {
                const Sample& s = ds.samples[train_idx[order[r]]];
                std::copy(s.features.begin(), s.features.end(), batch.features.row(r - lo));
                batch.category_index.push_back(cat_pos.at(s.category.category_id));
            }
            TotalLossResult res = total_loss(state, batch, loss_cfg);
            sgd_step(state, res.tape, opt, cfg);
            ma_sum += res.ma;
            reg_sum += res.reg;
            total_sum += res.total;
            ++steps;
        }
        opt.epoch = epoch + 1;

        EpochMetrics m;
        m.epoch = epoch;
        m.lr_image = opt.rates.image;
        m.lr_category = opt.rates.category_and_w;
        m.loss_total = total_sum / static_cast<double>(steps);
        m.loss_ma = ma_sum / static_cast<double>(steps);
        m.asmr_value = reg_sum / static_cast<double>(steps);
        log.push_back(m);
        if (callback) callback(state, opt, m);
    }
    return log;
}

}  // namespace asmr
