#include "asmr/gradcheck.hpp"

#include <cmath>

#include "asmr/errors.hpp"

namespace asmr {

namespace {

void net_blocks(const std::string& prefix, EncoderNet& net, ParamGroup group,
                std::vector<ParamBlock>& out) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const std::string fc = prefix + ".fc" + std::to_string(l + 1);
        out.push_back({fc + ".weight", net.layers[l].weight.data.data(),
                       net.layers[l].weight.data.size(), group});
        out.push_back({fc + ".bias", net.layers[l].bias.data(), net.layers[l].bias.size(), group});
    }
}

void net_grad_blocks(const std::string& prefix, NetGrads& g, ParamGroup group,
                     std::vector<ParamBlock>& out) {
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
        const std::string fc = prefix + ".fc" + std::to_string(l + 1);
        out.push_back({fc + ".weight", g.layers[l].d_weight.data.data(),
                       g.layers[l].d_weight.data.size(), group});
        out.push_back({fc + ".bias", g.layers[l].d_bias.data(), g.layers[l].d_bias.size(), group});
    }
}

}  // namespace

std::vector<ParamBlock> param_blocks(ModelState& state) {
    std::vector<ParamBlock> out;
    net_blocks("image", state.image_encoder, ParamGroup::Image, out);
    net_blocks("category", state.category_encoder, ParamGroup::CategoryAndW, out);
    out.push_back({"hamming.w", state.hamming_weights.data(), state.hamming_weights.size(),
                   ParamGroup::CategoryAndW});
    for (std::size_t h = 0; h < state.pretrain_heads.size(); ++h)
        net_blocks("head" + std::to_string(h), state.pretrain_heads[h], ParamGroup::Head, out);
    return out;
}

std::vector<ParamBlock> tape_blocks(GradientTape& tape) {
    std::vector<ParamBlock> out;
    net_grad_blocks("image", tape.image, ParamGroup::Image, out);
    net_grad_blocks("category", tape.category, ParamGroup::CategoryAndW, out);
    out.push_back(
        {"hamming.w", tape.d_hamming.data(), tape.d_hamming.size(), ParamGroup::CategoryAndW});
    for (std::size_t h = 0; h < tape.heads.size(); ++h)
        net_grad_blocks("head" + std::to_string(h), tape.heads[h], ParamGroup::Head, out);
    return out;
}

std::vector<ConstParamBlock> tape_blocks(const GradientTape& tape) {
    std::vector<ParamBlock> mut = tape_blocks(const_cast<GradientTape&>(tape));
    std::vector<ConstParamBlock> out;
    out.reserve(mut.size());
    for (const auto& b : mut) out.push_back({b.name, b.data, b.size, b.group});
    return out;
}

GradCheckReport grad_check(const std::function<double(const ModelState&)>& f, ModelState state,
                           const GradientTape& analytic, double step, double tolerance) {
    if (!(step > 0.0)) throw ConfigError("grad_check: step must be > 0");
    GradientTape tape_copy = analytic;  // mutable view only
    const std::vector<ParamBlock> params = param_blocks(state);
    const std::vector<ParamBlock> grads = tape_blocks(tape_copy);
    if (params.size() != grads.size()) throw NumericError("grad_check: tape layout mismatch");

    GradCheckReport report;
    report.tolerance = tolerance;
    for (std::size_t b = 0; b < params.size(); ++b) {
        const ParamBlock& pb = params[b];
        if (pb.size != grads[b].size) throw NumericError("grad_check: block size mismatch");
        BlockCheck check{pb.name, 0.0};
        for (std::size_t i = 0; i < pb.size; ++i) {
            const double saved = pb.data[i];
            pb.data[i] = saved + step;
            const double f_plus = f(state);
            pb.data[i] = saved - step;
            const double f_minus = f(state);
            pb.data[i] = saved;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
                throw NumericError("grad_check: non-finite loss at perturbed " + pb.name);
            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double a = grads[b].data[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
            check.max_rel_err = std::max(check.max_rel_err, std::abs(a - numeric) / denom);
        }
        report.worst = std::max(report.worst, check.max_rel_err);
        report.blocks.push_back(std::move(check));
    }
    report.pass = report.worst <= tolerance;
    return report;
}

namespace {

struct ToyInstance {
    AttributeSchema schema;
    ModelState state;
    CategoryTable table;
    Batch batch;
    LossConfig cfg;
};

// Rejects draws that sit near a ReLU kink, the arccos clamp, or a tiny
// pre-normalization norm, where central differences are not trustworthy.
bool instance_clean(const ToyInstance& inst) {
    ForwardCache img, cat;
    try {
        forward_batch(inst.state.image_encoder, inst.batch.features, img);
        forward_batch(inst.state.category_encoder, inst.table.inputs, cat);
    } catch (const NumericError&) {
        return false;  // dead ReLU path
    }
    for (const ForwardCache* c : {&img, &cat}) {
        for (std::size_t l = 0; l + 1 < c->pre.size(); ++l)
            for (double z : c->pre[l].data)
                if (std::abs(z) < 1e-4) return false;
        for (double n : c->prenorm_norms)
            if (n < 1e-2) return false;
    }
    Matrix S(img.output.rows, cat.output.rows);
    gemm_nt(img.output, cat.output, S);
    for (double s : S.data)
        if (std::abs(s) > 0.9) return false;
    Matrix GG(cat.output.rows, cat.output.rows);
    gemm_nt(cat.output, cat.output, GG);
    for (std::size_t i = 0; i < GG.rows; ++i)
        for (std::size_t j = 0; j < GG.cols; ++j)
            if (i != j && std::abs(GG(i, j)) > 0.9) return false;
    return true;
}

ToyInstance make_toy_instance(std::uint64_t seed) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(derive_seed(seed, 0x77, attempt));
        ToyInstance inst;
        inst.schema = AttributeSchema({{"g0", {"a0", "a1"}},
                                       {"g1", {"b0", "b1", "b2"}},
                                       {"g2", {"c0", "c1"}}});
        EncoderDims dims;
        dims.hidden1 = 10;
        dims.hidden2 = 9;
        dims.embedding_dim = 8;
        const std::size_t feature_dim = 6;
        inst.state = init_model(inst.schema, feature_dim, dims, rng.engine()());
        for (double& w : inst.state.hamming_weights) w = rng.uniform(0.05, 0.3);

        // three distinct categories out of the 12 possible
        std::vector<std::size_t> combo_ids{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
        rng.shuffle(combo_ids);
        std::vector<PersonCategory> cats;
        for (std::size_t c = 0; c < 3; ++c) {
            const std::size_t id = combo_ids[c];
            std::vector<std::pair<std::string, std::string>> attrs{
                {"g0", id % 2 ? "a1" : "a0"},
                {"g1", std::string("b") + std::to_string((id / 2) % 3)},
                {"g2", (id / 6) % 2 ? "c1" : "c0"}};
            cats.push_back(encode_category(attrs, inst.schema));
        }
        inst.table = make_category_table(std::move(cats));

        const std::size_t m = 4;
        inst.batch.features = Matrix(m, feature_dim);
        for (double& v : inst.batch.features.data) v = rng.normal();
        for (std::size_t i = 0; i < m; ++i)
            inst.batch.category_index.push_back(rng.below(3));
        inst.batch.table = &inst.table;

        inst.cfg.sigma = rng.uniform(1.0, 4.0);
        inst.cfg.gamma = rng.uniform(0.05, 0.25);
        const double lambdas[4] = {0.0, 0.5, 2.0, 4.0};
        inst.cfg.lambda = lambdas[seed % 4];
        const AsmrVariant variants[4] = {AsmrVariant::Full, AsmrVariant::NoDelta,
                                         AsmrVariant::UniformW, AsmrVariant::L2NormW};
        inst.cfg.variant = variants[(seed / 4) % 4];

        if (instance_clean(inst)) return inst;
    }
}

}  // namespace

GradCheckReport run_toy_gradcheck(std::uint64_t seed, double step, double tolerance,
                                  bool inject_bug) {
    ToyInstance inst = make_toy_instance(seed);
    Batch batch = inst.batch;
    batch.table = &inst.table;
    TotalLossResult res = total_loss(inst.state, batch, inst.cfg);
    if (inject_bug) res.tape.image.layers[0].d_weight(0, 0) += 1e-3;
    const LossConfig cfg = inst.cfg;
    const CategoryTable& table = inst.table;
    const Batch& batch_ref = batch;
    auto f = [&](const ModelState& s) {
        Batch b = batch_ref;
        b.table = &table;
        return total_loss(s, b, cfg).total;
    };
    return grad_check(f, inst.state, res.tape, step, tolerance);
}

}  // namespace asmr
