#include "asmr/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "asmr/errors.hpp"

namespace asmr {

namespace {

constexpr int kVersion = 1;

nlohmann::json net_to_json(const EncoderNet& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers) {
        layers.push_back({{"in", l.weight.cols},
                          {"out", l.weight.rows},
                          {"weight", l.weight.data},
                          {"bias", l.bias}});
    }
    return {{"normalize_output", net.normalize_output}, {"layers", layers}};
}

EncoderNet net_from_json(const nlohmann::json& j) {
    EncoderNet net;
    net.normalize_output = j.at("normalize_output").get<bool>();
    for (const auto& lj : j.at("layers")) {
        DenseLayer layer;
        const std::size_t in = lj.at("in").get<std::size_t>();
        const std::size_t out = lj.at("out").get<std::size_t>();
        layer.weight = Matrix(out, in);
        layer.weight.data = lj.at("weight").get<Vec>();
        layer.bias = lj.at("bias").get<Vec>();
        if (layer.weight.data.size() != in * out || layer.bias.size() != out)
            throw DataError("checkpoint: layer shape metadata disagrees with payload");
        net.layers.push_back(std::move(layer));
    }
    if (net.layers.empty()) throw DataError("checkpoint: encoder without layers");
    return net;
}

nlohmann::json grads_to_json(const NetGrads& g) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : g.layers)
        layers.push_back({{"weight", l.d_weight.data}, {"bias", l.d_bias}});
    return layers;
}

void grads_from_json(const nlohmann::json& j, NetGrads& g) {
    if (j.size() != g.layers.size()) throw DataError("checkpoint: optimizer layer count mismatch");
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
        Vec w = j[l].at("weight").get<Vec>();
        Vec b = j[l].at("bias").get<Vec>();
        if (w.size() != g.layers[l].d_weight.data.size() || b.size() != g.layers[l].d_bias.size())
            throw DataError("checkpoint: optimizer buffer shape mismatch");
        g.layers[l].d_weight.data = std::move(w);
        g.layers[l].d_bias = std::move(b);
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelState& state,
                     std::uint64_t seed, const OptimizerState* optimizer) {
    nlohmann::json j{{"format", "asmr.checkpoint"},
                     {"version", kVersion},
                     {"seed", seed},
                     {"n_groups", state.n_groups},
                     {"image_encoder", net_to_json(state.image_encoder)},
                     {"category_encoder", net_to_json(state.category_encoder)},
                     {"hamming_weights", state.hamming_weights}};
    if (!state.pretrain_heads.empty()) {
        nlohmann::json heads = nlohmann::json::array();
        for (const auto& h : state.pretrain_heads) heads.push_back(net_to_json(h));
        j["pretrain_heads"] = heads;
    }
    if (optimizer) {
        nlohmann::json heads_v = nlohmann::json::array();
        for (const auto& h : optimizer->velocity.heads) heads_v.push_back(grads_to_json(h));
        j["optimizer"] = {{"epoch", optimizer->epoch},
                          {"image", grads_to_json(optimizer->velocity.image)},
                          {"category", grads_to_json(optimizer->velocity.category)},
                          {"hamming", optimizer->velocity.d_hamming},
                          {"heads", heads_v}};
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << j.dump() << "\n";
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint " + path.string() + ": " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "asmr.checkpoint")
            throw DataError("checkpoint " + path.string() + ": unrecognized format tag");
        if (j.at("version").get<int>() != kVersion)
            throw DataError("checkpoint " + path.string() + ": unsupported version");
        LoadedCheckpoint ck;
        ck.seed = j.at("seed").get<std::uint64_t>();
        ck.state.n_groups = j.at("n_groups").get<std::size_t>();
        ck.state.image_encoder = net_from_json(j.at("image_encoder"));
        ck.state.category_encoder = net_from_json(j.at("category_encoder"));
        ck.state.hamming_weights = j.at("hamming_weights").get<Vec>();
        if (j.contains("pretrain_heads"))
            for (const auto& hj : j["pretrain_heads"])
                ck.state.pretrain_heads.push_back(net_from_json(hj));
        if (j.contains("optimizer")) {
            OptimizerState opt = OptimizerState::like(ck.state);
            const auto& oj = j["optimizer"];
            opt.epoch = oj.at("epoch").get<std::size_t>();
            grads_from_json(oj.at("image"), opt.velocity.image);
            grads_from_json(oj.at("category"), opt.velocity.category);
            Vec h = oj.at("hamming").get<Vec>();
            if (h.size() != opt.velocity.d_hamming.size())
                throw DataError("checkpoint: hamming velocity size mismatch");
            opt.velocity.d_hamming = std::move(h);
            const auto& hv = oj.at("heads");
            if (hv.size() != opt.velocity.heads.size())
                throw DataError("checkpoint: optimizer head count mismatch");
            for (std::size_t i = 0; i < opt.velocity.heads.size(); ++i)
                grads_from_json(hv[i], opt.velocity.heads[i]);
            ck.optimizer = std::move(opt);
        }
        return ck;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace asmr
