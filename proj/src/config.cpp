#include "asmr/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "asmr/errors.hpp"
#include "asmr/report.hpp"

namespace asmr {

nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["paths"] = {{"out_dir", cfg.paths.out_dir.string()},
                  {"schema", cfg.paths.schema.string()},
                  {"samples", cfg.paths.samples.string()},
                  {"splits", cfg.paths.splits.string()},
                  {"pretrain_checkpoint", cfg.paths.pretrain_checkpoint.string()},
                  {"checkpoint", cfg.paths.checkpoint.string()},
                  {"init_checkpoint", cfg.paths.init_checkpoint.string()}};
    j["synth"] = {{"group_sizes", cfg.synth.group_sizes},
                  {"n_categories", cfg.synth.n_categories},
                  {"images_per_category_min", cfg.synth.images_per_category_min},
                  {"images_per_category_max", cfg.synth.images_per_category_max},
                  {"feature_dim", cfg.synth.feature_dim},
                  {"saliency", cfg.synth.saliency},
                  {"noise_std", cfg.synth.noise_std},
                  {"label_flip_rate", cfg.synth.label_flip_rate},
                  {"unseen_fraction", cfg.synth.unseen_fraction},
                  {"seen_test_fraction", cfg.synth.seen_test_fraction},
                  {"seed", cfg.synth.seed}};
    j["encoder"] = {{"hidden1", cfg.encoder.hidden1},
                    {"hidden2", cfg.encoder.hidden2},
                    {"embedding_dim", cfg.encoder.embedding_dim}};
    j["loss"] = {{"sigma", cfg.loss.sigma},
                 {"gamma", cfg.loss.gamma},
                 {"lambda", cfg.loss.lambda},
                 {"variant", to_string(cfg.loss.variant)},
                 {"regularizer_enabled", cfg.loss.regularizer_enabled},
                 {"negatives", cfg.loss.negatives == NegativeSet::AllCategories ? "all" : "batch"}};
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"lr_image", cfg.train.lr_image},
                  {"lr_category_and_w", cfg.train.lr_category_and_w},
                  {"momentum", cfg.train.momentum},
                  {"weight_decay", cfg.train.weight_decay},
                  {"decay_factor", cfg.train.decay_factor},
                  {"decay_every", cfg.train.decay_every},
                  {"pretrain_epochs", cfg.train.pretrain_epochs},
                  {"pretrain_lr", cfg.train.pretrain_lr},
                  {"checkpoint_every", cfg.train.checkpoint_every},
                  {"seed", cfg.train.seed}};
    j["eval"] = {{"ks", cfg.eval_ks}};
    j["ablate"] = {{"seeds", cfg.ablate_seeds}};
    return j;
}

namespace {

template <class T>
void read_into(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

void read_path(const nlohmann::json& j, const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    read_into(j, key, s);
    out = s;
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    read_into(j, "seed", cfg.seed);
    if (j.contains("paths")) {
        const auto& p = j["paths"];
        read_path(p, "out_dir", cfg.paths.out_dir);
        read_path(p, "schema", cfg.paths.schema);
        read_path(p, "samples", cfg.paths.samples);
        read_path(p, "splits", cfg.paths.splits);
        read_path(p, "pretrain_checkpoint", cfg.paths.pretrain_checkpoint);
        read_path(p, "checkpoint", cfg.paths.checkpoint);
        read_path(p, "init_checkpoint", cfg.paths.init_checkpoint);
    }
    if (j.contains("synth")) {
        const auto& s = j["synth"];
        read_into(s, "group_sizes", cfg.synth.group_sizes);
        read_into(s, "n_categories", cfg.synth.n_categories);
        read_into(s, "images_per_category_min", cfg.synth.images_per_category_min);
        read_into(s, "images_per_category_max", cfg.synth.images_per_category_max);
        if (s.contains("images_per_category")) {
            std::size_t v = 0;
            read_into(s, "images_per_category", v);
            cfg.synth.images_per_category_min = cfg.synth.images_per_category_max = v;
        }
        read_into(s, "feature_dim", cfg.synth.feature_dim);
        if (s.contains("saliency")) {
            if (s["saliency"].is_number()) {
                cfg.synth.saliency.assign(cfg.synth.group_sizes.size(),
                                          s["saliency"].get<double>());
            } else {
                read_into(s, "saliency", cfg.synth.saliency);
            }
        }
        read_into(s, "noise_std", cfg.synth.noise_std);
        read_into(s, "label_flip_rate", cfg.synth.label_flip_rate);
        read_into(s, "unseen_fraction", cfg.synth.unseen_fraction);
        read_into(s, "seen_test_fraction", cfg.synth.seen_test_fraction);
        read_into(s, "seed", cfg.synth.seed);
    }
    if (j.contains("encoder")) {
        const auto& e = j["encoder"];
        read_into(e, "hidden1", cfg.encoder.hidden1);
        read_into(e, "hidden2", cfg.encoder.hidden2);
        read_into(e, "embedding_dim", cfg.encoder.embedding_dim);
    }
    if (j.contains("loss")) {
        const auto& l = j["loss"];
        read_into(l, "sigma", cfg.loss.sigma);
        read_into(l, "gamma", cfg.loss.gamma);
        read_into(l, "lambda", cfg.loss.lambda);
        if (l.contains("variant"))
            cfg.loss.variant = asmr_variant_from_string(l["variant"].get<std::string>());
        read_into(l, "regularizer_enabled", cfg.loss.regularizer_enabled);
        if (l.contains("negatives")) {
            const std::string n = l["negatives"].get<std::string>();
            if (n == "all") cfg.loss.negatives = NegativeSet::AllCategories;
            else if (n == "batch") cfg.loss.negatives = NegativeSet::BatchCategories;
            else throw ConfigError("loss.negatives must be 'all' or 'batch'");
        }
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        read_into(t, "epochs", cfg.train.epochs);
        read_into(t, "batch_size", cfg.train.batch_size);
        read_into(t, "lr_image", cfg.train.lr_image);
        read_into(t, "lr_category_and_w", cfg.train.lr_category_and_w);
        read_into(t, "momentum", cfg.train.momentum);
        read_into(t, "weight_decay", cfg.train.weight_decay);
        read_into(t, "decay_factor", cfg.train.decay_factor);
        read_into(t, "decay_every", cfg.train.decay_every);
        read_into(t, "pretrain_epochs", cfg.train.pretrain_epochs);
        read_into(t, "pretrain_lr", cfg.train.pretrain_lr);
        read_into(t, "checkpoint_every", cfg.train.checkpoint_every);
        read_into(t, "seed", cfg.train.seed);
    }
    if (j.contains("eval")) read_into(j["eval"], "ks", cfg.eval_ks);
    if (j.contains("ablate")) read_into(j["ablate"], "seeds", cfg.ablate_seeds);

    std::sort(cfg.eval_ks.begin(), cfg.eval_ks.end());
    cfg.eval_ks.erase(std::unique(cfg.eval_ks.begin(), cfg.eval_ks.end()), cfg.eval_ks.end());
    if (cfg.eval_ks.empty() || cfg.eval_ks.front() < 1)
        throw ConfigError("eval.ks must contain ranks >= 1");
    return cfg;
}

void apply_preset(nlohmann::json& j, const std::string& name) {
    double lambda, sigma, gamma;
    if (name == "peta") {
        lambda = 4;
        sigma = 32;
        gamma = 0.1;
    } else if (name == "market") {
        lambda = 6;
        sigma = 12;
        gamma = 0.2;
    } else if (name == "pa100k") {
        lambda = 5;
        sigma = 48;
        gamma = 0.1;
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected peta, market, or pa100k)");
    }
    j["loss"]["lambda"] = lambda;
    j["loss"]["sigma"] = sigma;
    j["loss"]["gamma"] = gamma;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects key.path=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
        parsed = value;  // bare strings are fine
    }

    nlohmann::json* node = &j;
    std::size_t start = 0;
    for (;;) {
        const std::size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
        if (part.empty()) throw ConfigError("--set: empty key segment in '" + key + "'");
        if (dot == std::string::npos) {
            (*node)[part] = parsed;
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

namespace {

void merge_json(nlohmann::json& base, const nlohmann::json& patch) {
    if (!patch.is_object()) {
        base = patch;
        return;
    }
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object())
            merge_json(base[it.key()], *it);
        else
            base[it.key()] = *it;
    }
}

std::filesystem::path default_out_dir() {
    if (const char* env = std::getenv("ASMR_OUT_DIR"); env && *env) return env;
    return "out";
}

}  // namespace

RunConfig resolve_config(const CliOptions& opts) {
    nlohmann::json j = config_to_json(RunConfig{});
    if (opts.config_file) {
        std::ifstream in(*opts.config_file);
        if (!in) throw ConfigError("cannot open config " + opts.config_file->string());
        nlohmann::json file_json;
        try {
            in >> file_json;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config " + opts.config_file->string() + ": " + e.what());
        }
        merge_json(j, file_json);
    }
    if (opts.preset) apply_preset(j, *opts.preset);
    for (const auto& o : opts.overrides) apply_override(j, o);
    if (opts.seed) {
        j["seed"] = *opts.seed;
        j["synth"]["seed"] = *opts.seed;
        j["train"]["seed"] = *opts.seed;
    }
    if (opts.out_dir) j["paths"]["out_dir"] = opts.out_dir->string();
    if (opts.checkpoint) j["paths"]["checkpoint"] = opts.checkpoint->string();

    RunConfig cfg = config_from_json(j);
    if (cfg.paths.out_dir.empty()) cfg.paths.out_dir = default_out_dir();
    const auto fill = [&](std::filesystem::path& p, const char* name) {
        if (p.empty()) p = cfg.paths.out_dir / name;
    };
    fill(cfg.paths.schema, "schema.json");
    fill(cfg.paths.samples, "samples.jsonl");
    fill(cfg.paths.splits, "splits.json");
    fill(cfg.paths.pretrain_checkpoint, "pretrain.ckpt.json");
    fill(cfg.paths.checkpoint, "model.ckpt.json");
    return cfg;
}

std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a64(config_to_json(cfg).dump())); }

}  // namespace asmr
