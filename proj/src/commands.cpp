#include "asmr/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "asmr/checkpoint.hpp"
#include "asmr/errors.hpp"
#include "asmr/eval.hpp"
#include "asmr/report.hpp"

namespace asmr {

namespace {

Dataset load_configured_dataset(const RunConfig& cfg) {
    return load_dataset(cfg.paths.schema, cfg.paths.samples, cfg.paths.splits);
}

std::vector<std::size_t> split_indices(const Dataset& ds, const std::string& name) {
    if (name == "train") return ds.indices(Split::Train);
    if (name == "test_seen") return ds.indices(Split::TestSeen);
    if (name == "test_unseen") return ds.indices(Split::TestUnseen);
    if (name == "test" || name == "all") {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < ds.samples.size(); ++i) {
            const Split s = ds.samples[i].split;
            if (name == "all" || s == Split::TestSeen || s == Split::TestUnseen) out.push_back(i);
        }
        return out;
    }
    throw ConfigError("unknown split '" + name + "'");
}

std::vector<RetrievalRun> category_retrieval_runs(const ModelState& state, const Dataset& ds,
                                                  const Gallery& gallery,
                                                  const std::vector<PersonCategory>& queries) {
    std::vector<RetrievalRun> runs;
    runs.reserve(queries.size());
    for (const auto& cat : queries) {
        RetrievalRun run = retrieve(query_from_category(cat, ds.schema), state, gallery, ds.schema);
        run.query_id = cat.category_id;
        runs.push_back(std::move(run));
    }
    return runs;
}

struct SplitMetrics {
    std::vector<std::pair<std::size_t, double>> cmc_at;  // (k, value)
    double map = 0.0;
    std::size_t n_queries = 0;
    std::size_t n_gallery = 0;
};

SplitMetrics evaluate_split(const ModelState& state, const Dataset& ds,
                            const std::vector<std::size_t>& indices,
                            const std::vector<std::size_t>& ks) {
    SplitMetrics m;
    const Gallery gallery = build_gallery(state, ds, indices);
    const std::vector<PersonCategory> queries = ds.unique_categories(indices);
    const std::vector<RetrievalRun> runs = category_retrieval_runs(state, ds, gallery, queries);
    for (std::size_t k : ks) m.cmc_at.emplace_back(k, cmc(runs, k));
    m.map = mean_ap(runs);
    m.n_queries = queries.size();
    m.n_gallery = gallery.items.size();
    return m;
}

}  // namespace

void run_synth(const RunConfig& cfg) {
    cfg.synth.validate();
    Dataset ds = generate(cfg.synth);
    split_dataset(ds, cfg.synth.unseen_fraction, cfg.synth.seen_test_fraction, cfg.synth.seed);
    std::filesystem::create_directories(cfg.paths.out_dir);
    save_dataset(ds, cfg.paths.schema, cfg.paths.samples, cfg.paths.splits);

    std::printf("%-12s %10s %10s\n", "split", "categories", "images");
    for (const Split s : {Split::Train, Split::TestSeen, Split::TestUnseen}) {
        const auto idx = ds.indices(s);
        std::printf("%-12s %10zu %10zu\n", to_string(s).c_str(),
                    ds.unique_categories(idx).size(), idx.size());
    }
    std::printf("%-12s %10zu %10zu\n", "total", ds.unique_categories().size(), ds.samples.size());
    std::printf("wrote %s, %s, %s\n", cfg.paths.schema.string().c_str(),
                cfg.paths.samples.string().c_str(), cfg.paths.splits.string().c_str());
}

void run_pretrain(const RunConfig& cfg) {
    Dataset ds = load_configured_dataset(cfg);
    ModelState state = init_model(ds.schema, ds.feature_dim, cfg.encoder, cfg.train.seed);
    const std::vector<PretrainEpochMetrics> log = pretrain(state, ds, cfg.train);
    std::filesystem::create_directories(cfg.paths.out_dir);
    save_checkpoint(cfg.paths.pretrain_checkpoint, state, cfg.train.seed);

    std::vector<std::vector<std::string>> rows;
    for (const auto& m : log)
        rows.push_back({std::to_string(m.epoch), format_double(m.lr), format_double(m.loss),
                        format_double(m.accuracy_mean), format_double(m.accuracy_min)});
    write_csv(cfg.paths.out_dir / "pretrain_log.csv", config_hash(cfg),
              {"epoch", "lr", "loss", "acc_mean", "acc_min"}, rows);

    if (!log.empty())
        std::printf("pretrain: %zu epochs, final loss %.6f, min group accuracy %.4f\n", log.size(),
                    log.back().loss, log.back().accuracy_min);
    std::printf("wrote %s\n", cfg.paths.pretrain_checkpoint.string().c_str());
}

void run_train(const RunConfig& cfg, const std::filesystem::path& resume) {
    Dataset ds = load_configured_dataset(cfg);
    ModelState state;
    OptimizerState opt;
    if (!resume.empty()) {
        LoadedCheckpoint ck = load_checkpoint(resume);
        state = std::move(ck.state);
        if (ck.optimizer) {
            opt = std::move(*ck.optimizer);
        } else {
            opt = OptimizerState::like(state);
        }
    } else if (!cfg.paths.init_checkpoint.empty()) {
        state = load_checkpoint(cfg.paths.init_checkpoint).state;
        state.pretrain_heads.clear();  // the classification stage does not carry over
        opt = OptimizerState::like(state);
    } else {
        state = init_model(ds.schema, ds.feature_dim, cfg.encoder, cfg.train.seed);
        opt = OptimizerState::like(state);
    }

    std::filesystem::create_directories(cfg.paths.out_dir);
    TrainCallback callback;
    if (cfg.train.checkpoint_every > 0) {
        callback = [&cfg](const ModelState& s, const OptimizerState& o, const EpochMetrics& m) {
            if ((m.epoch + 1) % cfg.train.checkpoint_every != 0) return;
            const auto path =
                cfg.paths.out_dir / ("model.epoch" + std::to_string(m.epoch + 1) + ".ckpt.json");
            save_checkpoint(path, s, cfg.train.seed, &o);
        };
    }

    const std::vector<EpochMetrics> log = train(state, ds, cfg.loss, cfg.train, opt, callback);
    save_checkpoint(cfg.paths.checkpoint, state, cfg.train.seed, &opt);

    std::vector<std::vector<std::string>> rows;
    for (const auto& m : log)
        rows.push_back({std::to_string(m.epoch), format_double(m.lr_image),
                        format_double(m.lr_category), format_double(m.loss_total),
                        format_double(m.loss_ma), format_double(m.asmr_value)});
    write_csv(cfg.paths.out_dir / "train_log.csv", config_hash(cfg),
              {"epoch", "lr_image", "lr_cat", "loss_total", "loss_ma", "asmr_value"}, rows);

    if (!log.empty())
        std::printf("train: epochs %zu..%zu, final loss %.6f (ma %.6f, reg %.6f)\n",
                    log.front().epoch, log.back().epoch, log.back().loss_total,
                    log.back().loss_ma, log.back().asmr_value);
    std::printf("wrote %s\n", cfg.paths.checkpoint.string().c_str());
}

void run_eval(const RunConfig& cfg) {
    Dataset ds = load_configured_dataset(cfg);
    ModelState state = load_checkpoint(cfg.paths.checkpoint).state;
    const std::string hash = config_hash(cfg);

    std::vector<std::vector<std::string>> rows;
    for (const auto& [label, split_name] :
         std::vector<std::pair<std::string, std::string>>{
             {"seen", "test_seen"}, {"unseen", "test_unseen"}, {"all", "test"}}) {
        const auto idx = split_indices(ds, split_name);
        if (idx.empty()) continue;
        const SplitMetrics m = evaluate_split(state, ds, idx, cfg.eval_ks);
        for (const auto& [k, v] : m.cmc_at)
            rows.push_back({"cmc", std::to_string(k), label, format_double(v)});
        rows.push_back({"map", "", label, format_double(m.map)});
    }

    const std::vector<PersonCategory> test_cats =
        ds.unique_categories(split_indices(ds, "test"));
    if (test_cats.size() >= 3) {
        const AlignmentDiagnostic diag =
            semantic_alignment_diagnostic(state, test_cats, cfg.loss.variant);
        rows.push_back({"rho", "", "test",
                        diag.rho ? format_double(*diag.rho) : std::string("nan")});
        std::vector<std::vector<std::string>> pair_rows;
        for (const auto& p : diag.pairs)
            pair_rows.push_back(
                {p.cat_i, p.cat_j, format_double(p.similarity), format_double(p.delta)});
        std::filesystem::create_directories(cfg.paths.out_dir);
        write_csv(cfg.paths.out_dir / "alignment_pairs.csv", hash,
                  {"cat_i", "cat_j", "s", "delta"}, pair_rows);
    }

    std::filesystem::create_directories(cfg.paths.out_dir);
    write_csv(cfg.paths.out_dir / "metrics.csv", hash, {"metric", "k", "split", "value"}, rows);
    for (const auto& r : rows)
        std::printf("%-5s %-3s %-7s %s\n", r[0].c_str(), r[1].c_str(), r[2].c_str(), r[3].c_str());
    std::printf("wrote %s\n", (cfg.paths.out_dir / "metrics.csv").string().c_str());
}

void run_retrieve(const RunConfig& cfg, const std::string& query_spec, std::size_t k,
                  const std::string& split_name) {
    Dataset ds = load_configured_dataset(cfg);
    ModelState state = load_checkpoint(cfg.paths.checkpoint).state;

    std::vector<std::pair<std::string, std::string>> pairs;
    std::size_t start = 0;
    while (start < query_spec.size()) {
        std::size_t comma = query_spec.find(',', start);
        if (comma == std::string::npos) comma = query_spec.size();
        const std::string part = query_spec.substr(start, comma - start);
        const std::size_t eq = part.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 >= part.size())
            throw ConfigError("query: expected group=attribute, got '" + part + "'");
        pairs.emplace_back(part.substr(0, eq), part.substr(eq + 1));
        start = comma + 1;
    }
    if (pairs.empty()) throw ConfigError("query: no group=attribute pairs given");
    const CategoryQuery query = encode_query(pairs, ds.schema);

    const auto idx = split_indices(ds, split_name);
    if (idx.empty()) throw DataError("retrieve: split '" + split_name + "' is empty");
    const Gallery gallery = build_gallery(state, ds, idx);
    const RetrievalRun run = retrieve(query, state, gallery, ds.schema, k);

    std::vector<std::vector<std::string>> rows;
    for (std::size_t r = 0; r < run.ranking.size(); ++r) {
        const GalleryItem& item = gallery.items[run.ranking[r]];
        rows.push_back({std::to_string(r + 1), item.sample_id, format_double(run.similarities[r]),
                        item.category.category_id, run.relevance[r] ? "1" : "0"});
    }
    std::filesystem::create_directories(cfg.paths.out_dir);
    write_csv(cfg.paths.out_dir / "retrieval.csv", config_hash(cfg),
              {"rank", "sample_id", "similarity", "category", "match"}, rows);
    for (const auto& r : rows)
        std::printf("%3s  %-14s  %-10s  %s%s\n", r[0].c_str(), r[1].c_str(), r[2].c_str(),
                    r[3].c_str(), r[4] == "1" ? "  *" : "");
}

void run_ablate(const RunConfig& cfg) {
    cfg.synth.validate();
    std::vector<std::string> header{"variant", "seed"};
    for (std::size_t k : cfg.eval_ks) header.push_back("rank" + std::to_string(k));
    header.push_back("map");
    header.push_back("rho");

    struct VariantSpec {
        std::string name;
        bool pretrain;
        double lambda;
        AsmrVariant variant;
    };
    const std::vector<VariantSpec> variants{
        {"baseline", false, 0.0, AsmrVariant::Full},
        {"baseline_pretrain", true, 0.0, AsmrVariant::Full},
        {"full", true, cfg.loss.lambda, AsmrVariant::Full},
        {"no_delta", true, cfg.loss.lambda, AsmrVariant::NoDelta},
        {"uniform_w", true, cfg.loss.lambda, AsmrVariant::UniformW},
        {"l2norm_w", true, cfg.loss.lambda, AsmrVariant::L2NormW},
    };

    std::vector<std::vector<std::string>> rows;
    for (const std::uint64_t seed : cfg.ablate_seeds) {
        SynthConfig scfg = cfg.synth;
        scfg.seed = seed;
        Dataset ds = generate(scfg);
        split_dataset(ds, scfg.unseen_fraction, scfg.seen_test_fraction, scfg.seed);

        TrainConfig tcfg = cfg.train;
        tcfg.seed = seed;
        const ModelState fresh = init_model(ds.schema, ds.feature_dim, cfg.encoder, seed);
        ModelState pretrained = fresh;
        pretrain(pretrained, ds, tcfg);

        const auto unseen_idx = ds.indices(Split::TestUnseen);
        const auto test_cats = ds.unique_categories(split_indices(ds, "test"));

        for (const auto& v : variants) {
            ModelState state = v.pretrain ? pretrained : fresh;
            LossConfig lcfg = cfg.loss;
            lcfg.lambda = v.lambda;
            lcfg.variant = v.variant;
            OptimizerState opt = OptimizerState::like(state);
            train(state, ds, lcfg, tcfg, opt);

            const SplitMetrics m = evaluate_split(state, ds, unseen_idx, cfg.eval_ks);
            const AlignmentDiagnostic diag =
                semantic_alignment_diagnostic(state, test_cats, lcfg.variant);

            std::vector<std::string> row{v.name, std::to_string(seed)};
            for (const auto& [k, val] : m.cmc_at) row.push_back(format_double(val));
            row.push_back(format_double(m.map));
            row.push_back(diag.rho ? format_double(*diag.rho) : std::string("nan"));
            rows.push_back(std::move(row));
            std::printf("seed %llu  %-18s rank1 %s  map %s\n",
                        static_cast<unsigned long long>(seed), v.name.c_str(),
                        rows.back()[2].c_str(), rows.back()[2 + cfg.eval_ks.size()].c_str());
        }
    }

    std::filesystem::create_directories(cfg.paths.out_dir);
    write_csv(cfg.paths.out_dir / "ablate.csv", config_hash(cfg), header, rows);
    std::printf("wrote %s\n", (cfg.paths.out_dir / "ablate.csv").string().c_str());
}

bool run_gradcheck(const RunConfig& cfg, double tolerance, bool inject_bug) {
    constexpr std::size_t kInstances = 20;
    constexpr double kStep = 1e-5;

    std::map<std::string, double> per_block;
    double worst = 0.0;
    bool pass = true;
    for (std::size_t i = 0; i < kInstances; ++i) {
        const std::uint64_t seed = cfg.seed + i;
        const GradCheckReport report =
            run_toy_gradcheck(seed, kStep, tolerance, inject_bug && i == 0);
        for (const auto& b : report.blocks) {
            auto [it, inserted] = per_block.emplace(b.name, b.max_rel_err);
            if (!inserted) it->second = std::max(it->second, b.max_rel_err);
        }
        worst = std::max(worst, report.worst);
        pass = pass && report.pass;
        std::printf("instance %2zu (seed %llu): max rel err %.3e %s\n", i,
                    static_cast<unsigned long long>(seed), report.worst,
                    report.pass ? "ok" : "FAIL");
    }

    std::printf("%-22s %s\n", "block", "max_rel_err");
    std::vector<std::vector<std::string>> rows;
    for (const auto& [name, err] : per_block) {
        std::printf("%-22s %.3e\n", name.c_str(), err);
        rows.push_back({name, format_double(err)});
    }
    std::filesystem::create_directories(cfg.paths.out_dir);
    write_csv(cfg.paths.out_dir / "gradcheck.csv", config_hash(cfg), {"block", "max_rel_err"},
              rows);
    std::printf("gradcheck: %s (worst %.3e, tolerance %.1e)\n", pass ? "PASS" : "FAIL", worst,
                tolerance);
    return pass;
}

}  // namespace asmr
