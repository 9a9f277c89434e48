#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "asmr/commands.hpp"
#include "asmr/errors.hpp"

namespace {

struct CommonArgs {
    asmr::CliOptions opts;
    std::string config_path, preset, out_dir, checkpoint;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool serial = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run configuration JSON");
    cmd->add_option("--preset", args.preset,
                    "hyper-parameter preset: peta, market, or pa100k");
    cmd->add_option("--set", args.opts.overrides, "override a config key, e.g. loss.sigma=16");
    cmd->add_option("--seed", args.seed, "run seed (also sets synth and train seeds)")
        ->each([&args](const std::string&) { args.seed_given = true; });
    cmd->add_option("--out", args.out_dir, "output directory (default $ASMR_OUT_DIR or ./out)");
    cmd->add_option("--checkpoint", args.checkpoint, "model checkpoint path");
    cmd->add_flag("--serial", args.serial, "run the serial reference kernels");
}

asmr::RunConfig resolve(CommonArgs& args) {
    if (!args.config_path.empty()) args.opts.config_file = args.config_path;
    if (!args.preset.empty()) args.opts.preset = args.preset;
    if (args.seed_given) args.opts.seed = args.seed;
    if (!args.out_dir.empty()) args.opts.out_dir = args.out_dir;
    if (!args.checkpoint.empty()) args.opts.checkpoint = args.checkpoint;
    if (args.serial) asmr::set_parallel_kernels(false);
    return asmr::resolve_config(args.opts);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-modal embedding trainer for attribute-based person search"};
    app.require_subcommand(1);

    CommonArgs args;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    auto* pretrain_cmd =
        app.add_subcommand("pretrain", "attribute-classification pretraining of the image encoder");
    auto* train_cmd = app.add_subcommand("train", "joint training of both encoders");
    auto* eval_cmd = app.add_subcommand("eval", "rank-k / mAP evaluation of a checkpoint");
    auto* retrieve_cmd = app.add_subcommand("retrieve", "rank gallery images for one query");
    auto* ablate_cmd = app.add_subcommand("ablate", "train and compare the objective variants");
    auto* gradcheck_cmd =
        app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");
    for (CLI::App* cmd :
         {synth, pretrain_cmd, train_cmd, eval_cmd, retrieve_cmd, ablate_cmd, gradcheck_cmd})
        add_common(cmd, args);

    std::string resume_path;
    train_cmd->add_option("--resume", resume_path,
                          "continue from a checkpoint that carries optimizer state");

    std::string query_spec, split_name = "test";
    std::size_t top_k = 10;
    retrieve_cmd->add_option("--query", query_spec, "group=attribute pairs, comma separated")
        ->required();
    retrieve_cmd->add_option("--k", top_k, "ranking length (0 = full gallery)");
    retrieve_cmd->add_option("--split", split_name,
                             "gallery split: train, test_seen, test_unseen, test, all");

    bool inject_bug = false;
    double tolerance = 1e-4;
    gradcheck_cmd->add_option("--tolerance", tolerance, "max relative error");
    gradcheck_cmd->add_flag("--inject-bug", inject_bug, "corrupt one gradient (self-test hook)")
        ->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const asmr::RunConfig cfg = resolve(args);
        if (app.got_subcommand(synth)) asmr::run_synth(cfg);
        if (app.got_subcommand(pretrain_cmd)) asmr::run_pretrain(cfg);
        if (app.got_subcommand(train_cmd)) asmr::run_train(cfg, resume_path);
        if (app.got_subcommand(eval_cmd)) asmr::run_eval(cfg);
        if (app.got_subcommand(retrieve_cmd)) asmr::run_retrieve(cfg, query_spec, top_k, split_name);
        if (app.got_subcommand(ablate_cmd)) asmr::run_ablate(cfg);
        if (app.got_subcommand(gradcheck_cmd)) {
            if (!asmr::run_gradcheck(cfg, tolerance, inject_bug)) return 4;
        }
    } catch (const asmr::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const asmr::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const asmr::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    }
    return 0;
}
