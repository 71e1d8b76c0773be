#include <iostream>

#include <CLI11.hpp>

#include "mml/cli.hpp"

int main(int argc, char** argv) {
    namespace cli = mml::cli;
    CLI::App app{"Multiverse head-bank training and cross-dataset evaluation"};
    app.require_subcommand(1);

    cli::TrainArgs train;
    std::string train_out;
    std::uint64_t train_seed = 0;
    auto* train_cmd = app.add_subcommand("train", "train a model from a config file or run manifest");
    train_cmd->add_option("--config", train.config, "INI config or manifest.json")->required();
    auto* out_opt = train_cmd->add_option("--out", train_out, "output directory (overrides run.out)");
    auto* seed_opt = train_cmd->add_option("--seed", train_seed, "seed (overrides run.seed)");
    train_cmd->add_flag("--force", train.force, "overwrite existing outputs");
    train_cmd->add_option("--workers", train.workers, "threads for dev evaluation")->check(CLI::PositiveNumber);

    cli::EvalArgs eval;
    std::string eval_preset, eval_out;
    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on one dataset");
    eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
    eval_cmd->add_option("--dataset", eval.dataset, "TSV file")->required();
    auto* preset_opt = eval_cmd->add_option("--preset", eval_preset, "GLUE layout of the dataset file");
    eval_cmd->add_option("--transform", eval.transform)
        ->check(CLI::IsMember({"identity", "collapse-nli", "binarize-stsb"}));
    auto* eval_out_opt = eval_cmd->add_option("--out", eval_out, "report file (JSON lines)");
    eval_cmd->add_option("--split", eval.split, "split name recorded in the report");
    eval_cmd->add_flag("--force", eval.force);
    eval_cmd->add_option("--workers", eval.workers)->check(CLI::PositiveNumber);

    cli::CrossEvalArgs cross;
    auto* cross_cmd = app.add_subcommand("cross-eval", "evaluate checkpoints across target datasets");
    cross_cmd->add_option("--checkpoint", cross.checkpoints, "one model, or baseline then candidate")
        ->required()
        ->expected(1, 2);
    cross_cmd->add_option("--targets", cross.targets, "target list file")->required();
    cross_cmd->add_option("--out", cross.out, "output directory")->required();
    cross_cmd->add_flag("--force", cross.force);
    cross_cmd->add_option("--workers", cross.workers)->check(CLI::PositiveNumber);

    cli::TraceArgs trace;
    std::string trace_out;
    auto* trace_cmd = app.add_subcommand("trace", "export plot-ready head-count and prune data");
    trace_cmd->add_option("--run", trace.run_dir, "run directory written by train")->required();
    auto* trace_out_opt = trace_cmd->add_option("--out", trace_out, "output directory (default <run>/plot)");
    trace_cmd->add_flag("--force", trace.force);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : cli::kUsageError;
    }

    if (*train_cmd) {
        if (*out_opt) train.out = train_out;
        if (*seed_opt) train.seed = train_seed;
        return cli::cmd_train(train, std::cout, std::cerr);
    }
    if (*eval_cmd) {
        if (*preset_opt) eval.preset = eval_preset;
        if (*eval_out_opt) eval.out = eval_out;
        return cli::cmd_eval(eval, std::cout, std::cerr);
    }
    if (*cross_cmd) return cli::cmd_cross_eval(cross, std::cout, std::cerr);
    if (*trace_out_opt) trace.out = trace_out;
    return cli::cmd_trace(trace, std::cout, std::cerr);
}
