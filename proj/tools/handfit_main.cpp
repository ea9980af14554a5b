// self-supervised hand fitting toolkit: fit sequences to detections, evaluate
// checkpoints, generate synthetic datasets, and run numeric self-tests

#include <handfit/cli_ops.hpp>

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    using namespace handfit;

    CLI::App app{"self-supervised 3D hand fitting toolkit"};
    app.require_subcommand(1);

    cli::Options opt;
    long long seed = -1;

    auto add_common = [&](CLI::App* cmd, bool needs_manifest) {
        if (needs_manifest)
            cmd->add_option("--manifest", opt.manifest, "dataset manifest JSON")->required();
        cmd->add_option("--out", opt.out, "output directory");
        cmd->add_option("--seed", seed, "override the configured random seed");
    };

    CLI::App* fit = app.add_subcommand("fit", "fit hand parameters to every sequence");
    add_common(fit, true);
    fit->add_option("--weights", opt.weights, "loss weights JSON");
    fit->add_option("--config", opt.config, "fit configuration JSON");
    fit->add_option("--mode", opt.mode, "image|video")->check(CLI::IsMember({"image", "video"}));

    CLI::App* eval = app.add_subcommand("eval", "score fitted checkpoints against a manifest");
    add_common(eval, true);
    eval->add_option("predictions", opt.predictions, "directory holding *_checkpoint.json")
        ->required();
    eval->add_option("--config", opt.config, "fit configuration JSON (window geometry)");
    eval->add_option("--fps", opt.fps, "frame rate for acceleration metrics");

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic demo dataset");
    add_common(synth, false);
    synth->add_option("--frames", opt.frames, "sequence length")->check(CLI::PositiveNumber);

    CLI::App* render = app.add_subcommand("render", "render checkpointed parameters to images");
    add_common(render, true);
    render->add_option("predictions", opt.predictions, "directory holding *_checkpoint.json")
        ->required();

    CLI::App* search = app.add_subcommand("weight-search", "grid-search loss weights");
    add_common(search, true);
    search->add_option("--weights", opt.weights, "base loss weights JSON");
    search->add_option("--config", opt.config, "fit configuration JSON");
    search->add_option("--mode", opt.mode, "image|video")->check(CLI::IsMember({"image", "video"}));

    CLI::App* quat = app.add_subcommand("quat-check", "rotation math self-test");
    quat->add_option("--seed", seed, "random seed");

    CLI::App* grad = app.add_subcommand("grad-check", "objective gradient self-test");
    grad->add_option("--seed", seed, "random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? cli::kExitOk : cli::kExitUsage;
    }

    opt.seed = seed;
    std::uint64_t check_seed = seed >= 0 ? std::uint64_t(seed) : 1;
    if (fit->parsed()) return cli::cmd_fit(opt, std::cout);
    if (eval->parsed()) return cli::cmd_eval(opt, std::cout);
    if (synth->parsed()) return cli::cmd_synth(opt, std::cout);
    if (render->parsed()) return cli::cmd_render(opt, std::cout);
    if (search->parsed()) return cli::cmd_weight_search(opt, std::cout);
    if (quat->parsed()) return cli::cmd_quat_check(check_seed, std::cout);
    if (grad->parsed()) return cli::cmd_grad_check(check_seed, std::cout);
    return cli::kExitUsage;
}
