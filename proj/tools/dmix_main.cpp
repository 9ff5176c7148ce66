// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <iostream>

#include "dmix/cli/commands.hpp"

using namespace dmix::cli;

int main(int argc, char** argv) {
    CLI::App app{"dmix: mixture-of-denoisers diffusion sampling"};
    app.set_version_flag("--version", version());
    app.require_subcommand(1);

    SampleOptions sample;
    std::string sample_out;
    std::size_t sample_jobs = 0;
    auto* s = app.add_subcommand("sample", "Run sampling chains from a config or a run manifest");
    s->add_option("config", sample.config, "Run config JSON or manifest.json")->required();
    s->add_option("-o,--output-dir", sample_out, "Output directory");
    s->add_option("-j,--jobs", sample_jobs, "Concurrent chains");
    s->allow_extras();

    TrainOptions train;
    std::string train_out;
    auto* t = app.add_subcommand("train-toy", "Train the toy MLP denoiser");
    t->add_option("config", train.config, "Training config JSON or manifest.json")->required();
    t->add_option("-o,--output-dir", train_out, "Output directory");
    t->allow_extras();

    EvalOptions eval;
    std::string eval_target, eval_metrics;
    auto* e = app.add_subcommand("eval", "Compute metrics over .lvt samples");
    e->add_option("inputs", eval.inputs, "Files or glob patterns")->required();
    e->add_option("--target", eval_target, "Gaussian target spec (JSON)");
    e->add_option("--metrics", eval_metrics, "Comma-separated metric names");
    e->add_option("--lags", eval.lags, "Autocorrelation lags")->delimiter(',');
    e->add_option("--out", eval.out_prefix, "Report prefix (.json and .csv are appended)");

    SweepOptions sweep;
    std::string sweep_out;
    std::size_t sweep_jobs = 0;
    auto* w = app.add_subcommand("sweep", "Run a cartesian hyperparameter grid");
    w->add_option("spec", sweep.spec, "Sweep spec JSON")->required();
    w->add_option("-o,--output-dir", sweep_out, "Output directory");
    w->add_option("-j,--jobs", sweep_jobs, "Concurrent chains per run");

    ExportOptions exp;
    auto* x = app.add_subcommand("export-frames", "Write one PGM per frame");
    x->add_option("input", exp.input, "Input .lvt")->required();
    x->add_option("-c,--channel", exp.channel, "Channel index");
    x->add_option("-o,--out-dir", exp.out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kExitOk : kExitInvalid;
    }

    return guarded(
        [&]() -> int {
            if (s->parsed()) {
                sample.overrides = parse_override_args(s->remaining());
                if (!sample_out.empty()) sample.output_dir = sample_out;
                if (s->count("--jobs") > 0) sample.jobs = sample_jobs;
                return cmd_sample(sample, std::cout, std::cerr);
            }
            if (t->parsed()) {
                train.overrides = parse_override_args(t->remaining());
                if (!train_out.empty()) train.output_dir = train_out;
                return cmd_train_toy(train, std::cout, std::cerr);
            }
            if (e->parsed()) {
                if (!eval_target.empty()) eval.target = eval_target;
                std::stringstream list(eval_metrics);
                for (std::string item; std::getline(list, item, ',');) {
                    if (!item.empty()) eval.metrics.push_back(item);
                }
                return cmd_eval(eval, std::cout, std::cerr);
            }
            if (w->parsed()) {
                if (!sweep_out.empty()) sweep.output_dir = sweep_out;
                if (w->count("--jobs") > 0) sweep.jobs = sweep_jobs;
                return cmd_sweep(sweep, std::cout, std::cerr);
            }
            return cmd_export_frames(exp, std::cout, std::cerr);
        },
        std::cerr);
}
