// sarpatch: SAR scene to balanced patch dataset pipeline.
//
//   sarpatch downsample --config run.ini
//   sarpatch labels     --config run.ini --jobs 8
//   sarpatch patchify   --config run.ini
//   sarpatch sample     --config run.ini --seed 7
//   sarpatch loss-check --config run.ini
//   sarpatch metrics    --config run.ini --pred-dir pred/ --gt-dir gt/

#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sarpatch/config.hpp"
#include "sarpatch/pipeline.hpp"

namespace {

using sarpatch::Config;
using sarpatch::pipeline::CommandResult;
using sarpatch::pipeline::RunOptions;

struct CommonArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "Run configuration (INI)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", args.seed, "Seed; overrides run.seed from the config");
    cmd->add_option("--jobs", args.jobs, "Worker threads")->check(CLI::Range(1, 1024));
    cmd->add_option("--out", args.out, "Write the JSON report here instead of stdout");
}

int run(const CommonArgs& args, const std::function<CommandResult(const Config&, const RunOptions&)>& body) {
    try {
        const auto cfg = Config::load(args.config);
        RunOptions opt;
        opt.seed = args.seed ? *args.seed : cfg.get<std::uint64_t>("run.seed", 0);
        opt.jobs = args.jobs;
        const auto result = body(cfg, opt);
        const auto text = result.report.dump(2) + "\n";
        if (args.out.empty()) {
            std::cout << text;
        } else {
            std::ofstream f(args.out, std::ios::binary | std::ios::trunc);
            f << text;
            if (!f) {
                std::cerr << "error: cannot write " << args.out << "\n";
                return sarpatch::pipeline::kPartialFailure;
            }
        }
        return result.exit_code;
    } catch (const sarpatch::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == sarpatch::Errc::config_error ? sarpatch::pipeline::kConfigError
                                                        : sarpatch::pipeline::kPartialFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return sarpatch::pipeline::kPartialFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SAR patch dataset preparation and loss-kernel checks"};
    app.require_subcommand(1);

    CommonArgs downsample_args, labels_args, patchify_args, sample_args, loss_args, metrics_args;
    auto* downsample = app.add_subcommand("downsample", "Halve SAR scene resolution by 2x2 block averaging");
    add_common(downsample, downsample_args);
    auto* labels = app.add_subcommand("labels", "Mosaic label tiles onto each SAR grid and mask SAR nodata");
    add_common(labels, labels_args);
    auto* patchify = app.add_subcommand("patchify", "Calibrate to dB and cut aligned patch pairs plus manifest");
    add_common(patchify, patchify_args);
    auto* sample = app.add_subcommand("sample", "Category-aware location sampling, patch selection and splits");
    add_common(sample, sample_args);
    auto* loss = app.add_subcommand("loss-check", "Evaluate losses and finite-difference gradient checks");
    add_common(loss, loss_args);
    auto* metrics = app.add_subcommand("metrics", "mAcc / mIoU of prediction rasters against labels");
    add_common(metrics, metrics_args);
    std::string pred_dir, gt_dir, legend_file;
    metrics->add_option("--pred-dir", pred_dir, "Prediction label rasters (overrides metrics.pred_dir)");
    metrics->add_option("--gt-dir", gt_dir, "Ground-truth label rasters (overrides metrics.gt_dir)");
    metrics->add_option("--legend", legend_file, "Legend file (overrides legend.file)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : sarpatch::pipeline::kConfigError;
    }

    namespace pl = sarpatch::pipeline;
    if (*downsample) return run(downsample_args, pl::downsample);
    if (*labels) return run(labels_args, pl::labels);
    if (*patchify) return run(patchify_args, pl::patchify);
    if (*sample) return run(sample_args, pl::sample);
    if (*loss) return run(loss_args, pl::loss_check);
    return run(metrics_args, [&](const Config& cfg, const RunOptions& opt) {
        const auto pd = pred_dir.empty() ? cfg.path("metrics.pred_dir") : std::filesystem::path(pred_dir);
        const auto gd = gt_dir.empty() ? cfg.path("metrics.gt_dir") : std::filesystem::path(gt_dir);
        const auto legend = legend_file.empty() ? pl::legend_setting(cfg) : sarpatch::load_legend(legend_file);
        return pl::metrics(cfg, opt, pd, gd, legend);
    });
}
