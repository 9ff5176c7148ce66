// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dmix/cli/config.hpp"
#include "dmix/eval.hpp"

namespace dmix::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitInvalid = 2;

/// Marker string in every manifest's "artifact" field.
inline constexpr const char* kRunManifest = "dmix-run-manifest";
inline constexpr const char* kTrainManifest = "dmix-train-manifest";

const char* version() noexcept;

/// A failure while the run was executing (as opposed to bad input).
class RuntimeFailure : public Error {
public:
    using Error::Error;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Splits "--a.b=value" arguments. Throws ConfigError on anything else.
Overrides parse_override_args(const std::vector<std::string>& args);

/// Output directory precedence: explicit flag, then the config field, then
/// $DMIX_OUTPUT_DIR, then "./dmix-out".
std::filesystem::path default_output_dir();

struct SampleOptions {
    std::filesystem::path config;  ///< run config or a run manifest to replay
    Overrides overrides;
    std::optional<std::filesystem::path> output_dir;
    std::optional<std::size_t> jobs;
};

struct TrainOptions {
    std::filesystem::path config;
    Overrides overrides;
    std::optional<std::filesystem::path> output_dir;
};

struct EvalOptions {
    std::vector<std::string> inputs;  ///< paths or glob patterns
    std::optional<std::filesystem::path> target;  ///< GaussianSpec JSON
    std::vector<std::string> metrics;  ///< empty selects everything
    std::vector<std::size_t> lags{1};
    std::filesystem::path out_prefix = "metrics";
};

struct SweepOptions {
    std::filesystem::path spec;
    std::optional<std::filesystem::path> output_dir;
    std::optional<std::size_t> jobs;
};

struct ExportOptions {
    std::filesystem::path input;
    std::size_t channel = 0;
    std::filesystem::path out_dir = ".";
};

/// Loads a run config (or the "config" of a run manifest) with overrides.
RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides);

/// One chain of `cfg`: the mixture sampler when an image denoiser is present,
/// the video denoiser alone otherwise.
SamplingResult run_chain(const RunConfig& cfg, const NoiseSchedule& sched, const StepMap& map, const DenoiserPair& dn,
                         std::size_t chain);

/// Runs every chain of `cfg`, writes the outputs and manifest, and returns the
/// final samples in chain order.
std::vector<LatentVideo> execute_run(const RunConfig& cfg, std::ostream& log);

/// Metric options used by both sample and eval.
MetricOptions default_metric_options(const GaussianModel* target);

/// Keeps only metrics whose name starts with one of `selected`.
MetricReport select_metrics(const MetricReport& report, const std::vector<std::string>& selected);

/// Writes <prefix>.json and <prefix>.csv.
void write_report(const MetricReport& report, const std::filesystem::path& prefix);

/// P5 bytes for one frame of one channel using the given value range.
std::string encode_pgm(const LatentVideo& v, std::size_t frame, std::size_t channel, double lo, double hi);

int cmd_sample(const SampleOptions& opt, std::ostream& out, std::ostream& err);
int cmd_train_toy(const TrainOptions& opt, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err);
int cmd_sweep(const SweepOptions& opt, std::ostream& out, std::ostream& err);
int cmd_export_frames(const ExportOptions& opt, std::ostream& out, std::ostream& err);

/// Runs `body` and maps exceptions to exit codes with a one-line diagnostic.
int guarded(const std::function<int()>& body, std::ostream& err);

}  // namespace dmix::cli
