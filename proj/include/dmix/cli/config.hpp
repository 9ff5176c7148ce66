// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dmix/denoiser.hpp"
#include "dmix/error.hpp"
#include "dmix/gaussian.hpp"
#include "dmix/mixture.hpp"
#include "dmix/schedule.hpp"
#include "dmix/smoothing.hpp"
#include "dmix/toy_denoiser.hpp"

namespace dmix::cli {

using Json = nlohmann::ordered_json;

/// Invalid user input, located by a JSON path such as "$.entropy.gamma".
class ConfigError : public Error {
public:
    ConfigError(std::string path, const std::string& what)
        : Error(path + ": " + what), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

struct Seeds {
    std::uint64_t init = 0;
    std::uint64_t step_noise = 1;
    std::uint64_t selection = 2;
    std::uint64_t training = 3;

    friend bool operator==(const Seeds&, const Seeds&) = default;
};

/// Where a denoiser comes from.
struct DenoiserSource {
    enum class Type { Analytic, Toy };

    Type type = Type::Analytic;
    /// Analytic: explicit target, or the per-frame marginal of the video target.
    std::optional<GaussianSpec> target;
    bool frame_marginal = false;
    std::map<int, GaussianSpec> class_targets;
    /// Toy: parameter-file prefix (absolute after parsing).
    std::filesystem::path toy_prefix;
};

/// Fully resolved sampling run.
struct RunConfig {
    Dims dims{8, 1, 4, 4};
    std::size_t chains = 1;
    std::size_t jobs = 1;
    ScheduleParams schedule{};
    SamplerConfig sampler{};
    std::optional<std::string> preset;
    MixturePolicy policy = MixturePolicy::preset_128();
    std::optional<SmoothingConfig> smoothing = SmoothingConfig{};
    Seeds seeds{};
    Condition condition{};
    DenoiserSource video{};
    std::optional<DenoiserSource> image;
    std::filesystem::path output_dir;
};

/// Parses and validates a run config. Relative paths resolve against base_dir.
/// Resolution order: built-in defaults, then the preset (policy + gamma), then
/// explicit fields. Throws ConfigError.
RunConfig parse_run_config(const Json& j, const std::filesystem::path& base_dir = {});

/// Every field written explicitly; parse_run_config(run_config_to_json(c)) == c.
Json run_config_to_json(const RunConfig& c);

Json gaussian_to_json(const GaussianSpec& spec);
/// `default_dims` is used when the object has no "dims" field.
GaussianSpec parse_gaussian(const Json& j, const std::string& path, const std::optional<Dims>& default_dims);

Json schedule_to_json(const ScheduleParams& p);
ScheduleParams parse_schedule(const Json& j, const std::string& path);

Dims parse_dims(const Json& j, const std::string& path);

/// Builds the video denoiser and, when configured, the image denoiser.
struct DenoiserPair {
    std::unique_ptr<Denoiser> video;
    std::unique_ptr<Denoiser> image;
};
DenoiserPair build_denoisers(const RunConfig& c, const NoiseSchedule& sched);

/// Toy training job.
struct TrainConfig {
    std::vector<TrainingSource> sources;
    Json sources_json;  ///< resolved echo for the manifest
    ScheduleParams schedule{};
    ToyTrainConfig train{};
    std::filesystem::path output_dir;
    std::string name = "toy";
};

TrainConfig parse_train_config(const Json& j, const std::filesystem::path& base_dir = {});
Json train_config_to_json(const TrainConfig& c);

/// Applies "--a.b=value" style overrides. The value is parsed as JSON when
/// possible, otherwise taken as a string.
void apply_override(Json& j, const std::string& dotted_key, const std::string& value);

Json read_json_file(const std::filesystem::path& path);

}  // namespace dmix::cli
