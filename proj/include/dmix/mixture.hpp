// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dmix/denoiser.hpp"
#include "dmix/rng.hpp"
#include "dmix/sampler.hpp"
#include "dmix/schedule.hpp"

namespace dmix {

/// Piecewise-affine probability of calling the video model as a function of
/// sampling progress (0 at pure noise, 1 at the final step):
///
///   progress <= t_v          : 1
///   t_v < progress <= t_e    : linear from 1 down to p_e
///   t_e < progress <= 1      : linear from p_e to p_f
struct MixturePolicy {
    double t_v = 1.0;
    double t_e = 1.0;
    double p_e = 1.0;
    double p_f = 1.0;

    void validate() const;

    /// Always VIDEO.
    static MixturePolicy video_only() noexcept { return {1.0, 1.0, 1.0, 1.0}; }
    /// VIDEO on the boundary step only, IMAGE after.
    static MixturePolicy image_after_first() noexcept { return {0.0, 0.0, 0.0, 0.0}; }

    /// Tuned presets for the 64, 128 and 256 pixel models.
    static MixturePolicy preset_64() noexcept { return {0.2, 0.7, 0.3, 0.3}; }
    static MixturePolicy preset_128() noexcept { return {0.4, 0.7, 0.4, 0.1}; }
    static MixturePolicy preset_256() noexcept { return {0.1, 0.6, 0.2, 0.1}; }

    friend bool operator==(const MixturePolicy&, const MixturePolicy&) = default;
};

/// Looks up "64", "128" or "256". Throws OutOfRange otherwise.
MixturePolicy policy_preset(std::string_view name);

enum class ModelChoice { Video, Image };

std::string_view to_string(ModelChoice choice) noexcept;
ModelChoice parse_model_choice(std::string_view text);

double p_video(const MixturePolicy& policy, double progress);

/// Bernoulli(p_video) draw; consumes one word of rng.
ModelChoice select_model(const MixturePolicy& policy, double progress, RngStream& rng);

/// Progress value of step i out of n (i / (n - 1), 0 when n == 1).
double step_progress(std::size_t i, std::size_t n);

enum class SamplerKind { Ddpm, Ddim };

std::string_view to_string(SamplerKind kind) noexcept;
SamplerKind parse_sampler_kind(std::string_view text);

/// Per-run sampling parameters.
struct SamplerConfig {
    double guidance = 2.0;
    std::optional<double> guidance_video;  ///< overrides guidance for VIDEO steps
    std::optional<double> guidance_image;  ///< overrides guidance for IMAGE steps
    std::size_t infer_steps = 50;
    EntropyConfig entropy{};
    SamplerKind sampler = SamplerKind::Ddpm;

    double guidance_for(ModelChoice choice) const noexcept {
        return choice == ModelChoice::Video ? guidance_video.value_or(guidance) : guidance_image.value_or(guidance);
    }

    void validate() const;
};

/// The three independent random sources of one chain.
struct ChainStreams {
    RngStream init;
    RngStream step_noise;
    RngStream selection;

    /// Chain `chain` uses stream id `chain` under each role's seed.
    static ChainStreams for_chain(std::uint64_t init_seed, std::uint64_t noise_seed, std::uint64_t selection_seed,
                                  std::uint64_t chain);
};

struct StepRecord {
    std::size_t step = 0;
    Timestep timestep = 0;
    Timestep timestep_prev = 0;
    double progress = 0.0;
    double p_video = 1.0;
    std::optional<double> coin;  ///< absent when the model was not drawn
    ModelChoice choice = ModelChoice::Video;
    double noise_scale = 0.0;  ///< gamma * sigma applied

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

using StepTrace = std::vector<StepRecord>;

/// One JSON object per line.
std::string trace_to_jsonl(const StepTrace& trace);
StepTrace trace_from_jsonl(std::string_view text);

struct SamplingResult {
    LatentVideo sample;
    StepTrace trace;
};

/// Mixture-of-denoisers reverse diffusion.
///
/// Starts from s_T ~ N(0, I) drawn from streams.init. At every step the
/// selection stream picks VIDEO with probability p_video(progress); VIDEO
/// steps run the video denoiser on the whole tensor, IMAGE steps run the
/// image denoiser on each frame. Step noise is drawn from streams.step_noise
/// with r_video or r_image depending on that step's choice.
SamplingResult run_mixture_sampling(const Denoiser& video_d, const Denoiser& image_d, const MixturePolicy& policy,
                                    const NoiseSchedule& sched, const StepMap& step_map, const SamplerConfig& cfg,
                                    const Condition& cond, ChainStreams& streams);

/// Same loop with a single model (no selection draws). `dims` is the video
/// shape; an image denoiser is applied frame by frame.
SamplingResult run_single_model_sampling(const Denoiser& d, const Dims& dims, const NoiseSchedule& sched,
                                         const StepMap& step_map, const SamplerConfig& cfg, const Condition& cond,
                                         ChainStreams& streams);

/// Re-runs a chain using the model choices recorded in `trace` instead of
/// selection draws. With the original init and step-noise streams this
/// reproduces the original sample bit for bit.
SamplingResult replay_mixture_sampling(const Denoiser& video_d, const Denoiser& image_d, const NoiseSchedule& sched,
                                       const StepMap& step_map, const SamplerConfig& cfg, const Condition& cond,
                                       ChainStreams& streams, const StepTrace& trace);

}  // namespace dmix
