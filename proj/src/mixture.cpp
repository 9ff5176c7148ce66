// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmix/mixture.hpp"

#include <cmath>
#include <functional>
#include <nlohmann/json.hpp>
#include <sstream>

#include "dmix/error.hpp"

namespace dmix {

void MixturePolicy::validate() const {
    auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!in_unit(t_v) || !in_unit(t_e) || !(t_v <= t_e)) {
        throw OutOfRange("policy needs 0 <= t_v <= t_e <= 1");
    }
    if (!in_unit(p_e) || !in_unit(p_f)) {
        throw OutOfRange("policy probabilities p_e and p_f must lie in [0, 1]");
    }
}

MixturePolicy policy_preset(std::string_view name) {
    if (name == "64") return MixturePolicy::preset_64();
    if (name == "128") return MixturePolicy::preset_128();
    if (name == "256") return MixturePolicy::preset_256();
    throw OutOfRange("unknown policy preset '" + std::string(name) + "' (expected 64, 128 or 256)");
}

std::string_view to_string(ModelChoice choice) noexcept {
    return choice == ModelChoice::Video ? "video" : "image";
}

ModelChoice parse_model_choice(std::string_view text) {
    if (text == "video") return ModelChoice::Video;
    if (text == "image") return ModelChoice::Image;
    throw OutOfRange("unknown model choice '" + std::string(text) + "'");
}

double p_video(const MixturePolicy& policy, double progress) {
    if (!(progress >= 0.0 && progress <= 1.0)) {
        throw OutOfRange("progress must lie in [0, 1], got " + std::to_string(progress));
    }
    if (progress <= policy.t_v) {
        return 1.0;
    }
    // Empty segments (t_v == t_e, t_e == 1) are never entered, so neither
    // denominator below can be zero. lerp is exact at both endpoints.
    if (progress <= policy.t_e) {
        return std::lerp(1.0, policy.p_e, (progress - policy.t_v) / (policy.t_e - policy.t_v));
    }
    return std::lerp(policy.p_e, policy.p_f, (progress - policy.t_e) / (1.0 - policy.t_e));
}

ModelChoice select_model(const MixturePolicy& policy, double progress, RngStream& rng) {
    const double p = p_video(policy, progress);
    return rng.uniform() < p ? ModelChoice::Video : ModelChoice::Image;
}

double step_progress(std::size_t i, std::size_t n) {
    return n <= 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
}

std::string_view to_string(SamplerKind kind) noexcept {
    return kind == SamplerKind::Ddpm ? "ddpm" : "ddim";
}

SamplerKind parse_sampler_kind(std::string_view text) {
    if (text == "ddpm") return SamplerKind::Ddpm;
    if (text == "ddim") return SamplerKind::Ddim;
    throw OutOfRange("unknown sampler '" + std::string(text) + "' (expected ddpm or ddim)");
}

void SamplerConfig::validate() const {
    for (double g : {guidance, guidance_video.value_or(0.0), guidance_image.value_or(0.0)}) {
        if (!std::isfinite(g)) {
            throw OutOfRange("guidance scales must be finite");
        }
    }
    if (infer_steps < 1) {
        throw OutOfRange("infer_steps must be >= 1");
    }
    entropy.validate();
}

ChainStreams ChainStreams::for_chain(std::uint64_t init_seed, std::uint64_t noise_seed, std::uint64_t selection_seed,
                                     std::uint64_t chain) {
    return {RngStream(init_seed, chain), RngStream(noise_seed, chain), RngStream(selection_seed, chain)};
}

std::string trace_to_jsonl(const StepTrace& trace) {
    std::ostringstream out;
    for (const StepRecord& r : trace) {
        nlohmann::ordered_json j;
        j["step"] = r.step;
        j["timestep"] = r.timestep;
        j["timestep_prev"] = r.timestep_prev;
        j["progress"] = r.progress;
        j["p_video"] = r.p_video;
        j["coin"] = r.coin ? nlohmann::ordered_json(*r.coin) : nlohmann::ordered_json(nullptr);
        j["choice"] = to_string(r.choice);
        j["noise_scale"] = r.noise_scale;
        out << j.dump() << '\n';
    }
    return out.str();
}

StepTrace trace_from_jsonl(std::string_view text) {
    StepTrace trace;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            StepRecord r;
            r.step = j.at("step").get<std::size_t>();
            r.timestep = j.at("timestep").get<Timestep>();
            r.timestep_prev = j.at("timestep_prev").get<Timestep>();
            r.progress = j.at("progress").get<double>();
            r.p_video = j.at("p_video").get<double>();
            if (!j.at("coin").is_null()) {
                r.coin = j.at("coin").get<double>();
            }
            r.choice = parse_model_choice(j.at("choice").get<std::string>());
            r.noise_scale = j.at("noise_scale").get<double>();
            trace.push_back(r);
        } catch (const nlohmann::json::exception& e) {
            throw IoError("malformed trace line " + std::to_string(trace.size() + 1) + ": " + e.what());
        }
    }
    return trace;
}

namespace {

struct Selection {
    double p_video;
    std::optional<double> coin;
    ModelChoice choice;
};

using Selector = std::function<Selection(std::size_t step, double progress)>;

SamplingResult run_chain(const Denoiser* video_d, const Denoiser* image_d, const Dims& dims,
                         const NoiseSchedule& sched, const StepMap& step_map, const SamplerConfig& cfg,
                         const Condition& cond, ChainStreams& streams, const Selector& select) {
    cfg.validate();
    if (step_map.train_steps() != sched.steps()) {
        throw InvalidSchedule("step map built for T = " + std::to_string(step_map.train_steps()) +
                              " but the schedule has T = " + std::to_string(sched.steps()));
    }
    if (video_d != nullptr && video_d->input_dims() != dims) {
        throw InvalidShape("video denoiser expects " + video_d->input_dims().to_string() + ", chain shape is " +
                           dims.to_string());
    }
    if (image_d != nullptr && image_d->input_dims() != dims.single_frame()) {
        throw InvalidShape("image denoiser expects " + image_d->input_dims().to_string() + ", frames are " +
                           dims.single_frame().to_string());
    }

    SamplingResult result;
    LatentVideo s = sample_standard_normal(dims, streams.init);
    const std::size_t n = step_map.size();
    result.trace.reserve(n);

    for (std::size_t i = 0; i < n; ++i) {
        try {
            const StepPair pair = step_map.pair(i);
            const double progress = step_progress(i, n);
            const Selection sel = select(i, progress);

            LatentVideo eps;
            if (sel.choice == ModelChoice::Video) {
                if (video_d == nullptr) {
                    throw Error("no video denoiser for a VIDEO step");
                }
                eps = guided_eps(*video_d, s, pair.t, cond, cfg.guidance_for(ModelChoice::Video));
            } else {
                if (image_d == nullptr) {
                    throw Error("no image denoiser for an IMAGE step");
                }
                eps = frames_to_video(
                    guided_eps(*image_d, video_to_frames(s), pair.t, cond, cfg.guidance_for(ModelChoice::Image)));
            }

            double scale = 0.0;
            if (cfg.sampler == SamplerKind::Ddpm) {
                const double r = sel.choice == ModelChoice::Video ? cfg.entropy.r_video : cfg.entropy.r_image;
                const LatentVideo z = sample_correlated_noise(dims, r, streams.step_noise);
                s = ddpm_step(s, pair, eps, sched, cfg.entropy.gamma, z);
                scale = noise_scale(pair, sched, cfg.entropy.gamma);
            } else {
                s = ddim_step(s, pair, eps, sched);
            }
            if (!s.all_finite()) {
                throw DomainError("sample became non-finite");
            }
            result.trace.push_back({i, pair.t, pair.t_prev, progress, sel.p_video, sel.coin, sel.choice, scale});
        } catch (const SamplingFailure&) {
            throw;
        } catch (const Error& e) {
            throw SamplingFailure(i, e.what());
        }
    }
    result.sample = std::move(s);
    return result;
}

}  // namespace

SamplingResult run_mixture_sampling(const Denoiser& video_d, const Denoiser& image_d, const MixturePolicy& policy,
                                    const NoiseSchedule& sched, const StepMap& step_map, const SamplerConfig& cfg,
                                    const Condition& cond, ChainStreams& streams) {
    policy.validate();
    if (video_d.kind() != DenoiserKind::Video || image_d.kind() != DenoiserKind::Image) {
        throw InvalidShape("mixture sampling needs a video denoiser and an image denoiser");
    }
    const Selector select = [&](std::size_t, double progress) {
        const double p = p_video(policy, progress);
        const double coin = streams.selection.uniform();
        return Selection{p, coin, coin < p ? ModelChoice::Video : ModelChoice::Image};
    };
    return run_chain(&video_d, &image_d, video_d.input_dims(), sched, step_map, cfg, cond, streams, select);
}

SamplingResult run_single_model_sampling(const Denoiser& d, const Dims& dims, const NoiseSchedule& sched,
                                         const StepMap& step_map, const SamplerConfig& cfg, const Condition& cond,
                                         ChainStreams& streams) {
    const bool video = d.kind() == DenoiserKind::Video;
    const Selection fixed{video ? 1.0 : 0.0, std::nullopt, video ? ModelChoice::Video : ModelChoice::Image};
    const Selector select = [fixed](std::size_t, double) { return fixed; };
    return run_chain(video ? &d : nullptr, video ? nullptr : &d, dims, sched, step_map, cfg, cond, streams, select);
}

SamplingResult replay_mixture_sampling(const Denoiser& video_d, const Denoiser& image_d, const NoiseSchedule& sched,
                                       const StepMap& step_map, const SamplerConfig& cfg, const Condition& cond,
                                       ChainStreams& streams, const StepTrace& trace) {
    if (trace.size() != step_map.size()) {
        throw OutOfRange("trace has " + std::to_string(trace.size()) + " steps, step map has " +
                         std::to_string(step_map.size()));
    }
    const Selector select = [&](std::size_t i, double) {
        const StepRecord& r = trace[i];
        if (r.timestep != step_map.pair(i).t) {
            throw OutOfRange("trace timestep " + std::to_string(r.timestep) + " does not match the step map");
        }
        return Selection{r.p_video, r.coin, r.choice};
    };
    return run_chain(&video_d, &image_d, video_d.input_dims(), sched, step_map, cfg, cond, streams, select);
}

}  // namespace dmix
