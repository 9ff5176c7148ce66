// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <optional>
#include <string_view>

#include "dmix/gaussian.hpp"
#include "dmix/latent.hpp"
#include "dmix/schedule.hpp"

namespace dmix {

/// Conditioning label: a non-negative class id, or the null token used for
/// unconditional prediction.
class Condition {
public:
    Condition() = default;
    static Condition null() noexcept { return {}; }
    static Condition label(int class_id);

    bool is_null() const noexcept { return !label_.has_value(); }
    int class_id() const;
    std::optional<int> value() const noexcept { return label_; }

    friend bool operator==(const Condition&, const Condition&) = default;

private:
    std::optional<int> label_;
};

enum class DenoiserKind {
    Video,  ///< consumes the whole F x C x H x W tensor
    Image,  ///< consumes one frame (1 x C x H x W) at a time
};

std::string_view to_string(DenoiserKind kind) noexcept;

/// eps-prediction model. Implementations must be safe to call concurrently.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual DenoiserKind kind() const noexcept = 0;
    /// Exact shape accepted by predict_eps.
    virtual Dims input_dims() const = 0;
    virtual bool supports_conditioning() const noexcept { return false; }

    /// Validates the shape, runs the model, and rejects non-finite output.
    LatentVideo predict_eps(const LatentVideo& s_t, Timestep t, const Condition& cond) const;

    /// Runs a single-frame denoiser on every item of the batch independently.
    FrameBatch predict_eps(const FrameBatch& frames, Timestep t, const Condition& cond) const;

protected:
    virtual LatentVideo do_predict(const LatentVideo& s_t, Timestep t, const Condition& cond) const = 0;
};

/// MMSE denoiser for Gaussian targets. The unconditional target is used for
/// the null condition and for any class without its own target.
class AnalyticDenoiser final : public Denoiser {
public:
    AnalyticDenoiser(DenoiserKind kind, GaussianSpec target, NoiseSchedule sched,
                     std::map<int, GaussianSpec> class_targets = {});

    DenoiserKind kind() const noexcept override { return kind_; }
    Dims input_dims() const override { return target_.dims(); }
    bool supports_conditioning() const noexcept override { return !class_targets_.empty(); }

    const GaussianModel& target() const noexcept { return target_; }
    const NoiseSchedule& schedule() const noexcept { return sched_; }

protected:
    LatentVideo do_predict(const LatentVideo& s_t, Timestep t, const Condition& cond) const override;

private:
    DenoiserKind kind_;
    GaussianModel target_;
    NoiseSchedule sched_;
    std::map<int, GaussianModel> class_targets_;
};

/// Wraps a callable; counts evaluations. Used for scripted tests and bindings.
class FunctionDenoiser final : public Denoiser {
public:
    using Fn = std::function<LatentVideo(const LatentVideo&, Timestep, const Condition&)>;

    FunctionDenoiser(DenoiserKind kind, Dims input_dims, Fn fn, bool conditional = true);

    DenoiserKind kind() const noexcept override { return kind_; }
    Dims input_dims() const override { return dims_; }
    bool supports_conditioning() const noexcept override { return conditional_; }

    std::size_t calls() const noexcept { return calls_.load(); }

protected:
    LatentVideo do_predict(const LatentVideo& s_t, Timestep t, const Condition& cond) const override;

private:
    DenoiserKind kind_;
    Dims dims_;
    Fn fn_;
    bool conditional_;
    mutable std::atomic<std::size_t> calls_{0};
};

/// Classifier-free guidance: eps(null) + g * (eps(y) - eps(null)).
/// A single evaluation is made when g is 0 or 1 or y is null.
LatentVideo guided_eps(const Denoiser& d, const LatentVideo& s_t, Timestep t, const Condition& y, double g);
FrameBatch guided_eps(const Denoiser& d, const FrameBatch& frames, Timestep t, const Condition& y, double g);

}  // namespace dmix
