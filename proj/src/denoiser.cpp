// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmix/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dmix/error.hpp"

namespace dmix {

Condition Condition::label(int class_id) {
    if (class_id < 0) {
        throw OutOfRange("class id must be >= 0, got " + std::to_string(class_id));
    }
    Condition c;
    c.label_ = class_id;
    return c;
}

int Condition::class_id() const {
    if (!label_) {
        throw OutOfRange("null condition has no class id");
    }
    return *label_;
}

std::string_view to_string(DenoiserKind kind) noexcept {
    return kind == DenoiserKind::Video ? "video" : "image";
}

LatentVideo Denoiser::predict_eps(const LatentVideo& s_t, Timestep t, const Condition& cond) const {
    if (s_t.dims() != input_dims()) {
        throw InvalidShape(std::string(to_string(kind())) + " denoiser expects " + input_dims().to_string() +
                           ", got " + s_t.dims().to_string());
    }
    if (!s_t.all_finite()) {
        throw DomainError("denoiser input has non-finite values at t = " + std::to_string(t));
    }
    LatentVideo eps = do_predict(s_t, t, cond);
    if (eps.dims() != s_t.dims()) {
        throw InvalidShape("denoiser returned " + eps.dims().to_string() + " for input " + s_t.dims().to_string());
    }
    if (!eps.all_finite()) {
        throw DomainError("denoiser produced non-finite values at t = " + std::to_string(t));
    }
    return eps;
}

FrameBatch Denoiser::predict_eps(const FrameBatch& frames, Timestep t, const Condition& cond) const {
    if (frames.item_dims() != input_dims()) {
        throw InvalidShape("frame batch items are " + frames.item_dims().to_string() + " but the denoiser expects " +
                           input_dims().to_string());
    }
    std::vector<double> out(frames.dims().size());
    const std::size_t n = frames.dims().frame_size();
    for (std::size_t b = 0; b < frames.count(); ++b) {
        const LatentVideo eps = predict_eps(frames.item_video(b), t, cond);
        std::copy(eps.data().begin(), eps.data().end(), out.begin() + static_cast<std::ptrdiff_t>(b * n));
    }
    return FrameBatch(frames.dims(), std::move(out));
}

AnalyticDenoiser::AnalyticDenoiser(DenoiserKind kind, GaussianSpec target, NoiseSchedule sched,
                                   std::map<int, GaussianSpec> class_targets)
    : kind_(kind), target_(std::move(target)), sched_(std::move(sched)) {
    if (kind_ == DenoiserKind::Image && target_.dims().frames != 1) {
        throw InvalidShape("an image denoiser target must have one frame, got " + target_.dims().to_string());
    }
    for (auto& [id, spec] : class_targets) {
        if (id < 0) {
            throw OutOfRange("class id must be >= 0, got " + std::to_string(id));
        }
        if (spec.dims != target_.dims()) {
            throw InvalidShape("class " + std::to_string(id) + " target has dims " + spec.dims.to_string());
        }
        class_targets_.emplace(id, GaussianModel(std::move(spec)));
    }
}

LatentVideo AnalyticDenoiser::do_predict(const LatentVideo& s_t, Timestep t, const Condition& cond) const {
    if (t == 0) {
        throw DomainError("eps prediction is undefined at t = 0");
    }
    const double abar = sched_.alpha_bar(t);
    if (!cond.is_null()) {
        const auto it = class_targets_.find(cond.class_id());
        if (it == class_targets_.end()) {
            throw OutOfRange("no target for class " + std::to_string(cond.class_id()));
        }
        return it->second.eps_estimate(s_t, abar);
    }
    return target_.eps_estimate(s_t, abar);
}

FunctionDenoiser::FunctionDenoiser(DenoiserKind kind, Dims input_dims, Fn fn, bool conditional)
    : kind_(kind), dims_(input_dims), fn_(std::move(fn)), conditional_(conditional) {
    dims_.validate();
    if (kind_ == DenoiserKind::Image && dims_.frames != 1) {
        throw InvalidShape("an image denoiser takes one frame, got " + dims_.to_string());
    }
}

LatentVideo FunctionDenoiser::do_predict(const LatentVideo& s_t, Timestep t, const Condition& cond) const {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return fn_(s_t, t, cond);
}

namespace {

void check_guidance(const Denoiser& d, const Condition& y, double g) {
    if (!std::isfinite(g)) {
        throw OutOfRange("guidance scale must be finite");
    }
    if (!y.is_null() && g != 0.0 && !d.supports_conditioning()) {
        throw OutOfRange("conditional guidance requested from an unconditional denoiser");
    }
}

void combine(std::span<double> uncond, std::span<const double> cond, double g) {
    for (std::size_t i = 0; i < uncond.size(); ++i) {
        uncond[i] = uncond[i] + g * (cond[i] - uncond[i]);
    }
}

}  // namespace

LatentVideo guided_eps(const Denoiser& d, const LatentVideo& s_t, Timestep t, const Condition& y, double g) {
    check_guidance(d, y, g);
    if (g == 1.0) {
        return d.predict_eps(s_t, t, y);
    }
    if (g == 0.0 || y.is_null()) {
        return d.predict_eps(s_t, t, Condition::null());
    }
    LatentVideo out = d.predict_eps(s_t, t, Condition::null());
    const LatentVideo cond = d.predict_eps(s_t, t, y);
    combine(out.data(), cond.data(), g);
    return out;
}

FrameBatch guided_eps(const Denoiser& d, const FrameBatch& frames, Timestep t, const Condition& y, double g) {
    check_guidance(d, y, g);
    if (g == 1.0) {
        return d.predict_eps(frames, t, y);
    }
    if (g == 0.0 || y.is_null()) {
        return d.predict_eps(frames, t, Condition::null());
    }
    FrameBatch out = d.predict_eps(frames, t, Condition::null());
    const FrameBatch cond = d.predict_eps(frames, t, y);
    combine(out.data(), cond.data(), g);
    return out;
}

}  // namespace dmix
