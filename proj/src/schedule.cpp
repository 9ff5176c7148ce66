// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmix/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "dmix/error.hpp"

namespace dmix {

std::string_view to_string(BetaKind kind) noexcept {
    return kind == BetaKind::Linear ? "linear" : "scaled-linear";
}

std::string_view to_string(SigmaKind kind) noexcept {
    return kind == SigmaKind::Beta ? "beta" : "beta-tilde";
}

BetaKind parse_beta_kind(std::string_view text) {
    if (text == "linear") return BetaKind::Linear;
    if (text == "scaled-linear") return BetaKind::ScaledLinear;
    throw InvalidSchedule("unknown beta schedule kind '" + std::string(text) + "'");
}

SigmaKind parse_sigma_kind(std::string_view text) {
    if (text == "beta") return SigmaKind::Beta;
    if (text == "beta-tilde") return SigmaKind::BetaTilde;
    throw InvalidSchedule("unknown sigma kind '" + std::string(text) + "'");
}

NoiseSchedule::NoiseSchedule(ScheduleParams params, std::vector<double> betas)
    : params_(params), betas_(std::move(betas)) {
    const std::size_t T = betas_.size();
    if (T == 0) {
        throw InvalidSchedule("schedule needs at least one step");
    }
    for (std::size_t i = 0; i < T; ++i) {
        if (!(betas_[i] > 0.0 && betas_[i] < 1.0)) {
            throw InvalidSchedule("beta_" + std::to_string(i + 1) + " = " + std::to_string(betas_[i]) +
                                  " is outside (0, 1)");
        }
        if (i > 0 && betas_[i] < betas_[i - 1]) {
            throw InvalidSchedule("betas must be non-decreasing (beta_" + std::to_string(i + 1) + ")");
        }
    }
    alphas_.resize(T);
    alpha_bars_.resize(T + 1);
    sigmas_.resize(T);
    alpha_bars_[0] = 1.0;
    for (std::size_t i = 0; i < T; ++i) {
        alphas_[i] = 1.0 - betas_[i];
        alpha_bars_[i + 1] = alpha_bars_[i] * alphas_[i];
    }
    for (std::size_t t = 1; t <= T; ++t) {
        const double beta = betas_[t - 1];
        const double var = params_.sigma_kind == SigmaKind::Beta
                               ? beta
                               : (1.0 - alpha_bars_[t - 1]) / (1.0 - alpha_bars_[t]) * beta;
        sigmas_[t - 1] = std::sqrt(var);
    }
}

NoiseSchedule NoiseSchedule::make(const ScheduleParams& params) {
    if (params.train_steps < 1) {
        throw InvalidSchedule("T must be >= 1");
    }
    if (!(params.beta_start > 0.0) || !(params.beta_end < 1.0) || !(params.beta_start <= params.beta_end)) {
        throw InvalidSchedule("need 0 < beta_start <= beta_end < 1, got beta_start=" +
                              std::to_string(params.beta_start) + " beta_end=" + std::to_string(params.beta_end));
    }
    const std::size_t T = params.train_steps;
    std::vector<double> betas(T);
    const bool scaled = params.kind == BetaKind::ScaledLinear;
    const double lo = scaled ? std::sqrt(params.beta_start) : params.beta_start;
    const double hi = scaled ? std::sqrt(params.beta_end) : params.beta_end;
    for (std::size_t i = 0; i < T; ++i) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
        const double b = std::lerp(lo, hi, frac);
        betas[i] = scaled ? b * b : b;
    }
    return NoiseSchedule(params, std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas, SigmaKind sigma_kind) {
    ScheduleParams params;
    params.train_steps = betas.size();
    params.beta_start = betas.empty() ? 0.0 : betas.front();
    params.beta_end = betas.empty() ? 0.0 : betas.back();
    params.sigma_kind = sigma_kind;
    return NoiseSchedule(params, std::move(betas));
}

void NoiseSchedule::check_timestep(Timestep t) const {
    if (t < 1 || t > steps()) {
        throw OutOfRange("timestep " + std::to_string(t) + " outside 1.." + std::to_string(steps()));
    }
}

double NoiseSchedule::beta(Timestep t) const {
    check_timestep(t);
    return betas_[t - 1];
}

double NoiseSchedule::alpha(Timestep t) const {
    check_timestep(t);
    return alphas_[t - 1];
}

double NoiseSchedule::alpha_bar(Timestep t) const {
    if (t > steps()) {
        throw OutOfRange("timestep " + std::to_string(t) + " outside 0.." + std::to_string(steps()));
    }
    return alpha_bars_[t];
}

double NoiseSchedule::sigma(Timestep t) const {
    check_timestep(t);
    return sigmas_[t - 1];
}

StepCoefficients NoiseSchedule::transition(Timestep t, Timestep t_prev) const {
    check_timestep(t);
    if (t_prev >= t) {
        throw OutOfRange("transition " + std::to_string(t) + " -> " + std::to_string(t_prev) +
                         " does not move toward t = 0");
    }
    if (t_prev + 1 == t) {
        return {alphas_[t - 1], betas_[t - 1], alpha_bars_[t], alpha_bars_[t_prev], sigmas_[t - 1]};
    }
    const double abar = alpha_bars_[t];
    const double abar_prev = alpha_bars_[t_prev];
    const double alpha = abar / abar_prev;
    const double beta = 1.0 - alpha;
    const double var = params_.sigma_kind == SigmaKind::Beta ? beta : (1.0 - abar_prev) / (1.0 - abar) * beta;
    return {alpha, beta, abar, abar_prev, std::sqrt(var)};
}

LatentVideo forward_perturb(const LatentVideo& s0, Timestep t, const LatentVideo& eps, const NoiseSchedule& sched) {
    if (s0.dims() != eps.dims()) {
        throw InvalidShape("forward_perturb: sample " + s0.dims().to_string() + " vs noise " + eps.dims().to_string());
    }
    sched.check_timestep(t);
    const double abar = sched.alpha_bar(t);
    const double a = std::sqrt(abar);
    const double b = std::sqrt(1.0 - abar);
    LatentVideo out(s0.dims());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a * s0[i] + b * eps[i];
    }
    return out;
}

StepMap::StepMap(std::size_t train_steps, std::vector<Timestep> indices)
    : train_steps_(train_steps), indices_(std::move(indices)) {
    if (indices_.empty() || indices_.front() != train_steps_) {
        throw InvalidSchedule("step map must start at T = " + std::to_string(train_steps_));
    }
    for (std::size_t i = 1; i < indices_.size(); ++i) {
        if (indices_[i] >= indices_[i - 1] || indices_[i] < 1) {
            throw InvalidSchedule("step map indices must be strictly decreasing within 1..T");
        }
    }
}

StepPair StepMap::pair(std::size_t i) const {
    if (i >= indices_.size()) {
        throw OutOfRange("step " + std::to_string(i) + " beyond step map of length " + std::to_string(size()));
    }
    return {indices_[i], i + 1 < indices_.size() ? indices_[i + 1] : 0};
}

bool StepMap::contains(Timestep t) const noexcept {
    return std::find(indices_.begin(), indices_.end(), t) != indices_.end();
}

StepMap make_step_map(std::size_t train_steps, std::size_t infer_steps) {
    if (infer_steps < 1 || infer_steps > train_steps) {
        throw InvalidSchedule("need 1 <= infer_steps <= T, got infer_steps=" + std::to_string(infer_steps) +
                              " T=" + std::to_string(train_steps));
    }
    std::vector<Timestep> indices(infer_steps);
    for (std::size_t i = 0; i < infer_steps; ++i) {
        indices[i] = train_steps - (i * train_steps) / infer_steps;
    }
    return StepMap(train_steps, std::move(indices));
}

}  // namespace dmix
