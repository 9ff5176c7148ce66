// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "dmix/latent.hpp"

namespace dmix {

/// Discrete diffusion timestep. 0 denotes the clean sample, 1..T the noisy ones.
using Timestep = std::size_t;

enum class BetaKind { Linear, ScaledLinear };
enum class SigmaKind {
    Beta,       ///< sigma_t^2 = beta_t
    BetaTilde,  ///< sigma_t^2 = (1 - abar_{t-1}) / (1 - abar_t) * beta_t
};

std::string_view to_string(BetaKind kind) noexcept;
std::string_view to_string(SigmaKind kind) noexcept;
BetaKind parse_beta_kind(std::string_view text);
SigmaKind parse_sigma_kind(std::string_view text);

struct ScheduleParams {
    std::size_t train_steps = 1000;
    BetaKind kind = BetaKind::Linear;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    SigmaKind sigma_kind = SigmaKind::BetaTilde;

    friend bool operator==(const ScheduleParams&, const ScheduleParams&) = default;
};

/// Coefficients of one reverse update between two (possibly non-adjacent)
/// training timesteps.
struct StepCoefficients {
    double alpha;           ///< abar_t / abar_prev
    double beta;            ///< 1 - alpha
    double alpha_bar;       ///< abar_t
    double alpha_bar_prev;  ///< abar_prev
    double sigma;           ///< reverse-noise std for this transition
};

/// Immutable beta / alpha / alpha-bar / sigma tables for timesteps 1..T.
class NoiseSchedule {
public:
    /// Builds a linear or scaled-linear table. Throws InvalidSchedule.
    static NoiseSchedule make(const ScheduleParams& params);

    /// Builds from an explicit beta table (index 0 is beta_1). The table must
    /// lie in (0, 1) and be non-decreasing.
    static NoiseSchedule from_betas(std::vector<double> betas, SigmaKind sigma_kind);

    std::size_t steps() const noexcept { return betas_.size(); }
    const ScheduleParams& params() const noexcept { return params_; }

    double beta(Timestep t) const;
    double alpha(Timestep t) const;
    /// Defined for t in 0..T with alpha_bar(0) = 1.
    double alpha_bar(Timestep t) const;
    double sigma(Timestep t) const;

    /// Coefficients for the transition t -> t_prev with 0 <= t_prev < t <= T.
    /// Adjacent steps read the tables directly; otherwise the ratios are
    /// re-derived from alpha-bar.
    StepCoefficients transition(Timestep t, Timestep t_prev) const;

    void check_timestep(Timestep t) const;

private:
    NoiseSchedule(ScheduleParams params, std::vector<double> betas);

    ScheduleParams params_;
    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
    std::vector<double> sigmas_;
};

/// s_t = sqrt(abar_t) * s0 + sqrt(1 - abar_t) * eps.
LatentVideo forward_perturb(const LatentVideo& s0, Timestep t, const LatentVideo& eps, const NoiseSchedule& sched);

struct StepPair {
    Timestep t;
    Timestep t_prev;
};

/// Strictly decreasing training timesteps visited at inference, starting at T.
class StepMap {
public:
    StepMap(std::size_t train_steps, std::vector<Timestep> indices);

    std::size_t train_steps() const noexcept { return train_steps_; }
    std::size_t size() const noexcept { return indices_.size(); }
    const std::vector<Timestep>& indices() const noexcept { return indices_; }

    /// (indices[i], indices[i+1]) with t_prev = 0 after the last entry.
    StepPair pair(std::size_t i) const;
    bool contains(Timestep t) const noexcept;

private:
    std::size_t train_steps_;
    std::vector<Timestep> indices_;
};

/// Evenly spaced map: indices[i] = T - floor(i * T / infer_steps).
StepMap make_step_map(std::size_t train_steps, std::size_t infer_steps);

}  // namespace dmix
