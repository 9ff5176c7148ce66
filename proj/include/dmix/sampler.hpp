// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dmix/latent.hpp"
#include "dmix/rng.hpp"
#include "dmix/schedule.hpp"

namespace dmix {

/// Noise-shaping parameters for the reverse chain.
struct EntropyConfig {
    double r_video = 0.0;  ///< shared-noise ratio after video-model steps
    double r_image = 0.0;  ///< shared-noise ratio after image-model steps
    double gamma = 1.0;    ///< multiplier on sigma_t * z

    void validate() const;

    friend bool operator==(const EntropyConfig&, const EntropyConfig&) = default;
};

/// Step noise z^f = sqrt(r) * z_shared + sqrt(1 - r) * z_ind^f.
///
/// Always draws C*H*W shared values followed by F*C*H*W independent values,
/// so the stream position after the call does not depend on r.
LatentVideo sample_correlated_noise(const Dims& dims, double r, RngStream& rng);

/// Ancestral DDPM update between the StepMap pair (t, t_prev):
///   (1/sqrt(alpha)) * (s_t - beta / sqrt(1 - abar_t) * eps_hat) + gamma * sigma * z
/// with alpha, beta, sigma taken for the (possibly strided) transition. The
/// noise term is dropped when t_prev == 0.
LatentVideo ddpm_step(const LatentVideo& s_t, StepPair pair, const LatentVideo& eps_hat, const NoiseSchedule& sched,
                      double gamma, const LatentVideo& z);

/// Deterministic DDIM (eta = 0) update.
LatentVideo ddim_step(const LatentVideo& s_t, StepPair pair, const LatentVideo& eps_hat, const NoiseSchedule& sched);

/// Clean-sample estimate (s_t - sqrt(1 - abar_t) * eps_hat) / sqrt(abar_t).
LatentVideo predict_x0(const LatentVideo& s_t, Timestep t, const LatentVideo& eps_hat, const NoiseSchedule& sched);

/// gamma * sigma actually applied for this transition (0 on the final step).
double noise_scale(StepPair pair, const NoiseSchedule& sched, double gamma);

}  // namespace dmix
