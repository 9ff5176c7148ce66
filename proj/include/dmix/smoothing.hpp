// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "dmix/latent.hpp"

namespace dmix {

struct SmoothingConfig {
    double threshold = 2.0;     ///< sites with normalized variation below this are replaced
    double sigma_floor = 1e-8;  ///< lower bound on the per-channel spatial std

    void validate() const;

    friend bool operator==(const SmoothingConfig&, const SmoothingConfig&) = default;
};

/// Temporal statistics of a latent video.
struct SmoothingStats {
    Dims dims;
    std::vector<double> mu;         ///< (c, h, w): mean over frames
    std::vector<double> sigma_c;    ///< (c): population std of mu over (h, w)
    std::vector<double> delta;      ///< (c, f, h, w): |x - mu|
    std::vector<double> variation;  ///< (f, h, w): sum_c delta / max(sigma_c, floor)

    double mu_at(std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return mu[(c * dims.height + h) * dims.width + w];
    }
    double delta_at(std::size_t c, std::size_t f, std::size_t h, std::size_t w) const noexcept {
        return delta[((c * dims.frames + f) * dims.height + h) * dims.width + w];
    }
    double variation_at(std::size_t f, std::size_t h, std::size_t w) const noexcept {
        return variation[(f * dims.height + h) * dims.width + w];
    }
};

SmoothingStats compute_smoothing_stats(const LatentVideo& x, double sigma_floor = 1e-8);

/// Replaces every (f, h, w) site whose variation is below the threshold by the
/// temporal mean, across all channels at once. Other values pass through.
LatentVideo temporal_smooth(const LatentVideo& x, const SmoothingConfig& cfg);

/// Mask over (f, h, w) of the sites temporal_smooth would replace.
std::vector<bool> smoothing_mask(const LatentVideo& x, const SmoothingConfig& cfg);

/// Baselines: per-site convolution along time with a normalized kernel of
/// `width` taps and mirrored boundaries. Taps that fall outside the video
/// after mirroring are dropped and the kernel renormalized.
LatentVideo uniform_time_smooth(const LatentVideo& x, std::size_t width);
/// Gaussian kernel with standard deviation width / 4 frames.
LatentVideo gaussian_time_smooth(const LatentVideo& x, std::size_t width);

}  // namespace dmix
