// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmix/smoothing.hpp"

#include <algorithm>
#include <cmath>

#include "dmix/error.hpp"

namespace dmix {

void SmoothingConfig::validate() const {
    if (!(threshold >= 0.0)) {
        throw OutOfRange("smoothing threshold must be >= 0");
    }
    if (!(sigma_floor > 0.0)) {
        throw OutOfRange("smoothing sigma_floor must be > 0");
    }
}

SmoothingStats compute_smoothing_stats(const LatentVideo& x, double sigma_floor) {
    const Dims& d = x.dims();
    d.validate();
    const std::size_t F = d.frames, C = d.channels, H = d.height, W = d.width;
    const std::size_t plane = d.plane_size();

    SmoothingStats s;
    s.dims = d;
    s.mu.assign(C * plane, 0.0);
    s.sigma_c.assign(C, 0.0);
    s.delta.assign(d.size(), 0.0);
    s.variation.assign(F * plane, 0.0);

    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t p = 0; p < plane; ++p) {
            double sum = 0.0;
            for (std::size_t f = 0; f < F; ++f) {
                sum += x.at(f, c, p / W, p % W);
            }
            s.mu[c * plane + p] = sum / static_cast<double>(F);
        }
        double mean = 0.0;
        for (std::size_t p = 0; p < plane; ++p) {
            mean += s.mu[c * plane + p];
        }
        mean /= static_cast<double>(plane);
        double var = 0.0;
        for (std::size_t p = 0; p < plane; ++p) {
            const double dv = s.mu[c * plane + p] - mean;
            var += dv * dv;
        }
        s.sigma_c[c] = std::sqrt(var / static_cast<double>(plane));
    }

    for (std::size_t c = 0; c < C; ++c) {
        const double norm = std::max(s.sigma_c[c], sigma_floor);
        for (std::size_t f = 0; f < F; ++f) {
            for (std::size_t h = 0; h < H; ++h) {
                for (std::size_t w = 0; w < W; ++w) {
                    const double delta = std::abs(x.at(f, c, h, w) - s.mu[c * plane + h * W + w]);
                    s.delta[((c * F + f) * H + h) * W + w] = delta;
                    s.variation[(f * H + h) * W + w] += delta / norm;
                }
            }
        }
    }
    return s;
}

std::vector<bool> smoothing_mask(const LatentVideo& x, const SmoothingConfig& cfg) {
    cfg.validate();
    const SmoothingStats s = compute_smoothing_stats(x, cfg.sigma_floor);
    std::vector<bool> mask(s.variation.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = s.variation[i] < cfg.threshold;
    }
    return mask;
}

LatentVideo temporal_smooth(const LatentVideo& x, const SmoothingConfig& cfg) {
    cfg.validate();
    const SmoothingStats s = compute_smoothing_stats(x, cfg.sigma_floor);
    const Dims& d = x.dims();
    LatentVideo out = x;
    for (std::size_t f = 0; f < d.frames; ++f) {
        for (std::size_t h = 0; h < d.height; ++h) {
            for (std::size_t w = 0; w < d.width; ++w) {
                if (!(s.variation_at(f, h, w) < cfg.threshold)) {
                    continue;
                }
                for (std::size_t c = 0; c < d.channels; ++c) {
                    out.at(f, c, h, w) = s.mu_at(c, h, w);
                }
            }
        }
    }
    return out;
}

namespace {

// Mirror without repeating the edge sample: -1 -> 1, F -> F - 2.
// Returns -1 when the tap cannot be mapped into [0, F).
long mirror_index(long i, long frames) {
    if (frames == 1) {
        return i == 0 ? 0 : -1;
    }
    if (i < 0) {
        i = -i;
    }
    if (i >= frames) {
        i = 2 * (frames - 1) - i;
    }
    return (i >= 0 && i < frames) ? i : -1;
}

LatentVideo convolve_time(const LatentVideo& x, const std::vector<double>& kernel, long origin) {
    const Dims& d = x.dims();
    const auto F = static_cast<long>(d.frames);
    const std::size_t stride = d.frame_size();
    LatentVideo out(d);
    for (long f = 0; f < F; ++f) {
        // Kernel weights folded onto valid frames for this output frame.
        std::vector<double> weights(static_cast<std::size_t>(F), 0.0);
        double total = 0.0;
        for (std::size_t k = 0; k < kernel.size(); ++k) {
            const long src = mirror_index(f + static_cast<long>(k) - origin, F);
            if (src >= 0) {
                weights[static_cast<std::size_t>(src)] += kernel[k];
                total += kernel[k];
            }
        }
        auto dst = out.frame(static_cast<std::size_t>(f));
        for (long g = 0; g < F; ++g) {
            const double w = weights[static_cast<std::size_t>(g)] / total;
            if (w == 0.0) {
                continue;
            }
            const auto src = x.frame(static_cast<std::size_t>(g));
            for (std::size_t i = 0; i < stride; ++i) {
                dst[i] += w * src[i];
            }
        }
    }
    return out;
}

void check_width(std::size_t width) {
    if (width < 1) {
        throw OutOfRange("smoothing width must be >= 1");
    }
}

}  // namespace

LatentVideo uniform_time_smooth(const LatentVideo& x, std::size_t width) {
    check_width(width);
    if (width == 1) {
        return x;
    }
    return convolve_time(x, std::vector<double>(width, 1.0), static_cast<long>((width - 1) / 2));
}

LatentVideo gaussian_time_smooth(const LatentVideo& x, std::size_t width) {
    check_width(width);
    if (width == 1) {
        return x;
    }
    const double sigma = static_cast<double>(width) / 4.0;
    const double center = static_cast<double>(width - 1) / 2.0;
    std::vector<double> kernel(width);
    for (std::size_t k = 0; k < width; ++k) {
        const double off = static_cast<double>(k) - center;
        kernel[k] = std::exp(-0.5 * off * off / (sigma * sigma));
    }
    return convolve_time(x, kernel, static_cast<long>((width - 1) / 2));
}

}  // namespace dmix
