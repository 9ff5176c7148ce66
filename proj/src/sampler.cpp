// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmix/sampler.hpp"

#include <cmath>
#include <string>

#include "dmix/error.hpp"

namespace dmix {

void EntropyConfig::validate() const {
    if (!(r_video >= 0.0 && r_video <= 1.0)) {
        throw OutOfRange("r_video must lie in [0, 1]");
    }
    if (!(r_image >= 0.0 && r_image <= 1.0)) {
        throw OutOfRange("r_image must lie in [0, 1]");
    }
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
        throw OutOfRange("gamma must be finite and >= 0");
    }
}

LatentVideo sample_correlated_noise(const Dims& dims, double r, RngStream& rng) {
    dims.validate();
    if (!(r >= 0.0 && r <= 1.0)) {
        throw OutOfRange("shared-noise ratio r must lie in [0, 1], got " + std::to_string(r));
    }
    const std::size_t n = dims.frame_size();
    std::vector<double> shared(n);
    for (double& x : shared) {
        x = rng.normal();
    }
    const double a = std::sqrt(r);
    const double b = std::sqrt(1.0 - r);
    LatentVideo z(dims);
    for (std::size_t f = 0; f < dims.frames; ++f) {
        auto frame = z.frame(f);
        for (std::size_t i = 0; i < n; ++i) {
            frame[i] = a * shared[i] + b * rng.normal();
        }
    }
    return z;
}

namespace {

void check_shapes(const LatentVideo& s_t, const LatentVideo& other, const char* what) {
    if (s_t.dims() != other.dims()) {
        throw InvalidShape(std::string(what) + " has dims " + other.dims().to_string() + ", sample has " +
                           s_t.dims().to_string());
    }
}

}  // namespace

double noise_scale(StepPair pair, const NoiseSchedule& sched, double gamma) {
    if (pair.t_prev == 0) {
        sched.check_timestep(pair.t);
        return 0.0;
    }
    return gamma * sched.transition(pair.t, pair.t_prev).sigma;
}

LatentVideo ddpm_step(const LatentVideo& s_t, StepPair pair, const LatentVideo& eps_hat, const NoiseSchedule& sched,
                      double gamma, const LatentVideo& z) {
    check_shapes(s_t, eps_hat, "eps_hat");
    check_shapes(s_t, z, "z");
    const StepCoefficients k = sched.transition(pair.t, pair.t_prev);
    const double inv_root_alpha = 1.0 / std::sqrt(k.alpha);
    const double eps_coeff = k.beta / std::sqrt(1.0 - k.alpha_bar);
    LatentVideo out(s_t.dims());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = inv_root_alpha * (s_t[i] - eps_coeff * eps_hat[i]);
    }
    if (pair.t_prev != 0) {
        const double scale = gamma * k.sigma;
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] += scale * z[i];
        }
    }
    return out;
}

LatentVideo predict_x0(const LatentVideo& s_t, Timestep t, const LatentVideo& eps_hat, const NoiseSchedule& sched) {
    check_shapes(s_t, eps_hat, "eps_hat");
    sched.check_timestep(t);
    const double abar = sched.alpha_bar(t);
    const double root = std::sqrt(abar);
    const double noise = std::sqrt(1.0 - abar);
    LatentVideo x0(s_t.dims());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        x0[i] = (s_t[i] - noise * eps_hat[i]) / root;
    }
    return x0;
}

LatentVideo ddim_step(const LatentVideo& s_t, StepPair pair, const LatentVideo& eps_hat, const NoiseSchedule& sched) {
    const StepCoefficients k = sched.transition(pair.t, pair.t_prev);
    LatentVideo out = predict_x0(s_t, pair.t, eps_hat, sched);
    const double root_prev = std::sqrt(k.alpha_bar_prev);
    const double noise_prev = std::sqrt(1.0 - k.alpha_bar_prev);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = root_prev * out[i] + noise_prev * eps_hat[i];
    }
    return out;
}

}  // namespace dmix
