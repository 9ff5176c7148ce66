// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmix/gaussian.hpp"
#include "dmix/latent.hpp"

namespace dmix {

/// Sample moments of a collection of equally-shaped latents.
struct MomentSummary {
    std::size_t n = 0;
    Eigen::VectorXd mean;
    Eigen::VectorXd variances;                ///< unbiased, per entry
    std::optional<Eigen::MatrixXd> covariance;  ///< unbiased, only when requested
    Eigen::VectorXd std_errors;               ///< of the mean, per entry
};

/// Throws OutOfRange when fewer than two samples are given.
MomentSummary empirical_moments(std::span<const LatentVideo> samples, bool full_covariance = false);

/// Pearson correlation of x[f] and x[f + lag], pooled over every site,
/// frame pair and sample after centering each entry by its across-sample mean.
double temporal_autocorr(std::span<const LatentVideo> samples, std::size_t lag);

/// Mean over sites (c, h, w) and f of |x[f+1] - x[f]|. The optional mask
/// selects sites and has length C*H*W.
double flicker_metric(const LatentVideo& x);
double flicker_metric(const LatentVideo& x, const std::vector<bool>& site_mask);

/// 2-Wasserstein distance between two Gaussians (not squared).
double gaussian_w2(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
                   const Eigen::MatrixXd& cov2);

/// Same distance for diagonal covariances.
double gaussian_w2_diagonal(const Eigen::VectorXd& mu1, const Eigen::VectorXd& var1, const Eigen::VectorXd& mu2,
                            const Eigen::VectorXd& var2);

struct Metric {
    std::string name;
    double value = 0.0;
    double half_width = 0.0;  ///< 95% normal-approximation half-width
    std::size_t n = 0;
};

struct MetricReport {
    std::vector<Metric> metrics;

    const Metric* find(const std::string& name) const;
    const Metric& at(const std::string& name) const;

    std::string to_json() const;
    std::string to_csv() const;
};

struct MetricOptions {
    std::vector<std::size_t> lags{1};
    bool flicker = true;
    bool per_frame = true;
    /// When set, adds w2_to_target (diagonal fit vs. the target marginals)
    /// and w2_per_entry = w2_to_target / sqrt(D).
    const GaussianModel* target = nullptr;
    std::size_t bootstrap_rounds = 32;
    std::uint64_t bootstrap_seed = 0x5eed;
};

MetricReport compute_metrics(std::span<const LatentVideo> samples, const MetricOptions& options);

}  // namespace dmix
