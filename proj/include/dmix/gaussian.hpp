// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <variant>
#include <vector>

#include "dmix/latent.hpp"
#include "dmix/schedule.hpp"

namespace dmix {

struct IsotropicCovariance {
    double variance = 1.0;
};

struct DiagonalCovariance {
    std::vector<double> variances;  ///< one per flattened entry
};

struct FullCovariance {
    Eigen::MatrixXd matrix;  ///< D x D over the flattened latent
};

/// Frames jointly Gaussian per spatial site with Cov(x[f], x[g]) = variance * rho^|f-g|;
/// distinct sites and channels are independent.
struct Ar1TemporalCovariance {
    double rho = 0.0;
    double variance = 1.0;
};

using Covariance = std::variant<IsotropicCovariance, DiagonalCovariance, FullCovariance, Ar1TemporalCovariance>;

/// A Gaussian distribution over flattened latents of a fixed shape.
struct GaussianSpec {
    Dims dims;
    std::vector<double> mean;  ///< length dims.size()
    Covariance covariance = IsotropicCovariance{};

    /// Throws InvalidShape / OutOfRange when the fields are inconsistent, the
    /// covariance is not symmetric PSD, or |rho| >= 1.
    void validate() const;

    static GaussianSpec standard_normal(const Dims& dims);
};

/// Distribution of a single frame. Assumes frames are identically distributed
/// and takes the block of frame 0.
GaussianSpec frame_marginal(const GaussianSpec& spec);

/// frames independent copies of a one-frame spec.
GaussianSpec iid_frames(const GaussianSpec& frame_spec, std::size_t frames);

/// A validated GaussianSpec with its covariance pre-factorized, so repeated
/// conditioning and sampling cost O(D^2) at most (O(D) for isotropic and
/// diagonal, O(F^2 C H W) for AR(1) temporal).
class GaussianModel {
public:
    explicit GaussianModel(GaussianSpec spec);

    const GaussianSpec& spec() const noexcept { return spec_; }
    const Dims& dims() const noexcept { return spec_.dims; }

    /// E[s0 | s_t] for s_t = sqrt(abar) s0 + sqrt(1 - abar) eps, abar in (0, 1).
    LatentVideo posterior_mean(const LatentVideo& s_t, double alpha_bar) const;

    /// MMSE noise estimate E[eps | s_t] = (s_t - sqrt(abar) E[s0 | s_t]) / sqrt(1 - abar).
    LatentVideo eps_estimate(const LatentVideo& s_t, double alpha_bar) const;

    /// Draws s0 from the distribution.
    LatentVideo sample(RngStream& rng) const;

    Eigen::VectorXd mean_vector() const;
    /// Per-entry marginal variances.
    Eigen::VectorXd variances() const;
    /// Dense D x D covariance. Intended for small D.
    Eigen::MatrixXd covariance_matrix() const;

private:
    enum class Kind { Diagonal, Full, Ar1 };

    void apply_gain(std::span<const double> centered, std::span<double> out, double alpha_bar) const;

    GaussianSpec spec_;
    Kind kind_;
    Eigen::VectorXd diag_;         // Diagonal: per-entry variance
    Eigen::MatrixXd basis_;        // Full: D x D, Ar1: F x F eigenvectors
    Eigen::VectorXd eigenvalues_;  // matching eigenvalues (clamped >= 0)
};

/// MMSE eps-prediction for a Gaussian target. Throws DomainError at t = 0.
LatentVideo analytic_gaussian_eps(const LatentVideo& s_t, Timestep t, const GaussianSpec& target,
                                  const NoiseSchedule& sched);

}  // namespace dmix
