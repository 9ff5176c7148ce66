// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmix/gaussian.hpp"

#include <cmath>
#include <string>

#include "dmix/error.hpp"

namespace dmix {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Eigen::MatrixXd ar1_correlation(std::size_t frames, double rho) {
    Eigen::MatrixXd r(frames, frames);
    for (std::size_t i = 0; i < frames; ++i) {
        for (std::size_t j = 0; j < frames; ++j) {
            const auto lag = static_cast<int>(i > j ? i - j : j - i);
            r(i, j) = std::pow(rho, lag);
        }
    }
    return r;
}

// Gain applied along an eigen-direction with variance lambda.
inline double shrinkage(double lambda, double alpha_bar) {
    return std::sqrt(alpha_bar) * lambda / (alpha_bar * lambda + (1.0 - alpha_bar));
}

}  // namespace

void GaussianSpec::validate() const {
    dims.validate();
    const std::size_t D = dims.size();
    if (mean.size() != D) {
        throw InvalidShape("gaussian mean has length " + std::to_string(mean.size()) + ", expected " +
                           std::to_string(D));
    }
    std::visit(Overloaded{
                   [](const IsotropicCovariance& c) {
                       if (!(c.variance >= 0.0) || !std::isfinite(c.variance)) {
                           throw OutOfRange("isotropic variance must be finite and >= 0");
                       }
                   },
                   [D](const DiagonalCovariance& c) {
                       if (c.variances.size() != D) {
                           throw InvalidShape("diagonal covariance has length " + std::to_string(c.variances.size()) +
                                              ", expected " + std::to_string(D));
                       }
                       for (double v : c.variances) {
                           if (!(v >= 0.0) || !std::isfinite(v)) {
                               throw OutOfRange("diagonal variances must be finite and >= 0");
                           }
                       }
                   },
                   [D](const FullCovariance& c) {
                       if (static_cast<std::size_t>(c.matrix.rows()) != D ||
                           static_cast<std::size_t>(c.matrix.cols()) != D) {
                           throw InvalidShape("full covariance must be " + std::to_string(D) + "x" + std::to_string(D));
                       }
                       if (!c.matrix.allFinite()) {
                           throw OutOfRange("full covariance has non-finite entries");
                       }
                       const double scale = std::max(1.0, c.matrix.cwiseAbs().maxCoeff());
                       if ((c.matrix - c.matrix.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
                           throw OutOfRange("full covariance is not symmetric");
                       }
                       Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.matrix, Eigen::EigenvaluesOnly);
                       if (es.eigenvalues().minCoeff() < -1e-10 * scale) {
                           throw OutOfRange("full covariance is not positive semi-definite");
                       }
                   },
                   [](const Ar1TemporalCovariance& c) {
                       if (!(std::abs(c.rho) < 1.0)) {
                           throw OutOfRange("ar1-temporal requires |rho| < 1");
                       }
                       if (!(c.variance >= 0.0) || !std::isfinite(c.variance)) {
                           throw OutOfRange("ar1-temporal variance must be finite and >= 0");
                       }
                   },
               },
               covariance);
    for (double m : mean) {
        if (!std::isfinite(m)) {
            throw OutOfRange("gaussian mean has non-finite entries");
        }
    }
}

GaussianSpec GaussianSpec::standard_normal(const Dims& dims) {
    dims.validate();
    return {dims, std::vector<double>(dims.size(), 0.0), IsotropicCovariance{1.0}};
}

GaussianSpec frame_marginal(const GaussianSpec& spec) {
    spec.validate();
    const Dims fd = spec.dims.single_frame();
    const std::size_t n = fd.size();
    GaussianSpec out{fd, std::vector<double>(spec.mean.begin(), spec.mean.begin() + static_cast<std::ptrdiff_t>(n)),
                     IsotropicCovariance{}};
    out.covariance = std::visit(
        Overloaded{
            [](const IsotropicCovariance& c) -> Covariance { return c; },
            [n](const DiagonalCovariance& c) -> Covariance {
                return DiagonalCovariance{std::vector<double>(c.variances.begin(),
                                                              c.variances.begin() + static_cast<std::ptrdiff_t>(n))};
            },
            [n](const FullCovariance& c) -> Covariance {
                const auto k = static_cast<Eigen::Index>(n);
                return FullCovariance{c.matrix.topLeftCorner(k, k)};
            },
            [](const Ar1TemporalCovariance& c) -> Covariance { return IsotropicCovariance{c.variance}; },
        },
        spec.covariance);
    return out;
}

GaussianSpec iid_frames(const GaussianSpec& frame_spec, std::size_t frames) {
    frame_spec.validate();
    if (frame_spec.dims.frames != 1) {
        throw InvalidShape("iid_frames expects a one-frame spec, got " + frame_spec.dims.to_string());
    }
    Dims dims = frame_spec.dims;
    dims.frames = frames;
    dims.validate();
    const std::size_t n = frame_spec.dims.size();
    GaussianSpec out{dims, {}, IsotropicCovariance{}};
    for (std::size_t f = 0; f < frames; ++f) {
        out.mean.insert(out.mean.end(), frame_spec.mean.begin(), frame_spec.mean.end());
    }
    out.covariance = std::visit(
        Overloaded{
            [](const IsotropicCovariance& c) -> Covariance { return c; },
            [frames](const DiagonalCovariance& c) -> Covariance {
                DiagonalCovariance d;
                for (std::size_t f = 0; f < frames; ++f) {
                    d.variances.insert(d.variances.end(), c.variances.begin(), c.variances.end());
                }
                return d;
            },
            [frames, n](const FullCovariance& c) -> Covariance {
                const auto k = static_cast<Eigen::Index>(n);
                Eigen::MatrixXd m = Eigen::MatrixXd::Zero(k * static_cast<Eigen::Index>(frames),
                                                          k * static_cast<Eigen::Index>(frames));
                for (std::size_t f = 0; f < frames; ++f) {
                    m.block(static_cast<Eigen::Index>(f) * k, static_cast<Eigen::Index>(f) * k, k, k) = c.matrix;
                }
                return FullCovariance{std::move(m)};
            },
            [](const Ar1TemporalCovariance&) -> Covariance {
                throw InvalidShape("a one-frame spec cannot carry an ar1-temporal covariance");
            },
        },
        frame_spec.covariance);
    return out;
}

GaussianModel::GaussianModel(GaussianSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const auto D = static_cast<Eigen::Index>(spec_.dims.size());
    std::visit(Overloaded{
                   [&](const IsotropicCovariance& c) {
                       kind_ = Kind::Diagonal;
                       diag_ = Eigen::VectorXd::Constant(D, c.variance);
                   },
                   [&](const DiagonalCovariance& c) {
                       kind_ = Kind::Diagonal;
                       diag_ = Eigen::Map<const Eigen::VectorXd>(c.variances.data(), D);
                   },
                   [&](const FullCovariance& c) {
                       kind_ = Kind::Full;
                       Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.matrix);
                       basis_ = es.eigenvectors();
                       eigenvalues_ = es.eigenvalues().cwiseMax(0.0);
                   },
                   [&](const Ar1TemporalCovariance& c) {
                       kind_ = Kind::Ar1;
                       Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
                           c.variance * ar1_correlation(spec_.dims.frames, c.rho));
                       basis_ = es.eigenvectors();
                       eigenvalues_ = es.eigenvalues().cwiseMax(0.0);
                   },
               },
               spec_.covariance);
}

void GaussianModel::apply_gain(std::span<const double> centered, std::span<double> out, double alpha_bar) const {
    switch (kind_) {
        case Kind::Diagonal:
            for (std::size_t i = 0; i < centered.size(); ++i) {
                out[i] = shrinkage(diag_[static_cast<Eigen::Index>(i)], alpha_bar) * centered[i];
            }
            break;
        case Kind::Full: {
            const auto D = static_cast<Eigen::Index>(centered.size());
            Eigen::Map<const Eigen::VectorXd> x(centered.data(), D);
            Eigen::VectorXd coeffs = basis_.transpose() * x;
            for (Eigen::Index k = 0; k < D; ++k) {
                coeffs[k] *= shrinkage(eigenvalues_[k], alpha_bar);
            }
            Eigen::Map<Eigen::VectorXd>(out.data(), D) = basis_ * coeffs;
            break;
        }
        case Kind::Ar1: {
            const auto F = static_cast<Eigen::Index>(spec_.dims.frames);
            const std::size_t stride = spec_.dims.frame_size();
            Eigen::VectorXd gains(F);
            for (Eigen::Index k = 0; k < F; ++k) {
                gains[k] = shrinkage(eigenvalues_[k], alpha_bar);
            }
            // Operator along the time axis, shared by every site.
            const Eigen::MatrixXd op = basis_ * gains.asDiagonal() * basis_.transpose();
            Eigen::VectorXd x(F), y(F);
            for (std::size_t site = 0; site < stride; ++site) {
                for (Eigen::Index f = 0; f < F; ++f) {
                    x[f] = centered[static_cast<std::size_t>(f) * stride + site];
                }
                y.noalias() = op * x;
                for (Eigen::Index f = 0; f < F; ++f) {
                    out[static_cast<std::size_t>(f) * stride + site] = y[f];
                }
            }
            break;
        }
    }
}

LatentVideo GaussianModel::posterior_mean(const LatentVideo& s_t, double alpha_bar) const {
    if (s_t.dims() != spec_.dims) {
        throw InvalidShape("gaussian target expects " + spec_.dims.to_string() + ", got " + s_t.dims().to_string());
    }
    if (!(alpha_bar > 0.0 && alpha_bar < 1.0)) {
        throw DomainError("posterior mean needs alpha_bar in (0, 1), got " + std::to_string(alpha_bar));
    }
    const double root = std::sqrt(alpha_bar);
    const std::size_t D = s_t.size();
    std::vector<double> centered(D);
    for (std::size_t i = 0; i < D; ++i) {
        centered[i] = s_t[i] - root * spec_.mean[i];
    }
    LatentVideo m(spec_.dims);
    apply_gain(centered, m.data(), alpha_bar);
    for (std::size_t i = 0; i < D; ++i) {
        m[i] += spec_.mean[i];
    }
    return m;
}

LatentVideo GaussianModel::eps_estimate(const LatentVideo& s_t, double alpha_bar) const {
    LatentVideo eps = posterior_mean(s_t, alpha_bar);
    const double root = std::sqrt(alpha_bar);
    const double inv_noise = 1.0 / std::sqrt(1.0 - alpha_bar);
    for (std::size_t i = 0; i < eps.size(); ++i) {
        eps[i] = (s_t[i] - root * eps[i]) * inv_noise;
    }
    return eps;
}

LatentVideo GaussianModel::sample(RngStream& rng) const {
    LatentVideo z = sample_standard_normal(spec_.dims, rng);
    const std::size_t D = z.size();
    LatentVideo out(spec_.dims);
    switch (kind_) {
        case Kind::Diagonal:
            for (std::size_t i = 0; i < D; ++i) {
                out[i] = std::sqrt(diag_[static_cast<Eigen::Index>(i)]) * z[i];
            }
            break;
        case Kind::Full: {
            const auto n = static_cast<Eigen::Index>(D);
            Eigen::Map<const Eigen::VectorXd> zv(z.data().data(), n);
            Eigen::Map<Eigen::VectorXd>(out.data().data(), n) =
                basis_ * (eigenvalues_.cwiseSqrt().asDiagonal() * zv);
            break;
        }
        case Kind::Ar1: {
            const auto F = static_cast<Eigen::Index>(spec_.dims.frames);
            const std::size_t stride = spec_.dims.frame_size();
            const Eigen::MatrixXd factor = basis_ * eigenvalues_.cwiseSqrt().asDiagonal();
            Eigen::VectorXd x(F), y(F);
            for (std::size_t site = 0; site < stride; ++site) {
                for (Eigen::Index f = 0; f < F; ++f) {
                    x[f] = z[static_cast<std::size_t>(f) * stride + site];
                }
                y.noalias() = factor * x;
                for (Eigen::Index f = 0; f < F; ++f) {
                    out[static_cast<std::size_t>(f) * stride + site] = y[f];
                }
            }
            break;
        }
    }
    for (std::size_t i = 0; i < D; ++i) {
        out[i] += spec_.mean[i];
    }
    return out;
}

Eigen::VectorXd GaussianModel::mean_vector() const {
    return Eigen::Map<const Eigen::VectorXd>(spec_.mean.data(), static_cast<Eigen::Index>(spec_.mean.size()));
}

Eigen::VectorXd GaussianModel::variances() const {
    switch (kind_) {
        case Kind::Diagonal:
            return diag_;
        case Kind::Full:
            return std::get<FullCovariance>(spec_.covariance).matrix.diagonal();
        case Kind::Ar1:
            return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(spec_.dims.size()),
                                             std::get<Ar1TemporalCovariance>(spec_.covariance).variance);
    }
    return {};
}

Eigen::MatrixXd GaussianModel::covariance_matrix() const {
    const auto D = static_cast<Eigen::Index>(spec_.dims.size());
    switch (kind_) {
        case Kind::Diagonal:
            return diag_.asDiagonal();
        case Kind::Full:
            return std::get<FullCovariance>(spec_.covariance).matrix;
        case Kind::Ar1: {
            const auto& c = std::get<Ar1TemporalCovariance>(spec_.covariance);
            const std::size_t stride = spec_.dims.frame_size();
            Eigen::MatrixXd m = Eigen::MatrixXd::Zero(D, D);
            for (std::size_t i = 0; i < spec_.dims.size(); ++i) {
                for (std::size_t j = 0; j < spec_.dims.size(); ++j) {
                    if (i % stride == j % stride) {
                        const auto lag = static_cast<int>(i > j ? (i - j) / stride : (j - i) / stride);
                        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                            c.variance * std::pow(c.rho, lag);
                    }
                }
            }
            return m;
        }
    }
    return {};
}

LatentVideo analytic_gaussian_eps(const LatentVideo& s_t, Timestep t, const GaussianSpec& target,
                                  const NoiseSchedule& sched) {
    if (t == 0) {
        throw DomainError("eps prediction is undefined at t = 0 (sqrt(1 - abar_0) = 0)");
    }
    sched.check_timestep(t);
    return GaussianModel(target).eps_estimate(s_t, sched.alpha_bar(t));
}

}  // namespace dmix
