// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmix/eval.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "dmix/error.hpp"
#include "dmix/rng.hpp"

namespace dmix {
namespace {

constexpr double kZ95 = 1.959963984540054;

const Dims& common_dims(std::span<const LatentVideo> samples) {
    if (samples.empty()) {
        throw OutOfRange("no samples");
    }
    const Dims& d = samples.front().dims();
    for (const auto& s : samples) {
        if (s.dims() != d) {
            throw InvalidShape("samples have mixed dims: " + d.to_string() + " vs " + s.dims().to_string());
        }
    }
    return d;
}

Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

void check_psd(const Eigen::MatrixXd& m, const char* which) {
    if (m.rows() != m.cols()) {
        throw InvalidShape(std::string(which) + " is not square");
    }
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
        throw OutOfRange(std::string(which) + " is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-9 * scale) {
        throw OutOfRange(std::string(which) + " is not positive semi-definite");
    }
}

}  // namespace

MomentSummary empirical_moments(std::span<const LatentVideo> samples, bool full_covariance) {
    if (samples.size() < 2) {
        throw OutOfRange("empirical moments need at least two samples");
    }
    const Dims& d = common_dims(samples);
    const auto D = static_cast<Eigen::Index>(d.size());
    const double n = static_cast<double>(samples.size());

    MomentSummary m;
    m.n = samples.size();
    m.mean = Eigen::VectorXd::Zero(D);
    for (const auto& s : samples) {
        m.mean += Eigen::Map<const Eigen::VectorXd>(s.data().data(), D);
    }
    m.mean /= n;

    m.variances = Eigen::VectorXd::Zero(D);
    if (full_covariance) {
        m.covariance = Eigen::MatrixXd::Zero(D, D);
    }
    for (const auto& s : samples) {
        const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(s.data().data(), D) - m.mean;
        m.variances += c.cwiseProduct(c);
        if (full_covariance) {
            m.covariance->selfadjointView<Eigen::Lower>().rankUpdate(c);
        }
    }
    m.variances /= (n - 1.0);
    if (full_covariance) {
        Eigen::MatrixXd full = m.covariance->selfadjointView<Eigen::Lower>();
        m.covariance = full / (n - 1.0);
    }
    m.std_errors = (m.variances / n).cwiseSqrt();
    return m;
}

double temporal_autocorr(std::span<const LatentVideo> samples, std::size_t lag) {
    const Dims& d = common_dims(samples);
    if (lag >= d.frames) {
        throw OutOfRange("lag " + std::to_string(lag) + " must be < F = " + std::to_string(d.frames));
    }
    if (samples.size() < 2) {
        throw OutOfRange("temporal autocorrelation needs at least two samples");
    }
    const std::size_t D = d.size();
    std::vector<double> mean(D, 0.0);
    for (const auto& s : samples) {
        for (std::size_t i = 0; i < D; ++i) {
            mean[i] += s[i];
        }
    }
    for (double& m : mean) {
        m /= static_cast<double>(samples.size());
    }
    const std::size_t stride = d.frame_size();
    const std::size_t span = (d.frames - lag) * stride;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (const auto& s : samples) {
        for (std::size_t i = 0; i < span; ++i) {
            const double a = s[i] - mean[i];
            const double b = s[i + lag * stride] - mean[i + lag * stride];
            sab += a * b;
            saa += a * a;
            sbb += b * b;
        }
    }
    if (saa == 0.0 || sbb == 0.0) {
        throw DomainError("temporal autocorrelation undefined for zero-variance samples");
    }
    return sab / std::sqrt(saa * sbb);
}

double flicker_metric(const LatentVideo& x) {
    return flicker_metric(x, std::vector<bool>(x.dims().frame_size(), true));
}

double flicker_metric(const LatentVideo& x, const std::vector<bool>& site_mask) {
    const Dims& d = x.dims();
    if (d.frames < 2) {
        throw OutOfRange("flicker needs at least two frames");
    }
    const std::size_t stride = d.frame_size();
    if (site_mask.size() != stride) {
        throw InvalidShape("flicker mask must have C*H*W = " + std::to_string(stride) + " entries");
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t f = 0; f + 1 < d.frames; ++f) {
        for (std::size_t i = 0; i < stride; ++i) {
            if (site_mask[i]) {
                sum += std::abs(x[(f + 1) * stride + i] - x[f * stride + i]);
                ++count;
            }
        }
    }
    if (count == 0) {
        throw OutOfRange("flicker mask selects no sites");
    }
    return sum / static_cast<double>(count);
}

double gaussian_w2(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
                   const Eigen::MatrixXd& cov2) {
    if (mu1.size() != mu2.size() || cov1.rows() != mu1.size() || cov2.rows() != mu2.size()) {
        throw InvalidShape("gaussian_w2: inconsistent dimensions");
    }
    check_psd(cov1, "cov1");
    check_psd(cov2, "cov2");
    const Eigen::MatrixXd root2 = sym_sqrt(cov2);
    Eigen::MatrixXd cross = root2 * cov1 * root2;
    cross = 0.5 * (cross + cross.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cross, Eigen::EigenvaluesOnly);
    const double cross_trace = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double w2sq = (mu1 - mu2).squaredNorm() + cov1.trace() + cov2.trace() - 2.0 * cross_trace;
    return std::sqrt(std::max(w2sq, 0.0));
}

double gaussian_w2_diagonal(const Eigen::VectorXd& mu1, const Eigen::VectorXd& var1, const Eigen::VectorXd& mu2,
                            const Eigen::VectorXd& var2) {
    if (mu1.size() != mu2.size() || var1.size() != mu1.size() || var2.size() != mu2.size()) {
        throw InvalidShape("gaussian_w2_diagonal: inconsistent dimensions");
    }
    if ((var1.array() < 0.0).any() || (var2.array() < 0.0).any()) {
        throw OutOfRange("gaussian_w2_diagonal: negative variance");
    }
    const double w2sq = (mu1 - mu2).squaredNorm() + (var1.cwiseSqrt() - var2.cwiseSqrt()).squaredNorm();
    return std::sqrt(w2sq);
}

const Metric* MetricReport::find(const std::string& name) const {
    for (const auto& m : metrics) {
        if (m.name == name) {
            return &m;
        }
    }
    return nullptr;
}

const Metric& MetricReport::at(const std::string& name) const {
    if (const Metric* m = find(name)) {
        return *m;
    }
    throw OutOfRange("no metric named '" + name + "'");
}

std::string MetricReport::to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& m : metrics) {
        j.push_back({{"name", m.name}, {"value", m.value}, {"half_width", m.half_width}, {"n", m.n}});
    }
    return nlohmann::ordered_json{{"metrics", j}}.dump(2) + "\n";
}

std::string MetricReport::to_csv() const {
    std::ostringstream out;
    out << "name,value,half_width,n\n";
    out << std::setprecision(17);
    for (const auto& m : metrics) {
        out << m.name << ',' << m.value << ',' << m.half_width << ',' << m.n << '\n';
    }
    return out.str();
}

MetricReport compute_metrics(std::span<const LatentVideo> samples, const MetricOptions& options) {
    const Dims& d = common_dims(samples);
    const std::size_t n = samples.size();
    const std::size_t D = d.size();
    const std::size_t stride = d.frame_size();
    MetricReport report;

    // Pooled entry statistics.
    {
        double sum = 0.0, sumsq = 0.0;
        for (const auto& s : samples) {
            for (double x : s.data()) {
                sum += x;
            }
        }
        const double N = static_cast<double>(n * D);
        const double mean = sum / N;
        for (const auto& s : samples) {
            for (double x : s.data()) {
                sumsq += (x - mean) * (x - mean);
            }
        }
        const double var = N > 1 ? sumsq / (N - 1.0) : 0.0;
        report.metrics.push_back({"mean", mean, kZ95 * std::sqrt(var / N), n * D});
        report.metrics.push_back({"var", var, N > 1 ? kZ95 * var * std::sqrt(2.0 / (N - 1.0)) : 0.0, n * D});
    }

    if (options.per_frame) {
        for (std::size_t f = 0; f < d.frames; ++f) {
            double sum = 0.0, sumsq = 0.0;
            for (const auto& s : samples) {
                for (double x : s.frame(f)) {
                    sum += x;
                }
            }
            const double N = static_cast<double>(n * stride);
            const double mean = sum / N;
            for (const auto& s : samples) {
                for (double x : s.frame(f)) {
                    sumsq += (x - mean) * (x - mean);
                }
            }
            const double var = N > 1 ? sumsq / (N - 1.0) : 0.0;
            const std::string tag = "[" + std::to_string(f) + "]";
            report.metrics.push_back({"frame_mean" + tag, mean, kZ95 * std::sqrt(var / N), n * stride});
            report.metrics.push_back(
                {"frame_var" + tag, var, N > 1 ? kZ95 * var * std::sqrt(2.0 / (N - 1.0)) : 0.0, n * stride});
        }
    }

    if (n >= 2) {
        for (std::size_t lag : options.lags) {
            if (lag == 0 || lag >= d.frames) {
                continue;
            }
            const double r = temporal_autocorr(samples, lag);
            const double pairs = static_cast<double>(n * (d.frames - lag) * stride);
            report.metrics.push_back({"temporal_autocorr[" + std::to_string(lag) + "]", r,
                                      kZ95 * std::max(1.0 - r * r, 1e-12) / std::sqrt(pairs),
                                      n});
        }
    }

    if (options.flicker && d.frames >= 2) {
        double sum = 0.0, sumsq = 0.0;
        std::vector<double> values;
        values.reserve(n);
        for (const auto& s : samples) {
            values.push_back(flicker_metric(s));
            sum += values.back();
        }
        const double mean = sum / static_cast<double>(n);
        for (double v : values) {
            sumsq += (v - mean) * (v - mean);
        }
        const double hw = n > 1 ? kZ95 * std::sqrt(sumsq / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
        report.metrics.push_back({"flicker", mean, hw, n});
    }

    if (options.target != nullptr && n >= 2) {
        if (options.target->dims() != d) {
            throw InvalidShape("target dims " + options.target->dims().to_string() + " differ from samples " +
                               d.to_string());
        }
        const Eigen::VectorXd tmean = options.target->mean_vector();
        const Eigen::VectorXd tvar = options.target->variances();
        auto w2_of = [&](auto&& index_of) {
            const auto Dn = static_cast<Eigen::Index>(D);
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(Dn), sq = Eigen::VectorXd::Zero(Dn);
            for (std::size_t k = 0; k < n; ++k) {
                mean += Eigen::Map<const Eigen::VectorXd>(samples[index_of(k)].data().data(), Dn);
            }
            mean /= static_cast<double>(n);
            for (std::size_t k = 0; k < n; ++k) {
                const Eigen::VectorXd c =
                    Eigen::Map<const Eigen::VectorXd>(samples[index_of(k)].data().data(), Dn) - mean;
                sq += c.cwiseProduct(c);
            }
            return gaussian_w2_diagonal(mean, sq / static_cast<double>(n - 1), tmean, tvar);
        };
        const double w2 = w2_of([](std::size_t k) { return k; });

        double hw = 0.0;
        if (options.bootstrap_rounds >= 2) {
            RngStream rng(options.bootstrap_seed, 0);
            std::vector<double> reps;
            for (std::size_t b = 0; b < options.bootstrap_rounds; ++b) {
                std::vector<std::size_t> idx(n);
                for (auto& i : idx) {
                    i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
                }
                reps.push_back(w2_of([&](std::size_t k) { return idx[k]; }));
            }
            double m = 0.0, v = 0.0;
            for (double r : reps) m += r;
            m /= static_cast<double>(reps.size());
            for (double r : reps) v += (r - m) * (r - m);
            hw = kZ95 * std::sqrt(v / static_cast<double>(reps.size() - 1));
        }
        const double root_d = std::sqrt(static_cast<double>(D));
        report.metrics.push_back({"w2_to_target", w2, hw, n});
        report.metrics.push_back({"w2_per_entry", w2 / root_d, hw / root_d, n});
    }
    return report;
}

}  // namespace dmix
