// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <variant>
#include <vector>

#include "dmix/denoiser.hpp"
#include "dmix/gaussian.hpp"

namespace dmix {

/// Sinusoidal timestep embedding: pairs (sin(t w_i), cos(t w_i)) with
/// w_i = 10000^(-i / (dim / 2)). dim must be even.
std::vector<double> timestep_embedding(Timestep t, std::size_t dim);

struct ToyArchitecture {
    Dims input_dims;
    std::size_t hidden_width = 64;
    std::size_t embed_dim = 16;
    std::size_t num_classes = 0;  ///< one-hot has num_classes + 1 slots; the last is the null label
    DenoiserKind kind = DenoiserKind::Video;

    std::size_t input_size() const noexcept { return input_dims.size() + embed_dim + num_classes + 1; }
    std::size_t parameter_count() const noexcept {
        return hidden_width * input_size() + hidden_width + input_dims.size() * hidden_width + input_dims.size();
    }
    void validate() const;

    friend bool operator==(const ToyArchitecture&, const ToyArchitecture&) = default;
};

/// Noisy inputs and their regression targets.
struct TrainingBatch {
    std::vector<LatentVideo> noisy;
    std::vector<Timestep> timesteps;
    std::vector<Condition> conditions;
    std::vector<LatentVideo> targets;

    std::size_t size() const noexcept { return noisy.size(); }
};

/// Two-layer perceptron eps-predictor:
///   [s_t, embed(t), onehot(y)] -> tanh(W1 x + b1) -> W2 h + b2.
///
/// Parameters are stored flat as W1 (row-major), b1, W2 (row-major), b2.
class ToyDenoiser final : public Denoiser {
public:
    ToyDenoiser(ToyArchitecture arch, std::vector<double> parameters);

    /// Xavier-style normal initialization from (seed, stream 0).
    static ToyDenoiser initialize(const ToyArchitecture& arch, std::uint64_t seed);

    DenoiserKind kind() const noexcept override { return arch_.kind; }
    Dims input_dims() const override { return arch_.input_dims; }
    bool supports_conditioning() const noexcept override { return arch_.num_classes > 0; }

    const ToyArchitecture& architecture() const noexcept { return arch_; }
    const std::vector<double>& parameters() const noexcept { return params_; }

    /// Mean squared error over every entry of the batch.
    double loss(const TrainingBatch& batch) const;
    /// Loss plus its gradient with respect to parameters().
    double loss_and_gradient(const TrainingBatch& batch, std::vector<double>& grad) const;

    /// Writes <prefix>.f32 (flat little-endian f32) and <prefix>.json.
    void save(const std::filesystem::path& prefix) const;
    static ToyDenoiser load(const std::filesystem::path& prefix);

protected:
    LatentVideo do_predict(const LatentVideo& s_t, Timestep t, const Condition& cond) const override;

private:
    std::vector<double> assemble_input(std::span<const double> s_t, Timestep t, const Condition& cond) const;

    ToyArchitecture arch_;
    std::vector<double> params_;
};

std::filesystem::path toy_parameter_path(const std::filesystem::path& prefix);
std::filesystem::path toy_sidecar_path(const std::filesystem::path& prefix);

/// Where training samples come from: a Gaussian target or a finite sample set,
/// optionally tagged with a class id.
struct TrainingSource {
    std::variant<GaussianSpec, std::vector<LatentVideo>> data;
    std::optional<int> class_id;
};

struct ToyTrainConfig {
    std::size_t steps = 5000;
    std::size_t batch = 64;
    double learning_rate = 1e-3;
    std::size_t warmup_steps = 500;  ///< linear ramp, then constant
    double prompt_drop_prob = 0.3;
    double noise_offset = 0.1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;  ///< decoupled (AdamW); 0 gives plain Adam
    std::size_t hidden_width = 64;
    std::size_t embed_dim = 16;
    std::uint64_t seed = 0;
    DenoiserKind kind = DenoiserKind::Video;

    void validate() const;
};

/// Prepared sources; draws training batches.
class TrainingData {
public:
    explicit TrainingData(std::vector<TrainingSource> sources);

    const Dims& dims() const noexcept { return dims_; }
    std::size_t num_classes() const noexcept { return num_classes_; }

    /// For every item: pick a source, draw s0, t ~ U{1..T}, noise
    /// eps = eps_base + offset * o (o one draw per (frame, channel) broadcast
    /// over h, w), s_t by the forward process, and drop the label with
    /// probability prompt_drop_prob.
    TrainingBatch draw(const NoiseSchedule& sched, std::size_t size, double prompt_drop_prob, double noise_offset,
                       RngStream& rng) const;

private:
    struct Prepared {
        std::optional<GaussianModel> gaussian;
        std::vector<LatentVideo> samples;
        std::optional<int> class_id;
    };

    Dims dims_{};
    std::size_t num_classes_ = 0;
    std::vector<Prepared> sources_;
};

struct TrainingResult {
    ToyDenoiser model;
    std::vector<double> loss_curve;  ///< one entry per optimizer step
};

/// Adam training of a ToyDenoiser on the eps-prediction MSE. Throws
/// TrainingFailure with the 1-based step index if the loss or parameters
/// become non-finite.
TrainingResult train_toy_denoiser(const TrainingData& data, const NoiseSchedule& sched, const ToyTrainConfig& cfg);

/// Mean squared error of any denoiser's eps prediction on a batch.
double evaluate_mse(const Denoiser& d, const TrainingBatch& batch);

}  // namespace dmix
