// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmix/toy_denoiser.hpp"

#include <Eigen/Dense>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <tuple>
#include <type_traits>
#include <nlohmann/json.hpp>

#include "dmix/error.hpp"

namespace dmix {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Ptr>
auto views(const ToyArchitecture& a, Ptr base) {
    const auto H = static_cast<Eigen::Index>(a.hidden_width);
    const auto I = static_cast<Eigen::Index>(a.input_size());
    const auto D = static_cast<Eigen::Index>(a.input_dims.size());
    Ptr w1 = base;
    Ptr b1 = w1 + H * I;
    Ptr w2 = b1 + H;
    Ptr b2 = w2 + D * H;
    using Scalar = std::remove_pointer_t<Ptr>;
    using M = std::conditional_t<std::is_const_v<Scalar>, const RowMatrix, RowMatrix>;
    using V = std::conditional_t<std::is_const_v<Scalar>, const Eigen::VectorXd, Eigen::VectorXd>;
    return std::make_tuple(Eigen::Map<M>(w1, H, I), Eigen::Map<V>(b1, H), Eigen::Map<M>(w2, D, H),
                           Eigen::Map<V>(b2, D));
}

}  // namespace

std::vector<double> timestep_embedding(Timestep t, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) {
        throw OutOfRange("embedding dimension must be positive and even");
    }
    const std::size_t half = dim / 2;
    std::vector<double> e(dim);
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
        const double arg = static_cast<double>(t) * freq;
        e[2 * i] = std::sin(arg);
        e[2 * i + 1] = std::cos(arg);
    }
    return e;
}

void ToyArchitecture::validate() const {
    input_dims.validate();
    if (hidden_width == 0) {
        throw OutOfRange("hidden_width must be >= 1");
    }
    if (embed_dim == 0 || embed_dim % 2 != 0) {
        throw OutOfRange("embed_dim must be positive and even");
    }
    if (kind == DenoiserKind::Image && input_dims.frames != 1) {
        throw InvalidShape("an image toy denoiser takes one frame, got " + input_dims.to_string());
    }
}

ToyDenoiser::ToyDenoiser(ToyArchitecture arch, std::vector<double> parameters)
    : arch_(arch), params_(std::move(parameters)) {
    arch_.validate();
    if (params_.size() != arch_.parameter_count()) {
        throw InvalidShape("toy denoiser expects " + std::to_string(arch_.parameter_count()) + " parameters, got " +
                           std::to_string(params_.size()));
    }
    for (double p : params_) {
        if (!std::isfinite(p)) {
            throw DomainError("toy denoiser parameters must be finite");
        }
    }
}

ToyDenoiser ToyDenoiser::initialize(const ToyArchitecture& arch, std::uint64_t seed) {
    arch.validate();
    std::vector<double> params(arch.parameter_count(), 0.0);
    RngStream rng(seed, 0);
    auto [w1, b1, w2, b2] = views(arch, params.data());
    const double s1 = 1.0 / std::sqrt(static_cast<double>(arch.input_size()));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(arch.hidden_width));
    for (Eigen::Index i = 0; i < w1.size(); ++i) {
        w1.data()[i] = s1 * rng.normal();
    }
    for (Eigen::Index i = 0; i < w2.size(); ++i) {
        w2.data()[i] = s2 * rng.normal();
    }
    return ToyDenoiser(arch, std::move(params));
}

std::vector<double> ToyDenoiser::assemble_input(std::span<const double> s_t, Timestep t, const Condition& cond) const {
    std::vector<double> x;
    x.reserve(arch_.input_size());
    x.insert(x.end(), s_t.begin(), s_t.end());
    const auto emb = timestep_embedding(t, arch_.embed_dim);
    x.insert(x.end(), emb.begin(), emb.end());
    std::vector<double> onehot(arch_.num_classes + 1, 0.0);
    if (cond.is_null()) {
        onehot.back() = 1.0;
    } else {
        const auto id = static_cast<std::size_t>(cond.class_id());
        if (id >= arch_.num_classes) {
            throw OutOfRange("class id " + std::to_string(id) + " outside the model's " +
                             std::to_string(arch_.num_classes) + " classes");
        }
        onehot[id] = 1.0;
    }
    x.insert(x.end(), onehot.begin(), onehot.end());
    return x;
}

LatentVideo ToyDenoiser::do_predict(const LatentVideo& s_t, Timestep t, const Condition& cond) const {
    const auto [w1, b1, w2, b2] = views(arch_, params_.data());
    const std::vector<double> x = assemble_input(s_t.data(), t, cond);
    const Eigen::VectorXd h =
        (w1 * Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())) + b1)
            .array()
            .tanh()
            .matrix();
    LatentVideo out(arch_.input_dims);
    Eigen::Map<Eigen::VectorXd>(out.data().data(), static_cast<Eigen::Index>(out.size())) = w2 * h + b2;
    return out;
}

double ToyDenoiser::loss(const TrainingBatch& batch) const {
    return evaluate_mse(*this, batch);
}

double ToyDenoiser::loss_and_gradient(const TrainingBatch& batch, std::vector<double>& grad) const {
    if (batch.size() == 0) {
        throw OutOfRange("empty training batch");
    }
    grad.assign(params_.size(), 0.0);
    const auto [w1, b1, w2, b2] = views(arch_, params_.data());
    auto [gw1, gb1, gw2, gb2] = views(arch_, grad.data());
    const auto D = static_cast<Eigen::Index>(arch_.input_dims.size());
    const double scale = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(D));
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (batch.noisy[b].dims() != arch_.input_dims || batch.targets[b].dims() != arch_.input_dims) {
            throw InvalidShape("training batch item has dims " + batch.noisy[b].dims().to_string());
        }
        const std::vector<double> xin = assemble_input(batch.noisy[b].data(), batch.timesteps[b], batch.conditions[b]);
        const Eigen::Map<const Eigen::VectorXd> x(xin.data(), static_cast<Eigen::Index>(xin.size()));
        const Eigen::VectorXd h = (w1 * x + b1).array().tanh().matrix();
        const Eigen::VectorXd y = w2 * h + b2;
        const Eigen::VectorXd err = y - Eigen::Map<const Eigen::VectorXd>(batch.targets[b].data().data(), D);
        total += err.squaredNorm();

        const Eigen::VectorXd dy = 2.0 * scale * err;
        gw2.noalias() += dy * h.transpose();
        gb2 += dy;
        const Eigen::VectorXd da = (w2.transpose() * dy).cwiseProduct((1.0 - h.array().square()).matrix());
        gw1.noalias() += da * x.transpose();
        gb1 += da;
    }
    return total * scale;
}

std::filesystem::path toy_parameter_path(const std::filesystem::path& prefix) {
    return std::filesystem::path(prefix.string() + ".f32");
}

std::filesystem::path toy_sidecar_path(const std::filesystem::path& prefix) {
    return std::filesystem::path(prefix.string() + ".json");
}

void ToyDenoiser::save(const std::filesystem::path& prefix) const {
    {
        std::ofstream out(toy_parameter_path(prefix), std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write " + toy_parameter_path(prefix).string());
        }
        for (double p : params_) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(p));
            const char bytes[4] = {static_cast<char>(bits), static_cast<char>(bits >> 8),
                                   static_cast<char>(bits >> 16), static_cast<char>(bits >> 24)};
            out.write(bytes, 4);
        }
    }
    const Dims& d = arch_.input_dims;
    nlohmann::ordered_json j;
    j["hidden_width"] = arch_.hidden_width;
    j["embed_dim"] = arch_.embed_dim;
    j["num_classes"] = arch_.num_classes;
    j["input_dims"] = {d.frames, d.channels, d.height, d.width};
    j["kind"] = to_string(arch_.kind);
    j["parameter_count"] = params_.size();
    std::ofstream side(toy_sidecar_path(prefix), std::ios::trunc);
    if (!side) {
        throw IoError("cannot write " + toy_sidecar_path(prefix).string());
    }
    side << j.dump(2) << '\n';
}

ToyDenoiser ToyDenoiser::load(const std::filesystem::path& prefix) {
    ToyArchitecture arch;
    try {
        std::ifstream side(toy_sidecar_path(prefix));
        if (!side) {
            throw IoError("cannot open " + toy_sidecar_path(prefix).string());
        }
        const auto j = nlohmann::json::parse(side);
        arch.hidden_width = j.at("hidden_width").get<std::size_t>();
        arch.embed_dim = j.at("embed_dim").get<std::size_t>();
        arch.num_classes = j.at("num_classes").get<std::size_t>();
        const auto dims = j.at("input_dims").get<std::vector<std::size_t>>();
        if (dims.size() != 4) {
            throw IoError("input_dims must have four entries");
        }
        arch.input_dims = {dims[0], dims[1], dims[2], dims[3]};
        const auto kind = j.value("kind", std::string("video"));
        if (kind != "video" && kind != "image") {
            throw IoError("unknown denoiser kind '" + kind + "'");
        }
        arch.kind = kind == "video" ? DenoiserKind::Video : DenoiserKind::Image;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(toy_sidecar_path(prefix).string() + ": " + e.what());
    }
    std::ifstream in(toy_parameter_path(prefix), std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + toy_parameter_path(prefix).string());
    }
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() != 4 * arch.parameter_count()) {
        throw IoError(toy_parameter_path(prefix).string() + " holds " + std::to_string(bytes.size() / 4) +
                      " values, expected " + std::to_string(arch.parameter_count()));
    }
    std::vector<double> params(arch.parameter_count());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                                   (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                                   (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                                   (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
        params[i] = std::bit_cast<float>(bits);
    }
    return ToyDenoiser(arch, std::move(params));
}

void ToyTrainConfig::validate() const {
    if (batch == 0) {
        throw OutOfRange("batch must be >= 1");
    }
    if (!(prompt_drop_prob >= 0.0 && prompt_drop_prob <= 1.0)) {
        throw OutOfRange("prompt_drop_prob must lie in [0, 1]");
    }
    if (!(noise_offset >= 0.0) || !std::isfinite(noise_offset)) {
        throw OutOfRange("noise_offset must be finite and >= 0");
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw OutOfRange("Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) {
        throw OutOfRange("adam_eps must be > 0");
    }
    if (!(weight_decay >= 0.0)) {
        throw OutOfRange("weight_decay must be >= 0");
    }
}

TrainingData::TrainingData(std::vector<TrainingSource> sources) {
    if (sources.empty()) {
        throw OutOfRange("training needs at least one source");
    }
    bool first = true;
    for (auto& src : sources) {
        Prepared p;
        p.class_id = src.class_id;
        Dims d;
        if (auto* spec = std::get_if<GaussianSpec>(&src.data)) {
            p.gaussian.emplace(std::move(*spec));
            d = p.gaussian->dims();
        } else {
            p.samples = std::move(std::get<std::vector<LatentVideo>>(src.data));
            if (p.samples.empty()) {
                throw OutOfRange("finite training source is empty");
            }
            d = p.samples.front().dims();
            for (const auto& s : p.samples) {
                if (s.dims() != d) {
                    throw InvalidShape("training samples have mixed dims");
                }
            }
        }
        if (first) {
            dims_ = d;
            first = false;
        } else if (d != dims_) {
            throw InvalidShape("training sources have mixed dims");
        }
        if (p.class_id) {
            if (*p.class_id < 0) {
                throw OutOfRange("class id must be >= 0");
            }
            num_classes_ = std::max(num_classes_, static_cast<std::size_t>(*p.class_id) + 1);
        }
        sources_.push_back(std::move(p));
    }
}

TrainingBatch TrainingData::draw(const NoiseSchedule& sched, std::size_t size, double prompt_drop_prob,
                                 double noise_offset, RngStream& rng) const {
    TrainingBatch batch;
    const std::size_t T = sched.steps();
    auto pick = [&rng](std::size_t n) {
        return std::min(static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)), n - 1);
    };
    for (std::size_t k = 0; k < size; ++k) {
        const Prepared& src = sources_[pick(sources_.size())];
        LatentVideo s0 = src.gaussian ? src.gaussian->sample(rng) : src.samples[pick(src.samples.size())];
        const Timestep t = 1 + pick(T);
        LatentVideo eps = sample_standard_normal(dims_, rng);
        const std::size_t plane = dims_.plane_size();
        for (std::size_t fc = 0; fc < dims_.frames * dims_.channels; ++fc) {
            const double o = rng.normal();
            for (std::size_t p = 0; p < plane; ++p) {
                eps[fc * plane + p] += noise_offset * o;
            }
        }
        const bool drop = rng.uniform() < prompt_drop_prob;
        const Condition cond = (src.class_id && !drop) ? Condition::label(*src.class_id) : Condition::null();
        batch.noisy.push_back(forward_perturb(s0, t, eps, sched));
        batch.timesteps.push_back(t);
        batch.conditions.push_back(cond);
        batch.targets.push_back(std::move(eps));
    }
    return batch;
}

TrainingResult train_toy_denoiser(const TrainingData& data, const NoiseSchedule& sched, const ToyTrainConfig& cfg) {
    cfg.validate();
    ToyArchitecture arch;
    arch.input_dims = data.dims();
    arch.hidden_width = cfg.hidden_width;
    arch.embed_dim = cfg.embed_dim;
    arch.num_classes = data.num_classes();
    arch.kind = cfg.kind;

    ToyDenoiser model = ToyDenoiser::initialize(arch, cfg.seed);
    std::vector<double> params = model.parameters();
    std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0), grad;
    std::vector<double> curve;
    curve.reserve(cfg.steps);
    RngStream rng(cfg.seed, 1);

    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        const TrainingBatch batch = data.draw(sched, cfg.batch, cfg.prompt_drop_prob, cfg.noise_offset, rng);
        const double loss = ToyDenoiser(arch, params).loss_and_gradient(batch, grad);
        if (!std::isfinite(loss)) {
            throw TrainingFailure(step, "loss is not finite");
        }
        curve.push_back(loss);

        const double warm = cfg.warmup_steps == 0
                                ? 1.0
                                : std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.warmup_steps));
        const double lr = cfg.learning_rate * warm;
        const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * grad[i];
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
            const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
            params[i] -= lr * (update + cfg.weight_decay * params[i]);
            if (!std::isfinite(params[i])) {
                throw TrainingFailure(step, "parameters diverged");
            }
        }
    }
    return {ToyDenoiser(arch, std::move(params)), std::move(curve)};
}

double evaluate_mse(const Denoiser& d, const TrainingBatch& batch) {
    if (batch.size() == 0) {
        throw OutOfRange("empty batch");
    }
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const LatentVideo eps = d.predict_eps(batch.noisy[b], batch.timesteps[b], batch.conditions[b]);
        for (std::size_t i = 0; i < eps.size(); ++i) {
            const double e = eps[i] - batch.targets[b][i];
            total += e * e;
        }
        count += eps.size();
    }
    return total / static_cast<double>(count);
}

}  // namespace dmix
