// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "dmix/cli/commands.hpp"
#include "dmix/denoiser.hpp"
#include "dmix/eval.hpp"
#include "dmix/gaussian.hpp"
#include "dmix/mixture.hpp"
#include "dmix/sampler.hpp"
#include "dmix/smoothing.hpp"
#include "dmix/toy_denoiser.hpp"

namespace fs = std::filesystem;
using namespace dmix;

namespace {

constexpr std::size_t kChains = 10000;
const Dims kDims{8, 1, 4, 4};

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [x]");
    }
};

std::string fmt(double x, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

NoiseSchedule sampling_schedule() {
    ScheduleParams p;
    p.sigma_kind = SigmaKind::Beta;
    return NoiseSchedule::make(p);
}

SamplerConfig sampler_config(double gamma = 1.0) {
    SamplerConfig c;
    c.guidance = 2.0;
    c.infer_steps = 50;
    c.entropy.gamma = gamma;
    return c;
}

using ChainFn = std::function<SamplingResult(ChainStreams&)>;

std::vector<LatentVideo> run_chains(std::size_t n, const ChainFn& fn, std::uint64_t base_seed = 100) {
    std::vector<LatentVideo> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto streams = ChainStreams::for_chain(base_seed, base_seed + 1, base_seed + 2, i);
        out.push_back(fn(streams).sample);
    }
    return out;
}

Outcome criterion1() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const NoiseSchedule sched = sampling_schedule();
    const StepMap map = make_step_map(1000, 50);
    const GaussianSpec target = GaussianSpec::standard_normal(kDims);
    const AnalyticDenoiser video(DenoiserKind::Video, target, sched);
    const SamplerConfig cfg = sampler_config();
    const auto samples = run_chains(kChains, [&](ChainStreams& s) {
        return run_single_model_sampling(video, kDims, sched, map, cfg, Condition::null(), s);
    });
    const double secs = seconds_since(t0);

    const MomentSummary m = empirical_moments(samples);
    const double pooled_mean = m.mean.mean();
    const double worst_var = (m.variances.array() - 1.0).abs().maxCoeff();
    const GaussianModel model(target);
    MetricOptions mo;
    mo.target = &model;
    mo.per_frame = false;
    const MetricReport r = compute_metrics(samples, mo);
    const double w2 = r.at("w2_to_target").value;
    const double w2e = r.at("w2_per_entry").value;
    o.check(std::abs(pooled_mean) <= 0.03, "mean " + fmt(pooled_mean, 3));
    o.check(worst_var <= 0.05, "max |var-1| " + fmt(worst_var, 3));
    o.check(w2e < 0.05, "w2/sqrt(D) " + fmt(w2e, 3) + " (raw w2 " + fmt(w2, 3) + ")");
    o.check(secs < 120.0, fmt(secs, 3) + " s");
    return o;
}

GaussianSpec iid_target() {
    GaussianSpec frame;
    frame.dims = kDims.single_frame();
    const std::size_t n = frame.dims.size();
    frame.mean.resize(n);
    std::vector<double> var(n);
    for (std::size_t i = 0; i < n; ++i) {
        frame.mean[i] = 0.5 - 0.05 * static_cast<double>(i % 5);
        var[i] = 0.5 + static_cast<double>(i) / static_cast<double>(n - 1);
    }
    frame.covariance = DiagonalCovariance{var};
    return iid_frames(frame, kDims.frames);
}

Outcome criterion2() {
    Outcome o;
    const NoiseSchedule sched = sampling_schedule();
    const StepMap map = make_step_map(1000, 50);
    const GaussianSpec target = iid_target();
    const AnalyticDenoiser video(DenoiserKind::Video, target, sched);
    const AnalyticDenoiser image(DenoiserKind::Image, frame_marginal(target), sched);
    const GaussianModel model(target);
    const SamplerConfig cfg = sampler_config();

    struct Arm {
        std::string name;
        MetricReport report;
    };
    std::vector<Arm> arms;
    auto evaluate = [&](const std::string& name, const ChainFn& fn) {
        const auto samples = run_chains(kChains, fn);
        MetricOptions mo;
        mo.target = &model;
        mo.per_frame = false;
        arms.push_back({name, compute_metrics(samples, mo)});
    };
    evaluate("video-only", [&](ChainStreams& s) {
        return run_single_model_sampling(video, kDims, sched, map, cfg, Condition::null(), s);
    });
    evaluate("image-only", [&](ChainStreams& s) {
        return run_single_model_sampling(image, kDims, sched, map, cfg, Condition::null(), s);
    });
    for (const auto& [name, policy] : {std::pair{"preset-64", MixturePolicy::preset_64()},
                                       std::pair{"preset-128", MixturePolicy::preset_128()},
                                       std::pair{"preset-256", MixturePolicy::preset_256()}}) {
        evaluate(name, [&, policy = policy](ChainStreams& s) {
            return run_mixture_sampling(video, image, policy, sched, map, cfg, Condition::null(), s);
        });
    }
    double worst = 0.0;
    for (const auto& a : arms) {
        const double w2e = a.report.at("w2_per_entry").value;
        worst = std::max(worst, w2e);
        o.check(w2e < 0.05, a.name + " w2/sqrt(D) " + fmt(w2e, 3));
    }
    bool within = true;
    double worst_ratio = 0.0;
    for (std::size_t i = 0; i < arms.size(); ++i) {
        for (std::size_t j = i + 1; j < arms.size(); ++j) {
            for (const char* name : {"mean", "var", "w2_per_entry"}) {
                const Metric& a = arms[i].report.at(name);
                const Metric& b = arms[j].report.at(name);
                const double tol = std::hypot(a.half_width, b.half_width);
                const double diff = std::abs(a.value - b.value);
                worst_ratio = std::max(worst_ratio, tol > 0 ? diff / tol : (diff > 0 ? INFINITY : 0.0));
                within = within && diff <= tol;
            }
        }
    }
    o.check(within, "max pairwise |diff|/half-width " + fmt(worst_ratio, 3));
    return o;
}

Outcome criterion3() {
    Outcome o;
    const NoiseSchedule sched = sampling_schedule();
    const StepMap map = make_step_map(1000, 50);
    GaussianSpec target;
    target.dims = kDims;
    target.mean.assign(kDims.size(), 0.0);
    target.covariance = Ar1TemporalCovariance{0.9, 1.0};
    const AnalyticDenoiser video(DenoiserKind::Video, target, sched);
    const AnalyticDenoiser image(DenoiserKind::Image, frame_marginal(target), sched);
    const SamplerConfig cfg = sampler_config();

    const double r_video = temporal_autocorr(run_chains(kChains, [&](ChainStreams& s) {
        return run_single_model_sampling(video, kDims, sched, map, cfg, Condition::null(), s);
    }), 1);
    const double r_image = temporal_autocorr(run_chains(kChains, [&](ChainStreams& s) {
        return run_single_model_sampling(image, kDims, sched, map, cfg, Condition::null(), s);
    }), 1);
    const double r_mix = temporal_autocorr(run_chains(kChains, [&](ChainStreams& s) {
        return run_mixture_sampling(video, image, MixturePolicy::preset_128(), sched, map, cfg, Condition::null(), s);
    }), 1);
    o.check(r_image < r_mix && r_mix < r_video,
            "image " + fmt(r_image, 3) + " < mixture " + fmt(r_mix, 3) + " < video " + fmt(r_video, 3));
    o.check(std::abs(r_video - 0.9) <= 0.03, "|video-0.9| " + fmt(std::abs(r_video - 0.9), 3));
    o.check(std::abs(r_image) <= 0.03, "|image| " + fmt(std::abs(r_image), 3));
    return o;
}

Outcome criterion4() {
    Outcome o;
    const Dims one{2, 1, 1, 1};
    constexpr std::size_t kDraws = 100000;
    double worst_corr = 0.0, worst_var = 0.0;
    for (double r : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        RngStream rng(4242, static_cast<std::uint64_t>(r * 100));
        double s0 = 0, s1 = 0, s00 = 0, s11 = 0, s01 = 0;
        for (std::size_t k = 0; k < kDraws; ++k) {
            const LatentVideo z = sample_correlated_noise(one, r, rng);
            s0 += z[0];
            s1 += z[1];
            s00 += z[0] * z[0];
            s11 += z[1] * z[1];
            s01 += z[0] * z[1];
        }
        const double n = kDraws;
        const double m0 = s0 / n, m1 = s1 / n;
        const double v0 = s00 / n - m0 * m0, v1 = s11 / n - m1 * m1;
        const double corr = (s01 / n - m0 * m1) / std::sqrt(v0 * v1);
        worst_corr = std::max(worst_corr, std::abs(corr - r));
        worst_var = std::max({worst_var, std::abs(v0 - 1.0), std::abs(v1 - 1.0)});
    }
    o.check(worst_corr <= 0.01, "max |corr-r| " + fmt(worst_corr, 3));
    o.check(worst_var <= 0.02, "max |var-1| " + fmt(worst_var, 3));

    // gamma = 0: the step-noise stream must not influence the result.
    const NoiseSchedule sched = sampling_schedule();
    const StepMap map = make_step_map(1000, 50);
    GaussianSpec target;
    target.dims = kDims;
    target.mean.assign(kDims.size(), 0.0);
    target.covariance = Ar1TemporalCovariance{0.6, 1.0};
    const AnalyticDenoiser video(DenoiserKind::Video, target, sched);
    const AnalyticDenoiser image(DenoiserKind::Image, frame_marginal(target), sched);
    SamplerConfig cfg = sampler_config(0.0);
    cfg.entropy.r_video = 0.5;
    cfg.entropy.r_image = 0.25;
    bool identical = true;
    for (std::uint64_t chain = 0; chain < 20; ++chain) {
        auto a = ChainStreams::for_chain(7, 1000, 9, chain);
        auto b = ChainStreams::for_chain(7, 2000 + chain, 9, chain);
        const auto ra = run_mixture_sampling(video, image, MixturePolicy::preset_128(), sched, map, cfg,
                                             Condition::null(), a);
        const auto rb = run_mixture_sampling(video, image, MixturePolicy::preset_128(), sched, map, cfg,
                                             Condition::null(), b);
        identical = identical && ra.sample == rb.sample;
    }
    o.check(identical, "gamma=0 bit-identical across step-noise seeds");
    return o;
}

LatentVideo moving_square(RngStream& rng) {
    const Dims d{6, 1, 8, 8};
    LatentVideo x(d);
    for (std::size_t f = 0; f < d.frames; ++f) {
        for (std::size_t h = 0; h < d.height; ++h) {
            for (std::size_t w = 0; w < d.width; ++w) {
                x.at(f, 0, h, w) = 0.5 + 0.2 * (rng.uniform() - 0.5);
            }
        }
        for (std::size_t h = 3; h <= 4; ++h) {
            for (std::size_t w = f; w <= f + 1; ++w) {
                x.at(f, 0, h, w) = 10.0;
            }
        }
    }
    return x;
}

bool on_square(std::size_t f, std::size_t h, std::size_t w) { return h >= 3 && h <= 4 && w >= f && w <= f + 1; }

LatentVideo random_tensor(RngStream& rng) {
    const Dims d{1 + static_cast<std::size_t>(rng.uniform() * 6), 1 + static_cast<std::size_t>(rng.uniform() * 3),
                 1 + static_cast<std::size_t>(rng.uniform() * 5), 1 + static_cast<std::size_t>(rng.uniform() * 5)};
    return sample_standard_normal(d, rng);
}

Outcome criterion5() {
    Outcome o;
    RngStream rng(55, 0);
    const LatentVideo x = moving_square(rng);
    const Dims& d = x.dims();
    const LatentVideo y = temporal_smooth(x, SmoothingConfig{2.0, 1e-8});

    std::vector<bool> background(d.frame_size(), true);
    for (std::size_t f = 0; f < d.frames; ++f) {
        for (std::size_t h = 0; h < d.height; ++h) {
            for (std::size_t w = 0; w < d.width; ++w) {
                if (on_square(f, h, w)) background[h * d.width + w] = false;
            }
        }
    }
    const double before = flicker_metric(x, background);
    const double after = flicker_metric(y, background);
    o.check(after == 0.0, "background flicker " + fmt(before, 3) + " -> " + fmt(after, 3));
    bool square_same = true;
    for (std::size_t f = 0; f < d.frames; ++f) {
        for (std::size_t h = 0; h < d.height; ++h) {
            for (std::size_t w = 0; w < d.width; ++w) {
                if (on_square(f, h, w)) square_same = square_same && y.at(f, 0, h, w) == x.at(f, 0, h, w);
            }
        }
    }
    o.check(square_same, "square sites bit-identical");

    bool monotone = true, noop = true;
    RngStream prng(56, 0);
    for (int k = 0; k < 1000; ++k) {
        const LatentVideo t = random_tensor(prng);
        noop = noop && temporal_smooth(t, SmoothingConfig{0.0, 1e-8}) == t;
        const double lo = 3.0 * prng.uniform(), hi = lo + 3.0 * prng.uniform();
        const auto mlo = smoothing_mask(t, SmoothingConfig{lo, 1e-8});
        const auto mhi = smoothing_mask(t, SmoothingConfig{hi, 1e-8});
        for (std::size_t i = 0; i < mlo.size(); ++i) monotone = monotone && (!mlo[i] || mhi[i]);
    }
    o.check(monotone, "threshold monotonicity x1000");
    o.check(noop, "no-op at threshold 0 x1000");
    return o;
}

Outcome criterion6() {
    Outcome o;
    struct Row {
        MixturePolicy p;
        double at0, at_te, at1;
    };
    // Table values: P_V(0) = 1, P_V(t_e) = p_e, P_V(1) = p_f.
    const Row rows[] = {{MixturePolicy::preset_64(), 1.0, 0.3, 0.3},
                        {MixturePolicy::preset_128(), 1.0, 0.4, 0.1},
                        {MixturePolicy::preset_256(), 1.0, 0.2, 0.1}};
    int exact = 0;
    for (const auto& r : rows) {
        exact += p_video(r.p, 0.0) == r.at0;
        exact += p_video(r.p, r.p.t_e) == r.at_te;
        exact += p_video(r.p, 1.0) == r.at1;
    }
    o.check(exact == 9, std::to_string(exact) + "/9 endpoint values exact");

    RngStream rng(66, 0);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        MixturePolicy p;
        p.t_v = 0.9 * rng.uniform();
        p.t_e = p.t_v + 1e-3 + (1.0 - p.t_v - 1e-3) * rng.uniform();
        p.p_e = rng.uniform();
        p.p_f = rng.uniform();
        p.validate();
        for (double knot : {p.t_v, p.t_e}) {
            const double left = p_video(p, std::nextafter(knot, 0.0));
            const double right = p_video(p, std::nextafter(knot, 1.0));
            const double at = p_video(p, knot);
            worst = std::max({worst, std::abs(left - at), std::abs(right - at)});
        }
    }
    o.check(worst <= 1e-12, "max jump at knots " + fmt(worst, 3) + " over 1000 policies");
    return o;
}

Outcome criterion7() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const NoiseSchedule sched = NoiseSchedule::make(ScheduleParams{});
    const Dims scalar{1, 1, 1, 1};
    const TrainingData data({TrainingSource{GaussianSpec::standard_normal(scalar), std::nullopt}});
    ToyTrainConfig cfg;
    cfg.steps = 5000;
    cfg.seed = 7;
    const TrainingResult result = train_toy_denoiser(data, sched, cfg);
    const double secs = seconds_since(t0);

    RngStream held(77, 0);
    const TrainingBatch batch = data.draw(sched, 20000, 0.0, 0.0, held);
    const AnalyticDenoiser oracle(DenoiserKind::Video, GaussianSpec::standard_normal(scalar), sched);
    const double floor = evaluate_mse(oracle, batch);
    const double mse = evaluate_mse(result.model, batch);
    o.check(mse <= 1.15 * floor, "MSE " + fmt(mse, 4) + " vs floor " + fmt(floor, 4) + " (ratio " +
                                     fmt(mse / floor, 4) + ")");
    o.check(secs < 60.0, fmt(secs, 3) + " s");

    // Central finite differences on a small conditional model.
    ToyArchitecture arch;
    arch.input_dims = Dims{2, 1, 1, 2};
    arch.hidden_width = 5;
    arch.embed_dim = 4;
    arch.num_classes = 2;
    const ToyDenoiser model = ToyDenoiser::initialize(arch, 3);
    const TrainingData small({TrainingSource{GaussianSpec::standard_normal(arch.input_dims), 0},
                              TrainingSource{GaussianSpec::standard_normal(arch.input_dims), 1}});
    RngStream brng(78, 0);
    const TrainingBatch fd_batch = small.draw(sched, 6, 0.3, 0.1, brng);
    std::vector<double> grad;
    model.loss_and_gradient(fd_batch, grad);
    double worst = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        auto p = model.parameters();
        const double h = 1e-6 * std::max(1.0, std::abs(p[i]));
        p[i] += h;
        const double up = ToyDenoiser(arch, p).loss(fd_batch);
        p[i] -= 2 * h;
        const double down = ToyDenoiser(arch, p).loss(fd_batch);
        const double fd = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(fd - grad[i]) / std::max(std::abs(fd) + std::abs(grad[i]), 1e-6));
    }
    o.check(worst <= 1e-4, "max relative gradient error " + fmt(worst, 3) + " over " +
                               std::to_string(grad.size()) + " params");
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

bool same_outputs(const fs::path& a, const fs::path& b, const std::string& ext, std::size_t& compared) {
    bool ok = true;
    for (const auto& e : fs::directory_iterator(a)) {
        const std::string name = e.path().filename().string();
        if (!name.ends_with(ext)) continue;
        ++compared;
        ok = ok && fs::exists(b / name) && slurp(e.path()) == slurp(b / name);
    }
    return ok;
}

Outcome criterion8() {
    Outcome o;
    const fs::path root = fs::temp_directory_path() / "dmix_acceptance_c8";
    fs::remove_all(root);
    fs::create_directories(root);
    std::ostringstream sink;

    write_file(root / "toy.json", R"({"target": {"dims": [4, 1, 2, 2], "covariance": {"kind": "ar1-temporal", "rho": 0.8}},
      "steps": 200, "batch": 16, "seed": 11})");
    write_file(root / "toy_image.json", R"({"target": {"dims": [1, 1, 2, 2]}, "kind": "image", "steps": 200, "batch": 16})");
    int rc = dmix::cli::cmd_train_toy({root / "toy.json", {}, root / "toy_a"}, sink, sink);
    rc |= dmix::cli::cmd_train_toy({root / "toy_image.json", {}, root / "toy_img"}, sink, sink);
    rc |= dmix::cli::cmd_train_toy({root / "toy_a" / "manifest.json", {}, root / "toy_b"}, sink, sink);
    std::size_t compared = 0;
    const bool toy_same = rc == 0 && same_outputs(root / "toy_a", root / "toy_b", ".f32", compared) && compared > 0;
    o.check(toy_same, "train-toy replay (" + std::to_string(compared) + " files)");

    write_file(root / "analytic.json", R"({"dims": [8, 1, 4, 4], "chains": 6, "jobs": 3,
      "entropy": {"r_video": 0.3, "r_image": 0.6},
      "video_denoiser": {"type": "analytic", "target": {"mean": 0.2, "covariance": {"kind": "ar1-temporal", "rho": 0.9}}},
      "image_denoiser": {"type": "analytic", "target": "frame-marginal"}})");
    write_file(root / "toy_run.json", R"({"dims": [4, 1, 2, 2], "chains": 3, "preset": "256", "sampler": "ddim",
      "video_denoiser": {"type": "toy", "path": "toy_a/toy"},
      "image_denoiser": {"type": "toy", "path": "toy_img/toy"}})");
    for (const char* name : {"analytic", "toy_run"}) {
        const fs::path first = root / (std::string(name) + "_a");
        const fs::path again = root / (std::string(name) + "_b");
        int r = dmix::cli::cmd_sample({root / (std::string(name) + ".json"), {}, first, std::nullopt}, sink, sink);
        r |= dmix::cli::cmd_sample({first / "manifest.json", {}, again, std::size_t{1}}, sink, sink);
        compared = 0;
        const bool same = r == 0 && same_outputs(first, again, ".lvt", compared) && compared > 0;
        o.check(same, std::string(name) + " sample replay (" + std::to_string(compared) + " .lvt)");
    }

    write_file(root / "sweep.json", R"({"base": "analytic.json", "axes": [{"key": "entropy.gamma", "values": [0.1, 1.0]}],
      "output_dir": "sweep_a"})");
    int r = dmix::cli::cmd_sweep({root / "sweep.json", std::nullopt, std::nullopt}, sink, sink);
    bool sweep_ok = r == 0;
    for (const char* run : {"run_0000", "run_0001"}) {
        const fs::path again = root / "sweep_replay" / run;
        r = dmix::cli::cmd_sample({root / "sweep_a" / run / "manifest.json", {}, again, std::nullopt}, sink, sink);
        compared = 0;
        sweep_ok = sweep_ok && r == 0 && same_outputs(root / "sweep_a" / run, again, ".lvt", compared) && compared > 0;
    }
    o.check(sweep_ok, "sweep runs replay");
    fs::remove_all(root);
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"distributional correctness", criterion1}, {"interchangeability", criterion2},
        {"mixture ordering", criterion3},           {"entropy reduction", criterion4},
        {"smoothing", criterion5},                  {"p_video policy", criterion6},
        {"training loop", criterion7},              {"reproducibility", criterion8}};
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failures += o.pass ? 0 : 1;
        std::printf("criterion %zu %-28s %s  %s\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
