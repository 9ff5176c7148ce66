// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>

#include "dmix/cli/commands.hpp"
#include "dmix/cli/config.hpp"
#include "dmix/eval.hpp"
#include "dmix/mixture.hpp"
#include "dmix/smoothing.hpp"

namespace py = pybind11;

namespace dmix {
namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

LatentVideo to_latent(const Array& a) {
    if (a.ndim() != 4) {
        throw InvalidShape("expected a 4-d array (frames, channels, height, width), got " + std::to_string(a.ndim()) +
                           " dims");
    }
    const Dims d{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                 static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(3))};
    return LatentVideo(d, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const LatentVideo& v) {
    const Dims& d = v.dims();
    Array out({d.frames, d.channels, d.height, d.width});
    std::copy(v.data().begin(), v.data().end(), out.mutable_data());
    return out;
}

std::vector<LatentVideo> to_latents(const std::vector<Array>& arrays) {
    std::vector<LatentVideo> out;
    out.reserve(arrays.size());
    for (const auto& a : arrays) out.push_back(to_latent(a));
    return out;
}

py::tuple sample_chain(const std::string& config_json, std::size_t chain, const std::string& base_dir) {
    const cli::RunConfig cfg = cli::parse_run_config(cli::Json::parse(config_json), base_dir);
    if (chain >= cfg.chains) {
        throw OutOfRange("chain " + std::to_string(chain) + " >= chains " + std::to_string(cfg.chains));
    }
    SamplingResult res = [&] {
        py::gil_scoped_release release;
        const NoiseSchedule sched = NoiseSchedule::make(cfg.schedule);
        const StepMap map = make_step_map(cfg.schedule.train_steps, cfg.sampler.infer_steps);
        const cli::DenoiserPair dn = cli::build_denoisers(cfg, sched);
        return cli::run_chain(cfg, sched, map, dn, chain);
    }();
    return py::make_tuple(to_array(res.sample), trace_to_jsonl(res.trace));
}

std::string metrics_json(const std::vector<Array>& samples, const std::vector<std::size_t>& lags,
                         const std::optional<std::string>& target_json) {
    const std::vector<LatentVideo> xs = to_latents(samples);
    if (xs.empty()) throw OutOfRange("no samples");
    std::optional<GaussianModel> target;
    if (target_json) {
        target.emplace(cli::parse_gaussian(cli::Json::parse(*target_json), "$", xs.front().dims()));
    }
    MetricOptions o = cli::default_metric_options(target ? &*target : nullptr);
    o.lags = lags;
    return compute_metrics(xs, o).to_json();
}

}  // namespace
}  // namespace dmix

PYBIND11_MODULE(_core, m) {
    using namespace dmix;
    m.doc() = "Native core of the dmix mixture-of-denoisers sampler.";

    static py::exception<Error> base_error(m, "DmixError", PyExc_ValueError);
    static py::exception<cli::ConfigError> config_error(m, "ConfigError", base_error.ptr());
    static py::exception<SamplingFailure> sampling_error(m, "SamplingFailure", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const cli::ConfigError& e) {
            py::set_error(config_error, e.what());
        } catch (const SamplingFailure& e) {
            py::set_error(sampling_error, e.what());
        } catch (const Error& e) {
            py::set_error(base_error, e.what());
        }
    });

    m.def("version", &cli::version);

    m.def(
        "alpha_bar",
        [](std::size_t train_steps, const std::string& kind, double beta_start, double beta_end) {
            const NoiseSchedule s = NoiseSchedule::make({train_steps, parse_beta_kind(kind), beta_start, beta_end});
            std::vector<double> out(train_steps + 1);
            for (std::size_t t = 0; t <= train_steps; ++t) out[t] = s.alpha_bar(static_cast<Timestep>(t));
            return out;
        },
        py::arg("train_steps") = 1000, py::arg("kind") = "linear", py::arg("beta_start") = 1e-4,
        py::arg("beta_end") = 0.02, "Cumulative products alpha_bar[0..T], with alpha_bar[0] = 1.");

    m.def(
        "step_map",
        [](std::size_t train_steps, std::size_t infer_steps) {
            const StepMap map = make_step_map(train_steps, infer_steps);
            std::vector<std::pair<Timestep, Timestep>> out;
            for (std::size_t i = 0; i < map.size(); ++i) out.emplace_back(map.pair(i).t, map.pair(i).t_prev);
            return out;
        },
        py::arg("train_steps"), py::arg("infer_steps"));

    m.def(
        "p_video",
        [](double t_v, double t_e, double p_e, double p_f, double progress) {
            return p_video(MixturePolicy{t_v, t_e, p_e, p_f}, progress);
        },
        py::arg("t_v"), py::arg("t_e"), py::arg("p_e"), py::arg("p_f"), py::arg("progress"));

    m.def(
        "policy_preset",
        [](const std::string& name) {
            const MixturePolicy p = policy_preset(name);
            return py::dict(py::arg("t_v") = p.t_v, py::arg("t_e") = p.t_e, py::arg("p_e") = p.p_e,
                            py::arg("p_f") = p.p_f);
        },
        py::arg("name"));

    m.def("_sample_chain", &sample_chain, py::arg("config_json"), py::arg("chain"), py::arg("base_dir"));

    m.def(
        "temporal_smooth",
        [](const Array& x, double threshold, double sigma_floor) {
            return to_array(temporal_smooth(to_latent(x), SmoothingConfig{threshold, sigma_floor}));
        },
        py::arg("x"), py::arg("threshold") = SmoothingConfig{}.threshold,
        py::arg("sigma_floor") = SmoothingConfig{}.sigma_floor);

    m.def(
        "smoothing_mask",
        [](const Array& x, double threshold, double sigma_floor) {
            const LatentVideo v = to_latent(x);
            const auto mask = smoothing_mask(v, SmoothingConfig{threshold, sigma_floor});
            const Dims& d = v.dims();
            py::array_t<bool> out({d.frames, d.height, d.width});
            std::copy(mask.begin(), mask.end(), out.mutable_data());
            return out;
        },
        py::arg("x"), py::arg("threshold") = SmoothingConfig{}.threshold,
        py::arg("sigma_floor") = SmoothingConfig{}.sigma_floor);

    m.def("flicker", [](const Array& x) { return flicker_metric(to_latent(x)); }, py::arg("x"));

    m.def("_metrics_json", &metrics_json, py::arg("samples"), py::arg("lags"), py::arg("target_json"));

    m.def(
        "gaussian_w2",
        [](const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& m2, const Eigen::MatrixXd& s2) {
            return gaussian_w2(m1, s1, m2, s2);
        },
        py::arg("mean1"), py::arg("cov1"), py::arg("mean2"), py::arg("cov2"));
}
