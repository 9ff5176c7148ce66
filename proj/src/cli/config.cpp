// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmix/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>

namespace dmix::cli {
namespace {

std::string child(const std::string& path, const std::string& key) {
    return path + "." + key;
}

std::string element(const std::string& path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
}

void require_object(const Json& j, const std::string& path) {
    if (!j.is_object()) {
        throw ConfigError(path, "expected an object");
    }
}

void reject_unknown(const Json& j, const std::string& path, std::initializer_list<const char*> known) {
    const std::set<std::string> allowed(known.begin(), known.end());
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError(child(path, key), "unknown field");
        }
    }
}

double as_real(const Json& v, const std::string& path) {
    if (!v.is_number()) {
        throw ConfigError(path, "expected a number");
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
        throw ConfigError(path, "must be finite");
    }
    return x;
}

std::uint64_t as_u64(const Json& v, const std::string& path) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        throw ConfigError(path, "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

std::size_t as_count(const Json& v, const std::string& path, std::size_t min_value) {
    const auto n = as_u64(v, path);
    if (n < min_value) {
        throw ConfigError(path, "must be >= " + std::to_string(min_value));
    }
    return static_cast<std::size_t>(n);
}

std::string as_string(const Json& v, const std::string& path) {
    if (!v.is_string()) {
        throw ConfigError(path, "expected a string");
    }
    return v.get<std::string>();
}

std::vector<double> as_real_array(const Json& v, const std::string& path) {
    if (!v.is_array()) {
        throw ConfigError(path, "expected an array of numbers");
    }
    std::vector<double> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(as_real(v[i], element(path, i)));
    }
    return out;
}

// Runs an owned type's validation and relocates its error to `path`.
template <class Fn>
void validate_at(const std::string& path, Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(path, e.what());
    }
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
    if (p.is_absolute() || base.empty()) {
        return p.lexically_normal();
    }
    return (base / p).lexically_normal();
}

Json dims_to_json(const Dims& d) {
    return Json::array({d.frames, d.channels, d.height, d.width});
}

}  // namespace

Dims parse_dims(const Json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 4) {
        throw ConfigError(path, "expected [F, C, H, W]");
    }
    Dims d{as_count(j[0], element(path, 0), 1), as_count(j[1], element(path, 1), 1),
           as_count(j[2], element(path, 2), 1), as_count(j[3], element(path, 3), 1)};
    return d;
}

ScheduleParams parse_schedule(const Json& j, const std::string& path) {
    require_object(j, path);
    reject_unknown(j, path, {"T", "kind", "beta_start", "beta_end", "sigma_kind"});
    ScheduleParams p;
    if (j.contains("T")) p.train_steps = as_count(j["T"], child(path, "T"), 1);
    if (j.contains("kind")) {
        validate_at(child(path, "kind"), [&] { p.kind = parse_beta_kind(as_string(j["kind"], child(path, "kind"))); });
    }
    if (j.contains("beta_start")) p.beta_start = as_real(j["beta_start"], child(path, "beta_start"));
    if (j.contains("beta_end")) p.beta_end = as_real(j["beta_end"], child(path, "beta_end"));
    if (j.contains("sigma_kind")) {
        validate_at(child(path, "sigma_kind"),
                    [&] { p.sigma_kind = parse_sigma_kind(as_string(j["sigma_kind"], child(path, "sigma_kind"))); });
    }
    validate_at(path, [&] { (void)NoiseSchedule::make(p); });
    return p;
}

Json schedule_to_json(const ScheduleParams& p) {
    return Json{{"T", p.train_steps},
                {"kind", to_string(p.kind)},
                {"beta_start", p.beta_start},
                {"beta_end", p.beta_end},
                {"sigma_kind", to_string(p.sigma_kind)}};
}

GaussianSpec parse_gaussian(const Json& j, const std::string& path, const std::optional<Dims>& default_dims) {
    require_object(j, path);
    reject_unknown(j, path, {"dims", "mean", "covariance"});
    GaussianSpec spec;
    if (j.contains("dims")) {
        spec.dims = parse_dims(j["dims"], child(path, "dims"));
    } else if (default_dims) {
        spec.dims = *default_dims;
    } else {
        throw ConfigError(child(path, "dims"), "missing");
    }
    const std::size_t D = spec.dims.size();
    if (!j.contains("mean") || j["mean"].is_number()) {
        spec.mean.assign(D, j.contains("mean") ? as_real(j["mean"], child(path, "mean")) : 0.0);
    } else {
        spec.mean = as_real_array(j["mean"], child(path, "mean"));
    }
    const std::string cpath = child(path, "covariance");
    if (j.contains("covariance")) {
        const Json& c = j["covariance"];
        require_object(c, cpath);
        const std::string kind = c.contains("kind") ? as_string(c["kind"], child(cpath, "kind")) : "isotropic";
        if (kind == "isotropic") {
            reject_unknown(c, cpath, {"kind", "variance"});
            spec.covariance = IsotropicCovariance{
                c.contains("variance") ? as_real(c["variance"], child(cpath, "variance")) : 1.0};
        } else if (kind == "diagonal") {
            reject_unknown(c, cpath, {"kind", "variances"});
            if (!c.contains("variances")) throw ConfigError(child(cpath, "variances"), "missing");
            spec.covariance = DiagonalCovariance{as_real_array(c["variances"], child(cpath, "variances"))};
        } else if (kind == "full") {
            reject_unknown(c, cpath, {"kind", "matrix"});
            const std::string mpath = child(cpath, "matrix");
            if (!c.contains("matrix") || !c["matrix"].is_array()) throw ConfigError(mpath, "expected rows");
            const Json& rows = c["matrix"];
            Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const auto row = as_real_array(rows[r], element(mpath, r));
                if (row.size() != rows.size()) throw ConfigError(element(mpath, r), "matrix must be square");
                for (std::size_t k = 0; k < row.size(); ++k) {
                    m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = row[k];
                }
            }
            spec.covariance = FullCovariance{std::move(m)};
        } else if (kind == "ar1-temporal") {
            reject_unknown(c, cpath, {"kind", "rho", "variance"});
            if (!c.contains("rho")) throw ConfigError(child(cpath, "rho"), "missing");
            spec.covariance =
                Ar1TemporalCovariance{as_real(c["rho"], child(cpath, "rho")),
                                      c.contains("variance") ? as_real(c["variance"], child(cpath, "variance")) : 1.0};
        } else {
            throw ConfigError(child(cpath, "kind"), "unknown covariance kind '" + kind + "'");
        }
    }
    validate_at(path, [&] { spec.validate(); });
    return spec;
}

Json gaussian_to_json(const GaussianSpec& spec) {
    Json j;
    j["dims"] = dims_to_json(spec.dims);
    j["mean"] = spec.mean;
    Json c;
    if (const auto* iso = std::get_if<IsotropicCovariance>(&spec.covariance)) {
        c = {{"kind", "isotropic"}, {"variance", iso->variance}};
    } else if (const auto* diag = std::get_if<DiagonalCovariance>(&spec.covariance)) {
        c = {{"kind", "diagonal"}, {"variances", diag->variances}};
    } else if (const auto* full = std::get_if<FullCovariance>(&spec.covariance)) {
        Json rows = Json::array();
        for (Eigen::Index r = 0; r < full->matrix.rows(); ++r) {
            Json row = Json::array();
            for (Eigen::Index k = 0; k < full->matrix.cols(); ++k) row.push_back(full->matrix(r, k));
            rows.push_back(std::move(row));
        }
        c = {{"kind", "full"}, {"matrix", std::move(rows)}};
    } else {
        const auto& ar = std::get<Ar1TemporalCovariance>(spec.covariance);
        c = {{"kind", "ar1-temporal"}, {"rho", ar.rho}, {"variance", ar.variance}};
    }
    j["covariance"] = std::move(c);
    return j;
}

namespace {

DenoiserSource parse_denoiser(const Json& j, const std::string& path, const Dims& dims, bool image,
                              const std::filesystem::path& base_dir) {
    require_object(j, path);
    DenoiserSource src;
    const std::string type = j.contains("type") ? as_string(j["type"], child(path, "type")) : "analytic";
    const Dims own = image ? dims.single_frame() : dims;
    if (type == "analytic") {
        reject_unknown(j, path, {"type", "target", "class_targets"});
        src.type = DenoiserSource::Type::Analytic;
        if (!j.contains("target")) {
            throw ConfigError(child(path, "target"), "missing");
        }
        const Json& t = j["target"];
        if (t.is_string()) {
            if (t.get<std::string>() != "frame-marginal" || !image) {
                throw ConfigError(child(path, "target"),
                                  "only the image denoiser accepts the string target \"frame-marginal\"");
            }
            src.frame_marginal = true;
        } else {
            src.target = parse_gaussian(t, child(path, "target"), own);
            if (src.target->dims != own) {
                throw ConfigError(child(child(path, "target"), "dims"),
                                  "expected " + own.to_string() + ", got " + src.target->dims.to_string());
            }
        }
        if (j.contains("class_targets")) {
            const std::string cpath = child(path, "class_targets");
            require_object(j["class_targets"], cpath);
            for (const auto& [key, value] : j["class_targets"].items()) {
                int id = -1;
                try {
                    std::size_t used = 0;
                    id = std::stoi(key, &used);
                    if (used != key.size()) id = -1;
                } catch (const std::exception&) {
                    id = -1;
                }
                if (id < 0) throw ConfigError(child(cpath, key), "class ids must be non-negative integers");
                GaussianSpec spec = parse_gaussian(value, child(cpath, key), own);
                if (spec.dims != own) {
                    throw ConfigError(child(cpath, key), "dims must be " + own.to_string());
                }
                src.class_targets.emplace(id, std::move(spec));
            }
        }
    } else if (type == "toy") {
        reject_unknown(j, path, {"type", "path"});
        src.type = DenoiserSource::Type::Toy;
        if (!j.contains("path")) {
            throw ConfigError(child(path, "path"), "missing");
        }
        src.toy_prefix = resolve(as_string(j["path"], child(path, "path")), base_dir);
    } else {
        throw ConfigError(child(path, "type"), "expected \"analytic\" or \"toy\"");
    }
    return src;
}

Json denoiser_to_json(const DenoiserSource& src) {
    Json j;
    if (src.type == DenoiserSource::Type::Toy) {
        j["type"] = "toy";
        j["path"] = src.toy_prefix.string();
        return j;
    }
    j["type"] = "analytic";
    j["target"] = src.frame_marginal ? Json("frame-marginal") : gaussian_to_json(*src.target);
    if (!src.class_targets.empty()) {
        Json c = Json::object();
        for (const auto& [id, spec] : src.class_targets) c[std::to_string(id)] = gaussian_to_json(spec);
        j["class_targets"] = std::move(c);
    }
    return j;
}

MixturePolicy parse_policy(const Json& j, const std::string& path) {
    require_object(j, path);
    reject_unknown(j, path, {"t_v", "t_e", "p_e", "p_f"});
    MixturePolicy p;
    for (const char* key : {"t_v", "t_e", "p_e", "p_f"}) {
        if (!j.contains(key)) throw ConfigError(child(path, key), "missing");
    }
    p.t_v = as_real(j["t_v"], child(path, "t_v"));
    p.t_e = as_real(j["t_e"], child(path, "t_e"));
    p.p_e = as_real(j["p_e"], child(path, "p_e"));
    p.p_f = as_real(j["p_f"], child(path, "p_f"));
    validate_at(path, [&] { p.validate(); });
    return p;
}

std::optional<double> optional_real(const Json& j, const char* key, const std::string& path) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return as_real(j[key], child(path, key));
}

}  // namespace

RunConfig parse_run_config(const Json& j, const std::filesystem::path& base_dir) {
    const std::string root = "$";
    require_object(j, root);
    reject_unknown(j, root,
                   {"dims", "chains", "jobs", "schedule", "guidance", "guidance_video", "guidance_image",
                    "infer_steps", "sampler", "preset", "policy", "entropy", "smoothing", "seeds", "condition",
                    "video_denoiser", "image_denoiser", "output_dir"});
    RunConfig c;
    if (j.contains("dims")) c.dims = parse_dims(j["dims"], "$.dims");
    if (j.contains("chains")) c.chains = as_count(j["chains"], "$.chains", 1);
    if (j.contains("jobs")) c.jobs = as_count(j["jobs"], "$.jobs", 1);
    if (j.contains("schedule")) c.schedule = parse_schedule(j["schedule"], "$.schedule");

    if (j.contains("guidance")) c.sampler.guidance = as_real(j["guidance"], "$.guidance");
    c.sampler.guidance_video = optional_real(j, "guidance_video", root);
    c.sampler.guidance_image = optional_real(j, "guidance_image", root);
    if (j.contains("infer_steps")) c.sampler.infer_steps = as_count(j["infer_steps"], "$.infer_steps", 1);
    if (c.sampler.infer_steps > c.schedule.train_steps) {
        throw ConfigError("$.infer_steps", "must not exceed schedule T = " + std::to_string(c.schedule.train_steps));
    }
    if (j.contains("sampler")) {
        validate_at("$.sampler", [&] { c.sampler.sampler = parse_sampler_kind(as_string(j["sampler"], "$.sampler")); });
    }

    // Preset first, explicit fields override it.
    c.preset = "128";
    if (j.contains("preset")) {
        if (j["preset"].is_null()) {
            c.preset.reset();
        } else {
            c.preset = as_string(j["preset"], "$.preset");
        }
    }
    if (c.preset) {
        validate_at("$.preset", [&] { c.policy = policy_preset(*c.preset); });
        c.sampler.entropy.gamma = *c.preset == "64" ? 0.02 : *c.preset == "128" ? 0.1 : 1.0;
    } else {
        c.policy = MixturePolicy::video_only();
        c.sampler.entropy.gamma = 1.0;
    }
    if (j.contains("policy")) c.policy = parse_policy(j["policy"], "$.policy");
    if (j.contains("entropy")) {
        const Json& e = j["entropy"];
        require_object(e, "$.entropy");
        reject_unknown(e, "$.entropy", {"r_video", "r_image", "gamma"});
        if (e.contains("r_video")) c.sampler.entropy.r_video = as_real(e["r_video"], "$.entropy.r_video");
        if (e.contains("r_image")) c.sampler.entropy.r_image = as_real(e["r_image"], "$.entropy.r_image");
        if (e.contains("gamma")) c.sampler.entropy.gamma = as_real(e["gamma"], "$.entropy.gamma");
        auto& en = c.sampler.entropy;
        if (!(en.r_video >= 0.0 && en.r_video <= 1.0)) throw ConfigError("$.entropy.r_video", "must lie in [0, 1]");
        if (!(en.r_image >= 0.0 && en.r_image <= 1.0)) throw ConfigError("$.entropy.r_image", "must lie in [0, 1]");
        if (!(en.gamma >= 0.0)) throw ConfigError("$.entropy.gamma", "must be >= 0");
    }
    if (j.contains("smoothing")) {
        const Json& s = j["smoothing"];
        if (s.is_null()) {
            c.smoothing.reset();
        } else {
            require_object(s, "$.smoothing");
            reject_unknown(s, "$.smoothing", {"threshold", "sigma_floor"});
            SmoothingConfig sc;
            if (s.contains("threshold")) sc.threshold = as_real(s["threshold"], "$.smoothing.threshold");
            if (s.contains("sigma_floor")) sc.sigma_floor = as_real(s["sigma_floor"], "$.smoothing.sigma_floor");
            if (!(sc.threshold >= 0.0)) throw ConfigError("$.smoothing.threshold", "must be >= 0");
            if (!(sc.sigma_floor > 0.0)) throw ConfigError("$.smoothing.sigma_floor", "must be > 0");
            c.smoothing = sc;
        }
    }
    if (j.contains("seeds")) {
        const Json& s = j["seeds"];
        require_object(s, "$.seeds");
        reject_unknown(s, "$.seeds", {"init", "step_noise", "selection", "training"});
        if (s.contains("init")) c.seeds.init = as_u64(s["init"], "$.seeds.init");
        if (s.contains("step_noise")) c.seeds.step_noise = as_u64(s["step_noise"], "$.seeds.step_noise");
        if (s.contains("selection")) c.seeds.selection = as_u64(s["selection"], "$.seeds.selection");
        if (s.contains("training")) c.seeds.training = as_u64(s["training"], "$.seeds.training");
    }
    if (j.contains("condition") && !j["condition"].is_null()) {
        const auto id = as_u64(j["condition"], "$.condition");
        if (id > 1'000'000) throw ConfigError("$.condition", "class id too large");
        c.condition = Condition::label(static_cast<int>(id));
    }
    if (!j.contains("video_denoiser")) {
        throw ConfigError("$.video_denoiser", "missing");
    }
    c.video = parse_denoiser(j["video_denoiser"], "$.video_denoiser", c.dims, false, base_dir);
    if (c.video.frame_marginal) {
        throw ConfigError("$.video_denoiser.target", "the video denoiser needs an explicit target");
    }
    if (j.contains("image_denoiser") && !j["image_denoiser"].is_null()) {
        c.image = parse_denoiser(j["image_denoiser"], "$.image_denoiser", c.dims, true, base_dir);
        if (c.image->frame_marginal && c.video.type != DenoiserSource::Type::Analytic) {
            throw ConfigError("$.image_denoiser.target", "frame-marginal needs an analytic video denoiser");
        }
    } else if (c.policy.t_v < 1.0) {
        throw ConfigError("$.image_denoiser", "required unless the policy is video-only (t_v = 1)");
    }
    if (j.contains("output_dir")) {
        c.output_dir = resolve(as_string(j["output_dir"], "$.output_dir"), base_dir);
    }
    validate_at("$", [&] { c.sampler.validate(); });
    return c;
}

Json run_config_to_json(const RunConfig& c) {
    Json j;
    j["dims"] = dims_to_json(c.dims);
    j["chains"] = c.chains;
    j["jobs"] = c.jobs;
    j["schedule"] = schedule_to_json(c.schedule);
    j["guidance"] = c.sampler.guidance;
    j["guidance_video"] = c.sampler.guidance_video ? Json(*c.sampler.guidance_video) : Json(nullptr);
    j["guidance_image"] = c.sampler.guidance_image ? Json(*c.sampler.guidance_image) : Json(nullptr);
    j["infer_steps"] = c.sampler.infer_steps;
    j["sampler"] = to_string(c.sampler.sampler);
    j["preset"] = c.preset ? Json(*c.preset) : Json(nullptr);
    j["policy"] = {{"t_v", c.policy.t_v}, {"t_e", c.policy.t_e}, {"p_e", c.policy.p_e}, {"p_f", c.policy.p_f}};
    j["entropy"] = {{"r_video", c.sampler.entropy.r_video},
                    {"r_image", c.sampler.entropy.r_image},
                    {"gamma", c.sampler.entropy.gamma}};
    j["smoothing"] = c.smoothing ? Json{{"threshold", c.smoothing->threshold}, {"sigma_floor", c.smoothing->sigma_floor}}
                                 : Json(nullptr);
    j["seeds"] = {{"init", c.seeds.init},
                  {"step_noise", c.seeds.step_noise},
                  {"selection", c.seeds.selection},
                  {"training", c.seeds.training}};
    j["condition"] = c.condition.is_null() ? Json(nullptr) : Json(c.condition.class_id());
    j["video_denoiser"] = denoiser_to_json(c.video);
    j["image_denoiser"] = c.image ? denoiser_to_json(*c.image) : Json(nullptr);
    j["output_dir"] = c.output_dir.string();
    return j;
}

DenoiserPair build_denoisers(const RunConfig& c, const NoiseSchedule& sched) {
    auto build = [&](const DenoiserSource& src, DenoiserKind kind) -> std::unique_ptr<Denoiser> {
        if (src.type == DenoiserSource::Type::Toy) {
            auto toy = std::make_unique<ToyDenoiser>(ToyDenoiser::load(src.toy_prefix));
            if (toy->kind() != kind) {
                throw ConfigError(kind == DenoiserKind::Video ? "$.video_denoiser.path" : "$.image_denoiser.path",
                                  "toy model is a " + std::string(to_string(toy->kind())) + " denoiser");
            }
            const Dims expected = kind == DenoiserKind::Video ? c.dims : c.dims.single_frame();
            if (toy->input_dims() != expected) {
                throw ConfigError(kind == DenoiserKind::Video ? "$.video_denoiser.path" : "$.image_denoiser.path",
                                  "toy model takes " + toy->input_dims().to_string() + ", run needs " +
                                      expected.to_string());
            }
            return toy;
        }
        GaussianSpec target = src.frame_marginal ? frame_marginal(*c.video.target) : *src.target;
        std::map<int, GaussianSpec> classes = src.class_targets;
        if (src.frame_marginal) {
            for (const auto& [id, spec] : c.video.class_targets) classes.emplace(id, frame_marginal(spec));
        }
        return std::make_unique<AnalyticDenoiser>(kind, std::move(target), sched, std::move(classes));
    };
    DenoiserPair pair;
    pair.video = build(c.video, DenoiserKind::Video);
    if (c.image) {
        pair.image = build(*c.image, DenoiserKind::Image);
    }
    return pair;
}

TrainConfig parse_train_config(const Json& j, const std::filesystem::path& base_dir) {
    require_object(j, "$");
    reject_unknown(j, "$",
                   {"target", "samples", "sources", "class_id", "schedule", "steps", "batch", "learning_rate",
                    "warmup_steps", "prompt_drop", "noise_offset", "hidden_width", "embed_dim", "kind", "seed",
                    "output_dir", "name"});
    TrainConfig c;
    auto& t = c.train;
    if (j.contains("schedule")) c.schedule = parse_schedule(j["schedule"], "$.schedule");
    if (j.contains("steps")) t.steps = as_count(j["steps"], "$.steps", 0);
    if (j.contains("batch")) t.batch = as_count(j["batch"], "$.batch", 1);
    if (j.contains("learning_rate")) {
        // Non-finite rates are accepted here on purpose: they surface as a
        // training failure with a step index, not as a config error.
        if (!j["learning_rate"].is_number()) throw ConfigError("$.learning_rate", "expected a number");
        t.learning_rate = j["learning_rate"].get<double>();
    }
    if (j.contains("warmup_steps")) t.warmup_steps = as_count(j["warmup_steps"], "$.warmup_steps", 0);
    if (j.contains("prompt_drop")) t.prompt_drop_prob = as_real(j["prompt_drop"], "$.prompt_drop");
    if (j.contains("noise_offset")) t.noise_offset = as_real(j["noise_offset"], "$.noise_offset");
    if (j.contains("hidden_width")) t.hidden_width = as_count(j["hidden_width"], "$.hidden_width", 1);
    if (j.contains("embed_dim")) t.embed_dim = as_count(j["embed_dim"], "$.embed_dim", 2);
    if (j.contains("seed")) t.seed = as_u64(j["seed"], "$.seed");
    if (j.contains("kind")) {
        const auto kind = as_string(j["kind"], "$.kind");
        if (kind != "video" && kind != "image") throw ConfigError("$.kind", "expected \"video\" or \"image\"");
        t.kind = kind == "video" ? DenoiserKind::Video : DenoiserKind::Image;
    }
    if (!(t.prompt_drop_prob >= 0.0 && t.prompt_drop_prob <= 1.0)) {
        throw ConfigError("$.prompt_drop", "must lie in [0, 1]");
    }
    if (!(t.noise_offset >= 0.0)) throw ConfigError("$.noise_offset", "must be >= 0");
    if (t.embed_dim % 2 != 0) throw ConfigError("$.embed_dim", "must be even");

    std::optional<int> default_class;
    if (j.contains("class_id") && !j["class_id"].is_null()) {
        default_class = static_cast<int>(as_count(j["class_id"], "$.class_id", 0));
    }
    c.sources_json = Json::array();
    auto add_source = [&](const Json& s, const std::string& path, std::optional<int> cls) {
        require_object(s, path);
        if (s.contains("class_id") && !s["class_id"].is_null()) {
            cls = static_cast<int>(as_count(s["class_id"], child(path, "class_id"), 0));
        }
        Json echo;
        if (s.contains("target")) {
            reject_unknown(s, path, {"target", "class_id"});
            GaussianSpec spec = parse_gaussian(s["target"], child(path, "target"), std::nullopt);
            echo["target"] = gaussian_to_json(spec);
            c.sources.push_back({std::move(spec), cls});
        } else if (s.contains("samples")) {
            reject_unknown(s, path, {"samples", "class_id"});
            const Json& files = s["samples"];
            if (!files.is_array() || files.empty()) throw ConfigError(child(path, "samples"), "expected file paths");
            std::vector<LatentVideo> videos;
            Json names = Json::array();
            for (std::size_t i = 0; i < files.size(); ++i) {
                const auto p = resolve(as_string(files[i], element(child(path, "samples"), i)), base_dir);
                validate_at(element(child(path, "samples"), i), [&] { videos.push_back(read_lvt(p)); });
                names.push_back(p.string());
            }
            echo["samples"] = std::move(names);
            c.sources.push_back({std::move(videos), cls});
        } else {
            throw ConfigError(path, "a source needs \"target\" or \"samples\"");
        }
        echo["class_id"] = cls ? Json(*cls) : Json(nullptr);
        c.sources_json.push_back(std::move(echo));
    };
    if (j.contains("sources")) {
        if (!j["sources"].is_array() || j["sources"].empty()) throw ConfigError("$.sources", "expected a non-empty array");
        for (std::size_t i = 0; i < j["sources"].size(); ++i) {
            add_source(j["sources"][i], element("$.sources", i), default_class);
        }
    } else if (j.contains("target")) {
        add_source(Json{{"target", j["target"]}}, "$", default_class);
    } else if (j.contains("samples")) {
        add_source(Json{{"samples", j["samples"]}}, "$", default_class);
    } else {
        throw ConfigError("$.target", "missing (or give \"samples\" / \"sources\")");
    }
    validate_at("$.sources", [&] { (void)TrainingData(c.sources); });
    if (t.kind == DenoiserKind::Image && std::visit([](const auto& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, GaussianSpec>) return d.dims.frames != 1;
            else return d.front().dims().frames != 1;
        }, c.sources.front().data)) {
        throw ConfigError("$.kind", "image models train on single-frame data");
    }
    if (j.contains("output_dir")) c.output_dir = resolve(as_string(j["output_dir"], "$.output_dir"), base_dir);
    if (j.contains("name")) c.name = as_string(j["name"], "$.name");
    if (c.name.empty() || c.name.find('/') != std::string::npos) throw ConfigError("$.name", "must be a plain file name");
    return c;
}

Json train_config_to_json(const TrainConfig& c) {
    const auto& t = c.train;
    Json j;
    j["sources"] = c.sources_json;
    j["schedule"] = schedule_to_json(c.schedule);
    j["steps"] = t.steps;
    j["batch"] = t.batch;
    j["learning_rate"] = t.learning_rate;
    j["warmup_steps"] = t.warmup_steps;
    j["prompt_drop"] = t.prompt_drop_prob;
    j["noise_offset"] = t.noise_offset;
    j["hidden_width"] = t.hidden_width;
    j["embed_dim"] = t.embed_dim;
    j["kind"] = to_string(t.kind);
    j["seed"] = t.seed;
    j["output_dir"] = c.output_dir.string();
    j["name"] = c.name;
    return j;
}

void apply_override(Json& j, const std::string& dotted_key, const std::string& value) {
    if (dotted_key.empty()) {
        throw ConfigError("$", "empty override key");
    }
    Json parsed;
    try {
        parsed = Json::parse(value);
    } catch (const nlohmann::json::exception&) {
        parsed = value;
    }
    Json* node = &j;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted_key.find('.', start);
        const std::string key = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) {
            throw ConfigError("$." + dotted_key, "malformed override key");
        }
        if (!node->is_object()) {
            if (!node->is_null()) throw ConfigError("$." + dotted_key, "cannot descend into a non-object");
            *node = Json::object();
        }
        if (dot == std::string::npos) {
            (*node)[key] = parsed;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("$", path.string() + " is not valid JSON: " + e.what());
    }
}

}  // namespace dmix::cli
