// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmix/cli/commands.hpp"

#include <glob.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "dmix/sampler.hpp"
#include "dmix/smoothing.hpp"

#ifndef DMIX_VERSION_STRING
#define DMIX_VERSION_STRING "0.0.0"
#endif

namespace fs = std::filesystem;

namespace dmix::cli {

const char* version() noexcept { return DMIX_VERSION_STRING; }

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    out.close();
    if (!out) {
        throw RuntimeFailure("cannot write " + path.string());
    }
}

void write_output_lvt(const fs::path& path, const LatentVideo& v) {
    try {
        write_lvt(path, v);
    } catch (const IoError& e) {
        throw RuntimeFailure(e.what());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw RuntimeFailure("cannot create " + dir.string() + ": " + ec.message());
    }
}

std::string numbered(const char* stem, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%04zu", stem, i);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// Values exactly as they round-trip through an .lvt file.
LatentVideo as_stored(const LatentVideo& v) {
    std::vector<double> data(v.data().begin(), v.data().end());
    for (double& x : data) {
        x = static_cast<double>(static_cast<float>(x));
    }
    return LatentVideo(v.dims(), std::move(data));
}

Json load_document(const fs::path& path, const char* manifest_kind) {
    Json j = read_json_file(path);
    if (j.is_object() && j.contains("artifact") && j["artifact"] == manifest_kind) {
        if (!j.contains("config")) {
            throw ConfigError("$.config", "manifest has no config");
        }
        return j["config"];
    }
    return j;
}

fs::path resolve_output(const std::optional<fs::path>& flag, const fs::path& from_config) {
    if (flag) {
        return fs::absolute(*flag).lexically_normal();
    }
    if (!from_config.empty()) {
        return fs::absolute(from_config).lexically_normal();
    }
    return fs::absolute(default_output_dir()).lexically_normal();
}

std::optional<GaussianModel> analytic_target(const RunConfig& cfg) {
    if (cfg.video.type == DenoiserSource::Type::Analytic && cfg.video.target) {
        return GaussianModel(*cfg.video.target);
    }
    return std::nullopt;
}

std::vector<std::string> expand_inputs(const std::vector<std::string>& inputs) {
    std::vector<std::string> files;
    for (const auto& pattern : inputs) {
        if (pattern.find_first_of("*?[") == std::string::npos) {
            files.push_back(pattern);
            continue;
        }
        glob_t g{};
        const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
        if (rc == 0) {
            for (std::size_t i = 0; i < g.gl_pathc; ++i) {
                files.emplace_back(g.gl_pathv[i]);
            }
        }
        ::globfree(&g);
        if (rc != 0) {
            throw ConfigError("inputs", "pattern '" + pattern + "' matched no files");
        }
    }
    if (files.empty()) {
        throw ConfigError("inputs", "no input files");
    }
    return files;
}

const std::vector<std::string>& known_metrics() {
    static const std::vector<std::string> names{"mean",     "var",          "frame_mean",  "frame_var",
                                                "temporal_autocorr", "flicker", "w2_to_target", "w2_per_entry"};
    return names;
}

void check_metric_names(const std::vector<std::string>& selected, const std::string& path) {
    for (const auto& s : selected) {
        const bool ok = std::any_of(known_metrics().begin(), known_metrics().end(),
                                    [&](const std::string& k) { return k.starts_with(s); });
        if (s.empty() || !ok) {
            throw ConfigError(path, "unknown metric '" + s + "'");
        }
    }
}

MetricReport report_from_json(const Json& j) {
    MetricReport r;
    for (const auto& m : j.at("metrics")) {
        r.metrics.push_back({m.at("name").get<std::string>(), m.at("value").get<double>(),
                             m.at("half_width").get<double>(), m.at("n").get<std::size_t>()});
    }
    return r;
}

std::string csv_number(double x) {
    std::ostringstream s;
    s << std::setprecision(17) << x;
    return s.str();
}

std::string csv_field(const Json& v) {
    std::string text = v.is_string() ? v.get<std::string>() : v.dump();
    if (text.find_first_of(",\"\n") != std::string::npos) {
        std::string quoted = "\"";
        for (char ch : text) {
            quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        }
        return quoted + "\"";
    }
    return text;
}

}  // namespace

Overrides parse_override_args(const std::vector<std::string>& args) {
    Overrides out;
    for (const auto& a : args) {
        const auto eq = a.find('=');
        if (!a.starts_with("--") || eq == std::string::npos || eq == 2) {
            throw ConfigError(a, "expected --key=value");
        }
        std::string key = a.substr(2, eq - 2);
        std::replace(key.begin(), key.end(), '-', '_');
        out.emplace_back(std::move(key), a.substr(eq + 1));
    }
    return out;
}

fs::path default_output_dir() {
    if (const char* env = std::getenv("DMIX_OUTPUT_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return "dmix-out";
}

RunConfig load_run_config(const fs::path& path, const Overrides& overrides) {
    Json j = load_document(path, kRunManifest);
    for (const auto& [key, value] : overrides) {
        apply_override(j, key, value);
    }
    return parse_run_config(j, fs::absolute(path).parent_path());
}

MetricOptions default_metric_options(const GaussianModel* target) {
    MetricOptions o;
    o.target = target;
    return o;
}

MetricReport select_metrics(const MetricReport& report, const std::vector<std::string>& selected) {
    if (selected.empty()) {
        return report;
    }
    MetricReport out;
    for (const auto& m : report.metrics) {
        if (std::any_of(selected.begin(), selected.end(), [&](const std::string& s) { return m.name.starts_with(s); })) {
            out.metrics.push_back(m);
        }
    }
    return out;
}

void write_report(const MetricReport& report, const fs::path& prefix) {
    if (prefix.has_parent_path()) {
        ensure_dir(prefix.parent_path());
    }
    write_text(fs::path(prefix.string() + ".json"), report.to_json());
    write_text(fs::path(prefix.string() + ".csv"), report.to_csv());
}

SamplingResult run_chain(const RunConfig& cfg, const NoiseSchedule& sched, const StepMap& map, const DenoiserPair& dn,
                         std::size_t chain) {
    auto streams = ChainStreams::for_chain(cfg.seeds.init, cfg.seeds.step_noise, cfg.seeds.selection, chain);
    if (dn.image) {
        return run_mixture_sampling(*dn.video, *dn.image, cfg.policy, sched, map, cfg.sampler, cfg.condition, streams);
    }
    return run_single_model_sampling(*dn.video, cfg.dims, sched, map, cfg.sampler, cfg.condition, streams);
}

std::vector<LatentVideo> execute_run(const RunConfig& cfg, std::ostream& log) {
    const auto start = std::chrono::steady_clock::now();
    const NoiseSchedule sched = NoiseSchedule::make(cfg.schedule);
    const StepMap map = make_step_map(cfg.schedule.train_steps, cfg.sampler.infer_steps);
    const DenoiserPair dn = build_denoisers(cfg, sched);
    ensure_dir(cfg.output_dir);

    const std::size_t n = cfg.chains;
    std::vector<std::optional<SamplingResult>> results(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                results[i] = run_chain(cfg, sched, map, dn, i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(cfg.jobs, n);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) {
            log << "chain " << i << " failed\n";
            std::rethrow_exception(errors[i]);
        }
    }

    std::vector<LatentVideo> finals;
    finals.reserve(n);
    Json outputs = Json::array();
    for (std::size_t i = 0; i < n; ++i) {
        const std::string stem = numbered("chain", i);
        const LatentVideo& raw = results[i]->sample;
        Json entry{{"chain", i}, {"sample", stem + ".lvt"}};
        if (cfg.smoothing) {
            write_output_lvt(cfg.output_dir / (stem + ".lvt"), temporal_smooth(raw, *cfg.smoothing));
            write_output_lvt(cfg.output_dir / (stem + ".raw.lvt"), raw);
            entry["raw"] = stem + ".raw.lvt";
            finals.push_back(as_stored(temporal_smooth(raw, *cfg.smoothing)));
        } else {
            write_output_lvt(cfg.output_dir / (stem + ".lvt"), raw);
            finals.push_back(as_stored(raw));
        }
        write_text(cfg.output_dir / (stem + ".trace.jsonl"), trace_to_jsonl(results[i]->trace));
        entry["trace"] = stem + ".trace.jsonl";
        outputs.push_back(std::move(entry));
    }

    const auto target = analytic_target(cfg);
    const MetricReport report = compute_metrics(finals, default_metric_options(target ? &*target : nullptr));
    write_report(report, cfg.output_dir / "metrics");

    Json manifest{{"artifact", kRunManifest},
                  {"version", version()},
                  {"command", "sample"},
                  {"config", run_config_to_json(cfg)},
                  {"schedule", schedule_to_json(cfg.schedule)},
                  {"output_dir", cfg.output_dir.string()},
                  {"outputs", std::move(outputs)},
                  {"metric_report", "metrics.json"},
                  {"wall_clock_seconds", seconds_since(start)}};
    write_text(cfg.output_dir / "manifest.json", manifest.dump(2) + "\n");
    return finals;
}

int cmd_sample(const SampleOptions& opt, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_run_config(opt.config, opt.overrides);
    cfg.output_dir = resolve_output(opt.output_dir, cfg.output_dir);
    if (opt.jobs) {
        if (*opt.jobs == 0) throw ConfigError("--jobs", "must be >= 1");
        cfg.jobs = *opt.jobs;
    }
    execute_run(cfg, err);
    out << "wrote " << cfg.chains << " chain(s) to " << cfg.output_dir.string() << "\n";
    return kExitOk;
}

int cmd_train_toy(const TrainOptions& opt, std::ostream& out, std::ostream&) {
    const auto start = std::chrono::steady_clock::now();
    Json j = load_document(opt.config, kTrainManifest);
    for (const auto& [key, value] : opt.overrides) {
        apply_override(j, key, value);
    }
    TrainConfig c = parse_train_config(j, fs::absolute(opt.config).parent_path());
    c.output_dir = resolve_output(opt.output_dir, c.output_dir);
    try {
        c.train.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError("$", e.what());
    }

    const NoiseSchedule sched = NoiseSchedule::make(c.schedule);
    const TrainingData data(c.sources);
    ensure_dir(c.output_dir);

    ToyArchitecture arch;
    arch.input_dims = data.dims();
    arch.hidden_width = c.train.hidden_width;
    arch.embed_dim = c.train.embed_dim;
    arch.num_classes = data.num_classes();
    arch.kind = c.train.kind;
    const fs::path init_prefix = c.output_dir / (c.name + ".init");
    const fs::path prefix = c.output_dir / c.name;
    try {
        ToyDenoiser::initialize(arch, c.train.seed).save(init_prefix);
    } catch (const IoError& e) {
        throw RuntimeFailure(e.what());
    }

    TrainingResult result = train_toy_denoiser(data, sched, c.train);
    try {
        result.model.save(prefix);
    } catch (const IoError& e) {
        throw RuntimeFailure(e.what());
    }
    std::string csv = "step,loss\n";
    for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
        csv += std::to_string(i + 1) + "," + csv_number(result.loss_curve[i]) + "\n";
    }
    write_text(c.output_dir / "loss.csv", csv);

    Json manifest{{"artifact", kTrainManifest},
                  {"version", version()},
                  {"command", "train-toy"},
                  {"config", train_config_to_json(c)},
                  {"schedule", schedule_to_json(c.schedule)},
                  {"output_dir", c.output_dir.string()},
                  {"outputs",
                   {{"parameters", toy_parameter_path(prefix).filename().string()},
                    {"sidecar", toy_sidecar_path(prefix).filename().string()},
                    {"initial_parameters", toy_parameter_path(init_prefix).filename().string()},
                    {"loss_curve", "loss.csv"}}},
                  {"final_loss", result.loss_curve.empty() ? Json(nullptr) : Json(result.loss_curve.back())},
                  {"wall_clock_seconds", seconds_since(start)}};
    write_text(c.output_dir / "manifest.json", manifest.dump(2) + "\n");
    out << "trained " << c.train.steps << " step(s); model at " << toy_parameter_path(prefix).string() << "\n";
    return kExitOk;
}

int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream&) {
    check_metric_names(opt.metrics, "--metrics");
    const auto files = expand_inputs(opt.inputs);
    std::vector<LatentVideo> samples;
    samples.reserve(files.size());
    for (const auto& f : files) {
        samples.push_back(read_lvt(f));
        if (samples.back().dims() != samples.front().dims()) {
            throw InvalidShape(f + " has dims " + samples.back().dims().to_string() + ", expected " +
                               samples.front().dims().to_string());
        }
    }
    std::optional<GaussianModel> target;
    if (opt.target) {
        target.emplace(parse_gaussian(read_json_file(*opt.target), "$", samples.front().dims()));
        if (target->dims() != samples.front().dims()) {
            throw ConfigError("$.dims", "target dims differ from the inputs");
        }
    }
    MetricOptions mo = default_metric_options(target ? &*target : nullptr);
    mo.lags = opt.lags;
    const MetricReport report = select_metrics(compute_metrics(samples, mo), opt.metrics);
    write_report(report, opt.out_prefix);
    for (const auto& m : report.metrics) {
        out << m.name << " = " << csv_number(m.value) << " +/- " << csv_number(m.half_width) << "\n";
    }
    return kExitOk;
}

int cmd_sweep(const SweepOptions& opt, std::ostream& out, std::ostream& err) {
    const Json spec = read_json_file(opt.spec);
    const fs::path base_dir = fs::absolute(opt.spec).parent_path();
    if (!spec.is_object()) throw ConfigError("$", "expected an object");
    for (const auto& [key, _] : spec.items()) {
        if (key != "base" && key != "axes" && key != "metrics" && key != "max_runs" && key != "output_dir") {
            throw ConfigError("$." + key, "unknown field");
        }
    }
    if (!spec.contains("base")) throw ConfigError("$.base", "missing");
    Json base = spec["base"];
    fs::path config_dir = base_dir;
    if (base.is_string()) {
        const fs::path p = fs::path(base.get<std::string>()).is_absolute() ? fs::path(base.get<std::string>())
                                                                           : base_dir / base.get<std::string>();
        base = read_json_file(p);
        config_dir = p.parent_path();
    }
    if (!base.is_object()) throw ConfigError("$.base", "expected a config object or a path");

    std::vector<std::pair<std::string, Json>> axes;
    if (spec.contains("axes")) {
        if (!spec["axes"].is_array()) throw ConfigError("$.axes", "expected an array");
        for (std::size_t i = 0; i < spec["axes"].size(); ++i) {
            const Json& a = spec["axes"][i];
            const std::string path = "$.axes[" + std::to_string(i) + "]";
            if (!a.is_object() || !a.contains("key") || !a["key"].is_string()) {
                throw ConfigError(path + ".key", "expected a dotted config key");
            }
            if (!a.contains("values") || !a["values"].is_array() || a["values"].empty()) {
                throw ConfigError(path + ".values", "expected a non-empty array");
            }
            axes.emplace_back(a["key"].get<std::string>(), a["values"]);
        }
    }
    std::vector<std::string> metrics;
    if (spec.contains("metrics")) {
        if (!spec["metrics"].is_array()) throw ConfigError("$.metrics", "expected an array of names");
        for (const auto& m : spec["metrics"]) {
            if (!m.is_string()) throw ConfigError("$.metrics", "expected an array of names");
            metrics.push_back(m.get<std::string>());
        }
        check_metric_names(metrics, "$.metrics");
    }
    std::size_t max_runs = 1000;
    if (spec.contains("max_runs")) {
        if (!spec["max_runs"].is_number_unsigned()) throw ConfigError("$.max_runs", "expected a positive integer");
        max_runs = spec["max_runs"].get<std::size_t>();
    }
    std::size_t total = 1;
    for (const auto& [key, values] : axes) {
        total *= values.size();
        if (total > max_runs) {
            throw ConfigError("$.max_runs", "the grid has more than " + std::to_string(max_runs) + " runs");
        }
    }
    fs::path spec_out;
    if (spec.contains("output_dir")) {
        if (!spec["output_dir"].is_string()) throw ConfigError("$.output_dir", "expected a path");
        spec_out = base_dir / spec["output_dir"].get<std::string>();
    }
    const fs::path root = resolve_output(opt.output_dir, spec_out);

    // Validate every grid point before running any of them.
    std::vector<RunConfig> configs;
    std::vector<std::vector<Json>> points;
    for (std::size_t r = 0; r < total; ++r) {
        Json j = base;
        std::vector<Json> point;
        std::size_t rest = r;
        std::vector<std::size_t> idx(axes.size());
        for (std::size_t a = axes.size(); a-- > 0;) {
            idx[a] = rest % axes[a].second.size();
            rest /= axes[a].second.size();
        }
        for (std::size_t a = 0; a < axes.size(); ++a) {
            const Json& v = axes[a].second[idx[a]];
            apply_override(j, axes[a].first, v.dump());
            point.push_back(v);
        }
        RunConfig cfg;
        try {
            cfg = parse_run_config(j, config_dir);
        } catch (const ConfigError& e) {
            throw ConfigError("run " + std::to_string(r) + " " + e.path(), e.what());
        }
        cfg.output_dir = root / numbered("run", r);
        if (opt.jobs) cfg.jobs = *opt.jobs;
        configs.push_back(std::move(cfg));
        points.push_back(std::move(point));
    }

    ensure_dir(root);
    std::string csv = "run";
    for (const auto& [key, _] : axes) csv += "," + csv_field(Json(key));
    std::vector<std::string> columns;
    for (std::size_t r = 0; r < total; ++r) {
        const RunConfig& cfg = configs[r];
        const fs::path manifest_path = cfg.output_dir / "manifest.json";
        MetricReport report;
        bool resumed = false;
        if (fs::exists(manifest_path) && fs::exists(cfg.output_dir / "metrics.json")) {
            try {
                const Json m = read_json_file(manifest_path);
                if (m.value("artifact", "") == kRunManifest && m.contains("config") &&
                    m["config"] == run_config_to_json(cfg)) {
                    report = report_from_json(read_json_file(cfg.output_dir / "metrics.json"));
                    resumed = true;
                }
            } catch (const std::exception&) {
                resumed = false;
            }
        }
        if (!resumed) {
            execute_run(cfg, err);
            report = report_from_json(read_json_file(cfg.output_dir / "metrics.json"));
        }
        err << (resumed ? "resumed " : "ran ") << numbered("run", r) << "\n";
        report = select_metrics(report, metrics);
        if (r == 0) {
            for (const auto& m : report.metrics) columns.push_back(m.name);
            for (const auto& c : columns) csv += "," + csv_field(Json(c));
            csv += "\n";
        }
        csv += std::to_string(r);
        for (const auto& v : points[r]) csv += "," + csv_field(v);
        for (const auto& c : columns) {
            const Metric* m = report.find(c);
            csv += "," + (m ? csv_number(m->value) : std::string());
        }
        csv += "\n";
    }
    write_text(root / "results.csv", csv);
    out << "wrote " << total << " row(s) to " << (root / "results.csv").string() << "\n";
    return kExitOk;
}

std::string encode_pgm(const LatentVideo& v, std::size_t frame, std::size_t channel, double lo, double hi) {
    const Dims& d = v.dims();
    std::string bytes = "P5\n" + std::to_string(d.width) + " " + std::to_string(d.height) + "\n255\n";
    bytes.reserve(bytes.size() + d.plane_size());
    for (std::size_t h = 0; h < d.height; ++h) {
        for (std::size_t w = 0; w < d.width; ++w) {
            double level = 128.0;
            if (hi > lo) {
                level = std::round((v.at(frame, channel, h, w) - lo) / (hi - lo) * 255.0);
            }
            bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(level, 0.0, 255.0))));
        }
    }
    return bytes;
}

int cmd_export_frames(const ExportOptions& opt, std::ostream& out, std::ostream&) {
    const LatentVideo v = read_lvt(opt.input);
    const Dims& d = v.dims();
    if (opt.channel >= d.channels) {
        throw ConfigError("--channel", "must be < C = " + std::to_string(d.channels));
    }
    double lo = v.at(0, opt.channel, 0, 0), hi = lo;
    for (std::size_t f = 0; f < d.frames; ++f) {
        for (std::size_t h = 0; h < d.height; ++h) {
            for (std::size_t w = 0; w < d.width; ++w) {
                lo = std::min(lo, v.at(f, opt.channel, h, w));
                hi = std::max(hi, v.at(f, opt.channel, h, w));
            }
        }
    }
    ensure_dir(opt.out_dir);
    const std::string stem = opt.input.stem().string() + "_c" + std::to_string(opt.channel);
    for (std::size_t f = 0; f < d.frames; ++f) {
        write_text(opt.out_dir / (numbered(stem.c_str(), f) + ".pgm"), encode_pgm(v, f, opt.channel, lo, hi));
    }
    out << "wrote " << d.frames << " frame(s) to " << opt.out_dir.string() << "\n";
    return kExitOk;
}

int guarded(const std::function<int()>& body, std::ostream& err) {
    try {
        return body();
    } catch (const TrainingFailure& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const SamplingFailure& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const RuntimeFailure& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const ConfigError& e) {
        err << "invalid input: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const Error& e) {
        // Shape, range, schedule and read errors all stem from the inputs.
        err << "invalid input: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace dmix::cli
