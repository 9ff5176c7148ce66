// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dmix/cli/commands.hpp"
#include "dmix/cli/config.hpp"

namespace dmix::cli {
namespace {

namespace fs = std::filesystem;

class TempDir {
public:
    explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("dmix_cli_test_" + name)) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

void write_json(const fs::path& p, const Json& j) { std::ofstream(p) << j.dump(2); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Json small_run() {
    return Json::parse(R"({
        "dims": [3, 1, 2, 2], "chains": 3, "infer_steps": 10,
        "video_denoiser": {"type": "analytic",
                           "target": {"mean": 0.2, "covariance": {"kind": "ar1-temporal", "rho": 0.8}}},
        "image_denoiser": {"type": "analytic", "target": "frame-marginal"}
    })");
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> row;
        std::istringstream fields(line);
        for (std::string f; std::getline(fields, f, ',');) row.push_back(f);
        rows.push_back(row);
    }
    return rows;
}

TEST(RunConfig, RoundTripsThroughJson) {
    const RunConfig a = parse_run_config(small_run());
    const Json once = run_config_to_json(a);
    const Json twice = run_config_to_json(parse_run_config(once));
    EXPECT_EQ(once, twice);
}

TEST(RunConfig, PresetResolution) {
    Json j = small_run();
    j["guidance"] = 2.0;
    j["infer_steps"] = 50;
    const RunConfig c = parse_run_config(j);
    EXPECT_EQ(c.sampler.guidance, 2.0);
    EXPECT_EQ(c.sampler.infer_steps, 50u);
    EXPECT_EQ(c.preset, "128");
    EXPECT_EQ(c.policy, MixturePolicy::preset_128());
    EXPECT_EQ(c.sampler.entropy.gamma, 0.1);

    j["preset"] = "256";
    j["entropy"] = {{"gamma", 0.5}};
    const RunConfig d = parse_run_config(j);
    EXPECT_EQ(d.policy, MixturePolicy::preset_256());
    EXPECT_EQ(d.sampler.entropy.gamma, 0.5);  // explicit beats preset

    j["preset"] = nullptr;
    j.erase("entropy");
    j["image_denoiser"] = nullptr;
    const RunConfig e = parse_run_config(j);
    EXPECT_EQ(e.policy, MixturePolicy::video_only());
    EXPECT_EQ(e.sampler.entropy.gamma, 1.0);
}

void expect_config_error(const Json& j, const std::string& path_prefix) {
    try {
        parse_run_config(j);
        ADD_FAILURE() << "accepted " << j.dump();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.path().rfind(path_prefix, 0), 0u) << e.path() << " for " << j.dump();
    }
}

TEST(RunConfig, TargetedErrorsNameTheField) {
    auto with = [](const std::string& key, Json v) {
        Json j = small_run();
        apply_override(j, key, v.dump());
        return j;
    };
    expect_config_error(with("entropy.gamma", -1), "$.entropy.gamma");
    expect_config_error(with("entropy.r_video", 1.5), "$.entropy.r_video");
    expect_config_error(with("infer_steps", 2000), "$.infer_steps");
    expect_config_error(with("chains", 0), "$.chains");
    expect_config_error(with("dims", Json::array({1, 2})), "$.dims");
    expect_config_error(with("preset", "512"), "$.preset");
    expect_config_error(with("policy.t_v", 0.9), "$.policy");
    expect_config_error(with("smoothing.threshold", -3), "$.smoothing");
    expect_config_error(with("schedule.kind", "cosine"), "$.schedule");
    expect_config_error(with("unknown_field", 1), "$");
    expect_config_error(with("video_denoiser.target.covariance.rho", 1.0), "$.video_denoiser");
    Json no_image = small_run();
    no_image["image_denoiser"] = nullptr;
    expect_config_error(no_image, "$.image_denoiser");
}

// Random structural mutations either parse or fail with a located ConfigError.
TEST(RunConfig, MutationFuzz) {
    const std::vector<std::string> keys{"dims",          "chains",         "infer_steps", "guidance",
                                        "preset",        "policy.t_v",     "policy.p_f",  "entropy.gamma",
                                        "entropy.r_image", "smoothing.threshold", "seeds.init",
                                        "condition",     "schedule.train_steps", "schedule.beta_end",
                                        "video_denoiser.type", "video_denoiser.target.mean",
                                        "image_denoiser.target", "sampler"};
    const std::vector<Json> values{nullptr, -1, 0, 0.5, 1e308, "x", Json::array(), Json::object(), true,
                                   Json::array({1, 2, 3, 4})};
    RngStream rng(11, 0);
    int errors = 0;
    for (int k = 0; k < 500; ++k) {
        Json j = small_run();
        for (int m = 0; m < 2; ++m) {
            const auto& key = keys[rng.next_u64() % keys.size()];
            const auto& value = values[rng.next_u64() % values.size()];
            apply_override(j, key, value.dump());
        }
        try {
            parse_run_config(j);
        } catch (const ConfigError& e) {
            ++errors;
            ASSERT_EQ(e.path().rfind("$", 0), 0u) << e.what();
        } catch (const std::exception& e) {
            FAIL() << "unexpected " << e.what() << " for " << j.dump();
        }
    }
    EXPECT_GT(errors, 100);
}

TEST(Overrides, ParseAndApply) {
    const Overrides o = parse_override_args({"--entropy.gamma=0.5", "--infer-steps=20"});
    ASSERT_EQ(o.size(), 2u);
    EXPECT_EQ(o[1].first, "infer_steps");
    EXPECT_THROW(parse_override_args({"positional"}), ConfigError);
    Json j = Json::object();
    apply_override(j, "a.b", "3");
    apply_override(j, "a.c", "hello");
    EXPECT_EQ(j["a"]["b"], 3);
    EXPECT_EQ(j["a"]["c"], "hello");
}

TEST(Guarded, MapsExceptionsToExitCodes) {
    std::ostringstream err;
    EXPECT_EQ(guarded([] { return 0; }, err), kExitOk);
    EXPECT_EQ(guarded([]() -> int { throw ConfigError("$.x", "bad"); }, err), kExitInvalid);
    EXPECT_EQ(guarded([]() -> int { throw InvalidShape("bad"); }, err), kExitInvalid);
    EXPECT_EQ(guarded([]() -> int { throw TrainingFailure(3, "diverged"); }, err), kExitRuntime);
    EXPECT_EQ(guarded([]() -> int { throw RuntimeFailure("boom"); }, err), kExitRuntime);
    EXPECT_NE(err.str().find("$.x"), std::string::npos);
}

TEST(Commands, SampleWritesArtifactsAndReplays) {
    TempDir tmp("sample");
    write_json(tmp.path() / "run.json", small_run());
    std::ostringstream out, err;
    SampleOptions so{tmp.path() / "run.json", {}, tmp.path() / "a", 2};
    ASSERT_EQ(cmd_sample(so, out, err), kExitOk) << err.str();
    for (const char* f : {"chain_0000.lvt", "chain_0002.raw.lvt", "chain_0001.trace.jsonl", "metrics.json",
                          "metrics.csv", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(tmp.path() / "a" / f)) << f;
    }
    SampleOptions replay{tmp.path() / "a" / "manifest.json", {}, tmp.path() / "b", 1};
    ASSERT_EQ(cmd_sample(replay, out, err), kExitOk) << err.str();
    for (int i = 0; i < 3; ++i) {
        const std::string f = "chain_000" + std::to_string(i) + ".lvt";
        EXPECT_EQ(slurp(tmp.path() / "a" / f), slurp(tmp.path() / "b" / f));
    }
    SampleOptions bad{tmp.path() / "run.json", {{"entropy.gamma", "-2"}}, tmp.path() / "c", 1};
    EXPECT_EQ(guarded([&] { return cmd_sample(bad, out, err); }, err), kExitInvalid);
    EXPECT_EQ(guarded([&] { return cmd_sample({tmp.path() / "missing.json", {}, {}, {}}, out, err); }, err),
              kExitInvalid);
}

TEST(Commands, EvalStaticVideoAndMixedDims) {
    TempDir tmp("eval");
    write_lvt(tmp.path() / "s0.lvt", LatentVideo({4, 1, 2, 2}, 0.25));
    write_lvt(tmp.path() / "s1.lvt", LatentVideo({4, 1, 2, 2}, -0.5));
    std::ostringstream out, err;
    EvalOptions eo;
    eo.inputs = {(tmp.path() / "s*.lvt").string()};
    eo.metrics = {"flicker", "mean"};
    eo.out_prefix = tmp.path() / "m";
    ASSERT_EQ(cmd_eval(eo, out, err), kExitOk) << err.str();
    const Json report = read_json_file(tmp.path() / "m.json");
    bool saw_flicker = false;
    for (const auto& m : report["metrics"]) {
        if (m["name"] == "flicker") {
            EXPECT_EQ(m["value"], 0.0);
            saw_flicker = true;
        }
        EXPECT_TRUE(m["name"].get<std::string>().rfind("flicker", 0) == 0 ||
                    m["name"].get<std::string>().rfind("mean", 0) == 0);
    }
    EXPECT_TRUE(saw_flicker);

    write_lvt(tmp.path() / "s2.lvt", LatentVideo({2, 1, 2, 2}, 0.0));
    EXPECT_EQ(guarded([&] { return cmd_eval(eo, out, err); }, err), kExitInvalid);
    eo.inputs = {(tmp.path() / "nothing*.lvt").string()};
    EXPECT_EQ(guarded([&] { return cmd_eval(eo, out, err); }, err), kExitInvalid);
    eo.inputs = {(tmp.path() / "s0.lvt").string(), (tmp.path() / "s1.lvt").string()};
    eo.metrics = {"nonsense"};
    EXPECT_EQ(guarded([&] { return cmd_eval(eo, out, err); }, err), kExitInvalid);
}

TEST(Commands, SweepRowsOrderAndResume) {
    TempDir tmp("sweep");
    Json spec{{"base", small_run()},
              {"axes", Json::array({Json{{"key", "entropy.gamma"}, {"values", {0.1, 1.0}}},
                                    Json{{"key", "seeds.init"}, {"values", {1, 2, 3}}}})},
              {"metrics", {"var"}}};
    write_json(tmp.path() / "sweep.json", spec);
    std::ostringstream out, err;
    SweepOptions so{tmp.path() / "sweep.json", tmp.path() / "out", 2};
    ASSERT_EQ(cmd_sweep(so, out, err), kExitOk) << err.str();
    const auto rows = read_csv(tmp.path() / "out" / "results.csv");
    ASSERT_EQ(rows.size(), 7u);
    EXPECT_EQ(rows[0][0], "run");
    EXPECT_EQ(rows[0][1], "entropy.gamma");
    EXPECT_EQ(rows[0][2], "seeds.init");
    EXPECT_EQ(rows[0][3], "var");
    const std::vector<std::pair<std::string, std::string>> order{{"0.1", "1"}, {"0.1", "2"}, {"0.1", "3"},
                                                                 {"1.0", "1"}, {"1.0", "2"}, {"1.0", "3"}};
    for (std::size_t r = 0; r < 6; ++r) {
        EXPECT_EQ(rows[r + 1][0], std::to_string(r));
        EXPECT_EQ(rows[r + 1][1], order[r].first);
        EXPECT_EQ(rows[r + 1][2], order[r].second);
    }
    const std::string first = slurp(tmp.path() / "out" / "results.csv");
    std::ostringstream err2;
    ASSERT_EQ(cmd_sweep(so, out, err2), kExitOk);
    EXPECT_EQ(slurp(tmp.path() / "out" / "results.csv"), first);
    EXPECT_NE(err2.str().find("resumed run_0005"), std::string::npos);

    spec["axes"][0]["values"] = {0.1, -1.0};
    write_json(tmp.path() / "bad.json", spec);
    SweepOptions bad{tmp.path() / "bad.json", tmp.path() / "bad_out", 1};
    EXPECT_EQ(guarded([&] { return cmd_sweep(bad, out, err); }, err), kExitInvalid);
    EXPECT_FALSE(fs::exists(tmp.path() / "bad_out" / "run_0000"));  // validated before running
}

// More step noise means a wider final distribution on a video-only AR(1) run.
TEST(Commands, GammaSweepVarianceIsMonotone) {
    TempDir tmp("gamma");
    Json base = small_run();
    base["dims"] = {4, 1, 1, 2};
    base["chains"] = 300;
    base["infer_steps"] = 25;
    base["preset"] = nullptr;
    base["image_denoiser"] = nullptr;
    base["smoothing"] = nullptr;
    Json spec{{"base", base},
              {"axes", Json::array({Json{{"key", "entropy.gamma"}, {"values", {0.0, 0.25, 0.5, 1.0}}}})},
              {"metrics", {"var"}}};
    write_json(tmp.path() / "sweep.json", spec);
    std::ostringstream out, err;
    ASSERT_EQ(cmd_sweep({tmp.path() / "sweep.json", tmp.path() / "out", 4}, out, err), kExitOk) << err.str();
    const auto rows = read_csv(tmp.path() / "out" / "results.csv");
    ASSERT_EQ(rows.size(), 5u);
    double prev = -1;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const double v = std::stod(rows[r][2]);
        EXPECT_GE(v, prev) << "row " << r;
        prev = v;
    }
}

TEST(Commands, SingleCellSweepMatchesSampleAndEval) {
    TempDir tmp("single");
    Json spec{{"base", small_run()}, {"axes", Json::array({Json{{"key", "chains"}, {"values", {3}}}})}};
    write_json(tmp.path() / "sweep.json", spec);
    write_json(tmp.path() / "run.json", small_run());
    std::ostringstream out, err;
    ASSERT_EQ(cmd_sweep({tmp.path() / "sweep.json", tmp.path() / "sw", 1}, out, err), kExitOk) << err.str();
    ASSERT_EQ(cmd_sample({tmp.path() / "run.json", {}, tmp.path() / "s", 1}, out, err), kExitOk) << err.str();
    EXPECT_EQ(slurp(tmp.path() / "sw" / "run_0000" / "metrics.json"), slurp(tmp.path() / "s" / "metrics.json"));
    EXPECT_EQ(slurp(tmp.path() / "sw" / "run_0000" / "chain_0001.lvt"), slurp(tmp.path() / "s" / "chain_0001.lvt"));

    const RunConfig cfg = parse_run_config(small_run());
    write_json(tmp.path() / "target.json", gaussian_to_json(*cfg.video.target));
    EvalOptions eo;
    eo.inputs = {(tmp.path() / "s" / "chain_000?.lvt").string()};
    eo.target = tmp.path() / "target.json";
    eo.out_prefix = tmp.path() / "e";
    ASSERT_EQ(cmd_eval(eo, out, err), kExitOk) << err.str();
    EXPECT_EQ(read_json_file(tmp.path() / "e.json"), read_json_file(tmp.path() / "s" / "metrics.json"));
}

TEST(Commands, ExportFrames) {
    TempDir tmp("export");
    write_lvt(tmp.path() / "flat.lvt", LatentVideo({2, 2, 3, 4}, 0.7));
    std::ostringstream out, err;
    ASSERT_EQ(cmd_export_frames({tmp.path() / "flat.lvt", 1, tmp.path() / "pgm"}, out, err), kExitOk);
    const std::string pgm = slurp(tmp.path() / "pgm" / "flat_c1_0001.pgm");
    const std::string header = "P5\n4 3\n255\n";
    ASSERT_EQ(pgm.size(), header.size() + 12);
    EXPECT_EQ(pgm.substr(0, header.size()), header);
    for (std::size_t i = header.size(); i < pgm.size(); ++i) EXPECT_EQ(static_cast<unsigned char>(pgm[i]), 128);

    LatentVideo ramp({1, 1, 1, 3}, std::vector<double>{-1, 0, 1});
    write_lvt(tmp.path() / "ramp.lvt", ramp);
    ASSERT_EQ(cmd_export_frames({tmp.path() / "ramp.lvt", 0, tmp.path() / "pgm"}, out, err), kExitOk);
    const std::string r = slurp(tmp.path() / "pgm" / "ramp_c0_0000.pgm");
    EXPECT_EQ(static_cast<unsigned char>(r[r.size() - 3]), 0);
    EXPECT_EQ(static_cast<unsigned char>(r[r.size() - 1]), 255);
    EXPECT_EQ(guarded([&] { return cmd_export_frames({tmp.path() / "ramp.lvt", 1, tmp.path()}, out, err); }, err),
              kExitInvalid);
}

TEST(Commands, TrainToyZeroStepsAndReplay) {
    TempDir tmp("train");
    const Json cfg = Json::parse(R"({
        "target": {"dims": [1, 1, 1, 2], "mean": 0, "covariance": {"kind": "isotropic", "variance": 1}},
        "steps": 20, "batch": 8, "kind": "image", "seed": 5, "prompt_drop": 0.3, "noise_offset": 0.1
    })");
    write_json(tmp.path() / "train.json", cfg);
    std::ostringstream out, err;
    ASSERT_EQ(cmd_train_toy({tmp.path() / "train.json", {}, tmp.path() / "a"}, out, err), kExitOk) << err.str();
    ASSERT_EQ(cmd_train_toy({tmp.path() / "a" / "manifest.json", {}, tmp.path() / "b"}, out, err), kExitOk);
    EXPECT_EQ(slurp(tmp.path() / "a" / "loss.csv"), slurp(tmp.path() / "b" / "loss.csv"));
    const Json manifest = read_json_file(tmp.path() / "a" / "manifest.json");
    EXPECT_EQ(manifest["artifact"], kTrainManifest);
    EXPECT_EQ(manifest["config"]["prompt_drop"], 0.3);

    TrainOptions diverge{tmp.path() / "train.json", {{"learning_rate", "1e300"}, {"warmup_steps", "0"}},
                         tmp.path() / "c"};
    EXPECT_EQ(guarded([&] { return cmd_train_toy(diverge, out, err); }, err), kExitRuntime);
    TrainOptions odd{tmp.path() / "train.json", {{"embed_dim", "3"}}, tmp.path() / "d"};
    EXPECT_EQ(guarded([&] { return cmd_train_toy(odd, out, err); }, err), kExitInvalid);
}

}  // namespace
}  // namespace dmix::cli
