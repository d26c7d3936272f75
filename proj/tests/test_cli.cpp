#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <json.hpp>
#include <polarring/polarring.hpp>

namespace polarring {
namespace {

namespace fs = std::filesystem;

// Fresh directory under /tmp for one test, removed on destruction.
struct ScratchDir {
  fs::path path;

  explicit ScratchDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() { fs::remove_all(path); }

  std::string str(const std::string& rel = "") const {
    return rel.empty() ? path.string() : (path / rel).string();
  }
};

int run_cli(const std::string& args, const ScratchDir& scratch,
            std::string* output = nullptr) {
  const std::string log = scratch.str("cli-output.txt");
  std::string cmd = std::string(POLARRING_BIN) + " " + args + " >" + log + " 2>&1";
  int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream f(log);
    std::stringstream ss;
    ss << f.rdbuf();
    *output = ss.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Small, containment-safe phantom recipe shared by the pipeline tests.
PhantomConfig small_phantom_config() {
  PhantomConfig cfg;
  cfg.dims = {33, 33, 4};
  cfg.spacing_mm = {0.5, 0.5, 0.5};
  cfg.sinusoid_amplitude_mm = 0.3;
  cfg.plaque_amplitude_mm = 0.2;
  cfg.lumen_radius_min_mm = 1.2;
  cfg.lumen_radius_max_mm = 1.6;
  cfg.wall_thickness_min_mm = 1.0;
  cfg.wall_thickness_max_mm = 1.2;
  cfg.noise_sigma = 0.02;
  cfg.seed = 5;
  return cfg;
}

void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream f(path);
  ASSERT_TRUE(f) << "cannot write " << path;
  f << j.dump(2) << "\n";
}

ModelConfig small_model_config() {
  ModelConfig cfg;
  cfg.n_angles = 7;
  cfg.n_samples = 15;
  cfg.ray_spacing_mm = 0.25;
  cfg.channels = 3;
  cfg.batch_size = 16;
  cfg.epochs = 2;
  cfg.seed = 2;
  return cfg;
}

TEST(Cli, ExitCodesSeparateUsageFromRuntimeErrors) {
  ScratchDir scratch("polarring-cli-exitcodes");
  std::string out;
  EXPECT_EQ(run_cli("", scratch, &out), 2);  // missing subcommand
  EXPECT_EQ(run_cli("frobnicate", scratch), 2);
  EXPECT_EQ(run_cli("trace", scratch), 2);  // --out is required
  EXPECT_EQ(run_cli("eval --pred /no/such.json --truth /no/such.json "
                    "--out-dir " + scratch.str("e"),
                    scratch),
            2);  // ExistingFile validation
  EXPECT_EQ(run_cli("--help", scratch, &out), 0);
  EXPECT_NE(out.find("phantom"), std::string::npos);
  EXPECT_NE(out.find("selftest"), std::string::npos);

  // Well-formed invocation, invalid request: runtime error, exit 1.
  EXPECT_EQ(run_cli("trace --out " + scratch.str("cl.json"), scratch, &out), 1);
  EXPECT_NE(out.find("error:"), std::string::npos);
}

TEST(Cli, PhantomWritesDeterministicVolumes) {
  ScratchDir scratch("polarring-cli-phantom");
  write_json(phantom_config_to_json(small_phantom_config()),
             scratch.str("phantom.json"));

  std::string out;
  ASSERT_EQ(run_cli("phantom --config " + scratch.str("phantom.json") +
                        " --out " + scratch.str("a") + " --name tube --count 2",
                    scratch, &out),
            0)
      << out;
  EXPECT_TRUE(fs::exists(scratch.str("a/tube_000.vol.json")));
  EXPECT_TRUE(fs::exists(scratch.str("a/tube_000.vol.raw")));
  EXPECT_TRUE(fs::exists(scratch.str("a/tube_000.truth.json")));
  EXPECT_TRUE(fs::exists(scratch.str("a/tube_001.truth.json")));

  Volume v0 = load_volume(scratch.str("a/tube_000"));
  EXPECT_EQ(v0.dims()[0], 33);
  EXPECT_EQ(v0.dims()[2], 4);
  PhantomTruth t0 = load_truth(scratch.str("a/tube_000.truth.json"));
  EXPECT_EQ(t0.vessels.size(), 1u);

  // Batch members differ from each other but reruns are byte-identical.
  Volume v1 = load_volume(scratch.str("a/tube_001"));
  EXPECT_NE(v0.data(), v1.data());
  ASSERT_EQ(run_cli("phantom --config " + scratch.str("phantom.json") +
                        " --out " + scratch.str("b") + " --name tube --count 2",
                    scratch),
            0);
  EXPECT_EQ(v0.data(), load_volume(scratch.str("b/tube_000")).data());

  // Single phantom keeps the plain stem; --maps adds the proximity field.
  ASSERT_EQ(run_cli("phantom --config " + scratch.str("phantom.json") +
                        " --out " + scratch.str("c") + " --maps",
                    scratch),
            0);
  EXPECT_TRUE(fs::exists(scratch.str("c/phantom.vol.json")));
  EXPECT_TRUE(fs::exists(scratch.str("c/phantom.prox_internal.vol.json")));

  EXPECT_EQ(run_cli("phantom --count 0 --out " + scratch.str("d"), scratch), 1);
}

TEST(Cli, TraceFromTruthAndFromDumpedMapAgree) {
  ScratchDir scratch("polarring-cli-trace");
  auto ph = generate_phantom(small_phantom_config());
  save_truth(ph.second, scratch.str("tube.truth.json"));

  std::string out;
  ASSERT_EQ(run_cli("trace --truth " + scratch.str("tube.truth.json") +
                        " --stride 2 --out " + scratch.str("cl.json") +
                        " --dump-maps " + scratch.str("maps"),
                    scratch, &out),
            0)
      << out;
  auto [path, channel] = load_centerline(scratch.str("cl.json"));
  EXPECT_EQ(channel, ArteryClass::internal_carotid);
  ASSERT_FALSE(path.voxels.empty());
  EXPECT_EQ(path.voxels.size(), path.world_mm.size());
  EXPECT_EQ(path.voxels.front()[2], 0);
  EXPECT_EQ(path.voxels.back()[2], 3);

  // Tracing the dumped field reproduces the analytic-field trace exactly.
  ASSERT_TRUE(fs::exists(scratch.str("maps/prox_internal.vol.json")));
  ASSERT_EQ(run_cli("trace --map " + scratch.str("maps/prox_internal.vol.json") +
                        " --stride 2 --out " + scratch.str("cl2.json"),
                    scratch, &out),
            0)
      << out;
  auto [path2, channel2] = load_centerline(scratch.str("cl2.json"));
  EXPECT_EQ(path2.voxels, path.voxels);
  EXPECT_EQ(path2.cost, path.cost);

  // Wobble needs the source centerlines, which a bare map cannot provide.
  EXPECT_EQ(run_cli("trace --map " + scratch.str("maps/prox_internal.vol.json") +
                        " --wobble-mm 0.5 --out " + scratch.str("cl3.json"),
                    scratch, &out),
            1);
  EXPECT_NE(out.find("--truth"), std::string::npos);

  // A single-vessel phantom has no external channel to trace.
  EXPECT_EQ(run_cli("trace --truth " + scratch.str("tube.truth.json") +
                        " --channel external --out " + scratch.str("cl4.json"),
                    scratch, &out),
            1);
  EXPECT_NE(out.find("empty"), std::string::npos);

  // Passing both sources is ambiguous.
  EXPECT_EQ(run_cli("trace --truth " + scratch.str("tube.truth.json") +
                        " --map " + scratch.str("maps/prox_internal.vol.json") +
                        " --out " + scratch.str("cl5.json"),
                    scratch),
            1);
}

TEST(Cli, TrainPredictEvalPipeline) {
  ScratchDir scratch("polarring-cli-pipeline");
  write_json(phantom_config_to_json(small_phantom_config()),
             scratch.str("phantom.json"));
  write_json(model_config_to_json(small_model_config()),
             scratch.str("model.json"));

  std::string out;
  ASSERT_EQ(run_cli("phantom --config " + scratch.str("phantom.json") +
                        " --out " + scratch.str("data") +
                        " --name tube --count 3",
                    scratch, &out),
            0)
      << out;

  ASSERT_EQ(run_cli("train --data " + scratch.str("data") + " --out " +
                        scratch.str("model") + " --config " +
                        scratch.str("model.json"),
                    scratch, &out),
            0)
      << out;
  EXPECT_TRUE(fs::exists(scratch.str("model/model.model.json")));
  EXPECT_TRUE(fs::exists(scratch.str("model/model.weights.bin")));
  {
    std::ifstream f(scratch.str("model/train_log.json"));
    nlohmann::json log = nlohmann::json::parse(f);
    EXPECT_EQ(log.at("version").get<int>(), 1);
    EXPECT_EQ(log.at("epochs").size(), 2u);
  }

  ASSERT_EQ(run_cli("trace --truth " + scratch.str("data/tube_000.truth.json") +
                        " --stride 2 --out " + scratch.str("cl0.json"),
                    scratch, &out),
            0)
      << out;

  // --model accepts the output directory or the explicit base path.
  ASSERT_EQ(run_cli("predict --model " + scratch.str("model") + " --volume " +
                        scratch.str("data/tube_000.vol.json") +
                        " --centerline " + scratch.str("cl0.json") + " --out " +
                        scratch.str("pred0.json"),
                    scratch, &out),
            0)
      << out;
  ASSERT_EQ(run_cli("predict --model " + scratch.str("model/model") +
                        " --volume " + scratch.str("data/tube_000.vol.json") +
                        " --centerline " + scratch.str("cl0.json") +
                        " --raw --out " + scratch.str("pred0_raw.json"),
                    scratch, &out),
            0)
      << out;
  {
    std::ifstream f(scratch.str("pred0.json"));
    nlohmann::json pj = nlohmann::json::parse(f);
    EXPECT_EQ(pj.at("version").get<int>(), 1);
    ASSERT_GT(pj.at("contours").size(), 0u);
    ContourPair cp = contour_from_json(pj.at("contours")[0]);
    EXPECT_EQ(cp.n_angles(), 7u);
    EXPECT_GE(cp.slice, 0);
    EXPECT_LT(cp.slice, 4);
  }

  ASSERT_EQ(run_cli("eval --pred " + scratch.str("pred0.json") + " --truth " +
                        scratch.str("data/tube_000.truth.json") + " --out-dir " +
                        scratch.str("eval0"),
                    scratch, &out),
            0)
      << out;
  EXPECT_NE(out.find("median wall DSC"), std::string::npos);
  {
    std::ifstream f(scratch.str("eval0/metrics.csv"));
    std::string header;
    std::getline(f, header);
    EXPECT_EQ(header, "slice_id,dsc_wall,hd_lumen_mm,hd_outer_mm");
    std::string row;
    EXPECT_TRUE(static_cast<bool>(std::getline(f, row)));
    EXPECT_NE(row.find("internal/"), std::string::npos);
  }
  {
    std::ifstream f(scratch.str("eval0/summary.json"));
    nlohmann::json sj = nlohmann::json::parse(f);
    EXPECT_GE(sj.at("cases").get<std::size_t>(), 1u);
    EXPECT_GE(sj.at("dsc_wall").at("median").get<double>(), 0.0);
  }

  // Nothing scorable: an empty contour list is a hard error.
  write_json(nlohmann::json{{"version", 1},
                            {"contours", nlohmann::json::array()}},
             scratch.str("empty.json"));
  EXPECT_EQ(run_cli("eval --pred " + scratch.str("empty.json") + " --truth " +
                        scratch.str("data/tube_000.truth.json") + " --out-dir " +
                        scratch.str("eval1"),
                    scratch, &out),
            1);
}

TEST(Cli, EndToEndRunsATinyPipeline) {
  ScratchDir scratch("polarring-cli-e2e");
  PipelineConfig cfg;
  cfg.seed = 4;
  cfg.data.train_phantoms = 2;
  cfg.data.test_phantoms = 1;
  cfg.phantom = small_phantom_config();
  cfg.proximity.stride_slices = 2;
  cfg.model = small_model_config();
  cfg.validate();
  write_json(pipeline_config_to_json(cfg), scratch.str("pipeline.json"));

  std::string out;
  ASSERT_EQ(run_cli("e2e --config " + scratch.str("pipeline.json") + " --out " +
                        scratch.str("run"),
                    scratch, &out),
            0)
      << out;
  EXPECT_TRUE(fs::exists(scratch.str("run/config.json")));
  EXPECT_TRUE(fs::exists(scratch.str("run/train_log.json")));
  EXPECT_TRUE(fs::exists(scratch.str("run/model.model.json")));
  EXPECT_TRUE(fs::exists(scratch.str("run/metrics.csv")));
  EXPECT_TRUE(fs::exists(scratch.str("run/summary.json")));
  EXPECT_TRUE(fs::exists(scratch.str("run/contours/case0.json")));
  EXPECT_TRUE(fs::exists(scratch.str("run/overlays/case0_internal.pgm")));
  EXPECT_NE(out.find("median wall DSC"), std::string::npos);

  std::ifstream f(scratch.str("run/summary.json"));
  nlohmann::json sj = nlohmann::json::parse(f);
  EXPECT_GE(sj.at("cases").get<std::size_t>(), 1u);
}

TEST(Cli, SelftestPassesEveryCheck) {
  ScratchDir scratch("polarring-cli-selftest");
  std::string out;
  EXPECT_EQ(run_cli("selftest", scratch, &out), 0) << out;
  EXPECT_NE(out.find("checks passed"), std::string::npos);
  EXPECT_EQ(out.find("FAIL"), std::string::npos) << out;
}

}  // namespace
}  // namespace polarring
