#pragma once

// End-to-end orchestration: phantom generation, centerline tracing, model
// training, prediction and evaluation, wired together behind one config.
// Also home to the self-test battery the CLI exposes.

#include <atomic>
#include <cstdlib>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "polarring/centerline.hpp"
#include "polarring/contour.hpp"
#include "polarring/json_util.hpp"
#include "polarring/metrics.hpp"
#include "polarring/neuralnet.hpp"
#include "polarring/phantom.hpp"
#include "polarring/polar.hpp"
#include "polarring/segmenter.hpp"
#include "polarring/volume.hpp"

namespace polarring {

// Worker count; POLARRING_THREADS overrides the single-threaded default.
inline int worker_threads() {
  const char* env = std::getenv("POLARRING_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  long n = std::strtol(env, &end, 10);
  if (!end || *end != '\0' || n < 1)
    throw std::runtime_error(
        "POLARRING_THREADS must be a positive integer, got '" +
        std::string(env) + "'");
  return static_cast<int>(n);
}

// Index-parallel loop. Iterations must write disjoint state; the first
// exception is rethrown on the calling thread.
template <typename Fn>
inline void parallel_for(std::size_t n, Fn&& fn) {
  std::size_t threads =
      std::min<std::size_t>(static_cast<std::size_t>(worker_threads()), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct ProximityStageConfig {
  ProximityParams params;
  int stride_slices = 50;
  DegradeConfig degrade;
};

struct DataConfig {
  int train_phantoms = 8;
  int test_phantoms = 2;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  DataConfig data;
  PhantomConfig phantom;
  ProximityStageConfig proximity;
  ModelConfig model;

  void validate() const {
    if (data.train_phantoms < 1 || data.test_phantoms < 1)
      throw std::invalid_argument("need at least one train and one test case");
    if (proximity.stride_slices < 1)
      throw std::invalid_argument("waypoint stride must be >= 1");
    phantom.validate();
    proximity.degrade.validate();
    model.validate();
  }
};

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  check_version(j, "pipeline config");
  check_keys(j, {"version", "seed", "data", "phantom", "proximity", "model"},
             "pipeline config");
  PipelineConfig c;
  read_field(j, "seed", c.seed);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, {"train_phantoms", "test_phantoms"}, "data config");
    read_field(d, "train_phantoms", c.data.train_phantoms);
    read_field(d, "test_phantoms", c.data.test_phantoms);
  }
  if (j.contains("phantom")) c.phantom = phantom_config_from_json(j.at("phantom"));
  if (j.contains("proximity")) {
    const auto& p = j.at("proximity");
    check_keys(p, {"a", "d_m_mm", "stride_slices", "degrade"},
               "proximity config");
    read_field(p, "a", c.proximity.params.a);
    read_field(p, "d_m_mm", c.proximity.params.d_m_mm);
    read_field(p, "stride_slices", c.proximity.stride_slices);
    if (p.contains("degrade")) {
      const auto& g = p.at("degrade");
      check_keys(g, {"sigma_add", "dropout_prob", "wobble_mm"},
                 "degrade config");
      read_field(g, "sigma_add", c.proximity.degrade.sigma_add);
      read_field(g, "dropout_prob", c.proximity.degrade.dropout_prob);
      read_field(g, "wobble_mm", c.proximity.degrade.wobble_mm);
    }
  }
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  c.validate();
  return c;
}

inline nlohmann::json pipeline_config_to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["version"] = 1;
  j["seed"] = c.seed;
  j["data"] = {{"train_phantoms", c.data.train_phantoms},
               {"test_phantoms", c.data.test_phantoms}};
  j["phantom"] = phantom_config_to_json(c.phantom);
  j["proximity"] = {{"a", c.proximity.params.a},
                    {"d_m_mm", c.proximity.params.d_m_mm},
                    {"stride_slices", c.proximity.stride_slices},
                    {"degrade",
                     {{"sigma_add", c.proximity.degrade.sigma_add},
                      {"dropout_prob", c.proximity.degrade.dropout_prob},
                      {"wobble_mm", c.proximity.degrade.wobble_mm}}}};
  j["model"] = model_config_to_json(c.model);
  return j;
}

inline PipelineConfig load_pipeline_config(const std::string& file) {
  std::ifstream f(file);
  if (!f) throw std::runtime_error("cannot read " + file);
  return pipeline_config_from_json(nlohmann::json::parse(f));
}

// The stock end-to-end setup: 20 training phantoms (last 4 held out for
// validation), 4 test phantoms, and a multi-slice model with augmentation
// sized so a full run finishes in minutes on one CPU core.
inline PipelineConfig default_e2e_config() {
  PipelineConfig c;
  c.seed = 1;
  c.data.train_phantoms = 20;
  c.data.test_phantoms = 4;
  c.phantom.noise_sigma = 0.05;
  c.model.mode = "multi";
  c.model.n_samples = 31;
  c.model.channels = 8;
  c.model.epochs = 30;
  return c;
}

inline void write_train_log(const TrainRecord& rec, const std::string& file) {
  nlohmann::json tl;
  tl["version"] = 1;
  tl["total_seconds"] = rec.total_seconds;
  std::ostringstream ck;
  ck << std::hex << rec.checkpoint;
  tl["checkpoint"] = ck.str();
  auto epochs = nlohmann::json::array();
  for (const auto& e : rec.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"val_dsc_wall", e.val_dsc_wall},
                      {"val_hd_lumen_mm", e.val_hd_lumen_mm},
                      {"val_hd_outer_mm", e.val_hd_outer_mm},
                      {"seconds", e.seconds}});
  tl["epochs"] = std::move(epochs);
  std::ofstream f(file);
  if (!f) throw std::runtime_error("cannot write " + file);
  f << tl.dump(2) << "\n";
}

// Mean traced position per slice; Dijkstra paths may visit a slice more
// than once, prediction wants a single polar origin there.
inline std::map<int, WorldPoint> slice_centers(const CenterlinePath& path) {
  std::map<int, WorldPoint> sums;
  std::map<int, int> counts;
  for (std::size_t i = 0; i < path.voxels.size(); ++i) {
    int k = path.voxels[i][2];
    auto& s = sums[k];
    s.x += path.world_mm[i].x;
    s.y += path.world_mm[i].y;
    s.z += path.world_mm[i].z;
    counts[k] += 1;
  }
  for (auto& [k, s] : sums) {
    s.x /= counts[k];
    s.y /= counts[k];
    s.z /= counts[k];
  }
  return sums;
}

// Slice overlay for eyeballing results: the image in [0,200], truth
// contours traced bright, predictions slightly darker.
inline void emit_overlay(const Volume& vol, int slice,
                         const std::vector<ContourPair>& truth,
                         const std::vector<ContourPair>& pred,
                         const std::string& path) {
  const auto& d = vol.dims();
  if (slice < 0 || slice >= d[2])
    throw std::invalid_argument("overlay slice out of range");
  std::vector<std::uint8_t> img(static_cast<std::size_t>(d[0]) * d[1]);
  for (int j = 0; j < d[1]; ++j)
    for (int i = 0; i < d[0]; ++i) {
      double v = std::clamp(static_cast<double>(vol.at(i, j, slice)), 0.0, 1.0);
      img[static_cast<std::size_t>(j) * d[0] + i] =
          static_cast<std::uint8_t>(std::lround(v * 200.0));
    }

  auto draw = [&](const ContourPair& cp, std::uint8_t value) {
    ContourPolygons polys = to_polygons(cp);
    double step = 0.25 * std::min(vol.spacing()[0], vol.spacing()[1]);
    for (const Polygon* poly : {&polys.lumen, &polys.outer}) {
      for (const Vec2& p : densify_polygon(*poly, step)) {
        int i = static_cast<int>(std::lround((p.x - vol.origin()[0]) /
                                             vol.spacing()[0]));
        int j = static_cast<int>(std::lround((p.y - vol.origin()[1]) /
                                             vol.spacing()[1]));
        if (i >= 0 && i < d[0] && j >= 0 && j < d[1])
          img[static_cast<std::size_t>(j) * d[0] + i] = value;
      }
    }
  };
  for (const auto& cp : truth) draw(cp, 255);
  for (const auto& cp : pred) draw(cp, 230);
  write_pgm(path, d[0], d[1], img);
}

struct E2eResult {
  TrainRecord train;
  std::vector<CaseResult> cases;
  EvalSummary summary;
  std::vector<std::string> warnings;
};

namespace detail {

struct TestCaseOutput {
  std::vector<CaseResult> cases;
  std::vector<std::string> warnings;
  // overlay + contour dumps, written by the worker itself
};

}  // namespace detail

// The whole pipeline on synthetic data: train phantoms feed the regressor,
// test phantoms run centerline tracing (on degraded proximity fields) and
// contour prediction at the traced centers, and every truth-covered slice
// is scored. Writes metrics.csv, summary.json, train_log.json, the model
// and per-case contour/overlay files into out_dir.
inline E2eResult run_e2e(const PipelineConfig& cfg, const std::string& out_dir,
                         std::ostream* log = nullptr) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/overlays");
  fs::create_directories(out_dir + "/contours");
  auto say = [&](const std::string& msg) {
    if (log) *log << msg << "\n";
  };

  // Training data: independently seeded phantoms, all kept in memory. The
  // last 20% of phantoms (by seed order) form the validation split.
  std::deque<Volume> volumes;  // stable addresses for Dataset pointers
  Dataset train_set, val_set;
  const int n_val = cfg.data.train_phantoms / 5;
  for (int t = 0; t < cfg.data.train_phantoms; ++t) {
    PhantomConfig pc = cfg.phantom;
    pc.seed = derive_seed(cfg.seed, "data.train", static_cast<std::uint64_t>(t));
    auto ph = generate_phantom(pc);
    NormalizeResult norm = normalize_intensity(ph.first);
    if (norm.degenerate)
      throw std::runtime_error("training phantom " + std::to_string(t) +
                               " normalized to a flat volume");
    volumes.push_back(std::move(norm.volume));
    Dataset cases = build_dataset(volumes.back(), ph.second);
    Dataset& dst = t >= cfg.data.train_phantoms - n_val ? val_set : train_set;
    dst.insert(dst.end(), cases.begin(), cases.end());
  }
  say("training cases: " + std::to_string(train_set.size()) +
      ", validation cases: " + std::to_string(val_set.size()));

  Network net = build_model(cfg.model);
  E2eResult res;
  res.train = train(net, train_set, val_set, cfg.model);
  say("trained " + std::to_string(cfg.model.epochs) + " epochs in " +
      std::to_string(res.train.total_seconds) + "s, final loss " +
      std::to_string(res.train.epochs.back().train_loss));
  save_model(net, cfg.model, out_dir + "/model");

  write_train_log(res.train, out_dir + "/train_log.json");

  // Test cases are independent of each other; the loop honors
  // POLARRING_THREADS. Results land in per-case slots, so report order
  // does not depend on scheduling.
  std::vector<detail::TestCaseOutput> outputs(cfg.data.test_phantoms);
  parallel_for(static_cast<std::size_t>(cfg.data.test_phantoms),
               [&](std::size_t c) {
    detail::TestCaseOutput& out = outputs[c];
    const std::string case_id = "case" + std::to_string(c);
    PhantomConfig pc = cfg.phantom;
    pc.seed = derive_seed(cfg.seed, "data.test", c);
    auto ph = generate_phantom(pc);
    const PhantomTruth& truth = ph.second;
    NormalizeResult norm = normalize_intensity(ph.first);
    if (norm.degenerate)
      throw std::runtime_error(case_id + " normalized to a flat volume");
    const Volume& vol = norm.volume;

    ProximityMap prox = proximity_map(truth, cfg.proximity.params);
    ProximityMap noisy =
        degrade_map(prox, cfg.proximity.degrade, derive_seed(cfg.seed, "degrade", c));

    std::map<ArteryClass, std::map<int, WorldPoint>> centers;
    for (ArteryClass label :
         {ArteryClass::internal_carotid, ArteryClass::external_carotid}) {
      CenterlinePath path =
          trace_channel(noisy.channel(label), cfg.proximity.stride_slices);
      if (!path.voxels.empty()) centers[label] = slice_centers(path);
    }

    // Predict along each vessel's traced centerline, then score everything
    // through the usual matcher.
    std::vector<ContourPair> preds;
    for (const auto& vessel : truth.vessels) {
      auto ch = centers.find(vessel.label);
      int mid = (vessel.slice_begin + vessel.slice_end) / 2;
      for (int k = vessel.slice_begin; k < vessel.slice_end; ++k) {
        if (ch == centers.end() || !ch->second.count(k)) {
          out.warnings.push_back(case_id + "/" + artery_name(vessel.label) +
                                 "/" + std::to_string(k) +
                                 ": no traced center, slice skipped");
          continue;
        }
        ContourPair pred = predict(net, vol, ch->second.at(k), cfg.model);
        if (k == mid) {
          emit_overlay(vol, mid, {vessel.contour_at(mid)}, {pred},
                       out_dir + "/overlays/" + case_id + "_" +
                           artery_name(vessel.label) + ".pgm");
        }
        preds.push_back(std::move(pred));
      }
    }
    {
      nlohmann::json cj;
      cj["version"] = 1;
      auto arr = nlohmann::json::array();
      for (const auto& cp : preds) arr.push_back(contour_to_json(cp));
      cj["contours"] = std::move(arr);
      std::ofstream f(out_dir + "/contours/" + case_id + ".json");
      if (!f) throw std::runtime_error("cannot write contours for " + case_id);
      f << cj.dump(2) << "\n";
    }

    EvalOutcome eval = evaluate_volume(preds, truth, slice_grid(vol));
    for (auto& cr : eval.cases) {
      cr.id = case_id + "/" + cr.id;
      out.cases.push_back(std::move(cr));
    }
    for (const auto& w : eval.warnings)
      out.warnings.push_back(case_id + ": " + w);
  });

  for (auto& out : outputs) {
    res.cases.insert(res.cases.end(), out.cases.begin(), out.cases.end());
    res.warnings.insert(res.warnings.end(), out.warnings.begin(),
                        out.warnings.end());
  }
  for (const auto& w : res.warnings) say("warning: " + w);
  bool any_valid = false;
  for (const auto& c : res.cases) any_valid |= c.valid;
  if (!any_valid)
    throw std::runtime_error("no test slice produced a scorable prediction");

  res.summary = summarize_cases(res.cases);
  write_metrics_csv(res.cases, out_dir + "/metrics.csv");
  write_summary_json(res.summary, out_dir + "/summary.json");
  say("median wall DSC " + std::to_string(res.summary.dsc_wall.median) +
      ", median lumen HD " + std::to_string(res.summary.hd_lumen_mm.median) +
      " mm, median outer HD " +
      std::to_string(res.summary.hd_outer_mm.median) + " mm over " +
      std::to_string(res.summary.cases) + " slices");
  return res;
}

// ---------------------------------------------------------------------------
// Self-test battery: quick invariant checks runnable from the CLI.

struct SelfTestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline std::vector<SelfTestResult> run_selftest() {
  std::vector<SelfTestResult> results;
  auto check = [&](const std::string& name, auto&& fn) {
    SelfTestResult r;
    r.name = name;
    try {
      std::string detail = fn();
      r.passed = detail.empty();
      r.detail = detail;
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = e.what();
    }
    results.push_back(std::move(r));
  };

  check("rng streams repeat and separate", []() -> std::string {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i)
      if (a.next_u64() != b.next_u64()) return "same seed diverged";
    if (derive_seed(1, "x") == derive_seed(1, "y"))
      return "different tags collided";
    return "";
  });

  check("phantom generation is deterministic", []() -> std::string {
    PhantomConfig cfg;
    cfg.dims = {24, 24, 12};
    cfg.sinusoid_amplitude_mm = 0.4;
    cfg.lumen_radius_min_mm = 1.5;
    cfg.lumen_radius_max_mm = 2.0;
    cfg.wall_thickness_min_mm = 0.8;
    cfg.wall_thickness_max_mm = 1.2;
    cfg.plaque_amplitude_mm = 0.4;
    cfg.noise_sigma = 0.05;
    cfg.seed = 7;
    auto a = generate_phantom(cfg);
    auto b = generate_phantom(cfg);
    if (a.first.data() != b.first.data()) return "volumes differ";
    return "";
  });

  check("proximity peaks on the centerline", []() -> std::string {
    ProximityParams p;
    double peak = proximity_value(0.0, p);
    if (std::abs(peak - (std::exp(p.a) - 1.0)) > 1e-9)
      return "wrong peak value";
    if (proximity_value(p.d_m_mm, p) != 0.0) return "no cutoff at d_m";
    if (proximity_value(0.4 * p.d_m_mm, p) <=
        proximity_value(0.6 * p.d_m_mm, p))
      return "not decreasing";
    return "";
  });

  check("tracing follows a straight ridge", []() -> std::string {
    Volume map({9, 9, 9}, {1, 1, 1}, {0, 0, 0});
    for (int k = 0; k < 9; ++k) map.at(4, 4, k) = 10.0f;
    CenterlinePath path = trace_centerline(map, {4, 4, 0}, {4, 4, 8});
    for (const auto& v : path.voxels)
      if (v[0] != 4 || v[1] != 4) return "path left the ridge";
    return "";
  });

  check("dijkstra matches a brute-force oracle", []() -> std::string {
    // Independent O(V^2) shortest path: linear min scans, no heap.
    auto oracle = [](const Volume& map, const VoxelIndex& s,
                     const VoxelIndex& t) {
      const auto& d = map.dims();
      float mx = 0.0f;
      for (float v : map.data()) mx = std::max(mx, v);
      std::size_t n = map.size();
      std::vector<double> dist(n, std::numeric_limits<double>::infinity());
      std::vector<char> done(n, 0);
      dist[map.index(s[0], s[1], s[2])] = 0.0;
      for (std::size_t it = 0; it < n; ++it) {
        std::size_t u = n;
        for (std::size_t v = 0; v < n; ++v)
          if (!done[v] && (u == n || dist[v] < dist[u])) u = v;
        if (u == n || dist[u] == std::numeric_limits<double>::infinity())
          break;
        done[u] = 1;
        int ui = static_cast<int>(u) % d[0];
        int uj = (static_cast<int>(u) / d[0]) % d[1];
        int uk = static_cast<int>(u) / (d[0] * d[1]);
        for (int dk = -1; dk <= 1; ++dk)
          for (int dj = -1; dj <= 1; ++dj)
            for (int di = -1; di <= 1; ++di) {
              if (!di && !dj && !dk) continue;
              int vi = ui + di, vj = uj + dj, vk = uk + dk;
              if (vi < 0 || vi >= d[0] || vj < 0 || vj >= d[1] || vk < 0 ||
                  vk >= d[2])
                continue;
              std::size_t v = map.index(vi, vj, vk);
              double step = std::sqrt(
                  di * map.spacing()[0] * di * map.spacing()[0] +
                  dj * map.spacing()[1] * dj * map.spacing()[1] +
                  dk * map.spacing()[2] * dk * map.spacing()[2]);
              double cu = static_cast<double>(mx) -
                          static_cast<double>(map.at(ui, uj, uk));
              double cv = static_cast<double>(mx) -
                          static_cast<double>(map.at(vi, vj, vk));
              double nd = dist[u] + 0.5 * (cu + cv) * step;
              if (nd < dist[v]) dist[v] = nd;
            }
      }
      return dist[map.index(t[0], t[1], t[2])];
    };
    Rng rng(99);
    for (int rep = 0; rep < 3; ++rep) {
      Volume map({4, 4, 4}, {1, 1, 1}, {0, 0, 0});
      for (auto& v : map.data()) v = static_cast<float>(rng.uniform01());
      CenterlinePath path = trace_centerline(map, {0, 0, 0}, {3, 3, 3});
      if (path.cost != oracle(map, {0, 0, 0}, {3, 3, 3}))
        return "cost differs from the oracle";
    }
    return "";
  });

  check("polar padding wraps rows", []() -> std::string {
    PolarGrid g;
    g.n_angles = 7;
    g.n_samples = 5;
    if (g.row_source(0) != 7 - 7 / 2) return "padded row 0 wrong";
    for (int row = 0; row < g.padded_rows(); ++row) {
      int src = g.row_source(row);
      if (src < 0 || src >= g.n_angles) return "row source out of range";
    }
    return "";
  });

  check("gradients match finite differences", []() -> std::string {
    ModelConfig cfg;
    cfg.n_angles = 3;
    cfg.n_samples = 3;
    cfg.channels = 2;
    cfg.seed = 11;
    Network net = build_model(cfg);
    Rng rng(3);
    std::vector<Tensor> inputs, targets;
    for (int i = 0; i < 2; ++i) {
      Tensor in(1, 2 * cfg.n_angles - 1, cfg.n_samples, 1);
      for (auto& v : in.v) v = rng.uniform01();
      Tensor tgt(2, cfg.n_angles, 1, 1);
      for (auto& v : tgt.v) v = rng.uniform(1.0, 10.0);
      inputs.push_back(std::move(in));
      targets.push_back(std::move(tgt));
    }
    GradCheckResult gc = grad_check(net, inputs, targets, 1.0);
    if (gc.max_rel_err > 1e-3)
      return "max rel err " + std::to_string(gc.max_rel_err);
    return "";
  });

  check("row shifts shift the prediction", []() -> std::string {
    ModelConfig cfg;
    cfg.n_angles = 7;
    cfg.n_samples = 7;
    cfg.channels = 2;
    cfg.seed = 5;
    Network net = build_model(cfg);
    PolarGrid g = cfg.grid();
    const int n = g.n_angles, rr = g.n_samples;
    Rng rng(17);
    std::vector<double> canonical(static_cast<std::size_t>(n) * rr);
    for (auto& v : canonical) v = rng.uniform01();
    auto padded = [&](int shift) {
      Tensor t(1, g.padded_rows(), rr, 1);
      for (int row = 0; row < g.padded_rows(); ++row) {
        int src = (g.row_source(row) + shift) % n;
        for (int r = 0; r < rr; ++r)
          t.at(0, row, r) = canonical[static_cast<std::size_t>(src) * rr + r];
      }
      return t;
    };
    Tensor out0 = forward(net, padded(0));
    Tensor out2 = forward(net, padded(2));
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < n; ++i)
        if (std::abs(out2.at(c, i, 0) - out0.at(c, (i + 2) % n, 0)) > 1e-6)
          return "shifted input did not shift the output";
    return "";
  });

  check("dice agrees on identical contours", []() -> std::string {
    ContourPair cp;
    cp.center = {5.0, 5.0, 0.0};
    for (int i = 0; i < 16; ++i) {
      cp.angles_rad.push_back(2.0 * kPi * i / 16);
      cp.lumen_radii.push_back(2.0);
      cp.thickness.push_back(1.0);
    }
    SliceGrid grid{20, 20, 0.5, 0.5, 0.0, 0.0};
    ContourMetrics m = compare_contours(cp, cp, grid);
    if (m.dsc_wall != 1.0) return "self-dice != 1";
    if (m.hd_lumen_mm > 1e-12 || m.hd_outer_mm > 1e-12)
      return "self-distance != 0";
    return "";
  });

  check("model files round-trip", []() -> std::string {
    ModelConfig cfg;
    cfg.n_angles = 7;
    cfg.n_samples = 7;
    cfg.channels = 3;
    Network net = build_model(cfg);
    auto base = std::filesystem::temp_directory_path() / "polarring-selftest";
    save_model(net, cfg, base.string());
    LoadedModel loaded = load_model(base.string());
    if (weights_hash(loaded.net) != weights_hash(net))
      return "weights changed across save/load";
    return "";
  });

  return results;
}

}  // namespace polarring
