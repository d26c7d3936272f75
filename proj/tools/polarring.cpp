// Command-line front end: phantom generation, centerline tracing, model
// training, prediction, evaluation, the end-to-end pipeline and a self-test
// battery. Every subcommand reads and writes the same JSON/raw formats the
// library uses, so stages compose through files.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "polarring/polarring.hpp"

namespace fs = std::filesystem;
using namespace polarring;

namespace {

nlohmann::json parse_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  return nlohmann::json::parse(f);
}

std::string zero_pad(int value, int width) {
  std::ostringstream os;
  os.width(width);
  os.fill('0');
  os << value;
  return os.str();
}

// --- phantom ---------------------------------------------------------------

struct PhantomOpts {
  std::string config;
  std::string out = ".";
  std::string name = "phantom";
  int count = 1;
  bool maps = false;
};

void cmd_phantom(const PhantomOpts& o) {
  PhantomConfig base;
  if (!o.config.empty()) base = phantom_config_from_json(parse_json_file(o.config));
  if (o.count < 1) throw std::runtime_error("--count must be >= 1");
  fs::create_directories(o.out);

  for (int i = 0; i < o.count; ++i) {
    PhantomConfig cfg = base;
    std::string stem = o.name;
    if (o.count > 1) {
      stem += "_" + zero_pad(i, 3);
      cfg.seed = derive_seed(base.seed, "phantom.batch",
                             static_cast<std::uint64_t>(i));
    }
    auto ph = generate_phantom(cfg);
    const std::string path = o.out + "/" + stem;
    save_volume(ph.first, path);
    save_truth(ph.second, path + ".truth.json");
    if (o.maps) {
      ProximityMap prox = proximity_map(ph.second);
      save_volume(prox.internal_map, path + ".prox_internal");
      if (!prox.external_lines.empty())
        save_volume(prox.external_map, path + ".prox_external");
    }
    std::cout << "wrote " << path << ".vol.{json,raw} and " << path
              << ".truth.json\n";
  }
}

// --- trace -----------------------------------------------------------------

struct TraceOpts {
  std::string map;
  std::string truth;
  std::string out;
  std::string channel = "internal";
  std::string dump_maps;
  int stride = 50;
  double a = 6.0;
  double d_m_mm = 5.0;
  double sigma_add = 0.0;
  double dropout_prob = 0.0;
  double wobble_mm = 0.0;
  std::uint64_t seed = 1;
};

void cmd_trace(const TraceOpts& o) {
  if (o.map.empty() == o.truth.empty())
    throw std::runtime_error("trace needs exactly one of --map or --truth");
  ArteryClass channel = artery_from_name(o.channel);
  DegradeConfig degrade{o.sigma_add, o.dropout_prob, o.wobble_mm};
  degrade.validate();

  ProximityMap prox;
  prox.params = ProximityParams{o.a, o.d_m_mm};
  if (!o.truth.empty()) {
    prox = proximity_map(load_truth(o.truth), prox.params);
  } else {
    if (o.wobble_mm > 0.0)
      throw std::runtime_error(
          "--wobble-mm rebuilds the field from its source centerline and "
          "needs --truth, not --map");
    prox.channel(channel) = load_volume(o.map);
  }
  bool degrading = o.sigma_add > 0.0 || o.dropout_prob > 0.0 || o.wobble_mm > 0.0;
  if (degrading) prox = degrade_map(prox, degrade, o.seed);
  if (!o.dump_maps.empty()) {
    fs::create_directories(o.dump_maps);
    if (o.truth.empty()) {
      save_volume(prox.channel(channel), o.dump_maps + "/prox_" + o.channel);
    } else {
      save_volume(prox.internal_map, o.dump_maps + "/prox_internal");
      if (!prox.external_lines.empty())
        save_volume(prox.external_map, o.dump_maps + "/prox_external");
    }
  }

  CenterlinePath path = trace_channel(prox.channel(channel), o.stride);
  if (path.voxels.empty())
    throw std::runtime_error("the " + o.channel +
                             " field is empty; nothing to trace");
  save_centerline(path, channel, o.out);
  std::cout << "traced " << path.voxels.size() << " voxels (cost "
            << path.cost << ") into " << o.out << "\n";
}

// --- train -----------------------------------------------------------------

struct TrainOpts {
  std::string data;
  std::string out;
  std::string config;
  std::string mode;
  std::string aug;
  int epochs = 0;
  std::int64_t seed = -1;
};

std::vector<std::string> find_truth_stems(const std::string& dir) {
  const std::string suffix = ".truth.json";
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      stems.push_back(name.substr(0, name.size() - suffix.size()));
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

void cmd_train(const TrainOpts& o) {
  ModelConfig cfg;
  if (!o.config.empty()) cfg = model_config_from_json(parse_json_file(o.config));
  if (!o.mode.empty()) cfg.mode = o.mode;
  if (!o.aug.empty()) cfg.augment = o.aug == "on";
  if (o.epochs > 0) cfg.epochs = o.epochs;
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  cfg.validate();

  std::vector<std::string> stems = find_truth_stems(o.data);
  if (stems.empty())
    throw std::runtime_error("no *.truth.json files under " + o.data);

  std::deque<Volume> volumes;  // stable addresses for the dataset pointers
  std::vector<Dataset> per_phantom;
  for (const auto& stem : stems) {
    PhantomTruth truth = load_truth(o.data + "/" + stem + ".truth.json");
    NormalizeResult norm = normalize_intensity(load_volume(o.data + "/" + stem));
    if (norm.degenerate)
      throw std::runtime_error(stem + " normalized to a flat volume");
    volumes.push_back(std::move(norm.volume));
    per_phantom.push_back(build_dataset(volumes.back(), truth));
  }

  // Last fifth of the phantoms (alphabetically) becomes the validation split.
  Dataset train_set, val_set;
  std::size_t n_val = per_phantom.size() / 5;
  for (std::size_t i = 0; i < per_phantom.size(); ++i) {
    Dataset& dst = i >= per_phantom.size() - n_val ? val_set : train_set;
    dst.insert(dst.end(), per_phantom[i].begin(), per_phantom[i].end());
  }
  std::cout << "training on " << train_set.size() << " slices from "
            << per_phantom.size() - n_val << " volumes, validating on "
            << val_set.size() << " slices\n";

  Network net = build_model(cfg);
  TrainRecord rec = train(net, train_set, val_set, cfg);

  fs::create_directories(o.out);
  save_model(net, cfg, o.out + "/model");
  write_train_log(rec, o.out + "/train_log.json");
  std::ostringstream ck;
  ck << std::hex << rec.checkpoint;
  std::cout << "trained " << rec.epochs.size() << " epochs in "
            << rec.total_seconds << "s, final loss "
            << rec.epochs.back().train_loss << ", checkpoint " << ck.str()
            << "\n";
  std::cout << "wrote " << o.out << "/model.model.json and weights\n";
}

// --- predict ---------------------------------------------------------------

struct PredictOpts {
  std::string model;
  std::string volume;
  std::vector<std::string> centerlines;
  std::string out;
  bool raw = false;
};

void cmd_predict(const PredictOpts& o) {
  std::string model_path = o.model;
  if (fs::is_directory(model_path)) model_path += "/model";
  LoadedModel lm = load_model(model_path);

  Volume vol = load_volume(o.volume);
  if (!o.raw) {
    NormalizeResult norm = normalize_intensity(vol);
    if (norm.degenerate)
      throw std::runtime_error(
          "volume intensities are constant; pass --raw to skip normalization");
    vol = std::move(norm.volume);
  }

  std::vector<ContourPair> contours;
  for (const auto& file : o.centerlines) {
    auto [path, channel] = load_centerline(file);
    (void)channel;
    for (const auto& [slice, center] : slice_centers(path))
      contours.push_back(predict(lm.net, vol, center, lm.config));
  }

  nlohmann::json j;
  j["version"] = 1;
  auto arr = nlohmann::json::array();
  for (const auto& cp : contours) arr.push_back(contour_to_json(cp));
  j["contours"] = std::move(arr);
  std::ofstream f(o.out);
  if (!f) throw std::runtime_error("cannot write " + o.out);
  f << j.dump(2) << "\n";
  std::cout << "wrote " << contours.size() << " contours to " << o.out << "\n";
}

// --- eval ------------------------------------------------------------------

struct EvalOpts {
  std::string pred;
  std::string truth;
  std::string out_dir;
};

void cmd_eval(const EvalOpts& o) {
  nlohmann::json pj = parse_json_file(o.pred);
  check_version(pj, "contours file");
  std::vector<ContourPair> preds;
  for (const auto& cj : pj.at("contours"))
    preds.push_back(contour_from_json(cj));

  PhantomTruth truth = load_truth(o.truth);
  SliceGrid grid{truth.dims[0],      truth.dims[1],      truth.spacing_mm[0],
                 truth.spacing_mm[1], truth.origin_mm[0], truth.origin_mm[1]};

  EvalOutcome outcome = evaluate_volume(preds, truth, grid);
  for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << "\n";
  bool any_valid = false;
  for (const auto& c : outcome.cases) any_valid |= c.valid;
  if (!any_valid) throw std::runtime_error("no contour could be scored");

  fs::create_directories(o.out_dir);
  write_metrics_csv(outcome.cases, o.out_dir + "/metrics.csv");
  EvalSummary summary = summarize_cases(outcome.cases);
  write_summary_json(summary, o.out_dir + "/summary.json");
  std::cout << "median wall DSC " << summary.dsc_wall.median
            << ", median lumen HD " << summary.hd_lumen_mm.median
            << " mm, median outer HD " << summary.hd_outer_mm.median
            << " mm over " << summary.cases << " slices\n";
}

// --- e2e / selftest --------------------------------------------------------

struct E2eOpts {
  std::string config;
  std::string out;
};

void cmd_e2e(const E2eOpts& o) {
  PipelineConfig cfg = o.config.empty() ? default_e2e_config()
                                        : load_pipeline_config(o.config);
  fs::create_directories(o.out);
  {
    nlohmann::json j = pipeline_config_to_json(cfg);
    std::ofstream f(o.out + "/config.json");
    if (!f) throw std::runtime_error("cannot write " + o.out + "/config.json");
    f << j.dump(2) << "\n";
  }
  run_e2e(cfg, o.out, &std::cout);
  std::cout << "results in " << o.out << "\n";
}

int cmd_selftest() {
  std::vector<SelfTestResult> results = run_selftest();
  int failed = 0;
  for (const auto& r : results) {
    if (r.passed) {
      std::cout << "  ok  " << r.name << "\n";
    } else {
      ++failed;
      std::cout << "FAIL  " << r.name << ": " << r.detail << "\n";
    }
  }
  std::cout << results.size() - failed << "/" << results.size()
            << " checks passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vessel-wall segmentation on synthetic volumes: proximity-field "
               "centerline tracing plus polar contour regression"};
  app.require_subcommand(1);
  int exit_code = 0;

  PhantomOpts ph;
  CLI::App* phantom = app.add_subcommand(
      "phantom", "Generate synthetic vessel volumes with ground truth");
  phantom->add_option("--config", ph.config,
                      "Phantom config JSON (defaults when omitted)")
      ->check(CLI::ExistingFile);
  phantom->add_option("--out", ph.out, "Output directory");
  phantom->add_option("--name", ph.name, "Output file stem");
  phantom->add_option("--count", ph.count,
                      "How many phantoms; stems get numeric suffixes");
  phantom->add_flag("--maps", ph.maps,
                    "Also write the per-channel proximity fields");
  phantom->callback([&] { cmd_phantom(ph); });

  TraceOpts tr;
  CLI::App* trace = app.add_subcommand(
      "trace", "Trace a centerline through a proximity field");
  trace->add_option("--map", tr.map, "Proximity field volume for one channel")
      ->check(CLI::ExistingFile);
  trace->add_option("--truth", tr.truth,
                    "Truth JSON; the field is built analytically from it")
      ->check(CLI::ExistingFile);
  trace->add_option("--channel", tr.channel, "internal or external")
      ->check(CLI::IsMember({"internal", "external"}));
  trace->add_option("--stride", tr.stride, "Waypoint stride in slices");
  trace->add_option("--a", tr.a, "Proximity decay parameter");
  trace->add_option("--d-m-mm", tr.d_m_mm, "Proximity support radius in mm");
  trace->add_option("--sigma-add", tr.sigma_add,
                    "Additive Gaussian field noise");
  trace->add_option("--dropout-prob", tr.dropout_prob,
                    "Per-slice chance of blanking a blob at the field peak");
  trace->add_option("--wobble-mm", tr.wobble_mm,
                    "Rebuild the field from a laterally perturbed source");
  trace->add_option("--seed", tr.seed, "Degradation seed");
  trace->add_option("--dump-maps", tr.dump_maps,
                    "Directory for the (possibly degraded) field volumes");
  trace->add_option("--out", tr.out, "Centerline JSON to write")->required();
  trace->callback([&] { cmd_trace(tr); });

  TrainOpts tn;
  CLI::App* train = app.add_subcommand(
      "train", "Train the contour regressor on phantom volumes");
  train->add_option("--data", tn.data,
                    "Directory of *.truth.json with sibling .vol files")
      ->required()
      ->check(CLI::ExistingDirectory);
  train->add_option("--out", tn.out, "Model output directory")->required();
  train->add_option("--config", tn.config, "Model config JSON")
      ->check(CLI::ExistingFile);
  train->add_option("--mode", tn.mode, "single or multi")
      ->check(CLI::IsMember({"single", "multi"}));
  train->add_option("--aug", tn.aug, "Center-jitter augmentation: on or off")
      ->check(CLI::IsMember({"on", "off"}));
  train->add_option("--epochs", tn.epochs, "Override the epoch count");
  train->add_option("--seed", tn.seed, "Override the training seed");
  train->callback([&] { cmd_train(tn); });

  PredictOpts pr;
  CLI::App* predict = app.add_subcommand(
      "predict", "Predict contours along traced centerlines");
  predict->add_option("--model", pr.model, "Model directory or base path")
      ->required();
  predict->add_option("--volume", pr.volume, "Input volume")->required();
  predict
      ->add_option("--centerline", pr.centerlines,
                   "Centerline JSON (repeatable)")
      ->required();
  predict->add_option("--out", pr.out, "Contours JSON to write")->required();
  predict->add_flag("--raw", pr.raw, "Skip intensity normalization");
  predict->callback([&] { cmd_predict(pr); });

  EvalOpts ev;
  CLI::App* eval = app.add_subcommand(
      "eval", "Score predicted contours against ground truth");
  eval->add_option("--pred", ev.pred, "Predicted contours JSON")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--truth", ev.truth, "Truth JSON")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--out-dir", ev.out_dir,
                   "Directory for metrics.csv and summary.json")
      ->required();
  eval->callback([&] { cmd_eval(ev); });

  E2eOpts e2;
  CLI::App* e2e = app.add_subcommand(
      "e2e", "Full pipeline: generate, train, trace, predict, evaluate");
  e2e->add_option("--config", e2.config, "Pipeline config JSON")
      ->check(CLI::ExistingFile);
  e2e->add_option("--out", e2.out, "Output directory")->required();
  e2e->callback([&] { cmd_e2e(e2); });

  CLI::App* selftest = app.add_subcommand(
      "selftest", "Run the built-in invariant checks");
  selftest->callback([&] { exit_code = cmd_selftest(); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
