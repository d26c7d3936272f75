#pragma once

// Step two of the pipeline: the contour-regression model. A stack of
// dilated conv layers collapses a padded polar image to one value pair per
// canonical angle -- lumen radius and wall thickness in ray units -- and a
// softplus head keeps both in range (radius positive, thickness
// non-negative), so predicted contours are nested by construction.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "polarring/contour.hpp"
#include "polarring/geometry.hpp"
#include "polarring/json_util.hpp"
#include "polarring/metrics.hpp"
#include "polarring/neuralnet.hpp"
#include "polarring/phantom.hpp"
#include "polarring/polar.hpp"
#include "polarring/rng.hpp"
#include "polarring/volume.hpp"

namespace polarring {

namespace detail {

// log2 of a power of two, or -1.
inline int exact_log2(int x) {
  if (x < 1 || (x & (x - 1)) != 0) return -1;
  int m = 0;
  while ((1 << m) < x) ++m;
  return m;
}

}  // namespace detail

struct ModelConfig {
  std::string mode = "single";  // "single" or "multi" (adjacent-slice input)
  int n_angles = 31;
  int n_samples = 127;
  double ray_spacing_mm = 0.25;
  int channels = 32;
  int slice_context = 3;    // k; multi mode reads 2k+1 planes
  double jitter_frac = 0.4; // of the slice's mean lumen radius
  int batch_size = 100;
  int epochs = 200;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double smooth_l1_beta = 1.0;  // mm; applied in ray units inside the loss
  double lumen_prior_mm = 2.0;
  double thickness_prior_mm = 1.0;
  bool augment = true;
  std::uint64_t seed = 1;

  bool multi() const { return mode == "multi"; }
  int stack_slices() const { return multi() ? 2 * slice_context + 1 : 1; }

  PolarGrid grid() const {
    PolarGrid g;
    g.n_angles = n_angles;
    g.n_samples = n_samples;
    g.ray_spacing_mm = ray_spacing_mm;
    return g;
  }

  // Number of dilation-doubling layers needed to cover an axis: the kernel-3
  // schedule 1,2,4,... spans 2*(2^m - 1), which must equal extent-1.
  int angle_layers() const { return detail::exact_log2((n_angles + 1) / 2); }
  int radius_layers() const { return detail::exact_log2((n_samples + 1) / 2); }

  void validate() const {
    if (mode != "single" && mode != "multi")
      throw std::invalid_argument("model mode must be 'single' or 'multi'");
    if (n_angles < 3 || angle_layers() < 0 || (n_angles + 1) % 2 != 0)
      throw std::invalid_argument(
          "angle count breaks the receptive-field budget: the doubling "
          "dilation schedule covers the angle axis only when (n_angles+1)/2 "
          "is a power of two (3, 7, 15, 31, 63, ...); got " +
          std::to_string(n_angles));
    if (n_samples < 3 || radius_layers() < 0)
      throw std::invalid_argument(
          "radius count breaks the receptive-field budget: the doubling "
          "dilation schedule collapses the radius axis only when "
          "(n_samples+1)/2 is a power of two (3, 7, 15, 31, 63, 127, ...); "
          "got " + std::to_string(n_samples));
    if (!(ray_spacing_mm > 0.0))
      throw std::invalid_argument("ray spacing must be > 0");
    if (channels < 1) throw std::invalid_argument("channels must be >= 1");
    if (multi() && slice_context < 1)
      throw std::invalid_argument("multi mode needs slice context >= 1");
    if (jitter_frac < 0.0)
      throw std::invalid_argument("jitter fraction must be >= 0");
    if (batch_size < 1 || epochs < 1)
      throw std::invalid_argument("batch size and epochs must be >= 1");
    if (!(lr > 0.0) || !(smooth_l1_beta > 0.0))
      throw std::invalid_argument("lr and smooth_l1_beta must be > 0");
    if (!(lumen_prior_mm > 0.0) || !(thickness_prior_mm > 0.0))
      throw std::invalid_argument("radius priors must be > 0");
  }
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"mode", c.mode},
                        {"n_angles", c.n_angles},
                        {"n_samples", c.n_samples},
                        {"ray_spacing_mm", c.ray_spacing_mm},
                        {"channels", c.channels},
                        {"slice_context", c.slice_context},
                        {"jitter_frac", c.jitter_frac},
                        {"batch_size", c.batch_size},
                        {"epochs", c.epochs},
                        {"lr", c.lr},
                        {"beta1", c.beta1},
                        {"beta2", c.beta2},
                        {"eps", c.eps},
                        {"smooth_l1_beta", c.smooth_l1_beta},
                        {"lumen_prior_mm", c.lumen_prior_mm},
                        {"thickness_prior_mm", c.thickness_prior_mm},
                        {"augment", c.augment},
                        {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  check_keys(j,
             {"mode", "n_angles", "n_samples", "ray_spacing_mm", "channels",
              "slice_context", "jitter_frac", "batch_size", "epochs", "lr",
              "beta1", "beta2", "eps", "smooth_l1_beta", "lumen_prior_mm",
              "thickness_prior_mm", "augment", "seed"},
             "model config");
  ModelConfig c;
  read_field(j, "mode", c.mode);
  read_field(j, "n_angles", c.n_angles);
  read_field(j, "n_samples", c.n_samples);
  read_field(j, "ray_spacing_mm", c.ray_spacing_mm);
  read_field(j, "channels", c.channels);
  read_field(j, "slice_context", c.slice_context);
  read_field(j, "jitter_frac", c.jitter_frac);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "epochs", c.epochs);
  read_field(j, "lr", c.lr);
  read_field(j, "beta1", c.beta1);
  read_field(j, "beta2", c.beta2);
  read_field(j, "eps", c.eps);
  read_field(j, "smooth_l1_beta", c.smooth_l1_beta);
  read_field(j, "lumen_prior_mm", c.lumen_prior_mm);
  read_field(j, "thickness_prior_mm", c.thickness_prior_mm);
  read_field(j, "augment", c.augment);
  read_field(j, "seed", c.seed);
  c.validate();
  return c;
}

namespace detail {

inline void he_init(ConvLayer& layer, Rng& rng) {
  const ConvSpec& sp = layer.spec;
  double fan_in = static_cast<double>(sp.in_channels) * sp.ka * sp.kr * sp.ks;
  double sigma = std::sqrt(2.0 / fan_in);
  for (auto& w : layer.w) w = rng.normal(0.0, sigma);
}

}  // namespace detail

// Architecture: body layers with kernel 3 and doubling dilation on each
// axis until that axis's budget is spent (kernel 1 afterwards), then a 1x1
// softplus head mapping to two channels. The padded angle axis lands on
// exactly n_angles outputs and the radius axis on one, so the output is
// (2, N, 1, 1). The head bias starts at the configured radius priors.
inline Network build_model(const ModelConfig& cfg) {
  cfg.validate();
  const int n_ang = cfg.angle_layers();
  const int n_rad = cfg.radius_layers();
  const int n_slc = cfg.multi() ? cfg.slice_context : 0;
  const int body = std::max({n_ang, n_rad, n_slc});

  Network net;
  for (int i = 0; i < body; ++i) {
    ConvSpec sp;
    sp.in_channels = i == 0 ? 1 : cfg.channels;
    sp.out_channels = cfg.channels;
    if (i < n_ang) {
      sp.ka = 3;
      sp.da = 1 << i;
    }
    if (i < n_rad) {
      sp.kr = 3;
      sp.dr = 1 << i;
    }
    if (i < n_slc) sp.ks = 3;
    sp.act = Activation::leaky_relu;
    ConvLayer layer(sp);
    Rng rng(derive_seed(cfg.seed, "model.init", static_cast<std::uint64_t>(i)));
    detail::he_init(layer, rng);
    net.layers.push_back(std::move(layer));
  }

  ConvSpec head;
  head.in_channels = cfg.channels;
  head.out_channels = 2;
  head.act = Activation::softplus;
  ConvLayer head_layer(head);
  Rng rng(derive_seed(cfg.seed, "model.head"));
  detail::he_init(head_layer, rng);
  head_layer.b[0] = softplus_inverse(cfg.lumen_prior_mm / cfg.ray_spacing_mm);
  head_layer.b[1] =
      softplus_inverse(cfg.thickness_prior_mm / cfg.ray_spacing_mm);
  net.layers.push_back(std::move(head_layer));

  // Sanity: the schedule must land on (2, N, 1, 1).
  Tensor probe = output_shape(net, 1, 2 * cfg.n_angles - 1, cfg.n_samples,
                              cfg.stack_slices());
  if (probe.c != 2 || probe.a != cfg.n_angles || probe.r != 1 || probe.s != 1)
    throw std::logic_error("model schedule does not collapse to (2, N, 1, 1)");
  return net;
}

// One training case: a normalized volume plus the truth contour whose
// center doubles as the polar origin.
struct TrainCase {
  const Volume* volume = nullptr;
  ContourPair truth;
};

using Dataset = std::vector<TrainCase>;

inline Dataset build_dataset(const Volume& vol, const PhantomTruth& truth) {
  Dataset out;
  for (const auto& vessel : truth.vessels)
    for (int k = vessel.slice_begin; k < vessel.slice_end; ++k)
      out.push_back({&vol, vessel.contour_at(k)});
  return out;
}

namespace detail {

inline Tensor polar_to_tensor(const PolarImage& img) {
  Tensor t(1, img.grid.padded_rows(), img.grid.n_samples, img.n_slices);
  for (int s = 0; s < img.n_slices; ++s)
    for (int row = 0; row < img.grid.padded_rows(); ++row)
      for (int r = 0; r < img.grid.n_samples; ++r)
        t.at(0, row, r, s) = img.at(row, r, s);
  return t;
}

inline Tensor cast_input(const Volume& vol, const WorldPoint& center,
                         const ModelConfig& cfg) {
  PolarGrid grid = cfg.grid();
  PolarImage img = cfg.multi()
                       ? cast_polar_stack(vol, center, grid, cfg.slice_context)
                       : cast_polar(vol, center, grid);
  return polar_to_tensor(img);
}

inline Tensor radii_to_target(const RadiiTargets& t, const PolarGrid& grid) {
  Tensor out(2, grid.n_angles, 1, 1);
  for (int i = 0; i < grid.n_angles; ++i) {
    out.at(0, i, 0) = t.lumen[i] / grid.ray_spacing_mm;
    out.at(1, i, 0) = (t.outer[i] - t.lumen[i]) / grid.ray_spacing_mm;
  }
  return out;
}

inline double mean_lumen_radius(const ContourPair& cp) {
  double sum = 0.0;
  for (double r : cp.lumen_radii) sum += r;
  return sum / static_cast<double>(cp.lumen_radii.size());
}

// Jittered polar origin that is guaranteed to stay inside the lumen, so
// every ray still crosses lumen before wall. Redraws are deterministic.
inline WorldPoint jittered_center(const TrainCase& tc, double frac, Rng& rng) {
  double max_r = frac * mean_lumen_radius(tc.truth);
  Polygon lumen = to_polygons(tc.truth).lumen;
  for (int attempt = 0; attempt < 64; ++attempt) {
    WorldPoint c = jitter_center(tc.truth.center, max_r, rng);
    if (point_in_polygon(lumen, {c.x, c.y})) return c;
  }
  return tc.truth.center;  // pathological contour; fall back to the truth
}

}  // namespace detail

namespace detail {

// Shared by predict and the per-epoch validation pass: model output (ray
// units) to a mm contour at the given origin.
inline ContourPair contour_from_output(const Tensor& out,
                                       const WorldPoint& center, int slice,
                                       const ModelConfig& cfg) {
  if (out.c != 2 || out.a != cfg.n_angles || out.r != 1 || out.s != 1)
    throw std::runtime_error("model output shape does not match the config");
  ContourPair cp;
  cp.center = center;
  cp.slice = slice;
  const PolarGrid grid = cfg.grid();
  for (int i = 0; i < cfg.n_angles; ++i) {
    cp.angles_rad.push_back(grid.angle(i));
    cp.lumen_radii.push_back(out.at(0, i, 0) * cfg.ray_spacing_mm);
    cp.thickness.push_back(out.at(1, i, 0) * cfg.ray_spacing_mm);
  }
  cp.validate();
  return cp;
}

}  // namespace detail

// Validation fields are -1 when no validation set was given.
struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = -1.0;
  double val_dsc_wall = -1.0;     // median over validation cases
  double val_hd_lumen_mm = -1.0;
  double val_hd_outer_mm = -1.0;
  double seconds = 0.0;
};

struct TrainRecord {
  std::vector<EpochRecord> epochs;
  double total_seconds = 0.0;
  std::uint64_t checkpoint = 0;  // weights hash after the last epoch
};

// Mini-batch Adam over the dataset. Shuffle order, jitter draws and weight
// init all come from streams derived from cfg.seed, so a given
// (config, dataset) pair trains to bit-identical weights every run.
// Augmentation re-casts each sample per epoch at a jittered center and
// derives the matching radii targets from the moved origin.
inline TrainRecord train(Network& net, const Dataset& train_set,
                         const Dataset& val_set, const ModelConfig& cfg) {
  cfg.validate();
  if (train_set.empty())
    throw std::invalid_argument("training dataset is empty");
  for (const auto& tc : train_set)
    if (!tc.volume) throw std::invalid_argument("training case without volume");

  const PolarGrid grid = cfg.grid();
  const double beta_rays = cfg.smooth_l1_beta / cfg.ray_spacing_mm;
  AdamConfig adam_cfg{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
  AdamState adam(net);
  Gradients grads(net);

  // Without augmentation the inputs never change; cast them once.
  std::vector<Tensor> fixed_inputs, fixed_targets;
  if (!cfg.augment) {
    for (const auto& tc : train_set) {
      fixed_inputs.push_back(detail::cast_input(*tc.volume, tc.truth.center, cfg));
      fixed_targets.push_back(detail::radii_to_target(
          radii_from_truth(tc.truth, tc.truth.center, grid), grid));
    }
  }
  std::vector<Tensor> val_inputs, val_targets;
  for (const auto& tc : val_set) {
    if (!tc.volume) throw std::invalid_argument("validation case without volume");
    val_inputs.push_back(detail::cast_input(*tc.volume, tc.truth.center, cfg));
    val_targets.push_back(detail::radii_to_target(
        radii_from_truth(tc.truth, tc.truth.center, grid), grid));
  }

  TrainRecord rec;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto t_start = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto t_epoch = std::chrono::steady_clock::now();
    Rng shuffle_rng(
        derive_seed(cfg.seed, "train.shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    Rng jitter_rng(
        derive_seed(cfg.seed, "train.jitter", static_cast<std::uint64_t>(epoch)));

    double loss_sum = 0.0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      std::size_t batch_n =
          std::min<std::size_t>(cfg.batch_size, order.size() - pos);
      grads.zero();
      for (std::size_t b = 0; b < batch_n; ++b) {
        const TrainCase& tc = train_set[order[pos + b]];
        Tensor input, target;
        if (cfg.augment) {
          WorldPoint c =
              detail::jittered_center(tc, cfg.jitter_frac, jitter_rng);
          input = detail::cast_input(*tc.volume, c, cfg);
          target = detail::radii_to_target(radii_from_truth(tc.truth, c, grid),
                                           grid);
        } else {
          input = fixed_inputs[order[pos + b]];
          target = fixed_targets[order[pos + b]];
        }
        ForwardTrace tr = forward_trace(net, input);
        LossResult loss = smooth_l1(tr.output, target, beta_rays);
        loss_sum += loss.value;
        backward(net, tr, loss.grad, grads);
      }
      grads.scale(1.0 / static_cast<double>(batch_n));
      adam_step(net, grads, adam, adam_cfg);
      pos += batch_n;
    }

    EpochRecord er;
    er.epoch = epoch + 1;
    er.train_loss = loss_sum / static_cast<double>(order.size());
    if (!std::isfinite(er.train_loss))
      throw std::runtime_error(
          "training diverged: non-finite loss at epoch " +
          std::to_string(epoch + 1) + " (seed " + std::to_string(cfg.seed) +
          ", lr " + std::to_string(cfg.lr) + ")");
    if (!val_inputs.empty()) {
      double v = 0.0;
      std::vector<double> dsc, hdl, hdo;
      for (std::size_t i = 0; i < val_inputs.size(); ++i) {
        Tensor out = forward(net, val_inputs[i]);
        v += smooth_l1(out, val_targets[i], beta_rays).value;
        const TrainCase& tc = val_set[i];
        ContourPair pred = detail::contour_from_output(
            out, tc.truth.center, tc.truth.slice, cfg);
        ContourMetrics cm =
            compare_contours(pred, tc.truth, slice_grid(*tc.volume));
        dsc.push_back(cm.dsc_wall);
        hdl.push_back(cm.hd_lumen_mm);
        hdo.push_back(cm.hd_outer_mm);
      }
      er.val_loss = v / static_cast<double>(val_inputs.size());
      er.val_dsc_wall = percentile(dsc, 50.0);
      er.val_hd_lumen_mm = percentile(hdl, 50.0);
      er.val_hd_outer_mm = percentile(hdo, 50.0);
    }
    er.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                               t_epoch)
                     .count();
    rec.epochs.push_back(er);
  }
  rec.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  rec.checkpoint = weights_hash(net);
  return rec;
}

// Contour regression at one centerline point. Model outputs are in ray
// units; scaling by the ray spacing converts to mm.
inline ContourPair predict(const Network& net, const Volume& vol,
                           const WorldPoint& center, const ModelConfig& cfg) {
  Tensor out = forward(net, detail::cast_input(vol, center, cfg));
  return detail::contour_from_output(out, center, vol.slice_of(center), cfg);
}

// Per-angle mean over member predictions. All members must agree with the
// shared config (same grid), which predict() itself enforces.
inline ContourPair ensemble_predict(const std::vector<Network>& members,
                                    const Volume& vol, const WorldPoint& center,
                                    const ModelConfig& cfg) {
  if (members.empty())
    throw std::invalid_argument("ensemble needs at least one member");
  ContourPair acc = predict(members[0], vol, center, cfg);
  for (std::size_t m = 1; m < members.size(); ++m) {
    ContourPair p = predict(members[m], vol, center, cfg);
    for (int i = 0; i < cfg.n_angles; ++i) {
      acc.lumen_radii[i] += p.lumen_radii[i];
      acc.thickness[i] += p.thickness[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (int i = 0; i < cfg.n_angles; ++i) {
    acc.lumen_radii[i] *= inv;
    acc.thickness[i] *= inv;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Model files: <base>.model.json (config + layer specs) and
// <base>.weights.bin (parameters, f64 little-endian, flatten order).

namespace detail {

inline std::string model_base(const std::string& path) {
  const std::string suffix = ".model.json";
  if (path.size() > suffix.size() &&
      path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0)
    return path.substr(0, path.size() - suffix.size());
  return path;
}

}  // namespace detail

inline void save_model(const Network& net, const ModelConfig& cfg,
                       const std::string& path) {
  const std::string base = detail::model_base(path);
  nlohmann::json j;
  j["version"] = 1;
  j["config"] = model_config_to_json(cfg);
  auto layers = nlohmann::json::array();
  std::size_t offset = 0;  // in doubles, into the weight blob
  for (const auto& l : net.layers) {
    layers.push_back({{"in", l.spec.in_channels},
                      {"out", l.spec.out_channels},
                      {"ka", l.spec.ka},
                      {"kr", l.spec.kr},
                      {"ks", l.spec.ks},
                      {"da", l.spec.da},
                      {"dr", l.spec.dr},
                      {"act", activation_name(l.spec.act)},
                      {"w_offset", offset},
                      {"b_offset", offset + l.w.size()}});
    offset += l.w.size() + l.b.size();
  }
  j["layers"] = std::move(layers);
  j["param_count"] = net.param_count();

  std::ofstream jf(base + ".model.json");
  if (!jf) throw std::runtime_error("cannot write " + base + ".model.json");
  jf << j.dump(2) << "\n";

  std::vector<double> params = flatten_params(net);
  std::ofstream bf(base + ".weights.bin", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot write " + base + ".weights.bin");
  bf.write(reinterpret_cast<const char*>(params.data()),
           static_cast<std::streamsize>(params.size() * sizeof(double)));
}

struct LoadedModel {
  Network net;
  ModelConfig config;
};

inline LoadedModel load_model(const std::string& path) {
  const std::string base = detail::model_base(path);
  std::ifstream jf(base + ".model.json");
  if (!jf) throw std::runtime_error("cannot read " + base + ".model.json");
  nlohmann::json j = nlohmann::json::parse(jf);
  check_version(j, "model file");
  check_keys(j, {"version", "config", "layers", "param_count"}, "model file");

  LoadedModel out;
  out.config = model_config_from_json(j.at("config"));
  std::size_t offset = 0;
  for (const auto& lj : j.at("layers")) {
    ConvSpec sp;
    sp.in_channels = lj.at("in").get<int>();
    sp.out_channels = lj.at("out").get<int>();
    sp.ka = lj.at("ka").get<int>();
    sp.kr = lj.at("kr").get<int>();
    sp.ks = lj.at("ks").get<int>();
    sp.da = lj.at("da").get<int>();
    sp.dr = lj.at("dr").get<int>();
    sp.act = activation_from_name(lj.at("act").get<std::string>());
    ConvLayer layer(sp);
    if (lj.at("w_offset").get<std::size_t>() != offset ||
        lj.at("b_offset").get<std::size_t>() != offset + layer.w.size())
      throw std::runtime_error("model file: layer offsets are inconsistent");
    offset += layer.w.size() + layer.b.size();
    out.net.layers.push_back(std::move(layer));
  }
  std::size_t expected = j.at("param_count").get<std::size_t>();
  if (expected != out.net.param_count())
    throw std::runtime_error("model file: parameter count mismatch");

  std::ifstream bf(base + ".weights.bin", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot read " + base + ".weights.bin");
  std::vector<double> params(expected);
  bf.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(params.size() * sizeof(double)));
  if (static_cast<std::size_t>(bf.gcount()) != params.size() * sizeof(double))
    throw std::runtime_error("model weights file is truncated");
  apply_params(out.net, params);
  return out;
}

}  // namespace polarring
