#pragma once

// Minimal dense CNN engine for polar images. Tensors carry four axes
// (channel, angle, radius, slice); convolutions are "valid" (no implicit
// padding) and may be dilated along angle and radius, which is how the
// network grows its receptive field without pooling. Everything is plain
// double loops with the radius axis innermost and contiguous.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace polarring {

struct Tensor {
  int c = 0, a = 0, r = 0, s = 1;
  std::vector<double> v;  // layout ((c * s + s_i) * a + a_i) * r + r_i

  Tensor() = default;
  Tensor(int c_, int a_, int r_, int s_ = 1)
      : c(c_), a(a_), r(r_), s(s_),
        v(static_cast<std::size_t>(c_) * a_ * r_ * s_, 0.0) {
    if (c_ < 1 || a_ < 1 || r_ < 1 || s_ < 1)
      throw std::invalid_argument("tensor axes must be positive");
  }

  std::size_t idx(int ci, int ai, int ri, int si = 0) const {
    return ((static_cast<std::size_t>(ci) * s + si) * a + ai) * r + ri;
  }
  double& at(int ci, int ai, int ri, int si = 0) { return v[idx(ci, ai, ri, si)]; }
  double at(int ci, int ai, int ri, int si = 0) const {
    return v[idx(ci, ai, ri, si)];
  }
  double* row(int ci, int ai, int si = 0) { return &v[idx(ci, ai, 0, si)]; }
  const double* row(int ci, int ai, int si = 0) const {
    return &v[idx(ci, ai, 0, si)];
  }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const {
    return c == o.c && a == o.a && r == o.r && s == o.s;
  }
};

enum class Activation { linear, leaky_relu, softplus };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::softplus: return "softplus";
  }
  return "?";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "softplus") return Activation::softplus;
  throw std::invalid_argument("unknown activation: " + s);
}

constexpr double kLeakySlope = 0.01;

inline double activate(double z, Activation act) {
  switch (act) {
    case Activation::linear: return z;
    case Activation::leaky_relu: return z > 0.0 ? z : kLeakySlope * z;
    case Activation::softplus:
      return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }
  return z;
}

inline double activate_grad(double z, Activation act) {
  switch (act) {
    case Activation::linear: return 1.0;
    case Activation::leaky_relu: return z > 0.0 ? 1.0 : kLeakySlope;
    case Activation::softplus: {
      if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
      double e = std::exp(z);
      return e / (1.0 + e);
    }
  }
  return 1.0;
}

// Softplus inverse, used to seed output biases so the head starts at a
// sensible prior instead of near zero.
inline double softplus_inverse(double y) {
  if (!(y > 0.0)) throw std::invalid_argument("softplus_inverse needs y > 0");
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int ka = 1, kr = 1, ks = 1;  // kernel extents (angle, radius, slice)
  int da = 1, dr = 1;          // dilations; the slice axis is never dilated
  Activation act = Activation::leaky_relu;

  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * ks * ka * kr;
  }
  int span_a() const { return da * (ka - 1) + 1; }
  int span_r() const { return dr * (kr - 1) + 1; }
  int span_s() const { return ks; }
};

struct ConvLayer {
  ConvSpec spec;
  std::vector<double> w;  // [oc][ic][ks][ka][kr], radius fastest
  std::vector<double> b;  // [oc]

  explicit ConvLayer(const ConvSpec& sp = {})
      : spec(sp), w(sp.weight_count(), 0.0), b(sp.out_channels, 0.0) {
    if (sp.in_channels < 1 || sp.out_channels < 1)
      throw std::invalid_argument("conv channels must be >= 1");
    if (sp.ka < 1 || sp.kr < 1 || sp.ks < 1 || sp.ka % 2 == 0 ||
        sp.kr % 2 == 0 || sp.ks % 2 == 0)
      throw std::invalid_argument("conv kernel extents must be odd and >= 1");
    if (sp.da < 1 || sp.dr < 1)
      throw std::invalid_argument("conv dilations must be >= 1");
  }
};

namespace detail {

inline void check_conv_input(const Tensor& in, const ConvSpec& sp) {
  if (in.c != sp.in_channels)
    throw std::invalid_argument(
        "conv expects " + std::to_string(sp.in_channels) + " channels, got " +
        std::to_string(in.c));
  if (in.a < sp.span_a())
    throw std::invalid_argument("conv footprint needs angle extent >= " +
                                std::to_string(sp.span_a()) + ", got " +
                                std::to_string(in.a));
  if (in.r < sp.span_r())
    throw std::invalid_argument("conv footprint needs radius extent >= " +
                                std::to_string(sp.span_r()) + ", got " +
                                std::to_string(in.r));
  if (in.s < sp.span_s())
    throw std::invalid_argument("conv footprint needs slice extent >= " +
                                std::to_string(sp.span_s()) + ", got " +
                                std::to_string(in.s));
}

}  // namespace detail

// Valid dilated cross-correlation. If preact is given it receives the
// pre-activation values, which backward needs.
inline Tensor conv_forward(const Tensor& in, const ConvLayer& layer,
                           Tensor* preact = nullptr) {
  const ConvSpec& sp = layer.spec;
  detail::check_conv_input(in, sp);
  const int oa = in.a - sp.da * (sp.ka - 1);
  const int out_r = in.r - sp.dr * (sp.kr - 1);
  const int os = in.s - (sp.ks - 1);
  Tensor z(sp.out_channels, oa, out_r, os);

  const int ic_n = sp.in_channels, ks_n = sp.ks, ka_n = sp.ka, kr_n = sp.kr;
  for (int oc = 0; oc < sp.out_channels; ++oc) {
    const double* w_oc =
        &layer.w[static_cast<std::size_t>(oc) * ic_n * ks_n * ka_n * kr_n];
    const double bias = layer.b[oc];
    for (int so = 0; so < os; ++so) {
      for (int ao = 0; ao < oa; ++ao) {
        double* z_row = z.row(oc, ao, so);
        for (int ro = 0; ro < out_r; ++ro) z_row[ro] = bias;
        for (int ic = 0; ic < ic_n; ++ic) {
          for (int ksi = 0; ksi < ks_n; ++ksi) {
            for (int kai = 0; kai < ka_n; ++kai) {
              const double* in_row = in.row(ic, ao + sp.da * kai, so + ksi);
              const double* w_row =
                  w_oc + (static_cast<std::size_t>(ic) * ks_n + ksi) * ka_n *
                             kr_n +
                  static_cast<std::size_t>(kai) * kr_n;
              for (int kri = 0; kri < kr_n; ++kri) {
                const double wv = w_row[kri];
                const double* src = in_row + sp.dr * kri;
                for (int ro = 0; ro < out_r; ++ro) z_row[ro] += wv * src[ro];
              }
            }
          }
        }
      }
    }
  }

  if (preact) *preact = z;
  Tensor& out = z;
  if (sp.act != Activation::linear)
    for (auto& x : out.v) x = activate(x, sp.act);
  return out;
}

struct Network {
  std::vector<ConvLayer> layers;

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
  }
};

// Shape dry-run: the output tensor axes a network produces for a given
// input, throwing with the offending layer if a footprint does not fit.
inline Tensor output_shape(const Network& net, int c, int a, int r, int s) {
  Tensor probe(c, a, r, s);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const ConvSpec& sp = net.layers[i].spec;
    try {
      detail::check_conv_input(probe, sp);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("layer " + std::to_string(i) + ": " +
                                  e.what());
    }
    probe = Tensor(sp.out_channels, probe.a - sp.da * (sp.ka - 1),
                   probe.r - sp.dr * (sp.kr - 1), probe.s - (sp.ks - 1));
  }
  return probe;
}

inline Tensor forward(const Network& net, Tensor in) {
  for (const auto& layer : net.layers) in = conv_forward(in, layer);
  return in;
}

struct ForwardTrace {
  std::vector<Tensor> inputs;   // input seen by each layer
  std::vector<Tensor> preacts;  // pre-activation of each layer
  Tensor output;
};

inline ForwardTrace forward_trace(const Network& net, const Tensor& in) {
  ForwardTrace tr;
  tr.inputs.reserve(net.layers.size());
  tr.preacts.resize(net.layers.size());
  Tensor cur = in;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    tr.inputs.push_back(cur);
    cur = conv_forward(cur, net.layers[i], &tr.preacts[i]);
  }
  tr.output = std::move(cur);
  return tr;
}

struct Gradients {
  std::vector<std::vector<double>> w, b;

  Gradients() = default;
  explicit Gradients(const Network& net) {
    for (const auto& l : net.layers) {
      w.emplace_back(l.w.size(), 0.0);
      b.emplace_back(l.b.size(), 0.0);
    }
  }
  void zero() {
    for (auto& g : w) std::fill(g.begin(), g.end(), 0.0);
    for (auto& g : b) std::fill(g.begin(), g.end(), 0.0);
  }
  void scale(double f) {
    for (auto& g : w)
      for (auto& x : g) x *= f;
    for (auto& g : b)
      for (auto& x : g) x *= f;
  }
};

namespace detail {

// One layer of backprop. Accumulates (does not overwrite) into dw/db and,
// when dinput is non-null, into a zeroed tensor of the input's shape.
inline void backward_layer(const ConvLayer& layer, const Tensor& input,
                           const Tensor& preact, const Tensor& dout,
                           std::vector<double>& dw, std::vector<double>& db,
                           Tensor* dinput) {
  const ConvSpec& sp = layer.spec;
  Tensor dz = dout;
  if (sp.act != Activation::linear)
    for (std::size_t i = 0; i < dz.v.size(); ++i)
      dz.v[i] *= activate_grad(preact.v[i], sp.act);

  const int oa = dz.a, out_r = dz.r, os = dz.s;
  const int ic_n = sp.in_channels, ks_n = sp.ks, ka_n = sp.ka, kr_n = sp.kr;
  if (dinput) *dinput = Tensor(input.c, input.a, input.r, input.s);

  for (int oc = 0; oc < sp.out_channels; ++oc) {
    double* dw_oc = &dw[static_cast<std::size_t>(oc) * ic_n * ks_n * ka_n * kr_n];
    const double* w_oc =
        &layer.w[static_cast<std::size_t>(oc) * ic_n * ks_n * ka_n * kr_n];
    double db_sum = 0.0;
    for (int so = 0; so < os; ++so) {
      for (int ao = 0; ao < oa; ++ao) {
        const double* dz_row = dz.row(oc, ao, so);
        for (int ro = 0; ro < out_r; ++ro) db_sum += dz_row[ro];
        for (int ic = 0; ic < ic_n; ++ic) {
          for (int ksi = 0; ksi < ks_n; ++ksi) {
            const std::size_t base =
                (static_cast<std::size_t>(ic) * ks_n + ksi) * ka_n * kr_n;
            for (int kai = 0; kai < ka_n; ++kai) {
              const double* in_row = input.row(ic, ao + sp.da * kai, so + ksi);
              double* din_row =
                  dinput ? dinput->row(ic, ao + sp.da * kai, so + ksi)
                         : nullptr;
              for (int kri = 0; kri < kr_n; ++kri) {
                const std::size_t wi = base + static_cast<std::size_t>(kai) * kr_n + kri;
                const double* src = in_row + sp.dr * kri;
                double acc = 0.0;
                for (int ro = 0; ro < out_r; ++ro) acc += dz_row[ro] * src[ro];
                dw_oc[wi] += acc;
                if (din_row) {
                  const double wv = w_oc[wi];
                  double* dst = din_row + sp.dr * kri;
                  for (int ro = 0; ro < out_r; ++ro) dst[ro] += wv * dz_row[ro];
                }
              }
            }
          }
        }
      }
    }
    db[oc] += db_sum;
  }
}

}  // namespace detail

// Backprop through the whole network, accumulating parameter gradients.
// Returns the gradient with respect to the network input when asked for
// (training never needs it, the gradient checker does).
inline Tensor backward(const Network& net, const ForwardTrace& trace,
                       const Tensor& dloss_dout, Gradients& grads,
                       bool want_dinput = false) {
  if (net.layers.empty()) return dloss_dout;
  Tensor dout = dloss_dout;
  Tensor din;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    bool need_din = li > 0 || want_dinput;
    detail::backward_layer(net.layers[li], trace.inputs[li], trace.preacts[li],
                           dout, grads.w[li], grads.b[li],
                           need_din ? &din : nullptr);
    if (need_din) dout = std::move(din);
  }
  return dout;
}

struct LossResult {
  double value = 0.0;
  Tensor grad;
};

// Smooth L1 (Huber), mean-reduced: quadratic within beta of the target,
// linear outside, so stray rays cannot dominate the update.
inline LossResult smooth_l1(const Tensor& pred, const Tensor& target,
                            double beta) {
  if (!pred.same_shape(target))
    throw std::invalid_argument("smooth_l1 shape mismatch");
  if (!(beta > 0.0)) throw std::invalid_argument("smooth_l1 beta must be > 0");
  LossResult res;
  res.grad = Tensor(pred.c, pred.a, pred.r, pred.s);
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    double d = pred.v[i] - target.v[i];
    double ad = std::abs(d);
    if (ad < beta) {
      res.value += 0.5 * d * d / beta;
      res.grad.v[i] = d / beta * inv_n;
    } else {
      res.value += ad - 0.5 * beta;
      res.grad.v[i] = (d > 0.0 ? 1.0 : -1.0) * inv_n;
    }
  }
  res.value *= inv_n;
  return res;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> mw, vw, mb, vb;
  long t = 0;

  explicit AdamState(const Network& net) {
    for (const auto& l : net.layers) {
      mw.emplace_back(l.w.size(), 0.0);
      vw.emplace_back(l.w.size(), 0.0);
      mb.emplace_back(l.b.size(), 0.0);
      vb.emplace_back(l.b.size(), 0.0);
    }
  }
};

namespace detail {

inline void adam_update(std::vector<double>& p, const std::vector<double>& g,
                        std::vector<double>& m, std::vector<double>& v,
                        const AdamConfig& cfg, double bc1, double bc2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    double mh = m[i] / bc1;
    double vh = v[i] / bc2;
    p[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
  }
}

}  // namespace detail

inline void adam_step(Network& net, const Gradients& grads, AdamState& state,
                      const AdamConfig& cfg) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    detail::adam_update(net.layers[li].w, grads.w[li], state.mw[li],
                        state.vw[li], cfg, bc1, bc2);
    detail::adam_update(net.layers[li].b, grads.b[li], state.mb[li],
                        state.vb[li], cfg, bc1, bc2);
  }
}

// ---------------------------------------------------------------------------
// Parameter vector helpers (gradient checking, serialization)

inline std::vector<double> flatten_params(const Network& net) {
  std::vector<double> out;
  out.reserve(net.param_count());
  for (const auto& l : net.layers) {
    out.insert(out.end(), l.w.begin(), l.w.end());
    out.insert(out.end(), l.b.begin(), l.b.end());
  }
  return out;
}

inline void apply_params(Network& net, const std::vector<double>& params) {
  if (params.size() != net.param_count())
    throw std::invalid_argument("parameter vector size mismatch: expected " +
                                std::to_string(net.param_count()) + ", got " +
                                std::to_string(params.size()));
  std::size_t pos = 0;
  for (auto& l : net.layers) {
    std::copy(params.begin() + pos, params.begin() + pos + l.w.size(),
              l.w.begin());
    pos += l.w.size();
    std::copy(params.begin() + pos, params.begin() + pos + l.b.size(),
              l.b.begin());
    pos += l.b.size();
  }
}

inline std::vector<double> flatten_grads(const Gradients& g) {
  std::vector<double> out;
  for (std::size_t li = 0; li < g.w.size(); ++li) {
    out.insert(out.end(), g.w[li].begin(), g.w[li].end());
    out.insert(out.end(), g.b[li].begin(), g.b[li].end());
  }
  return out;
}

// FNV-1a over the raw little-endian parameter bytes; cheap fingerprint for
// checkpoint identity and determinism checks.
inline std::uint64_t weights_hash(const Network& net) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::vector<double>& xs) {
    for (double x : xs) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof(bits));
      for (int byte = 0; byte < 8; ++byte) {
        h ^= (bits >> (8 * byte)) & 0xffu;
        h *= 1099511628211ull;
      }
    }
  };
  for (const auto& l : net.layers) {
    mix(l.w);
    mix(l.b);
  }
  return h;
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t param_index = 0;  // where the worst error occurred
  std::size_t params = 0;
};

// Central-difference check of backprop over every parameter, summed over a
// set of input/target pairs. Relative error uses a floor so near-zero
// gradients do not blow up the ratio.
inline GradCheckResult grad_check(Network& net,
                                  const std::vector<Tensor>& inputs,
                                  const std::vector<Tensor>& targets,
                                  double beta, double eps = 1e-4) {
  if (inputs.empty() || inputs.size() != targets.size())
    throw std::invalid_argument("grad_check needs matching input/target sets");

  auto total_loss = [&]() {
    double sum = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      sum += smooth_l1(forward(net, inputs[i]), targets[i], beta).value;
    return sum;
  };

  Gradients grads(net);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    ForwardTrace tr = forward_trace(net, inputs[i]);
    LossResult loss = smooth_l1(tr.output, targets[i], beta);
    backward(net, tr, loss.grad, grads);
  }
  std::vector<double> analytic = flatten_grads(grads);
  std::vector<double> params = flatten_params(net);

  GradCheckResult res;
  res.params = params.size();
  for (std::size_t p = 0; p < params.size(); ++p) {
    const double saved = params[p];
    params[p] = saved + eps;
    apply_params(net, params);
    double lp = total_loss();
    params[p] = saved - eps;
    apply_params(net, params);
    double lm = total_loss();
    params[p] = saved;
    double numeric = (lp - lm) / (2.0 * eps);
    double denom = std::max({std::abs(analytic[p]), std::abs(numeric), 1e-4});
    double rel = std::abs(analytic[p] - numeric) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.param_index = p;
    }
  }
  apply_params(net, params);
  return res;
}

}  // namespace polarring
