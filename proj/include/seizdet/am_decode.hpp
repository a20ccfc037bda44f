#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "seizdet/error.hpp"
#include "seizdet/nn/network.hpp"
#include "seizdet/preprocess.hpp"
#include "seizdet/rng.hpp"
#include "seizdet/seiznet.hpp"
#include "seizdet/spectral.hpp"
#include "seizdet/text_io.hpp"

namespace seizdet {

inline constexpr int kAmOutputLayer = 5;  // layer_index for the dense(2) logits

struct AmConfig {
  int layer_index{4};  // conv block 1-4, or 5 for an output logit
  int filter_index{0};
  int steps{200};
  double step_size{0.1};
  double tv_weight{10.0};
  double lp_weight{10.0};
  double lp_p{6.0};
  double input_low{-10.0};
  double input_high{10.0};
  std::uint64_t seed{0};
};

inline void validate(const AmConfig& c) {
  if (c.steps < 1) throw ContractError("am: steps must be >= 1");
  if (!(c.step_size > 0.0)) throw ContractError("am: step_size must be > 0");
  if (!(c.tv_weight >= 0.0) || !(c.lp_weight >= 0.0)) throw ContractError("am: regularizer weights must be >= 0");
  if (!(c.lp_p >= 1.0)) throw ContractError("am: lp_p must be >= 1");
  if (!(c.input_low < c.input_high)) throw ContractError("am: input range must have low < high");
}

// Pattern [n_channels x 1000], row-major.
struct AmPattern {
  std::size_t n_channels{0};
  std::vector<double> values;

  std::span<const double> channel(std::size_t c) const { return {values.data() + c * kEpochSamples, kEpochSamples}; }
};

struct AmResult {
  AmPattern pattern;
  double activation{0.0};         // target unit, final pattern
  double objective{0.0};          // final objective
  double initial_objective{0.0};  // objective at the random start
  std::vector<double> loss_history;  // best objective after each step, non-decreasing
  std::vector<double> dominant_hz;   // per channel
  double dominant_hz_summed{0.0};
  int accepted_steps{0};
};

// Sum over channels of sum_t |x[t+1] - x[t]|.
inline double total_variation(const AmPattern& p) {
  double tv = 0.0;
  const std::size_t len = p.n_channels ? p.values.size() / p.n_channels : 0;
  for (std::size_t c = 0; c < p.n_channels; ++c)
    for (std::size_t t = 0; t + 1 < len; ++t) tv += std::abs(p.values[c * len + t + 1] - p.values[c * len + t]);
  return tv;
}

inline double lp_norm(std::span<const double> x, double p) {
  if (!(p >= 1.0)) throw ContractError("lp_norm: p must be >= 1");
  double s = 0.0;
  for (double v : x) s += std::pow(std::abs(v), p);
  return std::pow(s, 1.0 / p);
}

namespace detail {

struct AmTarget {
  std::size_t layers;  // forward depth
  std::size_t units;   // filters (or logits) at that depth
};

template <typename T>
AmTarget am_target(const nn::Network<T>& net, int layer_index, int filter_index) {
  AmTarget t{};
  if (layer_index >= 1 && layer_index <= 4) {
    t.layers = seiznet_block_preactivation_layer(static_cast<std::size_t>(layer_index)) + 1;
    if (t.layers > net.depth()) throw ContractError("am: network is too shallow for conv block " + std::to_string(layer_index));
    t.units = net.activation_shapes()[t.layers - 1].front();
  } else if (layer_index == kAmOutputLayer) {
    t.layers = net.depth();
    t.units = net.output_shape().front();
  } else {
    throw ContractError("am: layer_index must be 1-4 (conv block) or 5 (output), got " + std::to_string(layer_index));
  }
  if (filter_index < 0 || static_cast<std::size_t>(filter_index) >= t.units)
    throw ContractError("am: filter_index " + std::to_string(filter_index) + " out of range [0, " + std::to_string(t.units) + ")");
  return t;
}

// Objective pieces and their input gradient at one pattern. The regularizers
// are taken on the pattern rescaled so the input range spans [-1, 1] and
// averaged per element, so their weights mean the same thing at any channel
// count and input range.
template <typename T>
struct AmEval {
  double activation, objective;
  std::vector<double> grad;
};

template <typename T>
AmEval<T> am_evaluate(nn::Network<T>& net, const AmTarget& target, std::size_t filter, const AmConfig& cfg,
                      const std::vector<double>& x, std::size_t n_channels, bool with_grad) {
  const std::size_t N = x.size();
  nn::Tensor<T> in({1, n_channels, kEpochSamples});
  for (std::size_t i = 0; i < N; ++i) in[i] = static_cast<T>(x[i]);
  Rng unused(0);
  const auto out = net.forward(in, nn::Mode::infer, unused, target.layers);
  const std::size_t L = out.size() / target.units;  // time length (1 for logits)
  double act = 0.0;
  for (std::size_t t = 0; t < L; ++t) act += out[filter * L + t];
  act /= static_cast<double>(L);

  const AmPattern pat{n_channels, x};
  const double tv = total_variation(pat);
  const double lp = lp_norm(x, cfg.lp_p);
  const double reg = 1.0 / (static_cast<double>(N) * 0.5 * (cfg.input_high - cfg.input_low));
  const double objective = act - cfg.tv_weight * reg * tv - cfg.lp_weight * reg * lp;
  AmEval<T> ev{act, objective, {}};
  if (!with_grad) return ev;

  nn::Tensor<T> g(out.shape());
  for (std::size_t t = 0; t < L; ++t) g[filter * L + t] = static_cast<T>(1.0 / static_cast<double>(L));
  const auto gx = net.backward(g);
  ev.grad.assign(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) ev.grad[i] = gx[i];
  auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
  // |d| is differentiated as sqrt(d^2 + eps^2) so flat stretches stop
  // chattering under a dominant TV weight.
  const double eps = 1e-2 * 0.5 * (cfg.input_high - cfg.input_low);
  const double tv_scale = cfg.tv_weight * reg;
  for (std::size_t c = 0; c < n_channels; ++c)
    for (std::size_t t = 0; t + 1 < kEpochSamples; ++t) {
      const std::size_t i = c * kEpochSamples + t;
      const double d = x[i + 1] - x[i];
      const double s = d / std::sqrt(d * d + eps * eps);
      ev.grad[i] += tv_scale * s;
      ev.grad[i + 1] -= tv_scale * s;
    }
  if (lp > 0.0) {
    const double lp_scale = cfg.lp_weight * reg * std::pow(lp, 1.0 - cfg.lp_p);
    for (std::size_t i = 0; i < N; ++i) ev.grad[i] -= lp_scale * sign(x[i]) * std::pow(std::abs(x[i]), cfg.lp_p - 1.0);
  }
  return ev;
}

}  // namespace detail

// Gradient ascent on activation - (tv_weight * TV + lp_weight * Lp) / (N * R)
// from a seeded uniform [-1, 1] start, N = channels * 1000 and R the half
// width of the input range. Each step moves along the gradient scaled to unit
// RMS, then clamps to the input range. A step that lowers the objective is
// rejected and the step size halved, accepted steps grow it back towards
// step_size, so the history is non-decreasing. Batchnorm runs on its running
// statistics and dropout is off.
template <std::floating_point T>
AmResult activation_maximization(const nn::Network<T>& model, const AmConfig& cfg) {
  validate(cfg);
  if (model.input_shape().size() != 2 || model.input_shape()[1] != kEpochSamples)
    throw ContractError("am: network input must be [C x 1000]");
  auto net = model.template cast<double>();
  const auto target = detail::am_target(net, cfg.layer_index, cfg.filter_index);
  const std::size_t C = net.input_shape()[0];
  const std::size_t N = C * kEpochSamples;
  const auto filter = static_cast<std::size_t>(cfg.filter_index);

  Rng rng = make_rng(cfg.seed, 0x414d);  // "AM"
  std::vector<double> x(N);
  for (auto& v : x) v = std::clamp(uniform(rng, -1.0, 1.0), cfg.input_low, cfg.input_high);

  auto cur = detail::am_evaluate(net, target, filter, cfg, x, C, true);
  if (!std::isfinite(cur.objective)) throw ContractError("am: non-finite objective at step 0");
  AmResult res;
  res.initial_objective = cur.objective;
  double step = cfg.step_size;
  std::vector<double> trial(N);
  for (int s = 1; s <= cfg.steps; ++s) {
    double norm = 0.0;
    for (double g : cur.grad) norm += g * g;
    const double rms = std::sqrt(norm / static_cast<double>(N));
    if (!std::isfinite(rms)) throw ContractError("am: non-finite gradient at step " + std::to_string(s));
    if (rms > 0.0) {
      for (std::size_t i = 0; i < N; ++i) trial[i] = std::clamp(x[i] + step * cur.grad[i] / rms, cfg.input_low, cfg.input_high);
      auto next = detail::am_evaluate(net, target, filter, cfg, trial, C, true);
      if (!std::isfinite(next.objective)) throw ContractError("am: non-finite objective at step " + std::to_string(s));
      if (next.objective >= cur.objective) {
        x.swap(trial);
        cur = std::move(next);
        ++res.accepted_steps;
        step = std::min(cfg.step_size, step * 1.5);
      } else {
        step *= 0.5;
      }
    }
    res.loss_history.push_back(cur.objective);
  }

  res.pattern = {C, std::move(x)};
  res.activation = cur.activation;
  res.objective = cur.objective;
  std::vector<std::vector<double>> channels;
  for (std::size_t c = 0; c < C; ++c) {
    const auto ch = res.pattern.channel(c);
    res.dominant_hz.push_back(spectral::dominant_frequency(ch, kTargetFs));
    channels.emplace_back(ch.begin(), ch.end());
  }
  res.dominant_hz_summed = spectral::dominant_frequency_summed(channels, kTargetFs);
  return res;
}

template <std::floating_point T>
AmResult activation_maximization(const SeizNet<T>& model, const AmConfig& cfg) {
  return activation_maximization(model.network(), cfg);
}

// Target activation of an arbitrary input, same readout as the optimiser.
template <std::floating_point T>
double am_activation(const nn::Network<T>& model, int layer_index, int filter_index, const AmPattern& x) {
  auto net = model.template cast<double>();
  const auto target = detail::am_target(net, layer_index, filter_index);
  AmConfig cfg;
  cfg.layer_index = layer_index;
  cfg.filter_index = filter_index;
  return detail::am_evaluate(net, target, static_cast<std::size_t>(filter_index), cfg, x.values, x.n_channels, false).activation;
}

// Number of units addressable at a layer index.
template <std::floating_point T>
std::size_t am_unit_count(const nn::Network<T>& net, int layer_index) {
  return detail::am_target(net, layer_index, 0).units;
}

// ---------------------------------------------------------------------------
// Output

// One row per channel, 1000 values.
inline void write_pattern_csv(const AmPattern& p, std::ostream& out) {
  for (std::size_t c = 0; c < p.n_channels; ++c) {
    const auto ch = p.channel(c);
    for (std::size_t t = 0; t < ch.size(); ++t) out << (t ? "," : "") << text::format_exact(ch[t]);
    out << '\n';
  }
}

struct AmSummaryRow {
  int layer, filter;
  double activation, dominant_hz;
};

inline void write_am_summary_csv(std::span<const AmSummaryRow> rows, std::ostream& out) {
  out << "layer,filter,activation,dominant_hz\n";
  for (const auto& r : rows)
    out << r.layer << ',' << r.filter << ',' << text::format_exact(r.activation) << ',' << text::format_exact(r.dominant_hz) << '\n';
}

// Stacked polyline per channel with a time axis, no dependencies.
inline void write_pattern_svg(const AmPattern& p, std::ostream& out, const std::vector<std::string>& channel_names = {},
                              const std::string& title = {}) {
  const double width = 900, lane = 120, left = 60, top = title.empty() ? 10 : 30, plot_w = width - left - 20;
  const double height = top + lane * static_cast<double>(p.n_channels) + 30;
  char buf[128];
  std::snprintf(buf, sizeof buf, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n", width, height);
  out << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) out << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  for (std::size_t c = 0; c < p.n_channels; ++c) {
    const auto ch = p.channel(c);
    double lo = *std::min_element(ch.begin(), ch.end()), hi = *std::max_element(ch.begin(), ch.end());
    if (hi - lo < 1e-12) lo -= 1.0, hi += 1.0;
    const double y0 = top + lane * static_cast<double>(c);
    const std::string name = c < channel_names.size() ? channel_names[c] : "ch" + std::to_string(c + 1);
    std::snprintf(buf, sizeof buf, "<text x=\"5\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"12\">", y0 + lane / 2);
    out << buf << name << "</text>\n<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1\" points=\"";
    for (std::size_t t = 0; t < ch.size(); ++t) {
      const double px = left + plot_w * static_cast<double>(t) / static_cast<double>(ch.size() - 1);
      const double py = y0 + 10 + (lane - 20) * (hi - ch[t]) / (hi - lo);
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px, py);
      out << buf;
    }
    out << "\"/>\n";
  }
  const double axis_y = top + lane * static_cast<double>(p.n_channels) + 5;
  std::snprintf(buf, sizeof buf, "<line x1=\"%.0f\" y1=\"%.1f\" x2=\"%.0f\" y2=\"%.1f\" stroke=\"black\"/>\n", left, axis_y, left + plot_w, axis_y);
  out << buf;
  for (int s = 0; s <= 5; ++s) {
    const double px = left + plot_w * s / 5.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\">%d s</text>\n", px - 8, axis_y + 18, s);
    out << buf;
  }
  out << "</svg>\n";
}

}  // namespace seizdet
