#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "seizdet/error.hpp"
#include "seizdet/nn/adam.hpp"
#include "seizdet/nn/kernels.hpp"
#include "seizdet/nn/network.hpp"
#include "seizdet/nn/weights_io.hpp"
#include "seizdet/preprocess.hpp"
#include "seizdet/rng.hpp"

namespace seizdet {

// Four conv blocks (conv -> batchnorm -> relu -> pool -> dropout) with 8, 16,
// 32, 64 filters, then dense(50) -> relu -> dropout(0.5) -> dense(2).
// Blocks 3 and 4 use kernel length 20: that is what takes 243 -> 224 and
// 112 -> 93 samples.
inline std::vector<nn::LayerSpec> seiznet_layers() {
  using nn::LayerSpec;
  std::vector<LayerSpec> specs;
  constexpr std::array<std::size_t, 4> filters{8, 16, 32, 64};
  constexpr std::array<std::size_t, 4> kernels{10, 10, 20, 20};
  for (std::size_t b = 0; b < 4; ++b) {
    specs.push_back(LayerSpec::conv(filters[b], kernels[b]));
    specs.push_back(LayerSpec::batchnorm(filters[b]));
    specs.push_back(LayerSpec::relu());
    specs.push_back(LayerSpec::maxpool());
    specs.push_back(LayerSpec::dropout(0.2));
  }
  specs.push_back(LayerSpec::flatten());
  specs.push_back(LayerSpec::dense(50));
  specs.push_back(LayerSpec::relu());
  specs.push_back(LayerSpec::dropout(0.5));
  specs.push_back(LayerSpec::dense(2));
  return specs;
}

// Index of the batchnorm layer of conv block `block` (1-based): its output is
// the pre-ReLU activation of that block's filters.
inline constexpr std::size_t seiznet_block_preactivation_layer(std::size_t block) { return (block - 1) * 5 + 1; }

template <std::floating_point T = float>
class SeizNet {
 public:
  SeizNet(std::size_t n_channels, std::uint64_t seed, std::vector<std::string> channel_names = {})
      : net_(make_network(n_channels, seed)), channels_(std::move(channel_names)) {
    if (!channels_.empty() && channels_.size() != n_channels)
      throw ContractError("seiznet: channel name count does not match n_channels");
  }
  SeizNet(nn::Network<T> net, std::vector<std::string> channel_names) : net_(std::move(net)), channels_(std::move(channel_names)) {
    if (net_.input_shape().size() != 2 || net_.input_shape()[1] != kEpochSamples)
      throw ContractError("seiznet: network input must be [C x 1000]");
  }

  nn::Network<T>& network() { return net_; }
  const nn::Network<T>& network() const { return net_; }
  std::size_t n_channels() const { return net_.input_shape()[0]; }
  const std::vector<std::string>& channel_names() const { return channels_; }
  nn::ParamCount param_count() const { return net_.param_count(); }

 private:
  static nn::Network<T> make_network(std::size_t n_channels, std::uint64_t seed) {
    if (n_channels < 1) throw ContractError("seiznet: n_channels must be >= 1");
    return nn::Network<T>({n_channels, kEpochSamples}, seiznet_layers(), seed);
  }

  nn::Network<T> net_;
  std::vector<std::string> channels_;
};

template <std::floating_point T = float>
SeizNet<T> build_seiznet(std::size_t n_channels, std::uint64_t seed = 0, std::vector<std::string> channel_names = {}) {
  return SeizNet<T>(n_channels, seed, std::move(channel_names));
}

template <std::floating_point T>
nn::ParamCount param_count(const SeizNet<T>& model) {
  return model.param_count();
}

struct TrainConfig {
  double lr{4.1e-3};
  int batch_size{128};
  int epochs{100};
  std::uint64_t seed{0};
  double validation_fraction{0.0};
};

struct TrainHistory {
  std::vector<double> loss;      // mean training loss per pass
  std::vector<double> accuracy;  // training accuracy per pass (train-mode forward)
  std::vector<double> val_loss;  // only with validation_fraction > 0
};

namespace detail {

template <typename T>
nn::Tensor<T> epoch_batch(std::span<const Epoch> epochs, std::span<const std::size_t> idx, std::size_t n_channels) {
  nn::Tensor<T> x({idx.size(), n_channels, kEpochSamples});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& src = epochs[idx[b]].data;
    T* dst = x.data() + b * n_channels * kEpochSamples;
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
  }
  return x;
}

// One-hot (interictal, ictal).
template <typename T>
nn::Tensor<T> epoch_labels(std::span<const Epoch> epochs, std::span<const std::size_t> idx) {
  nn::Tensor<T> y({idx.size(), 2});
  for (std::size_t b = 0; b < idx.size(); ++b) y[b * 2 + (epochs[idx[b]].ictal() ? 1 : 0)] = T{1};
  return y;
}

template <typename T>
void check_epochs(const SeizNet<T>& model, std::span<const Epoch> epochs) {
  for (const auto& e : epochs)
    if (e.n_channels != model.n_channels() || e.data.size() != e.n_channels * kEpochSamples)
      throw ContractError("seiznet: epoch from '" + e.subject_id + "' has " + std::to_string(e.n_channels) +
                          " channels, model expects " + std::to_string(model.n_channels()));
}

inline double ictal_probability(double z_interictal, double z_ictal) {
  return 1.0 / (1.0 + std::exp(z_interictal - z_ictal));
}

}  // namespace detail

// Mini-batch Adam on softmax cross-entropy, full reshuffle every pass, dropout
// and batchnorm in train mode. Deterministic for a fixed cfg.seed.
template <std::floating_point T>
TrainHistory train(SeizNet<T>& model, std::span<const Epoch> epochs, const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw ContractError("train: batch_size must be >= 1");
  if (cfg.epochs < 1) throw ContractError("train: epochs must be >= 1");
  if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0))
    throw ContractError("train: validation_fraction must be in [0, 1)");
  detail::check_epochs(model, epochs);
  const auto n_ictal = std::count_if(epochs.begin(), epochs.end(), [](const Epoch& e) { return e.ictal(); });
  if (n_ictal == 0 || n_ictal == static_cast<std::ptrdiff_t>(epochs.size()))
    throw ContractError("train: training set must contain both ictal and interictal epochs");

  std::vector<std::size_t> order(epochs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<std::size_t> val;
  if (cfg.validation_fraction > 0.0) {
    Rng split = make_rng(cfg.seed, 3);
    shuffle(std::span<std::size_t>(order), split);
    const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(order.size())));
    val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    order.erase(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::sort(order.begin(), order.end());
  }

  auto& net = model.network();
  nn::AdamOptimizer<T> opt(cfg.lr);
  Rng shuffle_rng = make_rng(cfg.seed, 1);
  Rng dropout_rng = make_rng(cfg.seed, 2);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  TrainHistory hist;
  for (int pass = 0; pass < cfg.epochs; ++pass) {
    shuffle(std::span<std::size_t>(order), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(bs, order.size() - start));
      const auto x = detail::epoch_batch<T>(epochs, idx, model.n_channels());
      const auto y = detail::epoch_labels<T>(epochs, idx);
      net.zero_grad();
      const auto logits = net.forward(x, nn::Mode::train, dropout_rng);
      const auto lg = nn::softmax_ce(logits, y);
      if (!std::isfinite(lg.loss)) throw ContractError("train: non-finite loss at pass " + std::to_string(pass + 1));
      net.backward(lg.grad, false);
      opt.step(net);
      loss_sum += lg.loss * static_cast<double>(idx.size());
      for (std::size_t b = 0; b < idx.size(); ++b)
        correct += ((logits[b * 2 + 1] > logits[b * 2]) == epochs[idx[b]].ictal()) ? 1 : 0;
    }
    hist.loss.push_back(loss_sum / static_cast<double>(order.size()));
    hist.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(order.size()));
    if (!val.empty()) {
      double vl = 0.0;
      for (std::size_t start = 0; start < val.size(); start += bs) {
        const std::span<const std::size_t> idx(val.data() + start, std::min(bs, val.size() - start));
        Rng unused(0);
        const auto logits = net.forward(detail::epoch_batch<T>(epochs, idx, model.n_channels()), nn::Mode::infer, unused);
        vl += nn::softmax_ce(logits, detail::epoch_labels<T>(epochs, idx)).loss * static_cast<double>(idx.size());
      }
      hist.val_loss.push_back(vl / static_cast<double>(val.size()));
    }
  }
  return hist;
}

// Ictal probability for each epoch, inference mode. Samples never interact in
// inference, so batching does not change the values.
template <std::floating_point T>
std::vector<double> predict_batch(SeizNet<T>& model, std::span<const Epoch> epochs, std::size_t batch_size = 128) {
  detail::check_epochs(model, epochs);
  std::vector<double> out;
  out.reserve(epochs.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < epochs.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(epochs.size(), start + batch_size); ++i) idx.push_back(i);
    Rng unused(0);
    const auto logits = model.network().forward(detail::epoch_batch<T>(epochs, idx, model.n_channels()), nn::Mode::infer, unused);
    for (std::size_t b = 0; b < idx.size(); ++b) out.push_back(detail::ictal_probability(logits[b * 2], logits[b * 2 + 1]));
  }
  return out;
}

template <std::floating_point T>
double predict(SeizNet<T>& model, const Epoch& epoch) {
  return predict_batch(model, std::span<const Epoch>(&epoch, 1)).front();
}

inline constexpr double kDecisionThreshold = 0.5;

// Inference-mode accuracy at the 0.5 threshold.
template <std::floating_point T>
double accuracy(SeizNet<T>& model, std::span<const Epoch> epochs) {
  const auto p = predict_batch(model, epochs);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) ok += ((p[i] > kDecisionThreshold) == epochs[i].ictal()) ? 1 : 0;
  return epochs.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(epochs.size());
}

template <std::floating_point T>
void save_seiznet(const SeizNet<T>& model, const std::filesystem::path& path) {
  nn::WeightsMeta meta;
  meta.entries["model"] = "seiznet";
  meta.entries["n_channels"] = std::to_string(model.n_channels());
  if (!model.channel_names().empty()) meta.entries["channels"] = text::join(model.channel_names(), "|");
  nn::save_weights(model.network(), path, meta);
}

template <std::floating_point T = float>
SeizNet<T> load_seiznet(const std::filesystem::path& path) {
  auto loaded = nn::load_weights<T>(path);
  std::vector<std::string> channels;
  if (auto it = loaded.meta.entries.find("channels"); it != loaded.meta.entries.end())
    for (auto name : text::split(it->second, '|')) channels.emplace_back(name);
  if (!channels.empty() && channels.size() != loaded.network.input_shape()[0])
    throw IngestError(path.string(), 1, "channel list does not match input shape");
  return SeizNet<T>(std::move(loaded.network), std::move(channels));
}

}  // namespace seizdet
