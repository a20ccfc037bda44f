#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "seizdet/error.hpp"
#include "seizdet/nn/kernels.hpp"
#include "seizdet/nn/tensor.hpp"
#include "seizdet/rng.hpp"
#include "seizdet/text_io.hpp"

namespace seizdet::nn {

enum class LayerKind { conv_time, maxpool_time, batchnorm, dropout, relu, flatten, dense };

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv_time: return "conv_time";
    case LayerKind::maxpool_time: return "maxpool_time";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::dropout: return "dropout";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
  }
  return "?";
}

// Declarative description of one layer; also the token format of the weights
// file architecture line (`conv_time:8:10`, `batchnorm:8:0.99:0.001`, ...).
struct LayerSpec {
  LayerKind kind{LayerKind::relu};
  std::size_t out_channels{0};  // conv_time
  std::size_t kernel_len{0};    // conv_time
  std::size_t pool_len{2};      // maxpool_time
  std::size_t channels{0};      // batchnorm
  double momentum{0.99};        // batchnorm
  double epsilon{1e-3};         // batchnorm
  double rate{0.0};             // dropout
  std::size_t out_units{0};     // dense

  static LayerSpec conv(std::size_t filters, std::size_t k) { return {.kind = LayerKind::conv_time, .out_channels = filters, .kernel_len = k}; }
  static LayerSpec maxpool() { return {.kind = LayerKind::maxpool_time}; }
  static LayerSpec batchnorm(std::size_t ch, double momentum = 0.99, double eps = 1e-3) {
    return {.kind = LayerKind::batchnorm, .channels = ch, .momentum = momentum, .epsilon = eps};
  }
  static LayerSpec dropout(double rate) { return {.kind = LayerKind::dropout, .rate = rate}; }
  static LayerSpec relu() { return {.kind = LayerKind::relu}; }
  static LayerSpec flatten() { return {.kind = LayerKind::flatten}; }
  static LayerSpec dense(std::size_t units) { return {.kind = LayerKind::dense, .out_units = units}; }

  std::string token() const {
    std::string t = kind_name(kind);
    switch (kind) {
      case LayerKind::conv_time: return t + ":" + std::to_string(out_channels) + ":" + std::to_string(kernel_len);
      case LayerKind::maxpool_time: return t + ":" + std::to_string(pool_len);
      case LayerKind::batchnorm:
        return t + ":" + std::to_string(channels) + ":" + text::format_exact(momentum) + ":" + text::format_exact(epsilon);
      case LayerKind::dropout: return t + ":" + text::format_exact(rate);
      case LayerKind::dense: return t + ":" + std::to_string(out_units);
      default: return t;
    }
  }

  static LayerSpec parse(std::string_view token) {
    const auto parts = text::split(token, ':');
    const auto kind = parts.front();
    auto num = [&](std::size_t i) {
      if (i >= parts.size()) throw ContractError("layer token '" + std::string(token) + "' is missing fields");
      const auto v = text::parse_double(parts[i]);
      if (!v) throw ContractError("layer token '" + std::string(token) + "' has a non-numeric field");
      return *v;
    };
    auto count = [&](std::size_t i) { return static_cast<std::size_t>(num(i)); };
    if (kind == "conv_time") return conv(count(1), count(2));
    if (kind == "maxpool_time") return maxpool();
    if (kind == "batchnorm") return batchnorm(count(1), num(2), num(3));
    if (kind == "dropout") return dropout(num(1));
    if (kind == "relu") return relu();
    if (kind == "flatten") return flatten();
    if (kind == "dense") return dense(count(1));
    throw ContractError("unknown layer kind '" + std::string(kind) + "'");
  }

  void validate() const {
    switch (kind) {
      case LayerKind::conv_time:
        if (out_channels < 1 || kernel_len < 1) throw ContractError("conv_time: filters and kernel_len must be >= 1");
        break;
      case LayerKind::maxpool_time:
        if (pool_len != 2) throw ContractError("maxpool_time: only pool length 2 is supported");
        break;
      case LayerKind::batchnorm:
        if (channels < 1 || !(momentum > 0.0 && momentum < 1.0) || !(epsilon > 0.0))
          throw ContractError("batchnorm: needs channels >= 1, momentum in (0,1), epsilon > 0");
        break;
      case LayerKind::dropout:
        if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout: rate must be in [0, 1)");
        break;
      case LayerKind::dense:
        if (out_units < 1) throw ContractError("dense: out_units must be >= 1");
        break;
      default: break;
    }
  }
};

template <std::floating_point T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable{true};
};

// Shapes passed to and returned from layers exclude the batch axis.
template <std::floating_point T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual LayerSpec spec() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  // Allocates parameters once the input shape is known; `rng` drives init.
  virtual void build(const Shape& /*in*/, Rng& /*rng*/) {}
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  // Hash of the piecewise-linear branch taken by the last forward pass (ReLU
  // signs, pool winners). Smooth layers return 0.
  virtual std::uint64_t branch_signature() const { return 0; }

  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }
  bool has_tape() const { return taped_; }
  // Layers that can skip work return a zero input gradient when this is off.
  void set_input_grad(bool on) { input_grad_ = on; }

 protected:
  void require_tape() const {
    if (!taped_) throw ContractError(name_ + ": backward called without a recorded forward pass");
  }
  bool taped_{false};
  bool input_grad_{true};

 private:
  std::string name_;
};

namespace detail {

// Glorot uniform, limit sqrt(6 / (fan_in + fan_out)).
template <typename T>
void glorot_uniform(Tensor<T>& w, double fan_in, double fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : w.values()) v = static_cast<T>(uniform(rng, -limit, limit));
}

template <typename T>
Param<T> make_param(std::string name, Shape shape, bool trainable, T fill = T{0}) {
  Tensor<T> v(shape, fill);
  Tensor<T> g(shape);
  return {std::move(name), std::move(v), std::move(g), trainable};
}

}  // namespace detail

template <std::floating_point T>
class ConvTime final : public Layer<T> {
 public:
  ConvTime(std::size_t filters, std::size_t kernel_len) : filters_(filters), k_(kernel_len) {}

  LayerKind kind() const override { return LayerKind::conv_time; }
  LayerSpec spec() const override { return LayerSpec::conv(filters_, k_); }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 2) throw ContractError("conv_time expects [C x L] input, got " + shape_string(in));
    if (in[1] < k_) throw ContractError("conv_time: input length " + std::to_string(in[1]) + " < kernel " + std::to_string(k_));
    return {filters_, in[1] - k_ + 1};
  }
  void build(const Shape& in, Rng& rng) override {
    output_shape(in);
    in_channels_ = in[0];
    weight_ = detail::make_param<T>(this->name() + ".weight", {filters_, in_channels_, k_}, true);
    bias_ = detail::make_param<T>(this->name() + ".bias", {filters_}, true);
    detail::glorot_uniform(weight_.value, static_cast<double>(in_channels_ * k_), static_cast<double>(filters_ * k_), rng);
  }
  Tensor<T> forward(const Tensor<T>& x, Mode, Rng&) override {
    input_ = x;
    this->taped_ = true;
    return conv_time_forward(x, weight_.value, bias_.value);
  }
  Tensor<T> backward(const Tensor<T>& gy) override {
    this->require_tape();
    const std::size_t B = input_.dim(0), C = in_channels_, L = input_.dim(2), K = filters_, k = k_;
    const std::size_t Lout = L - k + 1;
    const T* x = input_.data();
    const T* g = gy.data();
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t o = 0; o < K; ++o) bias_.grad[o] += static_cast<T>(kernels::sum(g + (b * K + o) * Lout, Lout));
      kernels::conv_weight_grad(x + b * C * L, C, L, g + b * K * Lout, K, k, weight_.grad.data());
    }
    if (!this->input_grad_) return Tensor<T>({B, C, L});
    // Input gradient: valid correlation of the zero-padded output gradient
    // with the flipped, channel-transposed kernel.
    std::vector<T> flipped(C * K * k);
    for (std::size_t o = 0; o < K; ++o)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < k; ++j) flipped[(c * K + o) * k + (k - 1 - j)] = weight_.value[(o * C + c) * k + j];
    const std::size_t Lpad = Lout + 2 * (k - 1);
    std::vector<T> padded(K * Lpad, T{0});
    Tensor<T> gx({B, C, L});
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t o = 0; o < K; ++o)
        std::copy_n(g + (b * K + o) * Lout, Lout, padded.begin() + static_cast<std::ptrdiff_t>(o * Lpad + (k - 1)));
      kernels::conv_valid(padded.data(), K, Lpad, flipped.data(), static_cast<const T*>(nullptr), C, k, gx.data() + b * C * L);
    }
    return gx;
  }
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

 private:
  std::size_t filters_, k_, in_channels_{0};
  Param<T> weight_, bias_;
  Tensor<T> input_;
};

template <std::floating_point T>
class MaxPoolTime final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::maxpool_time; }
  LayerSpec spec() const override { return LayerSpec::maxpool(); }
  Shape output_shape(const Shape& in) const override {
    if (in.back() < 2) throw ContractError("maxpool_time: input length must be >= 2");
    Shape out = in;
    out.back() /= 2;
    return out;
  }
  Tensor<T> forward(const Tensor<T>& x, Mode, Rng&) override {
    auto [y, idx] = maxpool_time_forward(x);
    in_shape_ = x.shape();
    argmax_ = std::move(idx);
    this->taped_ = true;
    return std::move(y);
  }
  Tensor<T> backward(const Tensor<T>& gy) override {
    this->require_tape();
    Tensor<T> gx(in_shape_);
    for (std::size_t i = 0; i < argmax_.size(); ++i) gx[argmax_[i]] += gy[i];
    return gx;
  }
  std::uint64_t branch_signature() const override {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i : argmax_) h = (h ^ i) * 0x100000001b3ULL;
    return h;
  }

 private:
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

// Per-channel normalisation of [B x K x L] over the B and L axes.
template <std::floating_point T>
class BatchNorm final : public Layer<T> {
 public:
  BatchNorm(std::size_t channels, double momentum, double epsilon) : channels_(channels), momentum_(momentum), eps_(epsilon) {}

  LayerKind kind() const override { return LayerKind::batchnorm; }
  LayerSpec spec() const override { return LayerSpec::batchnorm(channels_, momentum_, eps_); }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 2 || in[0] != channels_)
      throw ContractError("batchnorm(" + std::to_string(channels_) + ") got input " + shape_string(in));
    return in;
  }
  void build(const Shape& in, Rng&) override {
    output_shape(in);
    gamma_ = detail::make_param<T>(this->name() + ".gamma", {channels_}, true, T{1});
    beta_ = detail::make_param<T>(this->name() + ".beta", {channels_}, true, T{0});
    running_mean_ = detail::make_param<T>(this->name() + ".running_mean", {channels_}, false, T{0});
    running_var_ = detail::make_param<T>(this->name() + ".running_var", {channels_}, false, T{1});
  }
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng&) override {
    detail::require_rank(x, 3, "batchnorm");
    const std::size_t B = x.dim(0), K = channels_, L = x.dim(2);
    const std::size_t n = B * L;
    if (mode == Mode::train && n < 2) throw ContractError("batchnorm: train mode needs batch*length >= 2");
    mode_ = mode;
    inv_std_.assign(K, 0.0);
    xhat_ = Tensor<T>(x.shape());
    Tensor<T> y(x.shape());
    for (std::size_t c = 0; c < K; ++c) {
      double mean, var;
      if (mode == Mode::train) {
        double s = 0.0;
        for (std::size_t b = 0; b < B; ++b) s += kernels::sum(x.data() + (b * K + c) * L, L);
        mean = s / static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t b = 0; b < B; ++b) ss += kernels::sum_sq_dev(x.data() + (b * K + c) * L, L, mean);
        var = ss / static_cast<double>(n);
        const double unbiased = ss / static_cast<double>(n - 1);
        running_mean_.value[c] = static_cast<T>(momentum_ * running_mean_.value[c] + (1.0 - momentum_) * mean);
        running_var_.value[c] = static_cast<T>(momentum_ * running_var_.value[c] + (1.0 - momentum_) * unbiased);
      } else {
        mean = running_mean_.value[c];
        var = running_var_.value[c];
      }
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_[c] = inv;
      const T g = gamma_.value[c], be = beta_.value[c];
      const T m = static_cast<T>(mean), iv = static_cast<T>(inv);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t off = (b * K + c) * L;
        const T* xr = x.data() + off;
        T* hr = xhat_.data() + off;
        T* yr = y.data() + off;
        for (std::size_t t = 0; t < L; ++t) {
          const T xh = (xr[t] - m) * iv;
          hr[t] = xh;
          yr[t] = g * xh + be;
        }
      }
    }
    this->taped_ = true;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) override {
    this->require_tape();
    const std::size_t B = xhat_.dim(0), K = channels_, L = xhat_.dim(2);
    const double n = static_cast<double>(B * L);
    Tensor<T> gx(xhat_.shape());
    for (std::size_t c = 0; c < K; ++c) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t off = (b * K + c) * L;
        sum_g += kernels::sum(gy.data() + off, L);
        sum_gx += kernels::sum_prod(gy.data() + off, xhat_.data() + off, L);
      }
      gamma_.grad[c] += static_cast<T>(sum_gx);
      beta_.grad[c] += static_cast<T>(sum_g);
      const T scale = static_cast<T>(static_cast<double>(gamma_.value[c]) * inv_std_[c]);
      const bool train = mode_ == Mode::train;
      const T mg = train ? static_cast<T>(sum_g / n) : T{0};
      const T mgx = train ? static_cast<T>(sum_gx / n) : T{0};
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t off = (b * K + c) * L;
        const T* gr = gy.data() + off;
        const T* hr = xhat_.data() + off;
        T* out = gx.data() + off;
        for (std::size_t t = 0; t < L; ++t) out[t] = scale * (gr[t] - mg - hr[t] * mgx);
      }
    }
    return gx;
  }
  std::vector<Param<T>*> params() override { return {&gamma_, &beta_, &running_mean_, &running_var_}; }

 private:
  std::size_t channels_;
  double momentum_, eps_;
  Param<T> gamma_, beta_, running_mean_, running_var_;
  Mode mode_{Mode::train};
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
};

template <std::floating_point T>
class Dropout final : public Layer<T> {
 public:
  explicit Dropout(double rate) : rate_(rate) {}

  LayerKind kind() const override { return LayerKind::dropout; }
  LayerSpec spec() const override { return LayerSpec::dropout(rate_); }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) override {
    auto [y, mask] = dropout_forward(x, rate_, mode, rng);
    mask_ = std::move(mask);
    this->taped_ = true;
    return std::move(y);
  }
  Tensor<T> backward(const Tensor<T>& gy) override {
    this->require_tape();
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= mask_[i];
    return gx;
  }
  double rate() const { return rate_; }

 private:
  double rate_;
  Tensor<T> mask_;
};

template <std::floating_point T>
class Relu final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::relu; }
  LayerSpec spec() const override { return LayerSpec::relu(); }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(const Tensor<T>& x, Mode, Rng&) override {
    Tensor<T> y = x;
    T* v = y.data();
    for (std::size_t i = 0; i < y.size(); ++i) v[i] = v[i] > T{0} ? v[i] : T{0};
    output_ = y;
    this->taped_ = true;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) override {
    this->require_tape();
    Tensor<T> gx = gy;
    T* g = gx.data();
    const T* y = output_.data();
    for (std::size_t i = 0; i < gx.size(); ++i) g[i] = y[i] > T{0} ? g[i] : T{0};
    return gx;
  }
  std::uint64_t branch_signature() const override {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const T* y = output_.data();
    for (std::size_t i = 0; i < output_.size(); ++i) h = (h ^ static_cast<std::uint64_t>(y[i] > T{0})) * 0x100000001b3ULL;
    return h;
  }

 private:
  Tensor<T> output_;
};

template <std::floating_point T>
class Flatten final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::flatten; }
  LayerSpec spec() const override { return LayerSpec::flatten(); }
  Shape output_shape(const Shape& in) const override { return {shape_size(in)}; }
  Tensor<T> forward(const Tensor<T>& x, Mode, Rng&) override {
    in_shape_ = x.shape();
    this->taped_ = true;
    return x.reshaped({x.dim(0), x.size() / x.dim(0)});
  }
  Tensor<T> backward(const Tensor<T>& gy) override {
    this->require_tape();
    return gy.reshaped(in_shape_);
  }

 private:
  Shape in_shape_;
};

template <std::floating_point T>
class Dense final : public Layer<T> {
 public:
  explicit Dense(std::size_t units) : units_(units) {}

  LayerKind kind() const override { return LayerKind::dense; }
  LayerSpec spec() const override { return LayerSpec::dense(units_); }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 1) throw ContractError("dense expects flat input, got " + shape_string(in));
    return {units_};
  }
  void build(const Shape& in, Rng& rng) override {
    output_shape(in);
    in_dim_ = in[0];
    weight_ = detail::make_param<T>(this->name() + ".weight", {units_, in_dim_}, true);
    bias_ = detail::make_param<T>(this->name() + ".bias", {units_}, true);
    detail::glorot_uniform(weight_.value, static_cast<double>(in_dim_), static_cast<double>(units_), rng);
  }
  Tensor<T> forward(const Tensor<T>& x, Mode, Rng&) override {
    input_ = x;
    this->taped_ = true;
    return dense_forward(x, weight_.value, bias_.value);
  }
  Tensor<T> backward(const Tensor<T>& gy) override {
    this->require_tape();
    const std::size_t B = input_.dim(0), d = in_dim_, u = units_;
    Tensor<T> gx(input_.shape());
    for (std::size_t b = 0; b < B; ++b) {
      const T* x = input_.data() + b * d;
      for (std::size_t i = 0; i < u; ++i) {
        const T g = gy[b * u + i];
        bias_.grad[i] += g;
        kernels::axpy(g, x, weight_.grad.data() + i * d, d);
        kernels::axpy(g, weight_.value.data() + i * d, gx.data() + b * d, d);
      }
    }
    return gx;
  }
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

 private:
  std::size_t units_, in_dim_{0};
  Param<T> weight_, bias_;
  Tensor<T> input_;
};

template <std::floating_point T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& s) {
  s.validate();
  switch (s.kind) {
    case LayerKind::conv_time: return std::make_unique<ConvTime<T>>(s.out_channels, s.kernel_len);
    case LayerKind::maxpool_time: return std::make_unique<MaxPoolTime<T>>();
    case LayerKind::batchnorm: return std::make_unique<BatchNorm<T>>(s.channels, s.momentum, s.epsilon);
    case LayerKind::dropout: return std::make_unique<Dropout<T>>(s.rate);
    case LayerKind::relu: return std::make_unique<Relu<T>>();
    case LayerKind::flatten: return std::make_unique<Flatten<T>>();
    case LayerKind::dense: return std::make_unique<Dense<T>>(s.out_units);
  }
  throw ContractError("unknown layer kind");
}

}  // namespace seizdet::nn
