#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "seizdet/error.hpp"
#include "seizdet/nn/layers.hpp"
#include "seizdet/nn/tensor.hpp"
#include "seizdet/rng.hpp"

namespace seizdet::nn {

struct ParamCount {
  std::size_t trainable{0};
  std::size_t non_trainable{0};
  std::size_t total() const { return trainable + non_trainable; }
  friend bool operator==(const ParamCount&, const ParamCount&) = default;
};

// Fixed sequence of layers with a per-sample input shape. forward() records
// the tape that backward() consumes; backward returns the input gradient and
// accumulates parameter gradients (call zero_grad between steps).
template <std::floating_point T>
class Network {
 public:
  Network(Shape input_shape, std::vector<LayerSpec> specs, std::uint64_t init_seed)
      : input_shape_(std::move(input_shape)), specs_(std::move(specs)) {
    Rng rng = make_rng(init_seed, 0x494e4954);  // "INIT"
    std::vector<int> ordinal(8, 0);
    Shape shape = input_shape_;
    for (const auto& s : specs_) {
      auto layer = make_layer<T>(s);
      layer->set_name(std::string(kind_name(s.kind)) + std::to_string(++ordinal[static_cast<int>(s.kind)]));
      layer->build(shape, rng);
      shape = layer->output_shape(shape);
      layers_.push_back(std::move(layer));
    }
    output_shape_ = shape;
  }

  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::size_t depth() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

  // Per-sample output shape after every layer.
  std::vector<Shape> activation_shapes() const {
    std::vector<Shape> out;
    Shape s = input_shape_;
    for (const auto& l : layers_) out.push_back(s = l->output_shape(s));
    return out;
  }

  // Runs the first `n_layers` layers (all by default) on a batch
  // [B x input_shape...].
  Tensor<T> forward(const Tensor<T>& batch, Mode mode, Rng& rng, std::size_t n_layers = SIZE_MAX) {
    if (batch.rank() != input_shape_.size() + 1 || !std::equal(input_shape_.begin(), input_shape_.end(), batch.shape().begin() + 1))
      throw ContractError("network: batch shape " + shape_string(batch.shape()) + " does not match input " + shape_string(input_shape_));
    n_layers = std::min(n_layers, layers_.size());
    Tensor<T> x = batch;
    for (std::size_t i = 0; i < n_layers; ++i) x = layers_[i]->forward(x, mode, rng);
    forward_depth_ = n_layers;
    return x;
  }

  // Combined branch signature of the layers run by the last forward pass.
  std::uint64_t branch_signature() const {
    std::uint64_t h = 0;
    for (std::size_t i = 0; i < forward_depth_; ++i) h = (h ^ layers_[i]->branch_signature()) * 0x9e3779b97f4a7c15ULL;
    return h;
  }

  // With input_grad off the returned input gradient is zero; training loops
  // use that to skip the first layer's input-side work.
  Tensor<T> backward(const Tensor<T>& grad, bool input_grad = true) {
    if (forward_depth_ == 0 && !layers_.empty()) throw ContractError("network: backward called without forward");
    if (!layers_.empty()) layers_.front()->set_input_grad(input_grad);
    Tensor<T> g = grad;
    for (std::size_t i = forward_depth_; i-- > 0;) g = layers_[i]->backward(g);
    return g;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }
  std::vector<const Param<T>*> params() const {
    std::vector<const Param<T>*> out;
    for (const auto& l : layers_)
      for (auto* p : const_cast<Layer<T>&>(*l).params()) out.push_back(p);
    return out;
  }
  std::vector<Param<T>*> trainable_params() {
    std::vector<Param<T>*> out;
    for (auto* p : params())
      if (p->trainable) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto* p : params()) p->grad.fill(T{0});
  }

  ParamCount param_count() const {
    ParamCount c;
    for (const auto* p : params()) (p->trainable ? c.trainable : c.non_trainable) += p->value.size();
    return c;
  }

  // Same architecture and parameter values in another scalar type.
  template <std::floating_point U>
  Network<U> cast() const {
    Network<U> out(input_shape_, specs_, 0);
    auto src = params();
    auto dst = out.params();
    for (std::size_t i = 0; i < src.size(); ++i)
      for (std::size_t j = 0; j < src[i]->value.size(); ++j) dst[i]->value[j] = static_cast<U>(src[i]->value[j]);
    return out;
  }

 private:
  Shape input_shape_, output_shape_;
  std::vector<LayerSpec> specs_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::size_t forward_depth_{0};
};

}  // namespace seizdet::nn
