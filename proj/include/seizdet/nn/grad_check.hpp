#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seizdet/nn/kernels.hpp"
#include "seizdet/nn/network.hpp"
#include "seizdet/rng.hpp"

namespace seizdet::nn {

// Analytic gradients of one loss evaluation, per parameter tensor (same order
// as Network::params()) plus the input gradient.
struct GradientSnapshot {
  std::vector<std::vector<double>> params;
  std::vector<double> input;
  double loss{0.0};
  std::uint64_t branch{0};
};

struct GradCheckEntry {
  std::string tensor;
  std::size_t index{0};
  double analytic{0.0};
  double numeric{0.0};
  double rel_error{0.0};
};

struct GradCheckReport {
  double max_rel_error{0.0};
  std::string worst_tensor;
  std::size_t checked{0};
  // Samples where some evaluation point took a different ReLU or max-pool
  // branch than the analytic pass. The central difference straddles a kink
  // there and says nothing about the derivative, so they are not scored.
  std::size_t skipped_kinks{0};
  bool passed{false};
  std::vector<GradCheckEntry> entries;
};

struct GradCheckOptions {
  double perturbation{1e-3};
  double tolerance{1e-4};
  std::size_t samples_per_tensor{24};
  std::uint64_t seed{0};
  // Magnitudes below this are treated as zero in the relative error
  // denominator, so two vanishing gradients compare as equal. It sits above
  // the finite-difference rounding noise (about 1e-12 at h = 1e-3).
  double abs_floor{1e-7};
  // Combine central differences at h and h/2 as (4 D(h/2) - D(h)) / 3, which
  // cancels the h^2 truncation term. At h = 1e-3 that term alone exceeds
  // 1e-4 relative on small gradients behind a 4-sample batchnorm.
  bool richardson{true};
};

// Loss of a fixed batch under train or infer mode. Dropout masks come from a
// fresh RNG with the same seed on every call, which freezes them across the
// analytic pass and every finite-difference evaluation.
template <std::floating_point T>
double evaluate_loss(Network<T>& net, const Tensor<T>& batch, const Tensor<T>& labels, Mode mode, std::uint64_t mask_seed) {
  Rng rng = make_rng(mask_seed, 0x4d41534b);
  return softmax_ce(net.forward(batch, mode, rng), labels).loss;
}

namespace detail {

struct BranchLoss {
  double loss;
  std::uint64_t branch;
};

template <std::floating_point T>
BranchLoss evaluate_branch(Network<T>& net, const Tensor<T>& batch, const Tensor<T>& labels, Mode mode, std::uint64_t mask_seed) {
  const double loss = evaluate_loss(net, batch, labels, mode, mask_seed);
  return {loss, net.branch_signature()};
}

}  // namespace detail

template <std::floating_point T>
GradientSnapshot compute_gradients(Network<T>& net, const Tensor<T>& batch, const Tensor<T>& labels, Mode mode,
                                   std::uint64_t mask_seed) {
  net.zero_grad();
  Rng rng = make_rng(mask_seed, 0x4d41534b);
  const auto logits = net.forward(batch, mode, rng);
  const auto lg = softmax_ce(logits, labels);
  const auto gx = net.backward(lg.grad);
  GradientSnapshot snap;
  snap.loss = lg.loss;
  snap.branch = net.branch_signature();
  for (const auto* p : net.params()) snap.params.emplace_back(p->grad.values().begin(), p->grad.values().end());
  snap.input.assign(gx.values().begin(), gx.values().end());
  return snap;
}

inline double relative_error(double a, double n, double floor) {
  const double denom = std::max({std::abs(a), std::abs(n), floor});
  return std::abs(a - n) / denom;
}

// Compares `analytic` with central differences on a seeded subsample of every
// trainable tensor and of the input.
template <std::floating_point T>
GradCheckReport compare_with_finite_differences(Network<T>& net, Tensor<T> batch, const Tensor<T>& labels, Mode mode,
                                                std::uint64_t mask_seed, const GradientSnapshot& analytic,
                                                const GradCheckOptions& opt = {}) {
  GradCheckReport report;
  Rng pick = make_rng(opt.seed, 0x47524144);
  const double h = opt.perturbation;

  auto sample_indices = [&](std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle(std::span<std::size_t>(idx), pick);
    idx.resize(std::min(n, opt.samples_per_tensor));
    std::sort(idx.begin(), idx.end());
    return idx;
  };
  // Central difference of the loss along one coordinate, with `set(v)`
  // writing that coordinate. Returns nothing when an evaluation point takes
  // a different ReLU or max-pool branch than the analytic pass.
  auto numeric = [&](auto&& set, double saved) -> std::optional<double> {
    auto at = [&](double delta, double& loss) {
      set(saved + delta);
      const auto r = detail::evaluate_branch(net, batch, labels, mode, mask_seed);
      loss = r.loss;
      return r.branch == analytic.branch;
    };
    double up = 0.0, down = 0.0, up2 = 0.0, down2 = 0.0;
    bool smooth = at(h, up) & at(-h, down);
    if (opt.richardson) smooth = smooth & at(0.5 * h, up2) & at(-0.5 * h, down2);
    set(saved);
    if (!smooth) return std::nullopt;
    const double d1 = (up - down) / (2.0 * h);
    if (!opt.richardson) return d1;
    const double d2 = (up2 - down2) / h;
    return (4.0 * d2 - d1) / 3.0;
  };
  auto record = [&](const std::string& tensor, std::size_t i, double a, std::optional<double> num) {
    if (!num) {
      ++report.skipped_kinks;
      return;
    }
    const double err = relative_error(a, *num, opt.abs_floor);
    report.entries.push_back({tensor, i, a, *num, err});
    if (report.checked++ == 0 || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_tensor = tensor;
    }
  };

  auto params = net.params();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param<T>& p = *params[pi];
    if (!p.trainable) continue;
    for (std::size_t i : sample_indices(p.value.size())) {
      const T saved = p.value[i];
      const auto num = numeric([&](double v) { p.value[i] = static_cast<T>(v); }, saved);
      p.value[i] = saved;
      record(p.name, i, analytic.params[pi][i], num);
    }
  }
  for (std::size_t i : sample_indices(batch.size())) {
    const T saved = batch[i];
    const auto num = numeric([&](double v) { batch[i] = static_cast<T>(v); }, saved);
    batch[i] = saved;
    record("input", i, analytic.input[i], num);
  }
  report.passed = report.checked > 0 && report.max_rel_error < opt.tolerance;
  return report;
}

template <std::floating_point T>
GradCheckReport grad_check(Network<T>& net, const Tensor<T>& batch, const Tensor<T>& labels, Mode mode,
                           std::uint64_t mask_seed, const GradCheckOptions& opt = {}) {
  const auto analytic = compute_gradients(net, batch, labels, mode, mask_seed);
  return compare_with_finite_differences(net, batch, labels, mode, mask_seed, analytic, opt);
}

}  // namespace seizdet::nn
