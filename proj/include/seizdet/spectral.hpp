#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "seizdet/error.hpp"

namespace seizdet::spectral {

// Twiddle table cos/sin(2*pi*m/N) for m in [0, N), shared by every bin of one
// transform length. Index arithmetic stays exact (k*n mod N).
class DftTable {
 public:
  explicit DftTable(std::size_t n) : n_(n), cos_(n), sin_(n) {
    for (std::size_t m = 0; m < n; ++m) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
      cos_[m] = std::cos(a);
      sin_[m] = std::sin(a);
    }
  }

  std::size_t size() const { return n_; }

  // |X_k|^2 / N for one bin, by direct summation.
  double bin_power(std::span<const double> x, std::size_t k) const {
    double re = 0.0, im = 0.0;
    std::size_t m = 0;
    for (std::size_t t = 0; t < n_; ++t) {
      re += x[t] * cos_[m];
      im -= x[t] * sin_[m];
      m += k;
      if (m >= n_) m -= n_;
    }
    return (re * re + im * im) / static_cast<double>(n_);
  }

 private:
  std::size_t n_;
  std::vector<double> cos_, sin_;
};

// One-sided periodogram |X_k|^2 / N for k = 0..N/2, rectangular window.
inline std::vector<double> periodogram(std::span<const double> x) {
  const DftTable table(x.size());
  std::vector<double> p(x.size() / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = table.bin_power(x, k);
  return p;
}

// Frequency of the largest periodogram bin strictly above `min_hz`.
inline double dominant_frequency(std::span<const double> x, double fs_hz = 200.0, double min_hz = 0.5) {
  if (x.size() < 2) throw ContractError("dominant_frequency needs at least 2 samples");
  const auto p = periodogram(x);
  const double df = fs_hz / static_cast<double>(x.size());
  std::size_t best = 0;
  double best_power = -1.0;
  for (std::size_t k = 1; k < p.size(); ++k) {
    if (static_cast<double>(k) * df <= min_hz) continue;
    if (p[k] > best_power) {
      best_power = p[k];
      best = k;
    }
  }
  return static_cast<double>(best) * df;
}

// Same, over the power summed across several equal-length channels.
inline double dominant_frequency_summed(const std::vector<std::vector<double>>& channels, double fs_hz = 200.0,
                                        double min_hz = 0.5) {
  if (channels.empty() || channels.front().size() < 2) throw ContractError("dominant_frequency needs at least 2 samples");
  const std::size_t n = channels.front().size();
  std::vector<double> total(n / 2 + 1, 0.0);
  for (const auto& ch : channels) {
    const auto p = periodogram(ch);
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += p[k];
  }
  const double df = fs_hz / static_cast<double>(n);
  std::size_t best = 0;
  double best_power = -1.0;
  for (std::size_t k = 1; k < total.size(); ++k) {
    if (static_cast<double>(k) * df <= min_hz) continue;
    if (total[k] > best_power) {
      best_power = total[k];
      best = k;
    }
  }
  return static_cast<double>(best) * df;
}

}  // namespace seizdet::spectral
