#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "seizdet/eeg_core.hpp"
#include "seizdet/error.hpp"

namespace seizdet {

inline constexpr double kTargetFs = 200.0;
inline constexpr double kEpochLenS = 5.0;
inline constexpr std::size_t kEpochSamples = 1000;

enum class EpochLabel { interictal = 0, ictal = 1 };

// One 5 s analysis window; data is row-major [n_channels x 1000].
struct Epoch {
  std::string subject_id;
  double start_s{0.0};
  std::size_t n_channels{0};
  std::vector<double> data;
  EpochLabel label{EpochLabel::interictal};

  std::span<const double> channel(std::size_t c) const { return {data.data() + c * kEpochSamples, kEpochSamples}; }
  std::span<double> channel(std::size_t c) { return {data.data() + c * kEpochSamples, kEpochSamples}; }
  bool ictal() const { return label == EpochLabel::ictal; }
};

enum class WindowMode { train, eval };

struct WindowingPolicy {
  WindowMode mode{WindowMode::train};
  double interictal_stride_s{5.0};
  double ictal_stride_s{0.075};
  double epoch_len_s{kEpochLenS};
};

namespace detail {

// Windowed-sinc low-pass (Kaiser window, beta 5.65, ~60 dB stopband) for the
// 1000 Hz intermediate rate of the 500 -> 200 Hz path. Taps are split into the
// two polyphase branches, each normalised to unit DC gain.
struct Resampler500To200 {
  static constexpr int kHalf = 100;  // 201 taps
  std::vector<double> taps;
  double branch_sum[2]{0.0, 0.0};

  Resampler500To200() : taps(2 * kHalf + 1) {
    const double fc = 100.0 / 1000.0;  // cycles per intermediate sample
    const double beta = 5.65;
    const double i0_beta = std::cyl_bessel_i(0.0, beta);
    for (int k = -kHalf; k <= kHalf; ++k) {
      const double sinc = k == 0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * k) / (std::numbers::pi * k);
      const double r = static_cast<double>(k) / kHalf;
      const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
      taps[static_cast<std::size_t>(k + kHalf)] = sinc * w;
    }
    for (int k = -kHalf; k <= kHalf; ++k) branch_sum[(k + 2 * kHalf) % 2] += taps[static_cast<std::size_t>(k + kHalf)];
  }

  // Output m sits at intermediate index 5m, i.e. input position 2.5m. Only
  // taps landing on even intermediate indices (real input samples) contribute.
  // Out-of-range input indices hold the edge value.
  std::vector<double> apply(std::span<const double> x) const {
    const auto n_in = static_cast<std::int64_t>(x.size());
    const auto n_out = static_cast<std::size_t>(x.size() * 2 / 5);
    std::vector<double> y(n_out);
    for (std::size_t m = 0; m < n_out; ++m) {
      const auto centre = static_cast<std::int64_t>(5 * m);
      const int parity = static_cast<int>(centre % 2);
      double acc = 0.0;
      for (int k = -kHalf; k <= kHalf; ++k) {
        const std::int64_t up = centre - k;
        if (up % 2 != 0) continue;
        const std::int64_t idx = std::clamp<std::int64_t>(up / 2, 0, n_in - 1);
        acc += taps[static_cast<std::size_t>(k + kHalf)] * x[static_cast<std::size_t>(idx)];
      }
      y[m] = acc / branch_sum[parity];
    }
    return y;
  }
};

}  // namespace detail

// 200 Hz passes through; 500 Hz goes through the 2/5 rational resampler.
inline Recording resample_to_200(const Recording& rec) {
  if (rec.fs_hz == kTargetFs) return rec;
  if (rec.fs_hz != 500.0)
    throw ContractError("resample_to_200: unsupported input rate " + text::format_exact(rec.fs_hz) + " Hz");
  static const detail::Resampler500To200 resampler;
  Recording out;
  out.subject_id = rec.subject_id;
  out.fs_hz = kTargetFs;
  out.channel_names = rec.channel_names;
  out.samples.reserve(rec.n_channels());
  for (const auto& ch : rec.samples) out.samples.push_back(resampler.apply(ch));
  return out;
}

// Per-channel z-scoring over the whole recording (population variance).
inline Recording znormalize(const Recording& rec) {
  Recording out = rec;
  for (std::size_t c = 0; c < out.n_channels(); ++c) {
    auto& x = out.samples[c];
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    if (!(var > 1e-24 * std::max(1.0, mean * mean)))
      throw ContractError("znormalize: channel '" + rec.channel_names[c] + "' of '" + rec.subject_id +
                          "' has zero variance");
    const double inv_sd = 1.0 / std::sqrt(var);
    for (double& v : x) v = (v - mean) * inv_sd;
  }
  return out;
}

inline Recording select_channels(const Recording& rec, const std::vector<std::string>& names) {
  if (names.empty()) throw ContractError("select_channels: no channels requested");
  Recording out;
  out.subject_id = rec.subject_id;
  out.fs_hz = rec.fs_hz;
  for (const auto& name : names) {
    const auto it = std::find(rec.channel_names.begin(), rec.channel_names.end(), name);
    if (it == rec.channel_names.end())
      throw ContractError("unknown channel '" + name + "' in '" + rec.subject_id +
                          "'; available: " + text::join(rec.channel_names, ","));
    out.channel_names.push_back(name);
    out.samples.push_back(rec.samples[static_cast<std::size_t>(it - rec.channel_names.begin())]);
  }
  return out;
}

// Resample, pick channels (empty list keeps all), then z-normalize.
inline Recording prepare_recording(const Recording& rec, const std::vector<std::string>& channels) {
  Recording r = resample_to_200(rec);
  if (!channels.empty()) r = select_channels(r, channels);
  return znormalize(r);
}

// First sample index at or after time t. Annotation times are multiples of
// 1/fs up to rounding, hence the slack.
inline std::int64_t sample_at_or_after(double t_s, double fs_hz) {
  return static_cast<std::int64_t>(std::ceil(t_s * fs_hz - 1e-6));
}

namespace detail {

inline Epoch cut_epoch(const Recording& rec, std::int64_t start, EpochLabel label) {
  Epoch e;
  e.subject_id = rec.subject_id;
  e.start_s = static_cast<double>(start) / rec.fs_hz;
  e.n_channels = rec.n_channels();
  e.label = label;
  e.data.resize(e.n_channels * kEpochSamples);
  for (std::size_t c = 0; c < e.n_channels; ++c)
    std::copy_n(rec.samples[c].begin() + start, kEpochSamples, e.data.begin() + static_cast<std::ptrdiff_t>(c * kEpochSamples));
  return e;
}

inline std::int64_t stride_samples(double stride_s, double fs_hz, const char* what) {
  if (!(stride_s > 0.0)) throw ContractError(std::string("extract_epochs: ") + what + " stride must be > 0");
  const auto s = std::llround(stride_s * fs_hz);
  if (s < 1) throw ContractError(std::string("extract_epochs: ") + what + " stride is below one sample");
  return s;
}

}  // namespace detail

// Train mode: ictal windows lie fully inside one seizure, enumerated from its
// onset at the ictal stride; interictal windows lie fully inside a seizure-free
// gap, enumerated from the gap start at the interictal stride; straddling
// windows are dropped. Eval mode: contiguous tiling from t = 0, ictal iff the
// window shares at least one sample with a seizure.
inline std::vector<Epoch> extract_epochs(const Recording& rec, const AnnotationSet& ann, const WindowingPolicy& policy) {
  if (rec.fs_hz != kTargetFs) throw ContractError("extract_epochs: recording must be at 200 Hz");
  if (policy.epoch_len_s != kEpochLenS) throw ContractError("extract_epochs: epoch length is fixed at 5 s");
  const auto n = static_cast<std::int64_t>(rec.n_samples());
  const auto len = static_cast<std::int64_t>(kEpochSamples);
  if (n < len) throw ContractError("extract_epochs: recording '" + rec.subject_id + "' is shorter than one epoch");

  struct Span {
    std::int64_t begin, end;
  };
  std::vector<Span> seizures;
  for (const auto& iv : ann.intervals) {
    const auto b = std::clamp<std::int64_t>(sample_at_or_after(iv.onset_s, rec.fs_hz), 0, n);
    const auto e = std::clamp<std::int64_t>(sample_at_or_after(iv.offset_s, rec.fs_hz), 0, n);
    if (e > b) seizures.push_back({b, e});
  }

  std::vector<Epoch> out;
  if (policy.mode == WindowMode::eval) {
    for (std::int64_t start = 0; start + len <= n; start += len) {
      bool ictal = false;
      for (const auto& s : seizures) ictal = ictal || (start < s.end && start + len > s.begin);
      out.push_back(detail::cut_epoch(rec, start, ictal ? EpochLabel::ictal : EpochLabel::interictal));
    }
    return out;
  }

  const auto ictal_stride = detail::stride_samples(policy.ictal_stride_s, rec.fs_hz, "ictal");
  const auto inter_stride = detail::stride_samples(policy.interictal_stride_s, rec.fs_hz, "interictal");
  std::int64_t gap_begin = 0;
  auto emit_gap = [&](std::int64_t gap_end) {
    for (std::int64_t start = gap_begin; start + len <= gap_end; start += inter_stride)
      out.push_back(detail::cut_epoch(rec, start, EpochLabel::interictal));
  };
  for (const auto& s : seizures) {
    emit_gap(s.begin);
    for (std::int64_t start = s.begin; start + len <= s.end; start += ictal_stride)
      out.push_back(detail::cut_epoch(rec, start, EpochLabel::ictal));
    gap_begin = s.end;
  }
  emit_gap(n);
  return out;
}

}  // namespace seizdet
