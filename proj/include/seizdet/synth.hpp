#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "seizdet/eeg_core.hpp"
#include "seizdet/error.hpp"
#include "seizdet/rng.hpp"

namespace seizdet {

// Synthetic absence-seizure dataset parameters. Amplitudes are in microvolts.
struct SynthConfig {
  int n_subjects{6};
  double duration_s{600.0};
  int n_channels{18};
  std::pair<int, int> seizure_count_range{3, 5};
  std::pair<double, double> seizure_len_range_s{6.0, 12.0};
  double spike_wave_hz{3.0};
  double background_alpha_hz{10.0};
  double noise_sigma{4.0};
  std::uint64_t seed{7};
};

// Every generated seizure is separated from its neighbours and from both
// recording ends by at least this much background.
inline constexpr double kMinSeizureGapS = 10.0;
inline constexpr double kSynthFs = 200.0;

// 10-20 montage without Pz; channels beyond 18 get generic names.
inline std::vector<std::string> synth_channel_names(int n) {
  static const std::array<const char*, 18> names = {"Fp1", "Fp2", "F3", "F4", "C3", "C4", "P3", "P4", "O1",
                                                    "O2",  "F7",  "F8", "T3", "T4", "T5", "T6", "Fz", "Cz"};
  std::vector<std::string> out;
  for (int c = 0; c < n; ++c) out.push_back(c < 18 ? std::string(names[c]) : "Ch" + std::to_string(c + 1));
  return out;
}

inline void validate(const SynthConfig& cfg) {
  if (cfg.n_subjects < 1) throw ContractError("synth: n_subjects must be >= 1");
  if (cfg.n_channels < 1) throw ContractError("synth: n_channels must be >= 1");
  if (!(cfg.duration_s > 0.0)) throw ContractError("synth: duration_s must be > 0");
  const auto [cmin, cmax] = cfg.seizure_count_range;
  const auto [lmin, lmax] = cfg.seizure_len_range_s;
  if (cmin < 0 || cmax < cmin) throw ContractError("synth: seizure_count_range is empty");
  if (!(lmin > 0.0) || lmax < lmin) throw ContractError("synth: seizure_len_range_s is empty");
  if (!(cfg.spike_wave_hz > 0.0)) throw ContractError("synth: spike_wave_hz must be > 0");
  if (cfg.noise_sigma < 0.0) throw ContractError("synth: noise_sigma must be >= 0");
  const double worst = cmax * lmax + (cmax + 1) * kMinSeizureGapS;
  if (worst > cfg.duration_s)
    throw ContractError("synth: seizures requested longer than duration (" + std::to_string(cmax) + " x " +
                        text::format_exact(lmax) + " s plus gaps needs " + text::format_exact(worst) + " s, have " +
                        text::format_exact(cfg.duration_s) + " s)");
}

namespace detail {

struct Sinusoid {
  double amp, hz, phase;
};

// Pink-ish spectrum: log-uniform frequencies in [0.5, 30] Hz, power ~ 1/f.
inline std::vector<Sinusoid> pink_components(Rng& rng, int count) {
  std::vector<Sinusoid> out;
  double power = 0.0;
  for (int i = 0; i < count; ++i) {
    const double hz = 0.5 * std::exp(uniform01(rng) * std::log(60.0));
    const double amp = 1.0 / std::sqrt(hz);
    out.push_back({amp, hz, uniform(rng, 0.0, 2.0 * std::numbers::pi)});
    power += 0.5 * amp * amp;
  }
  for (auto& s : out) s.amp /= std::sqrt(power);  // unit RMS
  return out;
}

// One biphasic spike of `spike_s` seconds, then a negative half-sine slow
// wave filling the rest of the cycle. `cycle_pos` is in [0, 1).
inline double spike_wave(double cycle_pos, double period_s, double spike_s, double wave_ratio) {
  const double tau = cycle_pos * period_s;
  if (tau < spike_s) return std::sin(2.0 * std::numbers::pi * tau / spike_s);
  return -wave_ratio * std::sin(std::numbers::pi * (tau - spike_s) / (period_s - spike_s));
}

// RMS of the template over one cycle, numerically.
inline double spike_wave_rms(double period_s, double spike_s, double wave_ratio) {
  constexpr int kPoints = 4000;
  double ss = 0.0;
  for (int i = 0; i < kPoints; ++i) {
    const double v = spike_wave((i + 0.5) / kPoints, period_s, spike_s, wave_ratio);
    ss += v * v;
  }
  return std::sqrt(ss / kPoints);
}

}  // namespace detail

// Deterministic for a fixed config. Each subject: band-limited background with
// a modulated alpha rhythm and white noise; seizures are periodic spike-and-wave
// discharges at spike_wave_hz over an attenuated background, and the returned
// annotations bracket exactly the samples that were replaced.
inline std::vector<SubjectData> synth_dataset(const SynthConfig& cfg) {
  validate(cfg);
  const double fs = kSynthFs;
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * fs));
  const auto names = synth_channel_names(cfg.n_channels);
  const int id_width = cfg.n_subjects > 99 ? 3 : 2;

  std::vector<SubjectData> out;
  for (int s = 0; s < cfg.n_subjects; ++s) {
    Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(s));
    SubjectData subj;
    auto id = std::to_string(s + 1);
    subj.recording.subject_id = "S" + std::string(static_cast<std::size_t>(std::max(0, id_width - static_cast<int>(id.size()))), '0') + id;
    subj.recording.fs_hz = fs;
    subj.recording.channel_names = names;

    // Subject-level traits.
    const double bg_rms = 20.0 * uniform(rng, 0.8, 1.25);
    const double alpha_hz = cfg.background_alpha_hz + uniform(rng, -0.5, 0.5);
    const double alpha_amp = bg_rms * uniform(rng, 0.5, 1.0);
    const double alpha_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double mod_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double sw_amp = bg_rms * uniform(rng, 3.0, 6.0);
    const double spike_s = uniform(rng, 0.05, 0.08);
    const double wave_ratio = uniform(rng, 0.6, 0.9);
    const auto shared = detail::pink_components(rng, 24);
    // The discharge amplitude is an RMS ratio to the background.
    const double sw_scale = sw_amp / detail::spike_wave_rms(1.0 / cfg.spike_wave_hz, spike_s, wave_ratio);

    // Seizure placement on the sample grid.
    const int count = static_cast<int>(uniform_int(rng, cfg.seizure_count_range.first, cfg.seizure_count_range.second));
    const auto gap = static_cast<std::int64_t>(std::llround(kMinSeizureGapS * fs));
    std::vector<std::int64_t> lens(count), slack(count);
    std::int64_t total_len = 0;
    for (auto& len : lens) {
      const double lo = cfg.seizure_len_range_s.first, hi = cfg.seizure_len_range_s.second;
      len = std::max<std::int64_t>(1, std::llround(uniform(rng, lo, hi) * fs));
      total_len += len;
    }
    const std::int64_t free = static_cast<std::int64_t>(n) - total_len - (count + 1) * gap;
    if (free < 0) throw ContractError("synth: seizures requested longer than duration");
    for (auto& p : slack) p = uniform_int(rng, 0, free);
    std::sort(slack.begin(), slack.end());
    struct Placed {
      std::int64_t begin, end;
      double hz, phase;
    };
    std::vector<Placed> placed;
    std::int64_t cursor = 0;
    for (int i = 0; i < count; ++i) {
      const std::int64_t begin = (i + 1) * gap + cursor + slack[i];
      cursor += lens[i];
      placed.push_back({begin, begin + lens[i], cfg.spike_wave_hz * (1.0 + uniform(rng, -0.03, 0.03)), uniform01(rng)});
      subj.seizures.intervals.push_back({static_cast<double>(begin) / fs, static_cast<double>(begin + lens[i]) / fs});
    }

    // Sample-level mask of seizure membership.
    std::vector<int> seizure_of(n, -1);
    for (int i = 0; i < count; ++i)
      for (auto t = placed[i].begin; t < placed[i].end; ++t) seizure_of[static_cast<std::size_t>(t)] = i;

    std::vector<double> shared_bg(n);
    for (std::size_t t = 0; t < n; ++t) {
      const double time = static_cast<double>(t) / fs;
      double v = 0.0;
      for (const auto& c : shared) v += c.amp * std::sin(2.0 * std::numbers::pi * c.hz * time + c.phase);
      shared_bg[t] = v;
    }

    subj.recording.samples.assign(names.size(), std::vector<double>(n));
    for (std::size_t ch = 0; ch < names.size(); ++ch) {
      const auto own = detail::pink_components(rng, 16);
      const bool posterior = names[ch].front() == 'O' || names[ch].front() == 'P';
      const double alpha_gain = posterior ? 1.0 : 0.4;
      const double sw_gain = uniform(rng, 0.7, 1.2);
      const double lag_s = uniform(rng, 0.0, 0.01);
      auto& x = subj.recording.samples[ch];
      for (std::size_t t = 0; t < n; ++t) {
        const double time = static_cast<double>(t) / fs;
        double bg = 0.0;
        for (const auto& c : own) bg += c.amp * std::sin(2.0 * std::numbers::pi * c.hz * time + c.phase);
        bg = bg_rms * (0.6 * shared_bg[t] + 0.8 * bg);
        const double modulation = 0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * 0.07 * time + mod_phase);
        bg += alpha_gain * alpha_amp * modulation * std::sin(2.0 * std::numbers::pi * alpha_hz * time + alpha_phase);
        double v = bg;
        if (const int sz = seizure_of[t]; sz >= 0) {
          const auto& p = placed[static_cast<std::size_t>(sz)];
          const double rel = static_cast<double>(static_cast<std::int64_t>(t) - p.begin) / fs - lag_s;
          double cycle = rel * p.hz + p.phase;
          cycle -= std::floor(cycle);
          v = 0.5 * bg + sw_gain * sw_scale * detail::spike_wave(cycle, 1.0 / p.hz, spike_s, wave_ratio);
        }
        x[t] = v + cfg.noise_sigma * normal01(rng);
      }
    }
    out.push_back(std::move(subj));
  }
  return out;
}

}  // namespace seizdet
