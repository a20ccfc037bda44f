#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <unistd.h>

#include "seizdet/eeg_core.hpp"
#include "seizdet/preprocess.hpp"
#include "seizdet/rng.hpp"

namespace seizdet::testing {

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("seizdet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Runs `body(case_rng, case_index)` for `cases` independent seeded cases.
inline void for_cases(int cases, std::uint64_t seed, const std::function<void(Rng&, int)>& body) {
  for (int i = 0; i < cases; ++i) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(i));
    body(rng, i);
  }
}

inline Recording random_recording(Rng& rng, std::size_t channels, std::size_t samples, double fs = 200.0,
                                  const std::string& id = "R") {
  Recording r;
  r.subject_id = id;
  r.fs_hz = fs;
  for (std::size_t c = 0; c < channels; ++c) {
    r.channel_names.push_back("ch" + std::to_string(c));
    std::vector<double> x(samples);
    for (auto& v : x) v = uniform(rng, -100.0, 100.0);
    r.samples.push_back(std::move(x));
  }
  return r;
}

inline Recording sine_recording(double hz, double amp, std::size_t samples, double fs, std::size_t channels = 1) {
  Recording r;
  r.subject_id = "sine";
  r.fs_hz = fs;
  for (std::size_t c = 0; c < channels; ++c) {
    r.channel_names.push_back("ch" + std::to_string(c));
    std::vector<double> x(samples);
    for (std::size_t t = 0; t < samples; ++t) x[t] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(t) / fs);
    r.samples.push_back(std::move(x));
  }
  return r;
}

inline Epoch epoch_from(std::size_t channels, const std::function<double(std::size_t, std::size_t)>& f,
                        EpochLabel label = EpochLabel::interictal) {
  Epoch e;
  e.subject_id = "E";
  e.n_channels = channels;
  e.label = label;
  e.data.resize(channels * kEpochSamples);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t t = 0; t < kEpochSamples; ++t) e.data[c * kEpochSamples + t] = f(c, t);
  return e;
}

}  // namespace seizdet::testing
