#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "seizdet/preprocess.hpp"
#include "support.hpp"

using namespace seizdet;
namespace st = seizdet::testing;

namespace {

Recording noise_recording(double seconds, std::uint64_t seed = 3, std::size_t channels = 2) {
  Rng rng = make_rng(seed);
  return st::random_recording(rng, channels, static_cast<std::size_t>(std::llround(seconds * 200.0)));
}

std::size_t count_label(const std::vector<Epoch>& epochs, EpochLabel label) {
  return static_cast<std::size_t>(std::count_if(epochs.begin(), epochs.end(), [&](const Epoch& e) { return e.label == label; }));
}

// Every window start on the sample grid, kept when it matches the stated
// train-mode rule. Independent of the implementation's enumeration order.
struct Enumerated {
  std::vector<std::int64_t> ictal, interictal;
};

Enumerated enumerate_train_windows(std::int64_t n, const std::vector<std::pair<std::int64_t, std::int64_t>>& seizures,
                                   std::int64_t ictal_stride, std::int64_t inter_stride) {
  const std::int64_t len = 1000;
  Enumerated out;
  for (std::int64_t s = 0; s + len <= n; ++s) {
    bool touches = false;
    for (const auto& [b, e] : seizures) {
      if (s >= b && s + len <= e && (s - b) % ictal_stride == 0) out.ictal.push_back(s);
      touches = touches || (s < e && s + len > b);
    }
    if (touches) continue;
    std::int64_t gap_begin = 0;
    for (const auto& [b, e] : seizures)
      if (e <= s) gap_begin = e;
    if ((s - gap_begin) % inter_stride == 0) out.interictal.push_back(s);
  }
  return out;
}

}  // namespace

TEST(Resample, ConstantStaysConstant) {
  Recording r;
  r.subject_id = "c";
  r.fs_hz = 500.0;
  r.channel_names = {"a"};
  r.samples = {std::vector<double>(2500, 7.25)};
  const auto out = resample_to_200(r);
  EXPECT_EQ(out.fs_hz, 200.0);
  for (double v : out.samples[0]) EXPECT_NEAR(v, 7.25, 1e-6);
}

TEST(Resample, LengthIsTwoFifths) {
  for (std::size_t n : {1000u, 1001u, 1003u, 999u, 5u, 4u}) {
    Recording r;
    r.fs_hz = 500.0;
    r.channel_names = {"a"};
    r.samples = {std::vector<double>(n, 1.0)};
    EXPECT_EQ(resample_to_200(r).n_samples(), n * 2 / 5) << n;
  }
}

TEST(Resample, FiveHzSineSurvivesAwayFromEdges) {
  const auto in = st::sine_recording(5.0, 1.0, 5000, 500.0);
  const auto out = resample_to_200(in);
  ASSERT_EQ(out.n_samples(), 2000u);
  for (std::size_t m = 100; m + 100 < out.n_samples(); ++m) {
    const double want = std::sin(2.0 * std::numbers::pi * 5.0 * static_cast<double>(m) / 200.0);
    EXPECT_NEAR(out.samples[0][m], want, 0.02) << m;
  }
}

TEST(Resample, FortyHzToneIsAttenuatedOnlyAboveNyquist) {
  // 40 Hz is inside the 100 Hz output Nyquist band and must pass; 150 Hz
  // would alias and must be suppressed.
  const auto pass = resample_to_200(st::sine_recording(40.0, 1.0, 5000, 500.0));
  const auto stop = resample_to_200(st::sine_recording(150.0, 1.0, 5000, 500.0));
  // RMS rather than peak: at 200 Hz a 40 Hz tone only visits five phases,
  // so its sampled peak is sin(72 deg) even with a perfect filter.
  double p = 0.0, s = 0.0;
  for (std::size_t m = 100; m < 1900; ++m) {
    p += pass.samples[0][m] * pass.samples[0][m];
    s = std::max(s, std::abs(stop.samples[0][m]));
  }
  EXPECT_NEAR(std::sqrt(p / 1800.0), std::sqrt(0.5), 0.02 * std::sqrt(0.5));
  EXPECT_LT(s, 0.01);
}

TEST(Resample, TwoHundredPassesThroughAndOtherRatesFail) {
  const auto r = noise_recording(2.0);
  EXPECT_EQ(resample_to_200(r).samples, r.samples);
  auto bad = r;
  bad.fs_hz = 256.0;
  EXPECT_THROW(resample_to_200(bad), ContractError);
}

TEST(ZNormalize, ThreeSamples) {
  Recording r;
  r.fs_hz = 200.0;
  r.channel_names = {"a"};
  r.samples = {{1.0, 2.0, 3.0}};
  const auto z = znormalize(r);
  const double s = std::sqrt(1.5);
  EXPECT_NEAR(z.samples[0][0], -s, 1e-12);
  EXPECT_NEAR(z.samples[0][1], 0.0, 1e-12);
  EXPECT_NEAR(z.samples[0][2], s, 1e-12);
}

TEST(ZNormalize, ConstantChannelIsNamed) {
  Recording r;
  r.subject_id = "S9";
  r.fs_hz = 200.0;
  r.channel_names = {"ok", "flat"};
  r.samples = {{1.0, 2.0, 4.0}, {5.0, 5.0, 5.0}};
  try {
    znormalize(r);
    FAIL() << "expected an error";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("flat"), std::string::npos);
  }
}

TEST(ZNormalizeProperty, MomentsAndIdempotence) {
  st::for_cases(30, 77, [](Rng& rng, int i) {
    auto r = st::random_recording(rng, static_cast<std::size_t>(uniform_int(rng, 1, 4)),
                                  static_cast<std::size_t>(uniform_int(rng, 2, 3000)));
    for (auto& ch : r.samples) {
      const double offset = uniform(rng, -1e3, 1e3), gain = std::pow(10.0, uniform(rng, -3.0, 3.0));
      for (auto& v : ch) v = offset + gain * v;
    }
    const auto z = znormalize(r);
    for (const auto& ch : z.samples) {
      double m = 0.0, v = 0.0;
      for (double x : ch) m += x;
      m /= static_cast<double>(ch.size());
      for (double x : ch) v += (x - m) * (x - m);
      v /= static_cast<double>(ch.size());
      EXPECT_NEAR(m, 0.0, 1e-9) << "case " << i;
      EXPECT_NEAR(v, 1.0, 1e-9) << "case " << i;
    }
    const auto zz = znormalize(z);
    for (std::size_t c = 0; c < z.n_channels(); ++c)
      for (std::size_t t = 0; t < z.n_samples(); ++t) ASSERT_NEAR(zz.samples[c][t], z.samples[c][t], 1e-9);
  });
}

TEST(SelectChannels, SubsetInRequestedOrder) {
  Rng rng = make_rng(1);
  auto r = st::random_recording(rng, 18, 10);
  const auto two = select_channels(r, {"ch5", "ch4"});
  ASSERT_EQ(two.n_channels(), 2u);
  EXPECT_EQ(two.channel_names, (std::vector<std::string>{"ch5", "ch4"}));
  EXPECT_EQ(two.samples[0], r.samples[5]);
  EXPECT_EQ(two.samples[1], r.samples[4]);
  const auto all = select_channels(r, r.channel_names);
  EXPECT_EQ(all.samples, r.samples);
}

TEST(SelectChannels, UnknownNameListsAvailable) {
  Rng rng = make_rng(1);
  auto r = st::random_recording(rng, 2, 10);
  try {
    select_channels(r, {"Cz"});
    FAIL() << "expected an error";
  } catch (const ContractError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("Cz"), std::string::npos);
    EXPECT_NE(msg.find("ch0,ch1"), std::string::npos);
  }
}

TEST(Epochs, TenSecondSeizureGivesSixtySevenIctalWindows) {
  const auto rec = noise_recording(60.0);
  const AnnotationSet ann{{{20.0, 30.0}}};
  const auto epochs = extract_epochs(rec, ann, {.mode = WindowMode::train});
  EXPECT_EQ(count_label(epochs, EpochLabel::ictal), 67u);
  EXPECT_EQ(static_cast<std::size_t>(std::floor((30.0 - 20.0 - 5.0) / 0.075 + 1e-9)) + 1, 67u);

  const auto oracle = enumerate_train_windows(12000, {{4000, 6000}}, 15, 1000);
  EXPECT_EQ(oracle.ictal.size(), 67u);
  std::vector<std::int64_t> got;
  for (const auto& e : epochs)
    if (e.ictal()) got.push_back(std::llround(e.start_s * 200.0));
  EXPECT_EQ(got, oracle.ictal);
}

TEST(Epochs, EvalModeTilesAndLabelsByOverlap) {
  const auto rec = noise_recording(60.0);
  const AnnotationSet ann{{{20.0, 30.0}}};
  const auto epochs = extract_epochs(rec, ann, {.mode = WindowMode::eval});
  ASSERT_EQ(epochs.size(), 12u);
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    EXPECT_DOUBLE_EQ(epochs[i].start_s, 5.0 * static_cast<double>(i));
    const bool want = epochs[i].start_s == 20.0 || epochs[i].start_s == 25.0;
    EXPECT_EQ(epochs[i].ictal(), want) << epochs[i].start_s;
  }
}

TEST(Epochs, SeizureFreeTrainModeIsAllInterictal) {
  const auto epochs = extract_epochs(noise_recording(60.0), {}, {.mode = WindowMode::train});
  EXPECT_EQ(count_label(epochs, EpochLabel::interictal), 12u);
  EXPECT_EQ(count_label(epochs, EpochLabel::ictal), 0u);
}

TEST(Epochs, WindowDataIsTheRecordingSlice) {
  const auto rec = noise_recording(20.0, 9, 3);
  const auto epochs = extract_epochs(rec, {{{7.0, 19.0}}}, {.mode = WindowMode::train});
  for (const auto& e : epochs) {
    const auto start = static_cast<std::size_t>(std::llround(e.start_s * 200.0));
    ASSERT_EQ(e.n_channels, 3u);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t t = 0; t < kEpochSamples; t += 97) ASSERT_EQ(e.channel(c)[t], rec.samples[c][start + t]);
  }
}

TEST(Epochs, ShortRecordingAndBadPolicyAreErrors) {
  EXPECT_THROW(extract_epochs(noise_recording(4.99), {}, {}), ContractError);
  auto at500 = noise_recording(10.0);
  at500.fs_hz = 500.0;
  EXPECT_THROW(extract_epochs(at500, {}, {}), ContractError);
  EXPECT_THROW(extract_epochs(noise_recording(10.0), {}, {.epoch_len_s = 4.0}), ContractError);
  EXPECT_THROW(extract_epochs(noise_recording(10.0), {}, {.ictal_stride_s = 0.0}), ContractError);
}

// Random annotation layouts: train-mode windows agree with exhaustive
// enumeration, are label-pure, and the per-seizure count follows the stride
// formula; eval windows tile the recording.
TEST(EpochsProperty, TrainWindowsMatchEnumerationAndStayPure) {
  st::for_cases(40, 505, [](Rng& rng, int i) {
    const double duration = uniform(rng, 10.0, 90.0);
    const auto rec = noise_recording(duration, static_cast<std::uint64_t>(i), 1);
    const auto n = static_cast<std::int64_t>(rec.n_samples());
    AnnotationSet ann;
    std::vector<std::pair<std::int64_t, std::int64_t>> spans;
    double t = uniform(rng, 0.0, 6.0);
    while (true) {
      const double len = uniform(rng, 0.5, 14.0);
      if (t + len > duration) break;
      // Seizure bounds on the sample grid, as written by the generator.
      const double on = std::round(t * 200.0) / 200.0, off = std::round((t + len) * 200.0) / 200.0;
      ann.intervals.push_back({on, off});
      spans.emplace_back(std::llround(on * 200.0), std::llround(off * 200.0));
      t += len + uniform(rng, 0.0, 12.0);
    }
    const double ictal_stride = uniform01(rng) < 0.5 ? 0.075 : uniform(rng, 0.01, 2.0);
    const WindowingPolicy policy{.mode = WindowMode::train, .ictal_stride_s = ictal_stride};
    const auto epochs = extract_epochs(rec, ann, policy);
    const auto oracle = enumerate_train_windows(n, spans, std::llround(ictal_stride * 200.0), 1000);

    std::vector<std::int64_t> ictal, inter;
    for (const auto& e : epochs) {
      const auto s = std::llround(e.start_s * 200.0);
      (e.ictal() ? ictal : inter).push_back(s);
      for (const auto& [b, en] : spans) {
        const bool inside = s >= b && s + 1000 <= en;
        const bool disjoint = s + 1000 <= b || s >= en;
        if (e.ictal()) ASSERT_TRUE(inside || disjoint);
        else ASSERT_TRUE(disjoint) << "interictal window touches a seizure, case " << i;
      }
    }
    std::sort(ictal.begin(), ictal.end());
    EXPECT_EQ(ictal, oracle.ictal) << "case " << i;
    EXPECT_EQ(inter, oracle.interictal) << "case " << i;

    if (ictal_stride == 0.075) {
      std::size_t expected = 0;
      for (const auto& iv : ann.intervals)
        if (iv.length_s() >= 5.0) expected += static_cast<std::size_t>(std::floor((iv.length_s() - 5.0) / 0.075 + 1e-9)) + 1;
      EXPECT_EQ(ictal.size(), expected) << "case " << i;
    }

    const auto tiles = extract_epochs(rec, ann, {.mode = WindowMode::eval});
    ASSERT_EQ(tiles.size(), static_cast<std::size_t>(n / 1000));
    for (std::size_t k = 0; k < tiles.size(); ++k) {
      EXPECT_DOUBLE_EQ(tiles[k].start_s, 5.0 * static_cast<double>(k));
      bool overlaps = false;
      for (const auto& [b, en] : spans) overlaps = overlaps || (static_cast<std::int64_t>(k) * 1000 < en && (static_cast<std::int64_t>(k) + 1) * 1000 > b);
      EXPECT_EQ(tiles[k].ictal(), overlaps);
    }
  });
}

TEST(Prepare, FiveHundredHzRecordingEndsNormalisedAt200) {
  Rng rng = make_rng(12);
  auto r = st::random_recording(rng, 3, 5000, 500.0);
  const auto p = prepare_recording(r, {"ch2", "ch0"});
  EXPECT_EQ(p.fs_hz, 200.0);
  EXPECT_EQ(p.n_samples(), 2000u);
  EXPECT_EQ(p.channel_names, (std::vector<std::string>{"ch2", "ch0"}));
  double m = 0.0;
  for (double v : p.samples[0]) m += v;
  EXPECT_NEAR(m / 2000.0, 0.0, 1e-9);
}
