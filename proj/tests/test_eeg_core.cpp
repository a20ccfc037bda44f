#include <gtest/gtest.h>

#include <sstream>

#include "seizdet/eeg_core.hpp"
#include "seizdet/spectral.hpp"
#include "seizdet/synth.hpp"
#include "support.hpp"

using namespace seizdet;
using seizdet::testing::TempDir;

namespace {

std::string two_channel_csv(std::size_t rows) {
  std::ostringstream s;
  s << "#subject=S01,fs=200,channels=C3|C4\n";
  for (std::size_t t = 0; t < rows; ++t) s << t * 0.5 << ',' << -static_cast<double>(t) << '\n';
  return s.str();
}

std::size_t ingest_line(const std::string& csv) {
  std::istringstream in(csv);
  try {
    parse_recording(in, "mem");
  } catch (const IngestError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(Recording, LoadsTwoChannelsThousandRows) {
  std::istringstream in(two_channel_csv(1000));
  const auto rec = parse_recording(in, "mem");
  EXPECT_EQ(rec.subject_id, "S01");
  EXPECT_EQ(rec.fs_hz, 200.0);
  ASSERT_EQ(rec.n_channels(), 2u);
  EXPECT_EQ(rec.n_samples(), 1000u);
  EXPECT_EQ(rec.channel_names, (std::vector<std::string>{"C3", "C4"}));
  EXPECT_DOUBLE_EQ(rec.samples[0][3], 1.5);
  EXPECT_DOUBLE_EQ(rec.samples[1][3], -3.0);
}

TEST(Recording, WideRowIsRejectedAtItsLine) {
  std::string csv = "#subject=S01,fs=200,channels=C3|C4\n1,2\n3,4\n5,6,7\n8,9\n";
  EXPECT_EQ(ingest_line(csv), 4u);
}

TEST(Recording, HeaderErrorsNameLineOne) {
  EXPECT_EQ(ingest_line("subject=S01,fs=200,channels=A\n1\n"), 1u);
  EXPECT_EQ(ingest_line("#subject=S01,fs=256,channels=A\n1\n"), 1u);
  EXPECT_EQ(ingest_line("#subject=S01,channels=A\n1\n"), 1u);
  EXPECT_EQ(ingest_line("#subject=S01,fs=200,channels=A,color=red\n1\n"), 1u);
}

TEST(Recording, NonNumericCellIsRejected) {
  EXPECT_EQ(ingest_line("#subject=S01,fs=500,channels=A|B\n1,2\n3,x\n"), 3u);
  EXPECT_EQ(ingest_line("#subject=S01,fs=500,channels=A|B\n1,nan\n"), 2u);
}

TEST(Recording, SaveWritesHeaderVerbatim) {
  TempDir dir("rec");
  Recording r;
  r.subject_id = "P7";
  r.fs_hz = 500.0;
  r.channel_names = {"Fp1", "O2", "T3"};
  r.samples = {{1, 2}, {3, 4}, {5, 6}};
  save_recording(r, dir / "r.csv");
  std::ifstream in(dir / "r.csv");
  std::string first;
  std::getline(in, first);
  EXPECT_EQ(first, "#subject=P7,fs=500,channels=Fp1|O2|T3");
}

TEST(Recording, RoundTripPreservesEverySample) {
  TempDir dir("rt");
  seizdet::testing::for_cases(20, 41, [&](Rng& rng, int i) {
    const auto channels = static_cast<std::size_t>(uniform_int(rng, 1, 5));
    const auto samples = static_cast<std::size_t>(uniform_int(rng, 1, 400));
    const double fs = uniform01(rng) < 0.5 ? 200.0 : 500.0;
    auto rec = seizdet::testing::random_recording(rng, channels, samples, fs, "S" + std::to_string(i));
    // Exercise magnitudes across many decades.
    for (auto& ch : rec.samples)
      for (auto& v : ch) v *= std::pow(10.0, uniform(rng, -6.0, 6.0));
    const auto path = dir / ("r" + std::to_string(i) + ".csv");
    save_recording(rec, path);
    const auto back = load_recording(path);
    ASSERT_EQ(back.subject_id, rec.subject_id);
    ASSERT_EQ(back.fs_hz, rec.fs_hz);
    ASSERT_EQ(back.channel_names, rec.channel_names);
    ASSERT_EQ(back.n_samples(), rec.n_samples());
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < samples; ++t)
        ASSERT_NEAR(back.samples[c][t], rec.samples[c][t], 1e-8 * std::abs(rec.samples[c][t])) << "case " << i;
  });
}

TEST(Annotations, RowsAreSorted) {
  std::istringstream in("onset_s,offset_s\n40,45\n10,20\n");
  const auto ann = parse_annotations(in, "mem");
  ASSERT_EQ(ann.size(), 2u);
  EXPECT_EQ(ann.intervals[0], (SeizureInterval{10, 20}));
  EXPECT_EQ(ann.intervals[1], (SeizureInterval{40, 45}));
}

TEST(Annotations, OverlapIsAnError) {
  std::istringstream in("onset_s,offset_s\n10,20\n15,25\n");
  EXPECT_THROW(parse_annotations(in, "mem"), ContractError);
}

TEST(Annotations, EmptyFileIsSeizureFree) {
  std::istringstream in("");
  EXPECT_TRUE(parse_annotations(in, "mem").empty());
  std::istringstream header_only("onset_s,offset_s\n");
  EXPECT_TRUE(parse_annotations(header_only, "mem").empty());
}

TEST(Annotations, InversionAndRangeErrors) {
  std::istringstream inverted("onset_s,offset_s\n20,10\n");
  EXPECT_THROW(parse_annotations(inverted, "mem"), IngestError);
  std::istringstream negative("onset_s,offset_s\n-1,10\n");
  EXPECT_THROW(parse_annotations(negative, "mem"), IngestError);
  std::istringstream late("onset_s,offset_s\n50,70\n");
  EXPECT_THROW(parse_annotations(late, "mem", 60.0), IngestError);
}

TEST(Dataset, SaveLoadKeepsLayoutAndOrder) {
  TempDir dir("ds");
  SynthConfig cfg;
  cfg.n_subjects = 3;
  cfg.duration_s = 60.0;
  cfg.n_channels = 2;
  cfg.seizure_count_range = {0, 2};
  cfg.seizure_len_range_s = {6.0, 8.0};
  const auto data = synth_dataset(cfg);
  save_dataset(data, dir.path());
  for (const auto& s : data) {
    EXPECT_TRUE(std::filesystem::exists(dir.path() / s.recording.subject_id / "recording.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir.path() / s.recording.subject_id / "seizures.csv"));
  }
  const auto back = load_dataset(dir.path());
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].recording.subject_id, data[i].recording.subject_id);
    EXPECT_EQ(back[i].seizures, data[i].seizures);
    EXPECT_EQ(back[i].recording.n_samples(), data[i].recording.n_samples());
  }
}

TEST(Synth, SameSeedIsBitIdentical) {
  SynthConfig cfg;
  cfg.n_subjects = 2;
  cfg.duration_s = 120.0;
  cfg.n_channels = 4;
  cfg.seizure_len_range_s = {6.0, 10.0};
  const auto a = synth_dataset(cfg);
  const auto b = synth_dataset(cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].seizures, b[i].seizures);
    EXPECT_EQ(a[i].recording.samples, b[i].recording.samples);
  }
  cfg.seed = 8;
  EXPECT_NE(synth_dataset(cfg)[0].recording.samples, a[0].recording.samples);
}

TEST(Synth, SeizureSegmentsPeakAtSpikeWaveRate) {
  for (double hz : {3.0, 2.5, 4.0}) {
    SynthConfig cfg;
    cfg.n_subjects = 3;
    cfg.duration_s = 300.0;
    cfg.n_channels = 3;
    cfg.spike_wave_hz = hz;
    for (const auto& s : synth_dataset(cfg))
      for (const auto& iv : s.seizures.intervals) {
        const auto b = static_cast<std::size_t>(std::llround(iv.onset_s * 200.0));
        const auto e = static_cast<std::size_t>(std::llround(iv.offset_s * 200.0));
        for (const auto& ch : s.recording.samples) {
          std::vector<double> seg(ch.begin() + static_cast<std::ptrdiff_t>(b), ch.begin() + static_cast<std::ptrdiff_t>(e));
          const double peak = spectral::dominant_frequency(seg, 200.0);
          EXPECT_GE(peak, hz - 0.5) << s.recording.subject_id << " at " << iv.onset_s;
          EXPECT_LE(peak, hz + 0.5) << s.recording.subject_id << " at " << iv.onset_s;
        }
      }
  }
}

TEST(Synth, SeizureTimeMatchesRequestedRanges) {
  SynthConfig cfg;
  cfg.n_subjects = 10;
  cfg.n_channels = 1;
  const auto data = synth_dataset(cfg);
  double seizure_s = 0.0, total_s = 0.0;
  for (const auto& s : data) {
    total_s += s.recording.duration_s();
    for (const auto& iv : s.seizures.intervals) seizure_s += iv.length_s();
  }
  const double mean_count = 0.5 * (cfg.seizure_count_range.first + cfg.seizure_count_range.second);
  const double mean_len = 0.5 * (cfg.seizure_len_range_s.first + cfg.seizure_len_range_s.second);
  const double expected = mean_count * mean_len / cfg.duration_s;
  EXPECT_NEAR(seizure_s / total_s, expected, 0.2 * expected);
}

TEST(Synth, TooManySeizuresForDurationIsAnError) {
  SynthConfig cfg;
  cfg.duration_s = 30.0;
  EXPECT_THROW(synth_dataset(cfg), ContractError);
  cfg = {};
  cfg.seizure_len_range_s = {8.0, 4.0};
  EXPECT_THROW(synth_dataset(cfg), ContractError);
}

// Random valid configs always produce recordings and annotation sets that
// satisfy their own invariants.
TEST(SynthProperty, OutputSatisfiesInvariants) {
  seizdet::testing::for_cases(25, 2024, [](Rng& rng, int i) {
    SynthConfig cfg;
    cfg.n_subjects = static_cast<int>(uniform_int(rng, 1, 3));
    cfg.n_channels = static_cast<int>(uniform_int(rng, 1, 20));
    const int cmin = static_cast<int>(uniform_int(rng, 0, 3));
    cfg.seizure_count_range = {cmin, cmin + static_cast<int>(uniform_int(rng, 0, 2))};
    const double lmin = uniform(rng, 1.0, 10.0);
    cfg.seizure_len_range_s = {lmin, lmin + uniform(rng, 0.0, 5.0)};
    cfg.duration_s = cfg.seizure_count_range.second * cfg.seizure_len_range_s.second +
                     (cfg.seizure_count_range.second + 1) * kMinSeizureGapS + uniform(rng, 0.0, 60.0);
    cfg.spike_wave_hz = uniform(rng, 2.0, 4.0);
    cfg.seed = rng();
    for (const auto& s : synth_dataset(cfg)) {
      EXPECT_NO_THROW(validate(s.recording)) << "case " << i;
      EXPECT_NO_THROW(validate(s.seizures, s.recording.duration_s())) << "case " << i;
      EXPECT_EQ(s.recording.fs_hz, 200.0);
      EXPECT_EQ(static_cast<int>(s.recording.n_channels()), cfg.n_channels);
      const int n = static_cast<int>(s.seizures.size());
      EXPECT_GE(n, cfg.seizure_count_range.first);
      EXPECT_LE(n, cfg.seizure_count_range.second);
      double prev_end = 0.0;
      for (const auto& iv : s.seizures.intervals) {
        EXPECT_GE(iv.length_s(), cfg.seizure_len_range_s.first - 0.005);
        EXPECT_LE(iv.length_s(), cfg.seizure_len_range_s.second + 0.005);
        EXPECT_GE(iv.onset_s - prev_end, kMinSeizureGapS - 1e-9);
        prev_end = iv.offset_s;
      }
      EXPECT_GE(s.recording.duration_s() - prev_end, kMinSeizureGapS - 1e-9);
    }
  });
}
