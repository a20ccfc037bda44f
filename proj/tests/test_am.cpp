#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "seizdet/am_decode.hpp"
#include "seizdet/seiznet.hpp"
#include "seizdet/synth.hpp"
#include "support.hpp"

using namespace seizdet;

namespace {

AmPattern constant_pattern(std::size_t C, double v) { return {C, std::vector<double>(C * kEpochSamples, v)}; }

// Drawn like the optimiser's starting point.
AmPattern random_start(std::size_t C, Rng& rng) {
  AmPattern p{C, std::vector<double>(C * kEpochSamples)};
  for (auto& v : p.values) v = uniform(rng, -1.0, 1.0);
  return p;
}

const SeizNet<float>& shared_net() {
  static const auto net = build_seiznet<float>(2, 42, {"C3", "C4"});
  return net;
}

}  // namespace

TEST(TotalVariation, ClosedForms) {
  EXPECT_EQ(total_variation(constant_pattern(2, 3.5)), 0.0);
  auto step = constant_pattern(2, 0.0);
  for (std::size_t t = 500; t < kEpochSamples; ++t) step.values[kEpochSamples + t] = 1.0;
  EXPECT_EQ(total_variation(step), 1.0);
  auto alt = constant_pattern(3, 0.0);
  for (std::size_t i = 0; i < alt.values.size(); ++i) alt.values[i] = (i % 2 == 0) ? 1.0 : -1.0;
  EXPECT_EQ(total_variation(alt), 3 * 2.0 * 999);
}

TEST(LpNorm, ClosedForms) {
  const std::vector<double> zero(1000, 0.0);
  EXPECT_EQ(lp_norm(zero, 6.0), 0.0);
  std::vector<double> hot(1000, 0.0);
  hot[123] = 2.0;
  EXPECT_NEAR(lp_norm(hot, 6.0), 2.0, 1e-12);
  const std::vector<double> ones(1000, 1.0);
  EXPECT_NEAR(lp_norm(ones, 2.0), std::sqrt(1000.0), 1e-10);
  std::vector<double> neg(4, -1.0);
  EXPECT_NEAR(lp_norm(neg, 1.0), 4.0, 1e-12);
}

TEST(DominantFrequency, ToneNoiseAndSpikeWave) {
  std::vector<double> x(1000);
  for (std::size_t t = 0; t < x.size(); ++t) x[t] = std::sin(2.0 * std::numbers::pi * 3.0 * static_cast<double>(t) / 200.0);
  EXPECT_NEAR(spectral::dominant_frequency(x, 200.0), 3.0, 0.2);

  Rng rng = make_rng(1);
  for (auto& v : x) v = normal01(rng);
  const double hz = spectral::dominant_frequency(x, 200.0);
  EXPECT_TRUE(std::isfinite(hz));
  EXPECT_GT(hz, 0.5);

  SynthConfig cfg;
  cfg.n_subjects = 1;
  cfg.duration_s = 120.0;
  cfg.seizure_count_range = {2, 2};
  cfg.seizure_len_range_s = {6.0, 10.0};
  cfg.seed = 3;
  const auto data = synth_dataset(cfg);
  const auto& rec = data[0].recording;
  const auto c3 = static_cast<std::size_t>(std::find(rec.channel_names.begin(), rec.channel_names.end(), "C3") - rec.channel_names.begin());
  for (const auto& iv : data[0].seizures.intervals) {
    const auto start = static_cast<std::size_t>(std::ceil(iv.onset_s * rec.fs_hz));
    const std::span<const double> seg(rec.samples[c3].data() + start, 1000);
    const double f = spectral::dominant_frequency(seg, rec.fs_hz);
    EXPECT_GE(f, 2.5);
    EXPECT_LE(f, 3.5);
  }
}

TEST(Am, BeatsOneHundredRandomInputsAtSeveralLayers) {
  const auto& net = shared_net();
  Rng rng = make_rng(8);
  for (int layer : {1, 4, kAmOutputLayer}) {
    AmConfig cfg;
    cfg.layer_index = layer;
    cfg.filter_index = 1;
    cfg.seed = 5;
    const auto r = activation_maximization(net, cfg);
    double best_random = -1e300;
    for (int i = 0; i < 100; ++i)
      best_random = std::max(best_random, am_activation(net.network(), layer, 1, random_start(2, rng)));
    EXPECT_GE(r.activation, best_random) << "layer " << layer;
    EXPECT_NEAR(am_activation(net.network(), layer, 1, r.pattern), r.activation, 1e-9 * std::max(1.0, std::abs(r.activation)));
  }
}

TEST(Am, HugeTotalVariationWeightFlattensThePattern) {
  AmConfig cfg;
  cfg.tv_weight = 1e6;
  cfg.seed = 2;
  Rng rng = make_rng(cfg.seed, 0x414d);
  AmPattern start{2, std::vector<double>(2 * kEpochSamples)};
  for (auto& v : start.values) v = uniform(rng, -1.0, 1.0);
  const auto r = activation_maximization(shared_net(), cfg);
  EXPECT_LT(total_variation(r.pattern), 1e-2 * total_variation(start));
}

TEST(Am, DeterministicForASeed) {
  AmConfig cfg;
  cfg.filter_index = 7;
  cfg.steps = 40;
  cfg.seed = 9;
  const auto a = activation_maximization(shared_net(), cfg);
  const auto b = activation_maximization(shared_net(), cfg);
  EXPECT_EQ(a.pattern.values, b.pattern.values);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.dominant_hz, b.dominant_hz);
  cfg.seed = 10;
  EXPECT_NE(activation_maximization(shared_net(), cfg).pattern.values, a.pattern.values);
}

TEST(AmProperty, ClampProgressAndMonotoneHistory) {
  seizdet::testing::for_cases(6, 61, [](Rng& rng, int i) {
    AmConfig cfg;
    cfg.layer_index = uniform_int(rng, 1, 5);
    cfg.filter_index = uniform_int(rng, 0, static_cast<int>(am_unit_count(shared_net().network(), cfg.layer_index)) - 1);
    cfg.steps = 30;
    cfg.step_size = uniform(rng, 0.05, 2.0);
    cfg.tv_weight = uniform(rng, 0.0, 50.0);
    cfg.lp_weight = uniform(rng, 0.0, 50.0);
    cfg.input_high = uniform(rng, 0.5, 3.0);
    cfg.input_low = -cfg.input_high;
    cfg.seed = rng();
    const auto r = activation_maximization(shared_net(), cfg);
    for (double v : r.pattern.values) {
      ASSERT_GE(v, cfg.input_low) << "case " << i;
      ASSERT_LE(v, cfg.input_high) << "case " << i;
    }
    ASSERT_GE(r.objective, r.initial_objective) << "case " << i;
    ASSERT_EQ(r.loss_history.size(), 30u);
    for (std::size_t s = 1; s < r.loss_history.size(); ++s) ASSERT_GE(r.loss_history[s], r.loss_history[s - 1]) << "case " << i;
    ASSERT_EQ(r.dominant_hz.size(), 2u);
  });
}

TEST(Am, UnitCountsAndBadTargets) {
  const auto& net = shared_net().network();
  EXPECT_EQ(am_unit_count(net, 1), 8u);
  EXPECT_EQ(am_unit_count(net, 2), 16u);
  EXPECT_EQ(am_unit_count(net, 3), 32u);
  EXPECT_EQ(am_unit_count(net, 4), 64u);
  EXPECT_EQ(am_unit_count(net, kAmOutputLayer), 2u);
  AmConfig cfg;
  cfg.filter_index = 64;
  EXPECT_THROW(activation_maximization(shared_net(), cfg), ContractError);
  cfg.filter_index = 0;
  cfg.layer_index = 6;
  EXPECT_THROW(activation_maximization(shared_net(), cfg), ContractError);
  cfg.layer_index = 4;
  cfg.lp_p = 0.5;
  EXPECT_THROW(activation_maximization(shared_net(), cfg), ContractError);
}

TEST(AmOutput, CsvAndSvg) {
  AmPattern p = constant_pattern(2, 0.0);
  for (std::size_t t = 0; t < kEpochSamples; ++t) p.values[t] = 0.5;
  std::ostringstream csv;
  write_pattern_csv(p, csv);
  std::istringstream lines(csv.str());
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 999);
  }
  EXPECT_EQ(rows, 2);
  std::ostringstream svg;
  write_pattern_svg(p, svg, {"C3", "C4"}, "filter 0");
  EXPECT_EQ(svg.str().rfind("<svg", 0), 0u);
  EXPECT_NE(svg.str().find("C4"), std::string::npos);
  const std::vector<AmSummaryRow> rows_in{{4, 0, 1.5, 3.0}, {4, 1, -0.25, 2.8}};
  std::ostringstream sum;
  write_am_summary_csv(rows_in, sum);
  EXPECT_EQ(sum.str().substr(0, sum.str().find('\n')), "layer,filter,activation,dominant_hz");
}
