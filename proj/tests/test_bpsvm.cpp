#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "seizdet/bpsvm.hpp"
#include "seizdet/spectral.hpp"
#include "support.hpp"

using namespace seizdet;
namespace st = seizdet::testing;

namespace {

double tone(double hz, std::size_t t, double phase = 0.0) {
  return std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(t) / 200.0 + phase);
}

struct Problem {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
};

Problem random_problem(Rng& rng, std::size_t n, std::size_t d) {
  Problem p;
  const double shift = uniform(rng, 0.0, 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i % 2 == 0 ? 1 : -1;
    std::vector<double> row(d);
    for (auto& v : row) v = normal01(rng) + (label > 0 ? shift : 0.0);
    p.x.push_back(std::move(row));
    p.y.push_back(label);
  }
  return p;
}

// coef holds alpha * y, so with y in {-1, +1} alpha = |coef|.
void expect_kkt(const SvmModel& m, const Problem& p, double C, double tol, const std::string& what) {
  double balance = 0.0;
  std::vector<double> alpha(p.x.size(), 0.0);
  for (std::size_t s = 0; s < m.support.size(); ++s) {
    alpha[m.index[s]] = std::abs(m.coef[s]);
    balance += m.coef[s];
    EXPECT_EQ(m.coef[s] > 0.0 ? 1 : -1, p.y[m.index[s]]) << what;
    EXPECT_LE(std::abs(m.coef[s]), C + 1e-9) << what;
  }
  EXPECT_NEAR(balance, 0.0, 1e-6) << what;
  for (std::size_t i = 0; i < p.x.size(); ++i) {
    const double margin = p.y[i] * svm_decision(m, p.x[i]);
    if (alpha[i] == 0.0)
      EXPECT_GE(margin, 1.0 - tol) << what << " row " << i;
    else if (alpha[i] < C - 1e-9)
      EXPECT_NEAR(margin, 1.0, tol) << what << " row " << i;
    else
      EXPECT_LE(margin, 1.0 + tol) << what << " row " << i;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Features

TEST(BandPower, ConstantEpochHasNoBandPower) {
  const auto e = st::epoch_from(2, [](std::size_t, std::size_t) { return 37.5; });
  for (double v : band_power_features(e)) EXPECT_NEAR(v, 0.0, 1e-18 * 37.5 * 37.5 * 200);
}

TEST(BandPower, TenHzToneSitsInNineToTwelve) {
  const auto e = st::epoch_from(1, [](std::size_t, std::size_t t) { return tone(10.0, t); });
  const auto f = band_power_features(e);
  for (std::size_t w = 0; w < kSubWindows; ++w) {
    double total = 0.0;
    for (std::size_t b = 0; b < kBands.size(); ++b) total += f[feature_index(w, 0, b, 1)];
    EXPECT_GE(f[feature_index(w, 0, 3, 1)], 0.99 * total);
    EXPECT_NEAR(f[feature_index(w, 0, 3, 1)], 50.0, 1e-9);  // (N/2)^2 / N for a unit tone
  }
}

TEST(BandPower, BandEdgesAreLowInclusive) {
  // An integer-Hz tone at a band edge belongs to the band it starts.
  const auto e = st::epoch_from(1, [](std::size_t, std::size_t t) { return tone(12.0, t); });
  const auto f = band_power_features(e);
  EXPECT_NEAR(f[feature_index(0, 0, 3, 1)], 0.0, 1e-9);
  EXPECT_NEAR(f[feature_index(0, 0, 4, 1)], 50.0, 1e-9);
}

TEST(BandPower, LengthsAndLayout) {
  EXPECT_EQ(feature_length(2), 80u);
  EXPECT_EQ(feature_length(18), 720u);
  EXPECT_EQ(band_power_features(st::epoch_from(2, [](std::size_t, std::size_t) { return 0.0; })).size(), 80u);
  EXPECT_EQ(band_power_features(st::epoch_from(18, [](std::size_t, std::size_t) { return 0.0; })).size(), 720u);
  // Channel 1 alone carries power, only in its own slots and only in the
  // second sub-window.
  const auto e = st::epoch_from(2, [](std::size_t c, std::size_t t) { return c == 1 && t >= 200 && t < 400 ? tone(4.0, t) : 0.0; });
  const auto f = band_power_features(e);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const bool mine = i == feature_index(1, 1, 1, 2);
    if (mine)
      EXPECT_NEAR(f[i], 50.0, 1e-9);
    else
      EXPECT_NEAR(f[i], 0.0, 1e-9) << i;
  }
}

TEST(BandPower, RejectsMisshapenEpoch) {
  Epoch e;
  e.n_channels = 2;
  e.data.assign(999, 0.0);
  EXPECT_THROW(band_power_features(e), ContractError);
}

TEST(BandPowerProperty, DcOffsetInvarianceAndParsevalBound) {
  st::for_cases(40, 55, [](Rng& rng, int i) {
    const auto C = static_cast<std::size_t>(uniform_int(rng, 1, 4));
    const double offset = uniform(rng, -500.0, 500.0);
    auto e = st::epoch_from(C, [&](std::size_t, std::size_t) { return uniform(rng, -50.0, 50.0); });
    auto shifted = e;
    for (auto& v : shifted.data) v += offset;
    const auto f = band_power_features(e);
    const auto g = band_power_features(shifted);
    for (std::size_t j = 0; j < f.size(); ++j) ASSERT_LT(std::abs(f[j] - g[j]), 1e-9 * std::max(1.0, f[j])) << "case " << i;
    for (std::size_t w = 0; w < kSubWindows; ++w)
      for (std::size_t c = 0; c < C; ++c) {
        double bands = 0.0, energy = 0.0;
        for (std::size_t b = 0; b < kBands.size(); ++b) bands += f[feature_index(w, c, b, C)];
        for (double v : e.channel(c).subspan(w * kSubWindowSamples, kSubWindowSamples)) energy += v * v;
        ASSERT_LE(bands, energy * (1.0 + 1e-12)) << "case " << i;
      }
  });
}

TEST(Spectral, DominantFrequencyOfTones) {
  for (double hz : {3.0, 2.5, 17.0}) {
    std::vector<double> x(1000);
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = 5.0 + tone(hz, t, 0.3);
    EXPECT_NEAR(spectral::dominant_frequency(x), hz, 0.2);
  }
  std::vector<std::vector<double>> chans(2, std::vector<double>(1000));
  for (std::size_t t = 0; t < 1000; ++t) {
    chans[0][t] = 2.0 * tone(3.0, t);
    chans[1][t] = 1.5 * tone(20.0, t) + 1.5 * tone(3.0, t);
  }
  EXPECT_NEAR(spectral::dominant_frequency(chans[1]), 3.0, 0.2);
  EXPECT_NEAR(spectral::dominant_frequency_summed(chans), 3.0, 0.2);
}

// ---------------------------------------------------------------------------
// Kernel and SMO

TEST(Rbf, IdentityAndClosedForm) {
  const std::vector<double> a{0.3, -1.2, 4.0}, b{0.3, -1.2, 5.0};
  for (double g : {1e-3, 1.0, 50.0}) EXPECT_EQ(rbf_kernel(a, a, g), 1.0);
  EXPECT_NEAR(rbf_kernel(a, b, 1.0), 0.367879441171, 1e-9);
  EXPECT_NEAR(rbf_kernel(a, b, 2.0), std::exp(-2.0), 1e-12);
  EXPECT_EQ(rbf_kernel(a, b, 0.5), rbf_kernel(b, a, 0.5));
}

TEST(Smo, TwoPointsAreBothSupportVectorsWithMidpointZero) {
  const std::vector<std::vector<double>> x{{0.0, 0.0}, {2.0, 1.0}};
  const std::vector<int> y{-1, 1};
  const auto m = svm_train(x, y, 10.0, 0.5);
  EXPECT_EQ(m.support.size(), 2u);
  const std::vector<double> mid{1.0, 0.5};
  EXPECT_NEAR(svm_decision(m, mid), 0.0, 1e-6);
  EXPECT_EQ(svm_predict(m, x[0]).label, -1);
  EXPECT_EQ(svm_predict(m, x[1]).label, 1);
}

TEST(Smo, XorIsSeparatedByRbf) {
  const std::vector<std::vector<double>> x{{0, 0}, {1, 1}, {0, 1}, {1, 0}};
  const std::vector<int> y{-1, -1, 1, 1};
  const auto m = svm_train(x, y, 10.0, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(svm_predict(m, x[i]).label, y[i]) << i;
  Problem p{x, y};
  expect_kkt(m, p, 10.0, 1e-3, "xor");
}

TEST(Smo, RejectsDegenerateInput) {
  const std::vector<std::vector<double>> x{{0.0}, {1.0}};
  EXPECT_THROW(svm_train(x, std::vector<int>{1, 1}, 1.0, 1.0), ContractError);
  EXPECT_THROW(svm_train(x, std::vector<int>{1}, 1.0, 1.0), ContractError);
  EXPECT_THROW(svm_train(x, std::vector<int>{1, -1}, 0.0, 1.0), ContractError);
  EXPECT_THROW(svm_train(x, std::vector<int>{1, -1}, 1.0, -1.0), ContractError);
}

TEST(SmoProperty, KktHoldsOnRandomProblems) {
  st::for_cases(100, 77, [](Rng& rng, int i) {
    const auto n = static_cast<std::size_t>(uniform_int(rng, 4, 40));
    const auto d = static_cast<std::size_t>(uniform_int(rng, 1, 6));
    const auto p = random_problem(rng, n, d);
    const double C = std::pow(10.0, uniform(rng, -1.0, 2.0));
    const double gamma = std::pow(10.0, uniform(rng, -2.0, 0.5));
    const auto m = svm_train(p.x, p.y, C, gamma);
    expect_kkt(m, p, C, 2e-3, "case " + std::to_string(i));
  });
}

TEST(SmoProperty, DecisionIgnoresSupportVectorOrder) {
  st::for_cases(20, 78, [](Rng& rng, int i) {
    const auto p = random_problem(rng, 30, 3);
    const auto m = svm_train(p.x, p.y, 2.0, 0.4);
    auto r = m;
    std::vector<std::size_t> perm(m.support.size());
    for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
    shuffle(std::span<std::size_t>(perm), rng);
    for (std::size_t k = 0; k < perm.size(); ++k) {
      r.support[k] = m.support[perm[k]];
      r.coef[k] = m.coef[perm[k]];
      r.index[k] = m.index[perm[k]];
    }
    for (int q = 0; q < 10; ++q) {
      std::vector<double> x(3);
      for (auto& v : x) v = uniform(rng, -3.0, 4.0);
      ASSERT_NEAR(svm_decision(m, x), svm_decision(r, x), 1e-12) << "case " << i;
      ASSERT_EQ(svm_decision(m, x), svm_decision(m, x));
    }
  });
}

TEST(SvmFile, RoundTripIsExact) {
  Rng rng = make_rng(3);
  const auto p = random_problem(rng, 24, 4);
  const auto m = svm_train(p.x, p.y, 3.0, 0.25);
  std::stringstream io;
  write_svm(m, io);
  std::size_t line = 0;
  const auto back = read_svm(io, "mem", line);
  EXPECT_EQ(back.gamma, m.gamma);
  EXPECT_EQ(back.C, m.C);
  EXPECT_EQ(back.b, m.b);
  EXPECT_EQ(back.coef, m.coef);
  EXPECT_EQ(back.support, m.support);
  for (const auto& x : p.x) EXPECT_EQ(svm_decision(back, x), svm_decision(m, x));
}

TEST(SvmFile, TruncatedFileIsAnIngestError) {
  Rng rng = make_rng(4);
  const auto p = random_problem(rng, 10, 2);
  std::stringstream io;
  write_svm(svm_train(p.x, p.y, 1.0, 1.0), io);
  const std::string text = io.str();
  std::istringstream cut(text.substr(0, text.rfind('\n', text.size() - 2) + 1));
  std::size_t line = 0;
  EXPECT_THROW(read_svm(cut, "mem", line), IngestError);
}

// ---------------------------------------------------------------------------
// Whole detector

TEST(Bpsvm, LearnsAThreeHertzRhythmAndRoundTrips) {
  Rng rng = make_rng(9);
  std::vector<Epoch> epochs;
  for (int i = 0; i < 60; ++i) {
    const bool ictal = i % 3 == 0;
    const double phase = uniform(rng, 0.0, 6.0);
    epochs.push_back(st::epoch_from(
        2, [&](std::size_t, std::size_t t) { return (ictal ? 3.0 * tone(3.0, t, phase) : 0.0) + normal01(rng); },
        ictal ? EpochLabel::ictal : EpochLabel::interictal));
  }
  const auto model = train_bpsvm(std::span<const Epoch>(epochs), {}, {"C3", "C4"});
  EXPECT_NEAR(model.svm.gamma, 1.0 / 80.0, 1e-9);  // standardised features have unit pooled variance
  const auto scores = bpsvm_scores(model, std::span<const Epoch>(epochs));
  for (std::size_t i = 0; i < epochs.size(); ++i) EXPECT_EQ(scores[i] > 0.0, epochs[i].ictal()) << i;

  st::TempDir dir("bp");
  save_bpsvm(model, dir / "m.txt");
  const auto back = load_bpsvm(dir / "m.txt");
  EXPECT_EQ(back.channels, model.channels);
  EXPECT_EQ(bpsvm_scores(back, std::span<const Epoch>(epochs)), scores);
}
