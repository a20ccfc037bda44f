#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <list>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "seizdet/eeg_core.hpp"
#include "seizdet/error.hpp"
#include "seizdet/preprocess.hpp"
#include "seizdet/spectral.hpp"
#include "seizdet/text_io.hpp"

namespace seizdet {

// ---------------------------------------------------------------------------
// Band-power features

struct Band {
  int low_hz, high_hz;  // bins f with low <= f < high
};

inline constexpr std::array<Band, 8> kBands{{{1, 3}, {3, 6}, {6, 9}, {9, 12}, {12, 15}, {15, 18}, {18, 21}, {21, 24}}};
inline constexpr std::size_t kSubWindows = 5;
inline constexpr std::size_t kSubWindowSamples = 200;  // 1 s at 200 Hz, so bin k is k Hz

inline std::size_t feature_length(std::size_t n_channels) { return kBands.size() * kSubWindows * n_channels; }

// Index of (sub-window, channel, band) in the flattened feature vector.
inline std::size_t feature_index(std::size_t window, std::size_t channel, std::size_t band, std::size_t n_channels) {
  return (window * n_channels + channel) * kBands.size() + band;
}

// Eight band powers per 1 s sub-window and channel, rectangular window,
// |X_k|^2 / N summed over integer-Hz bins.
inline std::vector<double> band_power_features(const Epoch& epoch) {
  if (epoch.n_channels == 0 || epoch.data.size() != epoch.n_channels * kEpochSamples)
    throw ContractError("band_power_features: epoch must be [n_channels x 1000], got " + std::to_string(epoch.data.size()) +
                        " values for " + std::to_string(epoch.n_channels) + " channels");
  static const spectral::DftTable table(kSubWindowSamples);
  std::vector<double> out(feature_length(epoch.n_channels), 0.0);
  for (std::size_t w = 0; w < kSubWindows; ++w)
    for (std::size_t c = 0; c < epoch.n_channels; ++c) {
      const auto seg = epoch.channel(c).subspan(w * kSubWindowSamples, kSubWindowSamples);
      for (std::size_t b = 0; b < kBands.size(); ++b) {
        double p = 0.0;
        for (int k = kBands[b].low_hz; k < kBands[b].high_hz; ++k) p += table.bin_power(seg, static_cast<std::size_t>(k));
        out[feature_index(w, c, b, epoch.n_channels)] = p;
      }
    }
  return out;
}

// Per-dimension z-scoring; dimensions with no spread keep unit scale.
struct Standardizer {
  std::vector<double> mean, scale;

  static Standardizer fit(std::span<const std::vector<double>> rows) {
    if (rows.empty()) throw ContractError("standardizer: no rows to fit");
    const std::size_t d = rows.front().size();
    Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
    for (const auto& r : rows)
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
    for (auto& m : s.mean) m /= static_cast<double>(rows.size());
    std::vector<double> var(d, 0.0);
    for (const auto& r : rows)
      for (std::size_t j = 0; j < d; ++j) var[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
    for (std::size_t j = 0; j < d; ++j) {
      const double sd = std::sqrt(var[j] / static_cast<double>(rows.size()));
      if (sd > 1e-12 * std::max(1.0, std::abs(s.mean[j]))) s.scale[j] = sd;
    }
    return s;
  }

  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != mean.size())
      throw ContractError("standardizer: feature length " + std::to_string(x.size()) + ", expected " + std::to_string(mean.size()));
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / scale[j];
    return out;
  }
};

// ---------------------------------------------------------------------------
// RBF SVM

inline double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

struct SvmModel {
  double gamma{1.0};
  double C{1.0};
  double b{0.0};
  std::vector<std::vector<double>> support;
  std::vector<double> coef;       // alpha_i * y_i
  std::vector<std::size_t> index;  // training-row index of each support vector
  std::size_t iterations{0};

  std::size_t dim() const { return support.empty() ? 0 : support.front().size(); }
};

struct SmoOptions {
  double tolerance{1e-3};
  double sv_threshold{1e-8};
  std::size_t max_iterations{0};    // 0: max(10^7, 100 n)
  std::size_t cache_bytes{256u << 20};
};

namespace detail {

// Rows of Q_ij = y_i y_j K(x_i, x_j), computed on demand and kept in an LRU.
class KernelRows {
 public:
  KernelRows(std::span<const std::vector<double>> x, std::span<const int> y, double gamma, std::size_t cache_bytes)
      : x_(x), y_(y), gamma_(gamma), slots_(x.size(), lru_.end()) {
    const std::size_t row_bytes = std::max<std::size_t>(1, x.size() * sizeof(double));
    capacity_ = std::clamp<std::size_t>(cache_bytes / row_bytes, 2, std::max<std::size_t>(2, x.size()));
  }

  const std::vector<double>& row(std::size_t i) {
    if (slots_[i] != lru_.end()) {
      lru_.splice(lru_.begin(), lru_, slots_[i]);
      return lru_.front().values;
    }
    if (lru_.size() >= capacity_) {
      slots_[lru_.back().index] = lru_.end();
      lru_.pop_back();
    }
    Entry e{i, std::vector<double>(x_.size())};
    for (std::size_t j = 0; j < x_.size(); ++j) e.values[j] = y_[i] * y_[j] * rbf_kernel(x_[i], x_[j], gamma_);
    lru_.push_front(std::move(e));
    slots_[i] = lru_.begin();
    return lru_.front().values;
  }

 private:
  struct Entry {
    std::size_t index;
    std::vector<double> values;
  };
  std::span<const std::vector<double>> x_;
  std::span<const int> y_;
  double gamma_;
  std::list<Entry> lru_;
  std::vector<std::list<Entry>::iterator> slots_;
  std::size_t capacity_{2};
};

}  // namespace detail

// Soft-margin C-SVC dual solved by SMO with second-order working-set
// selection. Labels must be -1 or +1 with both present.
inline SvmModel svm_train(std::span<const std::vector<double>> x, std::span<const int> y, double C, double gamma,
                          const SmoOptions& opt = {}) {
  const std::size_t n = x.size();
  if (n != y.size()) throw ContractError("svm_train: " + std::to_string(n) + " rows but " + std::to_string(y.size()) + " labels");
  if (!(C > 0.0) || !(gamma > 0.0)) throw ContractError("svm_train: C and gamma must be > 0");
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] != 1 && y[i] != -1) throw ContractError("svm_train: labels must be -1 or +1");
    (y[i] > 0 ? pos : neg) = true;
    if (x[i].size() != x[0].size()) throw ContractError("svm_train: ragged feature rows");
  }
  if (!pos || !neg) throw ContractError("svm_train: training set must contain both classes");

  constexpr double tau = 1e-12;
  detail::KernelRows Q(x, y, gamma, opt.cache_bytes);
  std::vector<double> alpha(n, 0.0), G(n, -1.0), QD(n, 1.0);  // K(x, x) = 1 for RBF
  auto upper = [&](std::size_t t) { return alpha[t] >= C; };
  auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };
  const std::size_t max_iter = opt.max_iterations ? opt.max_iterations : std::max<std::size_t>(10'000'000, 100 * n);

  std::size_t iter = 0;
  for (; iter < max_iter; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity(), gmax2 = -std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1 ? !upper(t) : !lower(t)) {
        const double v = -y[t] * G[t];
        if (v > gmax) gmax = v, i = t;
      }
    }
    if (i == n) break;
    const auto& Qi = Q.row(i);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1 ? lower(t) : upper(t)) continue;
      const double v = y[t] * G[t];
      gmax2 = std::max(gmax2, v);
      const double diff = gmax + v;
      if (diff > 0.0) {
        const double quad = std::max(QD[i] + QD[t] - 2.0 * y[i] * y[t] * Qi[t], tau);
        const double obj = -diff * diff / quad;
        if (obj < best) best = obj, j = t;
      }
    }
    if (gmax + gmax2 < opt.tolerance || j == n) break;

    const auto& Qj = Q.row(j);
    const double Qij = Qi[j];
    const double ai = alpha[i], aj = alpha[j];
    if (y[i] != y[j]) {
      const double quad = std::max(QD[i] + QD[j] + 2.0 * Qij, tau);
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = ai - aj;
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) alpha[j] = 0.0, alpha[i] = diff;
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0, alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) alpha[i] = C, alpha[j] = C - diff;
      } else if (alpha[j] > C) {
        alpha[j] = C, alpha[i] = C + diff;
      }
    } else {
      const double quad = std::max(QD[i] + QD[j] - 2.0 * Qij, tau);
      const double delta = (G[i] - G[j]) / quad;
      const double sum = ai + aj;
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) alpha[i] = C, alpha[j] = sum - C;
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0, alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) alpha[j] = C, alpha[i] = sum - C;
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0, alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - ai, daj = alpha[j] - aj;
    // Qi may have been evicted by Q.row(j) only if capacity were 1; it is >= 2.
    for (std::size_t t = 0; t < n; ++t) G[t] += Qi[t] * dai + Qj[t] * daj;
  }

  // Bias from free vectors, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (upper(t)) {
      if (y[t] == -1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (y[t] == 1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;

  SvmModel m;
  m.gamma = gamma;
  m.C = C;
  m.b = -rho;
  m.iterations = iter;
  for (std::size_t t = 0; t < n; ++t)
    if (alpha[t] > opt.sv_threshold) {
      m.support.push_back(x[t]);
      m.coef.push_back(alpha[t] * y[t]);
      m.index.push_back(t);
    }
  return m;
}

inline double svm_decision(const SvmModel& m, std::span<const double> x) {
  if (!m.support.empty() && x.size() != m.dim())
    throw ContractError("svm_predict: feature length " + std::to_string(x.size()) + ", model expects " + std::to_string(m.dim()));
  double s = m.b;
  for (std::size_t i = 0; i < m.support.size(); ++i) s += m.coef[i] * rbf_kernel(m.support[i], x, m.gamma);
  return s;
}

struct SvmPrediction {
  double score;
  int label;
};

// Ties go to -1 (interictal).
inline SvmPrediction svm_predict(const SvmModel& m, std::span<const double> x) {
  const double s = svm_decision(m, x);
  return {s, s > 0.0 ? 1 : -1};
}

// Text form: `svm gamma=.. C=.. b=.. dim=.. n_sv=..`, then one
// `coef v1 .. vd` line per support vector.
inline void write_svm(const SvmModel& m, std::ostream& out) {
  out << "svm gamma=" << text::format_exact(m.gamma) << " C=" << text::format_exact(m.C) << " b=" << text::format_exact(m.b)
      << " dim=" << m.dim() << " n_sv=" << m.support.size() << '\n';
  for (std::size_t i = 0; i < m.support.size(); ++i) {
    out << text::format_exact(m.coef[i]);
    for (double v : m.support[i]) out << ' ' << text::format_exact(v);
    out << '\n';
  }
}

namespace detail {

inline std::map<std::string, std::string, std::less<>> header_fields(std::string_view line, std::string_view tag,
                                                                      const std::string& source, std::size_t line_no) {
  std::istringstream ss{std::string(line)};
  std::string word;
  if (!(ss >> word) || word != tag) throw IngestError(source, line_no, "expected '" + std::string(tag) + "' header");
  std::map<std::string, std::string, std::less<>> out;
  while (ss >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) throw IngestError(source, line_no, "malformed field '" + word + "'");
    out[word.substr(0, eq)] = word.substr(eq + 1);
  }
  return out;
}

inline double field_number(const std::map<std::string, std::string, std::less<>>& f, std::string_view key,
                           const std::string& source, std::size_t line_no) {
  auto it = f.find(key);
  if (it == f.end()) throw IngestError(source, line_no, "missing field '" + std::string(key) + "'");
  auto v = text::parse_double(it->second);
  if (!v) throw IngestError(source, line_no, "field '" + std::string(key) + "' is not a number");
  return *v;
}

inline std::vector<double> number_row(std::string_view line, const std::string& source, std::size_t line_no) {
  std::vector<double> out;
  std::istringstream ss{std::string(line)};
  std::string tok;
  while (ss >> tok) {
    auto v = text::parse_double(tok);
    if (!v) throw IngestError(source, line_no, "non-numeric value '" + tok + "'");
    out.push_back(*v);
  }
  return out;
}

}  // namespace detail

inline SvmModel read_svm(std::istream& in, const std::string& source, std::size_t& line_no) {
  std::string line;
  if (!std::getline(in, line)) throw IngestError(source, line_no + 1, "missing svm header");
  ++line_no;
  const auto f = detail::header_fields(line, "svm", source, line_no);
  SvmModel m;
  m.gamma = detail::field_number(f, "gamma", source, line_no);
  m.C = detail::field_number(f, "C", source, line_no);
  m.b = detail::field_number(f, "b", source, line_no);
  const auto dim = static_cast<std::size_t>(detail::field_number(f, "dim", source, line_no));
  const auto n_sv = static_cast<std::size_t>(detail::field_number(f, "n_sv", source, line_no));
  if (!(m.gamma > 0.0) || !(m.C > 0.0)) throw IngestError(source, line_no, "gamma and C must be > 0");
  for (std::size_t i = 0; i < n_sv; ++i) {
    if (!std::getline(in, line)) throw IngestError(source, line_no + 1, "expected " + std::to_string(n_sv) + " support vectors");
    ++line_no;
    auto row = detail::number_row(line, source, line_no);
    if (row.size() != dim + 1)
      throw IngestError(source, line_no, "support vector has " + std::to_string(row.size() - 1) + " values, expected " + std::to_string(dim));
    m.coef.push_back(row.front());
    m.support.emplace_back(row.begin() + 1, row.end());
    m.index.push_back(i);
  }
  return m;
}

// ---------------------------------------------------------------------------
// BPsvm: features + scaler + SVM

struct BpsvmConfig {
  double C{1.0};
  std::optional<double> gamma;  // default 1 / (d * Var(scaled features))
  SmoOptions smo{};
};

struct BpsvmModel {
  std::vector<std::string> channels;
  Standardizer scaler;
  SvmModel svm;
};

inline std::vector<std::vector<double>> epoch_features(std::span<const Epoch> epochs) {
  std::vector<std::vector<double>> out;
  out.reserve(epochs.size());
  for (const auto& e : epochs) out.push_back(band_power_features(e));
  return out;
}

inline BpsvmModel train_bpsvm(std::span<const Epoch> epochs, const BpsvmConfig& cfg, std::vector<std::string> channels = {}) {
  if (epochs.empty()) throw ContractError("bpsvm: no training epochs");
  const auto raw = epoch_features(epochs);
  BpsvmModel model;
  model.channels = std::move(channels);
  model.scaler = Standardizer::fit(raw);
  std::vector<std::vector<double>> x;
  x.reserve(raw.size());
  for (const auto& r : raw) x.push_back(model.scaler.apply(r));
  std::vector<int> y;
  for (const auto& e : epochs) y.push_back(e.ictal() ? 1 : -1);

  double gamma = cfg.gamma.value_or(0.0);
  if (!cfg.gamma) {
    double s = 0.0, ss = 0.0;
    const double count = static_cast<double>(x.size() * x.front().size());
    for (const auto& r : x)
      for (double v : r) s += v;
    const double mean = s / count;
    for (const auto& r : x)
      for (double v : r) ss += (v - mean) * (v - mean);
    const double var = ss / count;
    gamma = 1.0 / (static_cast<double>(x.front().size()) * (var > 0.0 ? var : 1.0));
  }
  model.svm = svm_train(x, y, cfg.C, gamma, cfg.smo);
  return model;
}

// Decision score per epoch; flagged as ictal when the score is > 0.
inline std::vector<double> bpsvm_scores(const BpsvmModel& model, std::span<const Epoch> epochs) {
  std::vector<double> out;
  out.reserve(epochs.size());
  for (const auto& e : epochs) out.push_back(svm_decision(model.svm, model.scaler.apply(band_power_features(e))));
  return out;
}

inline void save_bpsvm(const BpsvmModel& m, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  out << "bpsvm dim=" << m.scaler.mean.size();
  if (!m.channels.empty()) out << " channels=" << text::join(m.channels, "|");
  out << '\n';
  auto row = [&](const char* tag, const std::vector<double>& v) {
    out << tag;
    for (double x : v) out << ' ' << text::format_exact(x);
    out << '\n';
  };
  row("mean", m.scaler.mean);
  row("scale", m.scaler.scale);
  write_svm(m.svm, out);
  if (!out) throw Error("bpsvm: write failed for " + path.string());
}

inline BpsvmModel load_bpsvm(const std::filesystem::path& path) {
  auto in = detail::open_for_read(path);
  const std::string source = path.string();
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw IngestError(source, 1, "empty model file");
  const auto f = detail::header_fields(line, "bpsvm", source, 1);
  const auto dim = static_cast<std::size_t>(detail::field_number(f, "dim", source, 1));
  BpsvmModel m;
  if (auto it = f.find("channels"); it != f.end())
    for (auto name : text::split(it->second, '|')) m.channels.emplace_back(name);
  auto tagged = [&](std::string_view tag) {
    if (!std::getline(in, line)) throw IngestError(source, line_no + 1, "missing '" + std::string(tag) + "' row");
    ++line_no;
    if (!line.starts_with(tag)) throw IngestError(source, line_no, "expected '" + std::string(tag) + "' row");
    auto v = detail::number_row(std::string_view(line).substr(tag.size()), source, line_no);
    if (v.size() != dim) throw IngestError(source, line_no, "expected " + std::to_string(dim) + " values");
    return v;
  };
  m.scaler.mean = tagged("mean");
  m.scaler.scale = tagged("scale");
  m.svm = read_svm(in, source, line_no);
  if (!m.svm.support.empty() && m.svm.dim() != dim) throw IngestError(source, line_no, "support vector length does not match dim");
  if (!m.channels.empty() && feature_length(m.channels.size()) != dim)
    throw IngestError(source, 1, "channel list does not match feature length");
  return m;
}

}  // namespace seizdet
