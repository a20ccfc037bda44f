#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seizdet/bpsvm.hpp"
#include "seizdet/eeg_core.hpp"
#include "seizdet/error.hpp"
#include "seizdet/parallel.hpp"
#include "seizdet/preprocess.hpp"
#include "seizdet/rng.hpp"
#include "seizdet/seiznet.hpp"
#include "seizdet/text_io.hpp"

namespace seizdet {

// ---------------------------------------------------------------------------
// Event scoring

struct EpochPrediction {
  double start_s{0.0};
  double end_s{kEpochLenS};
  bool flagged{false};
};

struct EventScore {
  int n_seizures{0};
  int n_detected{0};
  int false_alarm_events{0};
  std::vector<double> latencies_s;
  double recording_hours{0.0};

  double mean_latency_s() const {
    if (latencies_s.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double l : latencies_s) s += l;
    return s / static_cast<double>(latencies_s.size());
  }
  friend bool operator==(const EventScore&, const EventScore&) = default;
};

inline std::vector<EpochPrediction> to_predictions(std::span<const Epoch> epochs, std::span<const double> scores, double threshold) {
  if (epochs.size() != scores.size()) throw ContractError("to_predictions: epoch and score counts differ");
  std::vector<EpochPrediction> out;
  out.reserve(epochs.size());
  for (std::size_t i = 0; i < epochs.size(); ++i) out.push_back({epochs[i].start_s, epochs[i].start_s + kEpochLenS, scores[i] > threshold});
  return out;
}

// A seizure is caught when any flagged epoch overlaps it; its latency runs to
// the end of the first such epoch. Flagged epochs that overlap no seizure are
// grouped into maximal consecutive runs, one false alarm per run.
inline EventScore score_events(std::span<const EpochPrediction> preds, const AnnotationSet& ann, double duration_s) {
  constexpr double tol = 1e-6;
  if (!(duration_s > 0.0)) throw ContractError("score_events: duration must be > 0");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    if (std::abs(p.end_s - p.start_s - kEpochLenS) > tol)
      throw ContractError("score_events: prediction " + std::to_string(i) + " is not 5 s long");
    if (i > 0 && std::abs(p.start_s - preds[i - 1].end_s) > tol)
      throw ContractError("score_events: predictions are not a sorted contiguous tiling at index " + std::to_string(i));
  }
  auto overlaps = [](const EpochPrediction& p, const SeizureInterval& s) { return p.start_s < s.offset_s && p.end_s > s.onset_s; };

  EventScore score;
  score.n_seizures = static_cast<int>(ann.intervals.size());
  score.recording_hours = duration_s / 3600.0;
  for (const auto& s : ann.intervals) {
    for (const auto& p : preds)
      if (p.flagged && overlaps(p, s)) {
        ++score.n_detected;
        score.latencies_s.push_back(p.end_s - s.onset_s);
        break;
      }
  }
  bool in_run = false;
  for (const auto& p : preds) {
    const bool seizure = std::any_of(ann.intervals.begin(), ann.intervals.end(), [&](const auto& s) { return overlaps(p, s); });
    const bool false_alarm = p.flagged && !seizure;
    if (false_alarm && !in_run) ++score.false_alarm_events;
    in_run = false_alarm;
  }
  return score;
}

// Alarm events for deployment: maximal runs of consecutive flagged epochs,
// regardless of annotations.
struct AlarmEvent {
  double start_s{0.0};
  double end_s{0.0};
  std::size_t n_epochs{0};
};

inline std::vector<AlarmEvent> alarm_events(std::span<const EpochPrediction> preds) {
  std::vector<AlarmEvent> out;
  bool in_run = false;
  for (const auto& p : preds) {
    if (p.flagged && in_run) {
      out.back().end_s = p.end_s;
      ++out.back().n_epochs;
    } else if (p.flagged) {
      out.push_back({p.start_s, p.end_s, 1});
    }
    in_run = p.flagged;
  }
  return out;
}

inline void write_alarms_csv(std::span<const AlarmEvent> alarms, std::ostream& out) {
  out << "event,start_s,end_s,n_epochs\n";
  for (std::size_t i = 0; i < alarms.size(); ++i)
    out << i + 1 << ',' << text::format_exact(alarms[i].start_s) << ',' << text::format_exact(alarms[i].end_s) << ','
        << alarms[i].n_epochs << '\n';
}

// ---------------------------------------------------------------------------
// Aggregation

struct SubjectScore {
  std::string subject_id;
  EventScore score;
  friend bool operator==(const SubjectScore&, const SubjectScore&) = default;
};

// Totals are recomputed from the per-subject scores on every call.
struct RunResult {
  std::vector<SubjectScore> subjects;

  int seizures() const {
    int n = 0;
    for (const auto& s : subjects) n += s.score.n_seizures;
    return n;
  }
  int detected() const {
    int n = 0;
    for (const auto& s : subjects) n += s.score.n_detected;
    return n;
  }
  int false_alarms() const {
    int n = 0;
    for (const auto& s : subjects) n += s.score.false_alarm_events;
    return n;
  }
  double hours() const {
    double h = 0.0;
    for (const auto& s : subjects) h += s.score.recording_hours;
    return h;
  }
  double sensitivity_pct() const { return 100.0 * detected() / seizures(); }
  double far_per_hour() const { return false_alarms() / hours(); }
  // Mean over every detected seizure, not a mean of subject means.
  double mean_latency_s() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& sub : subjects)
      for (double l : sub.score.latencies_s) s += l, ++n;
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
  }
  friend bool operator==(const RunResult&, const RunResult&) = default;
};

inline RunResult aggregate(std::vector<SubjectScore> scores) {
  if (scores.empty()) throw ContractError("aggregate: no subject scores");
  RunResult r{std::move(scores)};
  if (r.seizures() == 0) throw ContractError("aggregate: no seizures across subjects, sensitivity is undefined");
  if (!(r.hours() > 0.0)) throw ContractError("aggregate: total recording time is zero");
  return r;
}

// Printed precision of the summary table. Sensitivity is cut, not rounded, to
// one decimal (104/120 = 86.67 prints as 86.6); rates round to two decimals.
inline std::string format_sensitivity(double pct) {
  return text::format_fixed(std::floor(pct * 10.0 + 1e-7) / 10.0, 1);
}
inline std::string format_far(double per_hour) { return text::format_fixed(per_hour, 2); }
inline std::string format_latency(double s) { return std::isnan(s) ? "NA" : text::format_fixed(s, 2); }

// Per subject, the (detected, false alarms) pair seen in most repeats. Ties
// prefer fewer false alarms, then fewer detections. Latencies come from the
// first repeat that produced the winning pair.
inline std::vector<SubjectScore> mode_of_runs(const std::vector<std::vector<SubjectScore>>& runs) {
  if (runs.empty()) throw ContractError("mode_of_runs: no runs");
  const std::size_t n_subjects = runs.front().size();
  for (const auto& r : runs)
    if (r.size() != n_subjects) throw ContractError("mode_of_runs: runs cover different subject sets");
  std::vector<SubjectScore> out;
  for (std::size_t s = 0; s < n_subjects; ++s) {
    std::map<std::pair<int, int>, int> counts;  // (false alarms, detected) -> repeats
    for (const auto& r : runs) {
      if (r[s].subject_id != runs.front()[s].subject_id) throw ContractError("mode_of_runs: subject order differs between runs");
      ++counts[{r[s].score.false_alarm_events, r[s].score.n_detected}];
    }
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
      if (it->second > best->second) best = it;  // map order already encodes the tie-break
    for (const auto& r : runs)
      if (r[s].score.false_alarm_events == best->first.first && r[s].score.n_detected == best->first.second) {
        out.push_back(r[s]);
        break;
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Leave-one-subject-out

enum class Method { seiznet, bpsvm };

inline const char* method_name(Method m) { return m == Method::seiznet ? "seiznet" : "bpsvm"; }

inline Method parse_method(std::string_view s) {
  if (s == "seiznet") return Method::seiznet;
  if (s == "bpsvm") return Method::bpsvm;
  throw ContractError("unknown method '" + std::string(s) + "' (expected seiznet or bpsvm)");
}

struct LosoConfig {
  Method method{Method::seiznet};
  std::vector<std::string> channels;  // empty: all channels of the first subject
  TrainConfig train{};
  BpsvmConfig svm{};
  std::uint64_t seed{1};
  unsigned threads{0};  // 0: hardware concurrency
  bool keep_models{false};
};

struct FoldAudit {
  std::string held_out;
  std::vector<std::string> train_subjects;  // distinct subject ids seen in training epochs
  std::size_t train_epochs{0};
  std::size_t train_ictal{0};
  double final_train_loss{std::numeric_limits<double>::quiet_NaN()};
  double final_train_accuracy{std::numeric_limits<double>::quiet_NaN()};
};

struct LosoRun {
  RunResult result;
  std::vector<FoldAudit> audit;
  std::vector<std::vector<EpochPrediction>> predictions;  // per held-out subject
  std::vector<SeizNet<float>> models;                     // seiznet with keep_models only
};

struct PreparedSubject {
  std::string subject_id;
  double duration_s{0.0};
  AnnotationSet seizures;
  std::vector<Epoch> train_epochs;
  std::vector<Epoch> eval_epochs;
};

inline WindowingPolicy training_policy(Method m) {
  WindowingPolicy p{.mode = WindowMode::train};
  if (m == Method::bpsvm) p.ictal_stride_s = p.interictal_stride_s;  // no ictal augmentation
  return p;
}

inline std::vector<std::string> resolve_channels(const std::vector<SubjectData>& data, std::vector<std::string> channels) {
  if (data.empty()) throw ContractError("dataset is empty");
  return channels.empty() ? data.front().recording.channel_names : channels;
}

inline std::vector<PreparedSubject> prepare_subjects(const std::vector<SubjectData>& data, const std::vector<std::string>& channels,
                                                     Method method) {
  std::vector<PreparedSubject> out;
  for (const auto& s : data) {
    const auto rec = prepare_recording(s.recording, channels);
    PreparedSubject p;
    p.subject_id = rec.subject_id;
    p.duration_s = rec.duration_s();
    p.seizures = s.seizures;
    p.train_epochs = extract_epochs(rec, s.seizures, training_policy(method));
    p.eval_epochs = extract_epochs(rec, s.seizures, {.mode = WindowMode::eval});
    out.push_back(std::move(p));
  }
  return out;
}

// One LOSO pass over already prepared subjects. Fold f trains on every subject
// but f and scores f's eval tiling. Folds may run in parallel; each writes its
// own slot, so the result does not depend on scheduling.
inline LosoRun loso_run(const std::vector<PreparedSubject>& subjects, const std::vector<std::string>& channels, const LosoConfig& cfg) {
  if (subjects.size() < 2) throw ContractError("loso_run: needs at least 2 subjects");
  const std::size_t n = subjects.size();
  std::vector<SubjectScore> scores(n);
  std::vector<FoldAudit> audit(n);
  std::vector<std::vector<EpochPrediction>> preds(n);
  std::vector<std::optional<SeizNet<float>>> models(n);

  parallel_for(n, cfg.threads ? cfg.threads : default_threads(), [&](std::size_t f) {
    const auto& held = subjects[f];
    std::vector<Epoch> train_set;
    for (std::size_t s = 0; s < n; ++s)
      if (s != f) train_set.insert(train_set.end(), subjects[s].train_epochs.begin(), subjects[s].train_epochs.end());

    FoldAudit a;
    a.held_out = held.subject_id;
    a.train_epochs = train_set.size();
    for (const auto& e : train_set) {
      a.train_ictal += e.ictal() ? 1 : 0;
      if (std::find(a.train_subjects.begin(), a.train_subjects.end(), e.subject_id) == a.train_subjects.end())
        a.train_subjects.push_back(e.subject_id);
    }
    if (std::find(a.train_subjects.begin(), a.train_subjects.end(), held.subject_id) != a.train_subjects.end())
      throw ContractError("loso_run: held-out subject " + held.subject_id + " leaked into its training fold");
    if (a.train_ictal == 0) throw ContractError("loso_run: fold holding out " + held.subject_id + " has no ictal training epochs");

    std::vector<double> scores_f;
    double threshold = 0.0;
    if (cfg.method == Method::seiznet) {
      SeizNet<float> model(channels.size(), derive_seed(cfg.seed, 2 * f), channels);
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(cfg.seed, 2 * f + 1);
      const auto hist = train(model, std::span<const Epoch>(train_set), tc);
      a.final_train_loss = hist.loss.back();
      a.final_train_accuracy = hist.accuracy.back();
      scores_f = predict_batch(model, std::span<const Epoch>(held.eval_epochs));
      threshold = kDecisionThreshold;
      if (cfg.keep_models) models[f].emplace(std::move(model));
    } else {
      const auto model = train_bpsvm(train_set, cfg.svm, channels);
      scores_f = bpsvm_scores(model, held.eval_epochs);
    }
    preds[f] = to_predictions(held.eval_epochs, scores_f, threshold);
    scores[f] = {held.subject_id, score_events(preds[f], held.seizures, held.duration_s)};
    audit[f] = std::move(a);
  });

  LosoRun run{aggregate(std::move(scores)), std::move(audit), std::move(preds), {}};
  for (auto& m : models)
    if (m) run.models.push_back(std::move(*m));
  return run;
}

inline LosoRun loso_run(const std::vector<SubjectData>& data, const LosoConfig& cfg) {
  const auto channels = resolve_channels(data, cfg.channels);
  return loso_run(prepare_subjects(data, channels, cfg.method), channels, cfg);
}

struct Evaluation {
  Method method{Method::seiznet};
  std::vector<LosoRun> runs;
  RunResult mode;
};

// `repeats` LOSO passes with seeds derived from cfg.seed, reduced with
// mode_of_runs. BPsvm is deterministic, so it always runs once.
inline Evaluation evaluate(const std::vector<SubjectData>& data, const LosoConfig& cfg, int repeats) {
  if (repeats < 1) throw ContractError("evaluate: repeats must be >= 1");
  if (cfg.method == Method::bpsvm) repeats = 1;
  const auto channels = resolve_channels(data, cfg.channels);
  const auto subjects = prepare_subjects(data, channels, cfg.method);
  Evaluation ev;
  ev.method = cfg.method;
  std::vector<std::vector<SubjectScore>> per_run;
  for (int r = 0; r < repeats; ++r) {
    LosoConfig c = cfg;
    c.seed = derive_seed(cfg.seed, 0x5245504eULL + static_cast<std::uint64_t>(r));  // "REPN"
    c.keep_models = cfg.keep_models && r == 0;
    ev.runs.push_back(loso_run(subjects, channels, c));
    per_run.push_back(ev.runs.back().result.subjects);
  }
  ev.mode = aggregate(mode_of_runs(per_run));
  return ev;
}

// ---------------------------------------------------------------------------
// Reports

inline constexpr const char* kSubjectCsvHeader = "subject,n_seizures,n_detected,false_alarms,mean_latency_s,hours";
inline constexpr const char* kSummaryCsvHeader =
    "method,runs,seizures_detected,sensitivity_pct,false_alarms,far_fp_per_h,mean_latency_s";

inline void write_subject_csv(const RunResult& r, std::ostream& out) {
  out << kSubjectCsvHeader << '\n';
  for (const auto& s : r.subjects) {
    const double lat = s.score.mean_latency_s();
    out << s.subject_id << ',' << s.score.n_seizures << ',' << s.score.n_detected << ',' << s.score.false_alarm_events << ','
        << (std::isnan(lat) ? std::string("NA") : text::format_exact(lat)) << ',' << text::format_exact(s.score.recording_hours) << '\n';
  }
}

inline void write_summary_csv(const Evaluation& ev, std::ostream& out) {
  const auto& r = ev.mode;
  out << kSummaryCsvHeader << '\n'
      << method_name(ev.method) << ',' << ev.runs.size() << ',' << r.detected() << '/' << r.seizures() << ','
      << format_sensitivity(r.sensitivity_pct()) << ',' << r.false_alarms() << ',' << format_far(r.far_per_hour()) << ','
      << format_latency(r.mean_latency_s()) << '\n';
}

// One row per repeat, so the mode can be checked against the raw runs.
inline void write_runs_csv(const Evaluation& ev, std::ostream& out) {
  out << "run,subject,n_detected,false_alarms\n";
  for (std::size_t r = 0; r < ev.runs.size(); ++r)
    for (const auto& s : ev.runs[r].result.subjects)
      out << r + 1 << ',' << s.subject_id << ',' << s.score.n_detected << ',' << s.score.false_alarm_events << '\n';
}

inline void write_table(const Evaluation& ev, std::ostream& out) {
  const auto& r = ev.mode;
  out << "method: " << method_name(ev.method);
  if (ev.runs.size() > 1) out << " (mode of " << ev.runs.size() << " runs)";
  out << '\n';
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %9s %9s %13s %15s\n", "subject", "seizures", "detected", "false alarms", "latency (s)");
  out << line;
  for (const auto& s : r.subjects) {
    std::snprintf(line, sizeof line, "%-8s %9d %9d %13d %15s\n", s.subject_id.c_str(), s.score.n_seizures, s.score.n_detected,
                  s.score.false_alarm_events, format_latency(s.score.mean_latency_s()).c_str());
    out << line;
  }
  out << "Seizure detected   " << r.detected() << '/' << r.seizures() << '\n'
      << "Sensitivity (%)    " << format_sensitivity(r.sensitivity_pct()) << '\n'
      << "False alarms       " << r.false_alarms() << '\n'
      << "FAR (fp/h)         " << format_far(r.far_per_hour()) << '\n'
      << "Mean latency (s)   " << format_latency(r.mean_latency_s()) << '\n';
}

inline void save_reports(const Evaluation& ev, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string m = method_name(ev.method);
  auto write = [&](const std::string& name, auto&& fn) {
    auto out = detail::open_for_write(dir / name);
    fn(out);
    if (!out) throw Error("write failed for " + (dir / name).string());
  };
  write(m + "_subjects.csv", [&](std::ostream& o) { write_subject_csv(ev.mode, o); });
  write(m + "_summary.csv", [&](std::ostream& o) { write_summary_csv(ev, o); });
  write(m + "_runs.csv", [&](std::ostream& o) { write_runs_csv(ev, o); });
}

}  // namespace seizdet
