#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "seizdet/error.hpp"
#include "seizdet/text_io.hpp"

namespace seizdet {

// Multichannel EEG time series. samples[c][t] is channel c at instant t.
struct Recording {
  std::string subject_id;
  double fs_hz{200.0};
  std::vector<std::string> channel_names;
  std::vector<std::vector<double>> samples;

  std::size_t n_channels() const { return samples.size(); }
  std::size_t n_samples() const { return samples.empty() ? 0 : samples.front().size(); }
  double duration_s() const { return static_cast<double>(n_samples()) / fs_hz; }
};

// Half-open seizure interval [onset_s, offset_s) in seconds from recording start.
struct SeizureInterval {
  double onset_s{0.0};
  double offset_s{0.0};

  double length_s() const { return offset_s - onset_s; }
  friend bool operator==(const SeizureInterval&, const SeizureInterval&) = default;
};

struct AnnotationSet {
  std::vector<SeizureInterval> intervals;

  bool empty() const { return intervals.empty(); }
  std::size_t size() const { return intervals.size(); }
  friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;
};

struct SubjectData {
  Recording recording;
  AnnotationSet seizures;
};

inline bool is_ingest_rate(double fs_hz) { return fs_hz == 200.0 || fs_hz == 500.0; }

inline void validate(const Recording& rec) {
  if (rec.channel_names.empty()) throw ContractError("recording '" + rec.subject_id + "' has no channels");
  if (rec.channel_names.size() != rec.samples.size())
    throw ContractError("recording '" + rec.subject_id + "': " + std::to_string(rec.channel_names.size()) +
                        " channel names for " + std::to_string(rec.samples.size()) + " sample rows");
  if (!(rec.fs_hz > 0.0) || !std::isfinite(rec.fs_hz))
    throw ContractError("recording '" + rec.subject_id + "': sampling rate must be positive");
  const std::size_t n = rec.n_samples();
  if (n == 0) throw ContractError("recording '" + rec.subject_id + "' has no samples");
  for (std::size_t c = 0; c < rec.samples.size(); ++c) {
    if (rec.samples[c].size() != n)
      throw ContractError("recording '" + rec.subject_id + "': channel " + rec.channel_names[c] +
                          " length differs from channel 0");
    for (double v : rec.samples[c])
      if (!std::isfinite(v))
        throw ContractError("recording '" + rec.subject_id + "': non-finite sample in channel " +
                            rec.channel_names[c]);
  }
}

// Sorted, disjoint, inside [0, duration_s] when a duration is given.
inline void validate(const AnnotationSet& ann, std::optional<double> duration_s = std::nullopt) {
  for (std::size_t i = 0; i < ann.intervals.size(); ++i) {
    const auto& iv = ann.intervals[i];
    if (!std::isfinite(iv.onset_s) || !std::isfinite(iv.offset_s) || iv.onset_s < 0.0)
      throw ContractError("seizure interval " + std::to_string(i) + " out of range");
    if (iv.offset_s <= iv.onset_s) throw ContractError("seizure interval " + std::to_string(i) + " is inverted");
    if (duration_s && iv.offset_s > *duration_s + 1e-9)
      throw ContractError("seizure interval " + std::to_string(i) + " ends after the recording (" +
                          text::format_exact(iv.offset_s) + " > " + text::format_exact(*duration_s) + ")");
    if (i > 0 && iv.onset_s < ann.intervals[i - 1].offset_s)
      throw ContractError("seizure intervals " + std::to_string(i - 1) + " and " + std::to_string(i) + " overlap");
  }
}

namespace detail {

inline std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace detail

// Significant digits for sample values in recording files.
inline constexpr int kSampleDigits = 9;

// Recording CSV:
//   #subject=<id>,fs=<hz>,channels=<name1|name2|...>
//   v_ch1,v_ch2,...          (one row per sample instant)
inline Recording parse_recording(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw IngestError(source, 1, "empty file, expected recording header");
  std::string_view header = text::trim(line);
  if (header.empty() || header.front() != '#') throw IngestError(source, 1, "header must start with '#'");
  header.remove_prefix(1);

  Recording rec;
  bool have_subject = false, have_fs = false, have_channels = false;
  for (auto field : text::split(header, ',')) {
    const auto eq = field.find('=');
    if (eq == std::string_view::npos) throw IngestError(source, 1, "malformed header field '" + std::string(field) + "'");
    const auto key = text::trim(field.substr(0, eq));
    const auto value = text::trim(field.substr(eq + 1));
    if (key == "subject") {
      rec.subject_id = std::string(value);
      have_subject = true;
    } else if (key == "fs") {
      const auto fs = text::parse_double(value);
      if (!fs) throw IngestError(source, 1, "non-numeric sampling rate '" + std::string(value) + "'");
      if (!is_ingest_rate(*fs)) throw IngestError(source, 1, "unsupported sampling rate " + std::string(value) + " Hz (expected 200 or 500)");
      rec.fs_hz = *fs;
      have_fs = true;
    } else if (key == "channels") {
      for (auto name : text::split(value, '|')) {
        name = text::trim(name);
        if (name.empty()) throw IngestError(source, 1, "empty channel name");
        rec.channel_names.emplace_back(name);
      }
      have_channels = true;
    } else {
      throw IngestError(source, 1, "unknown header key '" + std::string(key) + "'");
    }
  }
  if (!have_subject || !have_fs || !have_channels)
    throw IngestError(source, 1, "header must declare subject, fs and channels");

  const std::size_t width = rec.channel_names.size();
  rec.samples.assign(width, {});
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = text::trim(line);
    if (row.empty()) continue;
    const auto cells = text::split(row, ',');
    if (cells.size() != width)
      throw IngestError(source, line_no, "row has " + std::to_string(cells.size()) + " values, header declares " +
                                             std::to_string(width) + " channels");
    for (std::size_t c = 0; c < width; ++c) {
      const auto v = text::parse_double(cells[c]);
      if (!v) throw IngestError(source, line_no, "non-numeric cell '" + std::string(text::trim(cells[c])) + "'");
      rec.samples[c].push_back(*v);
    }
  }
  if (rec.n_samples() == 0) throw IngestError(source, line_no, "recording has no sample rows");
  return rec;
}

inline Recording load_recording(const std::filesystem::path& path) {
  auto in = detail::open_for_read(path);
  return parse_recording(in, path.string());
}

inline void write_recording(const Recording& rec, std::ostream& out) {
  validate(rec);
  out << "#subject=" << rec.subject_id << ",fs=" << text::format_exact(rec.fs_hz)
      << ",channels=" << text::join(rec.channel_names, "|") << '\n';
  std::string row;
  for (std::size_t t = 0; t < rec.n_samples(); ++t) {
    row.clear();
    for (std::size_t c = 0; c < rec.n_channels(); ++c) {
      if (c) row += ',';
      row += text::format_sig(rec.samples[c][t], kSampleDigits);
    }
    row += '\n';
    out << row;
  }
}

inline void save_recording(const Recording& rec, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  write_recording(rec, out);
  if (!out) throw Error("write failed: " + path.string());
}

// Annotation CSV: header `onset_s,offset_s`, one interval per row. An empty
// file is a seizure-free recording.
inline AnnotationSet parse_annotations(std::istream& in, const std::string& source,
                                       std::optional<double> duration_s = std::nullopt) {
  AnnotationSet ann;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = text::trim(line);
    if (row.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (row == "onset_s,offset_s") continue;
      if (!text::parse_double(text::split(row, ',').front()))
        throw IngestError(source, line_no, "expected header 'onset_s,offset_s'");
    }
    const auto cells = text::split(row, ',');
    if (cells.size() != 2) throw IngestError(source, line_no, "expected 2 values per row");
    const auto on = text::parse_double(cells[0]);
    const auto off = text::parse_double(cells[1]);
    if (!on || !off) throw IngestError(source, line_no, "non-numeric interval bound");
    if (*off <= *on) throw IngestError(source, line_no, "inverted interval (offset <= onset)");
    if (*on < 0.0) throw IngestError(source, line_no, "negative onset");
    if (duration_s && *off > *duration_s + 1e-9) throw IngestError(source, line_no, "interval ends after the recording");
    ann.intervals.push_back({*on, *off});
  }
  std::stable_sort(ann.intervals.begin(), ann.intervals.end(),
                   [](const auto& a, const auto& b) { return a.onset_s < b.onset_s; });
  for (std::size_t i = 1; i < ann.intervals.size(); ++i)
    if (ann.intervals[i].onset_s < ann.intervals[i - 1].offset_s)
      throw ContractError(source + ": overlapping seizure intervals [" + text::format_exact(ann.intervals[i - 1].onset_s) +
                          "," + text::format_exact(ann.intervals[i - 1].offset_s) + ") and [" +
                          text::format_exact(ann.intervals[i].onset_s) + "," +
                          text::format_exact(ann.intervals[i].offset_s) + ")");
  return ann;
}

inline AnnotationSet load_annotations(const std::filesystem::path& path, std::optional<double> duration_s = std::nullopt) {
  auto in = detail::open_for_read(path);
  return parse_annotations(in, path.string(), duration_s);
}

inline void save_annotations(const AnnotationSet& ann, const std::filesystem::path& path) {
  validate(ann);
  auto out = detail::open_for_write(path);
  out << "onset_s,offset_s\n";
  for (const auto& iv : ann.intervals) out << text::format_exact(iv.onset_s) << ',' << text::format_exact(iv.offset_s) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

// Dataset layout: <root>/<subject_id>/recording.csv and seizures.csv.
inline void save_dataset(const std::vector<SubjectData>& subjects, const std::filesystem::path& root) {
  for (const auto& s : subjects) {
    const auto dir = root / s.recording.subject_id;
    std::filesystem::create_directories(dir);
    save_recording(s.recording, dir / "recording.csv");
    save_annotations(s.seizures, dir / "seizures.csv");
  }
}

// Subjects come back ordered by directory name.
inline std::vector<SubjectData> load_dataset(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw Error("dataset root not found: " + root.string());
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root))
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "recording.csv")) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw Error("no subject directories with recording.csv under " + root.string());

  std::vector<SubjectData> out;
  out.reserve(dirs.size());
  for (const auto& dir : dirs) {
    SubjectData s;
    s.recording = load_recording(dir / "recording.csv");
    validate(s.recording);
    const auto ann_path = dir / "seizures.csv";
    if (std::filesystem::exists(ann_path)) s.seizures = load_annotations(ann_path, s.recording.duration_s());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace seizdet
