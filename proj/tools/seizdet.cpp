// seizdet command-line driver: synth, train, eval, detect, decode.
//
// Exit status: 0 success, 1 usage error, 2 data or contract error.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "seizdet/seizdet.hpp"

namespace fs = std::filesystem;
using namespace seizdet;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Shared {
  std::string data{"data"};
  std::string channels{"C3,C4"};
  std::string method{"seiznet"};
  std::uint64_t seed{1};
  std::string out{"."};
  std::string config;
};

void add_shared(CLI::App* app, Shared& s) {
  app->add_option("--data", s.data, "Dataset root (<root>/<subject>/recording.csv)");
  app->add_option("--channels", s.channels, "Comma-separated channel names, or 'all'");
  app->add_option("--method", s.method, "seiznet or bpsvm")->check(CLI::IsMember({"seiznet", "bpsvm"}));
  app->add_option("--seed", s.seed, "Seed for every random choice");
  app->add_option("--out", s.out, "Output directory");
  app->add_option("--config", s.config, "key=value file; flags given on the command line win");
}

std::vector<std::string> channel_list(const std::string& s) {
  if (s == "all" || s.empty()) return {};
  std::vector<std::string> out;
  for (auto part : text::split(s, ',')) {
    const auto name = text::trim(part);
    if (name.empty()) throw UsageError("--channels: empty channel name in '" + s + "'");
    out.emplace_back(name);
  }
  return out;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& fn) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  fn(out);
  if (!out) throw Error("write failed: " + path.string());
}

// Config lines become --key=value arguments placed before the command-line
// ones, and every option takes its last value, so flags override the file.
// Keys that belong to another subcommand are skipped so one manifest can
// drive a whole experiment; keys no subcommand knows are usage errors.
std::vector<std::string> config_args(const fs::path& path, const CLI::App& sub, const std::set<std::string>& all_keys) {
  std::ifstream in(path);
  if (!in) throw UsageError("--config: cannot read " + path.string());
  std::vector<std::string> args;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw UsageError(path.string() + ":" + std::to_string(n) + ": expected key=value");
    std::string key(text::trim(t.substr(0, eq)));
    const std::string value(text::trim(t.substr(eq + 1)));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (key == "config") throw UsageError(path.string() + ":" + std::to_string(n) + ": config files do not nest");
    if (!all_keys.count(key)) throw UsageError(path.string() + ":" + std::to_string(n) + ": unknown key '" + key + "'");
    bool known_here = false;
    for (const auto* opt : sub.get_options())
      if (opt->check_lname(key)) known_here = true;
    if (known_here) args.push_back("--" + key + "=" + value);
  }
  return args;
}

std::set<std::string> option_keys(const CLI::App& app) {
  std::set<std::string> keys;
  for (const auto* sub : app.get_subcommands({}))
    for (const auto* opt : sub->get_options())
      for (const auto& name : opt->get_lnames()) keys.insert(name);
  return keys;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  int subjects{6};
  double duration{600.0};
  int n_channels{18};
  int min_seizures{3}, max_seizures{5};
  double min_len{6.0}, max_len{12.0};
  double spike_wave_hz{3.0};
  double noise_sigma{4.0};
};

int cmd_synth(const Shared& s, const SynthArgs& a) {
  SynthConfig cfg;
  cfg.n_subjects = a.subjects;
  cfg.duration_s = a.duration;
  cfg.n_channels = a.n_channels;
  cfg.seizure_count_range = {a.min_seizures, a.max_seizures};
  cfg.seizure_len_range_s = {a.min_len, a.max_len};
  cfg.spike_wave_hz = a.spike_wave_hz;
  cfg.noise_sigma = a.noise_sigma;
  cfg.seed = s.seed;
  const auto data = synth_dataset(cfg);
  save_dataset(data, s.out);
  std::size_t seizures = 0;
  for (const auto& d : data) seizures += d.seizures.size();
  std::cout << "wrote " << data.size() << " subjects, " << seizures << " seizures to " << s.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// train / eval

struct TrainArgs {
  int epochs{100};
  int batch_size{128};
  double lr{4.1e-3};
  double svm_c{1.0};
  std::optional<double> svm_gamma;
  unsigned threads{0};
};

TrainConfig train_config(const Shared& s, const TrainArgs& a) {
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.lr = a.lr;
  tc.seed = s.seed;
  return tc;
}

BpsvmConfig svm_config(const TrainArgs& a) {
  BpsvmConfig c;
  c.C = a.svm_c;
  c.gamma = a.svm_gamma;
  return c;
}

int cmd_train(const Shared& s, const TrainArgs& a) {
  const auto data = load_dataset(s.data);
  const auto method = parse_method(s.method);
  const auto channels = resolve_channels(data, channel_list(s.channels));
  const auto subjects = prepare_subjects(data, channels, method);
  std::vector<Epoch> epochs;
  for (const auto& p : subjects) epochs.insert(epochs.end(), p.train_epochs.begin(), p.train_epochs.end());
  const auto n_ictal = std::count_if(epochs.begin(), epochs.end(), [](const Epoch& e) { return e.ictal(); });
  std::cout << "training " << method_name(method) << " on " << subjects.size() << " subjects, " << epochs.size() << " epochs ("
            << n_ictal << " ictal), channels " << text::join(channels, ",") << '\n';

  fs::create_directories(s.out);
  const fs::path model_path = fs::path(s.out) / "model.txt";
  if (method == Method::seiznet) {
    SeizNet<float> model(channels.size(), derive_seed(s.seed, 0), channels);
    auto tc = train_config(s, a);
    tc.seed = derive_seed(s.seed, 1);
    const auto hist = train(model, std::span<const Epoch>(epochs), tc);
    save_seiznet(model, model_path);
    write_file(fs::path(s.out) / "history.csv", [&](std::ostream& o) {
      o << "pass,loss,accuracy\n";
      for (std::size_t i = 0; i < hist.loss.size(); ++i)
        o << i + 1 << ',' << text::format_exact(hist.loss[i]) << ',' << text::format_exact(hist.accuracy[i]) << '\n';
    });
    std::cout << "final loss " << text::format_sig(hist.loss.back(), 6) << ", accuracy " << text::format_sig(hist.accuracy.back(), 6)
              << '\n';
  } else {
    const auto model = train_bpsvm(epochs, svm_config(a), channels);
    save_bpsvm(model, model_path);
    std::cout << model.svm.support.size() << " support vectors, gamma " << text::format_sig(model.svm.gamma, 6) << '\n';
  }
  std::cout << "model written to " << model_path.string() << '\n';
  return 0;
}

int cmd_eval(const Shared& s, const TrainArgs& a, int repeats, bool save_models) {
  const auto data = load_dataset(s.data);
  LosoConfig cfg;
  cfg.method = parse_method(s.method);
  cfg.channels = channel_list(s.channels);
  cfg.train = train_config(s, a);
  cfg.svm = svm_config(a);
  cfg.seed = s.seed;
  cfg.threads = a.threads;
  cfg.keep_models = save_models;
  const auto ev = evaluate(data, cfg, repeats);
  save_reports(ev, s.out);
  if (save_models) {
    const auto& run = ev.runs.front();
    for (std::size_t f = 0; f < run.models.size(); ++f)
      save_seiznet(run.models[f], fs::path(s.out) / "models" / ("fold_" + run.audit[f].held_out + ".txt"));
  }
  write_table(ev, std::cout);
  return 0;
}

// ---------------------------------------------------------------------------
// detect

struct DetectArgs {
  std::string model;
  std::string recording;
};

enum class ModelKind { seiznet, bpsvm };

ModelKind sniff_model(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model " + path.string());
  std::string tag;
  in >> tag;
  if (tag == "arch") return ModelKind::seiznet;
  if (tag == "bpsvm") return ModelKind::bpsvm;
  throw IngestError(path.string(), 1, "not a seiznet or bpsvm model file");
}

int cmd_detect(const Shared& s, const DetectArgs& a) {
  const auto kind = sniff_model(a.model);
  const auto rec = load_recording(a.recording);
  validate(rec);
  const fs::path out_dir = s.out;
  std::vector<EpochPrediction> preds;
  std::vector<double> scores;
  if (rec.duration_s() < kEpochLenS) {
    std::cerr << "warning: " << a.recording << " is shorter than one 5 s epoch; no detections\n";
  } else {
    std::optional<SeizNet<float>> net;
    std::optional<BpsvmModel> svm;
    std::vector<std::string> channels;
    if (kind == ModelKind::seiznet) {
      net.emplace(load_seiznet<float>(a.model));
      channels = net->channel_names();
      if (channels.empty() && rec.n_channels() != net->n_channels())
        throw ContractError("model expects " + std::to_string(net->n_channels()) + " channels, recording has " +
                            std::to_string(rec.n_channels()));
    } else {
      svm.emplace(load_bpsvm(a.model));
      channels = svm->channels;
    }
    const auto prepared = prepare_recording(rec, channels);
    const auto epochs = extract_epochs(prepared, {}, {.mode = WindowMode::eval});
    if (net) {
      scores = predict_batch(*net, std::span<const Epoch>(epochs));
      preds = to_predictions(epochs, scores, kDecisionThreshold);
    } else {
      scores = bpsvm_scores(*svm, epochs);
      preds = to_predictions(epochs, scores, 0.0);
    }
  }
  const auto alarms = alarm_events(preds);
  write_file(out_dir / "epochs.csv", [&](std::ostream& o) {
    o << "start_s,end_s,score,flagged\n";
    for (std::size_t i = 0; i < preds.size(); ++i)
      o << text::format_exact(preds[i].start_s) << ',' << text::format_exact(preds[i].end_s) << ',' << text::format_exact(scores[i])
        << ',' << (preds[i].flagged ? 1 : 0) << '\n';
  });
  write_file(out_dir / "detections.csv", [&](std::ostream& o) { write_alarms_csv(alarms, o); });
  std::cout << preds.size() << " epochs scored, " << alarms.size() << " alarm events\n";
  return 0;
}

// ---------------------------------------------------------------------------
// decode

struct DecodeArgs {
  std::string model;
  int layer{4};
  std::string filters{"all"};
  int steps{200};
  double step_size{0.1};
  double tv_weight{10.0};
  double lp_weight{10.0};
  double lp_p{6.0};
  unsigned threads{0};
  bool svg{true};
};

std::vector<int> filter_list(const std::string& s, std::size_t units) {
  std::vector<int> out;
  if (s == "all") {
    for (std::size_t i = 0; i < units; ++i) out.push_back(static_cast<int>(i));
    return out;
  }
  for (auto part : text::split(s, ',')) {
    const auto v = text::parse_int(text::trim(part));
    if (!v) throw UsageError("--filters: '" + std::string(part) + "' is not an integer");
    out.push_back(static_cast<int>(*v));
  }
  return out;
}

int cmd_decode(const Shared& s, const DecodeArgs& a) {
  if (sniff_model(a.model) != ModelKind::seiznet) throw ContractError("decode needs a seiznet model");
  const auto model = load_seiznet<float>(a.model);
  const auto units = am_unit_count(model.network(), a.layer);
  const auto filters = filter_list(a.filters, units);

  std::vector<AmResult> results(filters.size());
  parallel_for(filters.size(), a.threads ? a.threads : default_threads(), [&](std::size_t i) {
    AmConfig c;
    c.layer_index = a.layer;
    c.filter_index = filters[i];
    c.steps = a.steps;
    c.step_size = a.step_size;
    c.tv_weight = a.tv_weight;
    c.lp_weight = a.lp_weight;
    c.lp_p = a.lp_p;
    c.seed = s.seed;
    results[i] = activation_maximization(model, c);
  });

  const fs::path dir = s.out;
  std::vector<AmSummaryRow> rows;
  for (std::size_t i = 0; i < filters.size(); ++i) {
    char stem[64];
    std::snprintf(stem, sizeof stem, "am_layer%d_filter%02d", a.layer, filters[i]);
    const auto& r = results[i];
    write_file(dir / (std::string(stem) + ".csv"), [&](std::ostream& o) { write_pattern_csv(r.pattern, o); });
    if (a.svg)
      write_file(dir / (std::string(stem) + ".svg"), [&](std::ostream& o) {
        write_pattern_svg(r.pattern, o, model.channel_names(),
                          "layer " + std::to_string(a.layer) + " filter " + std::to_string(filters[i]) + ", dominant " +
                              text::format_fixed(r.dominant_hz_summed, 1) + " Hz");
      });
    rows.push_back({a.layer, filters[i], r.activation, r.dominant_hz_summed});
    std::cout << stem << "  activation " << text::format_sig(r.activation, 6) << "  objective "
              << text::format_sig(r.initial_objective, 6) << " -> " << text::format_sig(r.objective, 6) << "  dominant "
              << text::format_fixed(r.dominant_hz_summed, 1) << " Hz\n";
  }
  write_file(dir / "am_summary.csv", [&](std::ostream& o) { write_am_summary_csv(rows, o); });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seizure-onset detection toolkit: SeizNet CNN, BPsvm baseline, LOSO evaluation, filter decoding"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Shared shared;
  SynthArgs sa;
  TrainArgs ta;
  DetectArgs da;
  DecodeArgs dc;
  int repeats = 10;
  bool save_models = false;

  auto* synth = app.add_subcommand("synth", "Write a synthetic absence-seizure dataset to --out (default --data)");
  add_shared(synth, shared);
  synth->add_option("--subjects", sa.subjects, "Number of subjects")->check(CLI::PositiveNumber);
  synth->add_option("--duration", sa.duration, "Recording length per subject (s)");
  synth->add_option("--n-channels", sa.n_channels, "Channels per recording")->check(CLI::PositiveNumber);
  synth->add_option("--min-seizures", sa.min_seizures, "Fewest seizures per subject");
  synth->add_option("--max-seizures", sa.max_seizures, "Most seizures per subject");
  synth->add_option("--min-len", sa.min_len, "Shortest seizure (s)");
  synth->add_option("--max-len", sa.max_len, "Longest seizure (s)");
  synth->add_option("--spike-wave-hz", sa.spike_wave_hz, "Discharge rate (Hz)");
  synth->add_option("--noise-sigma", sa.noise_sigma, "White noise level (uV)");

  auto add_train = [&](CLI::App* sub) {
    sub->add_option("--epochs", ta.epochs, "Training passes")->check(CLI::PositiveNumber);
    sub->add_option("--batch-size", ta.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    sub->add_option("--lr", ta.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--svm-c", ta.svm_c, "BPsvm box constraint")->check(CLI::PositiveNumber);
    sub->add_option("--svm-gamma", ta.svm_gamma, "BPsvm RBF width (default 1/(d*Var))")->check(CLI::PositiveNumber);
  };
  auto* train_cmd = app.add_subcommand("train", "Train one model on every subject under --data");
  add_shared(train_cmd, shared);
  add_train(train_cmd);

  auto* eval = app.add_subcommand("eval", "Leave-one-subject-out evaluation with mode-of-runs selection");
  add_shared(eval, shared);
  add_train(eval);
  eval->add_option("--repeats", repeats, "LOSO repeats (BPsvm always runs once)")->check(CLI::PositiveNumber);
  eval->add_option("--threads", ta.threads, "Worker threads, 0 for all cores");
  eval->add_flag("--save-models", save_models, "Write the first repeat's fold models to <out>/models");

  auto* detect = app.add_subcommand("detect", "Score one recording and group flagged epochs into alarms");
  add_shared(detect, shared);
  detect->add_option("--model", da.model, "Model file from train or eval")->required();
  detect->add_option("--recording", da.recording, "Recording CSV")->required();

  auto* decode = app.add_subcommand("decode", "Activation maximization patterns for SeizNet filters");
  add_shared(decode, shared);
  decode->add_option("--model", dc.model, "SeizNet model file")->required();
  decode->add_option("--layer", dc.layer, "Conv block 1-4, or 5 for the output logits");
  decode->add_option("--filters", dc.filters, "'all' or a comma-separated list of filter indices");
  decode->add_option("--steps", dc.steps, "Gradient ascent steps")->check(CLI::PositiveNumber);
  decode->add_option("--step-size", dc.step_size, "Step length per sample")->check(CLI::PositiveNumber);
  decode->add_option("--tv-weight", dc.tv_weight, "Total variation weight")->check(CLI::NonNegativeNumber);
  decode->add_option("--lp-weight", dc.lp_weight, "Lp norm weight")->check(CLI::NonNegativeNumber);
  decode->add_option("--lp-p", dc.lp_p, "Lp norm exponent")->check(CLI::Range(1.0, 1e6));
  decode->add_option("--threads", dc.threads, "Worker threads, 0 for all cores");
  decode->add_option("--svg", dc.svg, "Also write SVG plots (true/false)");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    // Expand --config for the chosen subcommand ahead of its own flags.
    if (!args.empty()) {
      const CLI::App* sub = nullptr;
      for (const auto* s : app.get_subcommands({}))
        if (s->get_name() == args.front()) sub = s;
      for (std::size_t i = 1; sub && i < args.size(); ++i) {
        std::string path;
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
        if (path.empty()) continue;
        auto extra = config_args(path, *sub, option_keys(app));
        args.insert(args.begin() + 1, extra.begin(), extra.end());
        break;
      }
    }
    std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*synth) {
      if (synth->get_option("--out")->count() == 0) shared.out = shared.data;
      return cmd_synth(shared, sa);
    }
    if (*train_cmd) return cmd_train(shared, ta);
    if (*eval) return cmd_eval(shared, ta, repeats, save_models);
    if (*detect) return cmd_detect(shared, da);
    if (*decode) return cmd_decode(shared, dc);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
