// Small end-to-end run: synthesize three subjects, evaluate both detectors
// with leave-one-subject-out, then decode one conv-4 filter of a SeizNet.
//
//   ./quickstart [passes]

#include <cstdlib>
#include <iostream>

#include "seizdet/seizdet.hpp"

using namespace seizdet;

int main(int argc, char** argv) {
  const int passes = argc > 1 ? std::atoi(argv[1]) : 2;

  SynthConfig synth;
  synth.n_subjects = 3;
  synth.duration_s = 180.0;
  synth.seizure_count_range = {2, 3};
  synth.seizure_len_range_s = {6.0, 10.0};
  const auto data = synth_dataset(synth);

  LosoConfig cfg;
  cfg.channels = {"C3", "C4"};
  cfg.seed = 11;

  cfg.method = Method::bpsvm;
  write_table(evaluate(data, cfg, 1), std::cout);

  cfg.method = Method::seiznet;
  cfg.train.epochs = passes;
  cfg.train.batch_size = 32;
  cfg.keep_models = true;
  const auto ev = evaluate(data, cfg, 1);
  write_table(ev, std::cout);

  AmConfig am;
  am.layer_index = 4;
  am.filter_index = 0;
  am.seed = 3;
  const auto r = activation_maximization(ev.runs.front().models.front(), am);
  std::cout << "conv-4 filter 0: activation " << r.activation << ", dominant " << r.dominant_hz_summed << " Hz\n";
  return 0;
}
