#pragma once

#include <filesystem>
#include <string>

#include "slicerec/phantom.hpp"
#include "slicerec/scoring.hpp"
#include "slicerec/trainer.hpp"

namespace slicerec {

// One JSON file drives the whole pipeline; each subcommand reads its own
// section. Unknown keys anywhere are a config error (typo protection),
// and command-line flags override file values.
struct RunConfig {
  PhantomSpec synth;
  TrainConfig train;

  int eval_bins = 30;
  // Score used by `evaluate`; when fixed is false the score is selected
  // on the validation split.
  bool score_fixed = false;
  ScoreKey score_key{Metric::l2, Aggregation::average};
};

// Defaults with the desk profile applied.
RunConfig default_run_config();

RunConfig parse_run_config(const std::string& json_text,
                           const std::string& origin);
RunConfig load_run_config(const std::filesystem::path& path);

// Resolved config as pretty JSON with stable key order — what a run
// actually used, echoed next to its outputs.
std::string dump_run_config(const RunConfig& cfg);

}  // namespace slicerec
