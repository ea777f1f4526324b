#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "slicerec/checkpoint.hpp"
#include "slicerec/losses.hpp"
#include "slicerec/nn.hpp"
#include "slicerec/volume_io.hpp"
#include "slicerec/window.hpp"

namespace slicerec {

// Scale profiles. Paper-scale training is far beyond desk budgets, so the
// small profile is first-class: it sets filters/steps/batch defaults that
// explicit fields may still override.
enum class ScaleProfile { desk, paper };

std::string profile_str(ScaleProfile p);
ScaleProfile profile_parse(const std::string& s);

struct TrainConfig {
  LossConfig loss;
  GeneratorConfig gen;
  CriticConfig critic;
  PreprocessConfig preprocess;

  ScaleProfile profile = ScaleProfile::desk;
  int steps = 2000;          // generator updates
  int batch_size = 8;
  double learning_rate = 2e-4;
  // Negative = objective default: (0.5, 0.9) adversarial, (0.9, 0.999) dice.
  double adam_beta1 = -1.0;
  double adam_beta2 = -1.0;
  std::uint64_t seed = 7;

  int log_every = 25;
  int checkpoint_every = 0;  // 0 = only final

  // Profile defaults for the current objective: desk = filters 8 / 2000
  // steps / batch 8; paper = filters 64 / 600k steps batch 64 (dice) or
  // 300k steps batch 32 (adversarial).
  void apply_profile();

  void validate() const;
  double beta1() const;
  double beta2() const;
};

struct TrainLogRow {
  std::int64_t step = 0;
  double gen_total = 0;
  double gen_adv = 0;
  double gen_rec = 0;
  double critic_wasserstein = 0;  // 0 for dice objective
  double critic_penalty = 0;
};

struct TrainResult {
  CheckpointData checkpoint;
  std::vector<TrainLogRow> log;
  std::vector<std::string> scans_used;  // audit trail, scan ids in load order
};

using TrainCallback = std::function<void(const TrainLogRow&)>;

// Train on pre-built window pairs (already preprocessed). Writes
// train_log.tsv plus checkpoint files under out_dir unless out_dir is
// empty. Non-finite losses raise a divergence error after writing the
// last finite-loss checkpoint to out_dir/last_good.ckpt (when logging).
TrainResult train_on_pairs(const TrainConfig& cfg,
                           const std::vector<WindowPair>& pairs,
                           const std::filesystem::path& out_dir,
                           const TrainCallback& on_log = nullptr);

// Full pipeline entry: enforces the healthy-only training regime over the
// manifest's train split before reading any pixel data, loads and
// preprocesses those scans, builds window pairs and delegates.
TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest,
                  const std::filesystem::path& manifest_dir,
                  const std::filesystem::path& out_dir,
                  const TrainCallback& on_log = nullptr);

// Slide the generator over a preprocessed scan: one prediction per window
// position. Returns (pair, prediction) in slice order.
struct Reconstruction {
  WindowPair pair;
  Tensor prediction;  // [3, H, W]
};

std::vector<Reconstruction> reconstruct_volume(const CheckpointData& ckpt,
                                               const Volume& preprocessed);

}  // namespace slicerec
