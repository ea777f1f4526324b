#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "slicerec/losses.hpp"
#include "slicerec/nn.hpp"
#include "slicerec/volume.hpp"

namespace slicerec {

// Everything needed to resume training or run inference: both networks'
// configs and tensors, batch-norm running stats, optimizer moments, the
// objective, seed, step counter and the preprocessing snapshot.
struct CheckpointData {
  GeneratorConfig gen_cfg;
  CriticConfig critic_cfg;
  bool has_critic = false;

  Objective objective = Objective::wgan_gp_l1;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  PreprocessConfig preprocess;

  std::vector<Param> gen_params;
  std::vector<BnState> gen_bn;
  std::vector<Param> critic_params;

  std::int64_t gen_adam_t = 0;
  std::vector<Param> gen_adam_m, gen_adam_v;
  std::int64_t critic_adam_t = 0;
  std::vector<Param> critic_adam_m, critic_adam_v;
};

// Container format: a JSON header (configs, counters, tensor directory)
// followed by all tensor payloads as little-endian float64.
void save_checkpoint(const CheckpointData& ckpt,
                     const std::filesystem::path& path);
CheckpointData load_checkpoint(const std::filesystem::path& path);

// Rebuild a generator whose params and running stats are the
// checkpoint's (by-name match, count and shapes enforced).
Generator generator_from_checkpoint(const CheckpointData& ckpt);
Critic critic_from_checkpoint(const CheckpointData& ckpt);

}  // namespace slicerec
