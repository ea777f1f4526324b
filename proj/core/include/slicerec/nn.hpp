#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slicerec/graph.hpp"
#include "slicerec/rng.hpp"

namespace slicerec {

using ad::Graph;
using ad::Tensor;
using ad::Value;

// A named trainable tensor.
struct Param {
  std::string name;
  Tensor value;
};

struct GeneratorConfig {
  int in_channels = 3;
  int out_channels = 3;
  int depth = 4;          // encoder and decoder stage count
  int base_filters = 64;
  double leaky_slope = 0.2;

  void validate() const;
  // Inputs must have spatial dims divisible by this.
  int spatial_divisor() const { return 1 << depth; }
};

struct CriticConfig {
  bool conditional = true;  // score (condition ++ candidate) jointly
  int stack_channels = 3;   // channels per stack
  int n_blocks = 3;
  int base_filters = 64;
  double leaky_slope = 0.2;
  int input_height = 64;    // spatial size the linear head is built for
  int input_width = 64;

  void validate() const;
  int in_channels() const { return conditional ? 2 * stack_channels : stack_channels; }
  int spatial_divisor() const { return 1 << n_blocks; }
};

// Batch-norm mode for a forward pass.
//   train:       batch statistics, running stats updated
//   batch_stats: batch statistics, running stats untouched (fake
//                generation during critic updates)
//   eval:        running statistics (inference)
enum class BnMode { train, batch_stats, eval };

// Per-layer batch-norm running statistics.
struct BnState {
  std::string name;
  Tensor mean;  // [C]
  Tensor var;   // [C]
};

// Encoder-decoder reconstructor with skip connections. Encoder: `depth`
// stride-2 convolutions (kernel 4, pad 1), channels F, 2F, 4F, 8F, each
// followed by batch norm and leaky ReLU. Decoder mirrors with stride-2
// transposed convolutions, batch norm and ReLU, concatenating the
// matching encoder feature map before each of the last depth-1 stages.
// A kernel-3 convolution plus sigmoid maps back to out_channels.
class Generator {
 public:
  Generator(GeneratorConfig cfg, std::uint64_t seed);

  const GeneratorConfig& config() const { return cfg_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::vector<BnState>& bn_states() { return bn_; }
  const std::vector<BnState>& bn_states() const { return bn_; }
  std::int64_t param_count() const;

  // Create one graph input per parameter, in params() order.
  std::vector<Value> bind(Graph& g) const;

  // x: [N, in_channels, H, W] with H, W divisible by spatial_divisor().
  // Running stats mutate only when mode == BnMode::train.
  Value forward(Graph& g, const std::vector<Value>& pv, Value x,
                BnMode mode) const;

  // Single-shot eval-mode inference.
  Tensor infer(const Tensor& x) const;

 private:
  GeneratorConfig cfg_;
  std::vector<Param> params_;
  mutable std::vector<BnState> bn_;
};

// Convolutional critic: n_blocks stride-2 convolutions (kernel 4, pad 1,
// leaky ReLU, no normalization) then a global linear head to one score
// per sample. Output shape [N].
class Critic {
 public:
  Critic(CriticConfig cfg, std::uint64_t seed);

  const CriticConfig& config() const { return cfg_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::int64_t param_count() const;

  std::vector<Value> bind(Graph& g) const;

  // cond is ignored (may be invalid) when the critic is unconditional.
  Value forward(Graph& g, const std::vector<Value>& pv, Value cond,
                Value candidate) const;

 private:
  CriticConfig cfg_;
  std::vector<Param> params_;
};

// Taped batch norm over [N, C, H, W]: population batch statistics,
// composition of primitive ops so gradients come for free.
Value batch_norm(Graph& g, Value x, Value gamma, Value beta, BnState& state,
                 BnMode mode, double momentum = 0.1, double eps = 1e-5);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(AdamConfig cfg, const std::vector<Param>& params);

  // grads aligned with params; an invalid Value-derived empty grad is not
  // allowed here — pass zero tensors for untouched params.
  void step(std::vector<Param>& params, const std::vector<Tensor>& grads);

  std::int64_t t() const { return t_; }
  std::vector<Param>& moments1() { return m_; }
  std::vector<Param>& moments2() { return v_; }
  void restore(std::int64_t t, std::vector<Param> m, std::vector<Param> v);

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Param> m_;
  std::vector<Param> v_;
};

// Glorot-uniform fill: limit sqrt(6 / (fan_in + fan_out)).
void glorot_fill(Tensor& w, int fan_in, int fan_out, Rng& rng);

}  // namespace slicerec
