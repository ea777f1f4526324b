#pragma once

#include <functional>
#include <string>

#include "slicerec/graph.hpp"
#include "slicerec/rng.hpp"

namespace slicerec {

using ad::Graph;
using ad::Tensor;
using ad::Value;

// ---- Plain tensor metrics (scoring path) ----

// Mean absolute / mean squared difference over all elements.
double l1_distance(const Tensor& a, const Tensor& b);
double l2_distance(const Tensor& a, const Tensor& b);

inline constexpr double kDiceEps = 1e-7;

// Soft dice loss 1 - (2*sum(ab)+eps)/(sum(a^2)+sum(b^2)+eps) for
// intensities in [0,1]. Identical tensors give ~0, disjoint masses ~1.
double soft_dice_loss(const Tensor& a, const Tensor& b);

// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
// C2 = 0.03^2 on a unit dynamic range, valid-crop, averaged jointly over
// channels. Inputs must lie in [0,1] and be at least 11x11.
double ssim(const Tensor& a, const Tensor& b);
double ssim_loss(const Tensor& a, const Tensor& b);  // 1 - ssim

// ---- Training objectives ----

enum class Objective { dice, wgan_gp, wgan_gp_l1 };

std::string objective_str(Objective o);
Objective objective_parse(const std::string& s);

struct LossConfig {
  Objective objective = Objective::wgan_gp_l1;
  double l1_weight = 100.0;  // reconstruction weight for wgan_gp_l1
  double gp_lambda = 10.0;
  int critic_steps = 5;      // critic updates per generator update

  void validate() const;
  bool adversarial() const { return objective != Objective::dice; }
};

// Taped versions of the reconstruction losses.
Value tape_l1(Graph& g, Value a, Value b);
Value tape_dice(Graph& g, Value a, Value b);

// A critic forward bound to a parameter set: (graph, cond, candidate) -> [N].
using CriticFn =
    std::function<Value(Graph&, Value cond, Value candidate)>;

// Gradient penalty E[(||grad_xhat D(cond, xhat)||_2 - 1)^2] with
// xhat = u*real + (1-u)*fake, one uniform u per sample. Differentiable
// w.r.t. critic parameters (the inner gradient is built on the tape).
Value gradient_penalty(Graph& g, const CriticFn& critic, Value cond,
                       const Tensor& real, const Tensor& fake, Rng& rng);

struct CriticLossParts {
  Value total;          // mean D(fake) - mean D(real) + lambda * gp
  double wasserstein;   // mean D(real) - mean D(fake), eager value
  double penalty;       // eager gp value (0 when lambda == 0)
};

// real and fake are [N, C, H, W] stacks; fake should be detached (a fresh
// graph input), since the critic step must not touch generator params.
CriticLossParts critic_loss(Graph& g, const CriticFn& critic, Value cond,
                            Value real, Value fake, const LossConfig& cfg,
                            Rng& rng);

struct GeneratorLossParts {
  Value total;
  double adversarial;    // -mean D(fake), 0 for dice objective
  double reconstruction; // dice or l1 part actually in the objective
};

// critic may be null for the dice objective.
GeneratorLossParts generator_loss(Graph& g, const CriticFn* critic,
                                  Value cond, Value fake, Value target,
                                  const LossConfig& cfg);

}  // namespace slicerec
