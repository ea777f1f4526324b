#include "slicerec/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "slicerec/errors.hpp"

namespace slicerec {

namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
  if (a.numel() == 0) throw ShapeError(std::string(what) + ": empty tensors");
}

void check_unit_range(const Tensor& t, const char* what) {
  // Tiny slack for accumulated float fuzz.
  if (t.min() < -1e-9 || t.max() > 1.0 + 1e-9)
    throw DomainError(std::string(what) + ": values must lie in [0,1], got [" +
                      std::to_string(t.min()) + ", " + std::to_string(t.max()) +
                      "]");
}

}  // namespace

double l1_distance(const Tensor& a, const Tensor& b) {
  check_pair(a, b, "l1_distance");
  double s = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) s += std::fabs(a[i] - b[i]);
  return s / static_cast<double>(a.numel());
}

double l2_distance(const Tensor& a, const Tensor& b) {
  check_pair(a, b, "l2_distance");
  double s = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.numel());
}

double soft_dice_loss(const Tensor& a, const Tensor& b) {
  check_pair(a, b, "soft_dice_loss");
  check_unit_range(a, "soft_dice_loss");
  check_unit_range(b, "soft_dice_loss");
  double ab = 0, aa = 0, bb = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return 1.0 - (2.0 * ab + kDiceEps) / (aa + bb + kDiceEps);
}

namespace {

// 11-tap Gaussian, sigma 1.5, normalized to sum 1.
std::array<double, 11> ssim_window() {
  std::array<double, 11> w{};
  double s = 0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5.0;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    s += w[i];
  }
  for (double& v : w) v /= s;
  return w;
}

// Separable valid-mode Gaussian filter of one [h, w] plane.
void blur_valid(const double* src, int h, int w, std::vector<double>& tmp,
                std::vector<double>& dst) {
  static const std::array<double, 11> win = ssim_window();
  const int wv = w - 10;
  const int hv = h - 10;
  tmp.assign(static_cast<std::size_t>(h) * wv, 0.0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < wv; ++c) {
      double s = 0;
      for (int k = 0; k < 11; ++k) s += win[k] * src[r * w + c + k];
      tmp[static_cast<std::size_t>(r) * wv + c] = s;
    }
  dst.assign(static_cast<std::size_t>(hv) * wv, 0.0);
  for (int r = 0; r < hv; ++r)
    for (int c = 0; c < wv; ++c) {
      double s = 0;
      for (int k = 0; k < 11; ++k) s += win[k] * tmp[(r + k) * wv + c];
      dst[static_cast<std::size_t>(r) * wv + c] = s;
    }
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  check_pair(a, b, "ssim");
  check_unit_range(a, "ssim");
  check_unit_range(b, "ssim");
  if (a.rank() < 2) throw DomainError("ssim needs at least 2 spatial dims");
  const int h = a.dim(a.rank() - 2);
  const int w = a.dim(a.rank() - 1);
  if (h < 11 || w < 11)
    throw DomainError("ssim needs images of at least 11x11, got " +
                      a.shape_str());
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t planes = a.numel() / plane;

  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  std::vector<double> tmp, mu_a, mu_b, s_aa, s_bb, s_ab, pa(plane), pb(plane);
  double total = 0;
  std::int64_t count = 0;
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* ap = a.data() + p * plane;
    const double* bp = b.data() + p * plane;
    blur_valid(ap, h, w, tmp, mu_a);
    blur_valid(bp, h, w, tmp, mu_b);
    for (std::int64_t i = 0; i < plane; ++i) {
      pa[i] = ap[i] * ap[i];
      pb[i] = bp[i] * bp[i];
    }
    blur_valid(pa.data(), h, w, tmp, s_aa);
    blur_valid(pb.data(), h, w, tmp, s_bb);
    for (std::int64_t i = 0; i < plane; ++i) pa[i] = ap[i] * bp[i];
    blur_valid(pa.data(), h, w, tmp, s_ab);
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = s_aa[i] - ma * ma;
      const double vb = s_bb[i] - mb * mb;
      const double cov = s_ab[i] - ma * mb;
      total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
               ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
    }
    count += static_cast<std::int64_t>(mu_a.size());
  }
  return total / static_cast<double>(count);
}

double ssim_loss(const Tensor& a, const Tensor& b) { return 1.0 - ssim(a, b); }

std::string objective_str(Objective o) {
  switch (o) {
    case Objective::dice: return "dice";
    case Objective::wgan_gp: return "wgan_gp";
    case Objective::wgan_gp_l1: return "wgan_gp_l1";
  }
  throw ConfigError("bad objective enum");
}

Objective objective_parse(const std::string& s) {
  if (s == "dice") return Objective::dice;
  if (s == "wgan_gp") return Objective::wgan_gp;
  if (s == "wgan_gp_l1") return Objective::wgan_gp_l1;
  throw ConfigError("unknown objective '" + s +
                    "' (expected dice, wgan_gp or wgan_gp_l1)");
}

void LossConfig::validate() const {
  if (l1_weight < 0) throw ConfigError("l1_weight must be >= 0");
  if (gp_lambda < 0) throw ConfigError("gp_lambda must be >= 0");
  if (critic_steps < 1) throw ConfigError("critic_steps must be >= 1");
}

Value tape_l1(Graph& g, Value a, Value b) {
  return g.mean_all(g.abs(g.sub(a, b)));
}

Value tape_dice(Graph& g, Value a, Value b) {
  Value num = g.add_scalar(g.mul_scalar(g.sum_all(g.mul(a, b)), 2.0), kDiceEps);
  Value den =
      g.add_scalar(g.add(g.sum_all(g.square(a)), g.sum_all(g.square(b))),
                   kDiceEps);
  return g.add_scalar(g.neg(g.div(num, den)), 1.0);
}

Value gradient_penalty(Graph& g, const CriticFn& critic, Value cond,
                       const Tensor& real, const Tensor& fake, Rng& rng) {
  if (!real.same_shape(fake))
    throw ShapeError("gradient_penalty: real/fake shape mismatch " +
                     real.shape_str() + " vs " + fake.shape_str());
  if (real.rank() != 4)
    throw ShapeError("gradient_penalty expects [N,C,H,W] stacks");
  const int n = real.dim(0);
  const std::int64_t per = real.numel() / n;
  Tensor xhat(real.shape());
  for (int s = 0; s < n; ++s) {
    const double u = rng.uniform();
    for (std::int64_t e = 0; e < per; ++e) {
      const std::int64_t i = s * per + e;
      xhat[i] = u * real[i] + (1.0 - u) * fake[i];
    }
  }
  Value xv = g.input(std::move(xhat));
  Value d = critic(g, cond, xv);
  // Per-sample critic outputs are independent, so the gradient of the sum
  // w.r.t. xv carries each sample's own gradient.
  std::vector<Value> grads = g.backward(g.sum_all(d), {xv});
  if (!grads[0].valid())
    throw ShapeError("gradient_penalty: critic output does not depend on xhat");
  Value norm = g.sqrt(g.add_scalar(g.sum_per_sample(g.square(grads[0])), 1e-12));
  return g.mean_all(g.square(g.add_scalar(norm, -1.0)));
}

CriticLossParts critic_loss(Graph& g, const CriticFn& critic, Value cond,
                            Value real, Value fake, const LossConfig& cfg,
                            Rng& rng) {
  cfg.validate();
  Value d_real = critic(g, cond, real);
  Value d_fake = critic(g, cond, fake);
  Value loss = g.sub(g.mean_all(d_fake), g.mean_all(d_real));
  CriticLossParts parts;
  parts.wasserstein = -g.val(loss)[0];
  parts.penalty = 0;
  if (cfg.gp_lambda != 0) {
    Value gp = gradient_penalty(g, critic, cond, g.val(real), g.val(fake), rng);
    parts.penalty = g.val(gp)[0];
    loss = g.add(loss, g.mul_scalar(gp, cfg.gp_lambda));
  }
  parts.total = loss;
  return parts;
}

GeneratorLossParts generator_loss(Graph& g, const CriticFn* critic, Value cond,
                                  Value fake, Value target,
                                  const LossConfig& cfg) {
  cfg.validate();
  GeneratorLossParts parts;
  if (cfg.objective == Objective::dice) {
    Value rec = tape_dice(g, fake, target);
    parts.total = rec;
    parts.adversarial = 0;
    parts.reconstruction = g.val(rec)[0];
    return parts;
  }
  if (critic == nullptr)
    throw ConfigError("adversarial objective requires a critic");
  Value adv = g.neg(g.mean_all((*critic)(g, cond, fake)));
  parts.adversarial = g.val(adv)[0];
  if (cfg.objective == Objective::wgan_gp) {
    parts.total = adv;
    parts.reconstruction = 0;
    return parts;
  }
  Value rec = tape_l1(g, fake, target);
  parts.reconstruction = g.val(rec)[0];
  parts.total = g.add(adv, g.mul_scalar(rec, cfg.l1_weight));
  return parts;
}

}  // namespace slicerec
