#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "slicerec/checkpoint.hpp"
#include "slicerec/errors.hpp"
#include "slicerec/nn.hpp"
#include "slicerec/rng.hpp"

namespace fs = std::filesystem;
using namespace slicerec;
using slicerec::ad::Graph;
using slicerec::ad::Tensor;
using slicerec::ad::Value;

namespace {

Tensor random_unit(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
  return t;
}

// Independent parameter-count oracle for the encoder-decoder we build:
// stride-2 kernel-4 stages with batch norm, mirrored decoder, kernel-3 head.
std::int64_t expected_gen_params(int in_ch, int out_ch, int d, int f) {
  std::int64_t total = 0;
  auto stage = [&](std::int64_t ci, std::int64_t co, int k) {
    return ci * co * k * k + co;  // weight + bias
  };
  for (int i = 0; i < d; ++i) {
    const std::int64_t ci = i == 0 ? in_ch : (std::int64_t(f) << (i - 1));
    const std::int64_t co = std::int64_t(f) << i;
    total += stage(ci, co, 4) + 2 * co;  // + gamma, beta
  }
  for (int j = 0; j < d; ++j) {
    const std::int64_t ci =
        j == 0 ? (std::int64_t(f) << (d - 1)) : 2 * (std::int64_t(f) << (d - 1 - j));
    const std::int64_t co = j < d - 1 ? (std::int64_t(f) << (d - 2 - j)) : f;
    total += stage(ci, co, 4) + 2 * co;
  }
  total += stage(f, out_ch, 3);
  return total;
}

std::int64_t expected_critic_params(int in_ch, int nb, int f, int h, int w) {
  std::int64_t total = 0;
  for (int i = 0; i < nb; ++i) {
    const std::int64_t ci = i == 0 ? in_ch : (std::int64_t(f) << (i - 1));
    const std::int64_t co = std::int64_t(f) << i;
    total += ci * co * 16 + co;
  }
  const std::int64_t flat =
      (std::int64_t(f) << (nb - 1)) * (h >> nb) * (w >> nb);
  return total + flat + 1;
}

}  // namespace

TEST_CASE("glorot init fills within the expected limit, deterministically") {
  Tensor w({16, 8, 3, 3});
  Rng rng(50);
  glorot_fill(w, 8 * 9, 16 * 9, rng);
  const double limit = std::sqrt(6.0 / (8 * 9 + 16 * 9));
  double mn = 1e9, mx = -1e9, sum = 0;
  for (std::int64_t i = 0; i < w.numel(); ++i) {
    mn = std::min(mn, w[i]);
    mx = std::max(mx, w[i]);
    sum += w[i];
  }
  CHECK(mn >= -limit);
  CHECK(mx <= limit);
  CHECK(mx > 0.5 * limit);   // actually spreads out
  CHECK(mn < -0.5 * limit);
  CHECK(std::fabs(sum / double(w.numel())) < 0.1 * limit);

  Tensor w2({16, 8, 3, 3});
  Rng rng2(50);
  glorot_fill(w2, 8 * 9, 16 * 9, rng2);
  CHECK(std::memcmp(w.data(), w2.data(), sizeof(double) * w.numel()) == 0);
}

TEST_CASE("generator parameter budget matches the architecture") {
  for (const auto& [d, f] : {std::pair{4, 8}, std::pair{3, 4}, std::pair{2, 6}}) {
    GeneratorConfig cfg;
    cfg.depth = d;
    cfg.base_filters = f;
    const Generator gen(cfg, 1);
    CHECK(gen.param_count() == expected_gen_params(3, 3, d, f));
    // biases start at zero, batch-norm gains at one
    for (const Param& p : gen.params()) {
      if (p.name.ends_with(".b") || p.name.ends_with(".beta"))
        for (std::int64_t i = 0; i < p.value.numel(); ++i)
          CHECK(p.value[i] == 0.0);
      if (p.name.ends_with(".gamma"))
        for (std::int64_t i = 0; i < p.value.numel(); ++i)
          CHECK(p.value[i] == 1.0);
    }
  }
}

TEST_CASE("critic parameter budget matches the architecture") {
  CriticConfig cfg;
  cfg.base_filters = 8;
  cfg.n_blocks = 3;
  cfg.input_height = 32;
  cfg.input_width = 32;
  const Critic critic(cfg, 2);
  CHECK(critic.param_count() == expected_critic_params(6, 3, 8, 32, 32));

  CriticConfig uncond = cfg;
  uncond.conditional = false;
  const Critic critic2(uncond, 2);
  CHECK(critic2.param_count() == expected_critic_params(3, 3, 8, 32, 32));
}

TEST_CASE("initialization is seed-deterministic") {
  GeneratorConfig cfg;
  cfg.depth = 2;
  cfg.base_filters = 4;
  const Generator a(cfg, 7), b(cfg, 7), c(cfg, 8);
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const Tensor &pa = a.params()[i].value, &pb = b.params()[i].value,
                 &pc = c.params()[i].value;
    if (std::memcmp(pa.data(), pb.data(), sizeof(double) * pa.numel()) != 0)
      all_equal = false;
    if (std::memcmp(pa.data(), pc.data(), sizeof(double) * pa.numel()) != 0)
      any_diff = true;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("generator forward produces sigmoid-bounded mirror shapes") {
  GeneratorConfig cfg;
  cfg.depth = 3;
  cfg.base_filters = 4;
  const Generator gen(cfg, 3);
  Rng rng(51);
  const Tensor x = random_unit({2, 3, 16, 16}, rng);

  Graph g;
  const std::vector<Value> pv = gen.bind(g);
  const Tensor y = g.val(gen.forward(g, pv, g.input(x), BnMode::eval));
  REQUIRE(y.rank() == 4);
  CHECK(y.dim(0) == 2);
  CHECK(y.dim(1) == 3);
  CHECK(y.dim(2) == 16);
  CHECK(y.dim(3) == 16);
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    CHECK(y[i] > 0.0);
    CHECK(y[i] < 1.0);
  }

  SUBCASE("indivisible spatial size is a shape error") {
    const Tensor bad = random_unit({1, 3, 20, 20}, rng);
    Graph g2;
    const std::vector<Value> pv2 = gen.bind(g2);
    CHECK_THROWS_AS(gen.forward(g2, pv2, g2.input(bad), BnMode::eval),
                    ShapeError);
  }
  SUBCASE("rank-3 infer wraps and unwraps the batch") {
    const Tensor one = random_unit({3, 16, 16}, rng);
    const Tensor out = gen.infer(one);
    REQUIRE(out.rank() == 3);
    CHECK(out.dim(0) == 3);
    CHECK(out.dim(1) == 16);
    CHECK(out.dim(2) == 16);
  }
}

TEST_CASE("critic forward yields one score per sample") {
  CriticConfig cfg;
  cfg.base_filters = 4;
  cfg.n_blocks = 2;
  cfg.input_height = 16;
  cfg.input_width = 16;
  const Critic critic(cfg, 4);
  Rng rng(52);
  const Tensor cond = random_unit({3, 3, 16, 16}, rng);
  const Tensor cand = random_unit({3, 3, 16, 16}, rng);

  Graph g;
  const std::vector<Value> pv = critic.bind(g);
  const Tensor s =
      g.val(critic.forward(g, pv, g.input(cond), g.input(cand)));
  REQUIRE(s.rank() == 1);
  CHECK(s.dim(0) == 3);

  SUBCASE("conditioning actually matters") {
    Rng rng2(53);
    const Tensor cond2 = random_unit({3, 3, 16, 16}, rng2);
    Graph g2;
    const std::vector<Value> pv2 = critic.bind(g2);
    const Tensor s2 =
        g2.val(critic.forward(g2, pv2, g2.input(cond2), g2.input(cand)));
    CHECK(s[0] != s2[0]);
  }
  SUBCASE("unconditional critic ignores cond entirely") {
    CriticConfig ucfg = cfg;
    ucfg.conditional = false;
    const Critic uc(ucfg, 4);
    Graph g3;
    const std::vector<Value> pv3 = uc.bind(g3);
    const Tensor u1 = g3.val(uc.forward(g3, pv3, g3.input(cond), g3.input(cand)));
    Graph g4;
    const std::vector<Value> pv4 = uc.bind(g4);
    const Tensor u2 = g4.val(uc.forward(g4, pv4, Value{}, g4.input(cand)));
    CHECK(u1[0] == doctest::Approx(u2[0]).epsilon(1e-15));
  }
  SUBCASE("wrong spatial size for the head is a shape error") {
    Rng rng3(54);
    const Tensor small = random_unit({2, 3, 8, 8}, rng3);
    Graph g5;
    const std::vector<Value> pv5 = critic.bind(g5);
    CHECK_THROWS_AS(critic.forward(g5, pv5, g5.input(small), g5.input(small)),
                    ShapeError);
  }
}

TEST_CASE("batch norm modes: batch statistics vs running statistics") {
  Rng rng(55);
  const Tensor x = random_unit({4, 2, 3, 3}, rng);
  const Tensor gamma({2}, 1.0);
  const Tensor beta({2}, 0.0);

  // Oracle: per-channel batch mean/population variance by plain loops.
  double mean[2] = {0, 0}, var[2] = {0, 0};
  const std::int64_t per_ch = 4 * 9;
  for (int s = 0; s < 4; ++s)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 9; ++i)
        mean[c] += x[(s * 2 + c) * 9 + i];
  for (int c = 0; c < 2; ++c) mean[c] /= double(per_ch);
  for (int s = 0; s < 4; ++s)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 9; ++i) {
        const double d = x[(s * 2 + c) * 9 + i] - mean[c];
        var[c] += d * d;
      }
  for (int c = 0; c < 2; ++c) var[c] /= double(per_ch);

  SUBCASE("train mode normalizes by batch stats and updates running stats") {
    BnState st{"bn", Tensor({2}, 0.5), Tensor({2}, 2.0)};
    Graph g;
    const Tensor y = g.val(batch_norm(g, g.input(x), g.input(gamma),
                                      g.input(beta), st, BnMode::train));
    // Output matches the hand-computed normalization.
    for (int s = 0; s < 4; ++s)
      for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 9; ++i) {
          const double expect = (x[(s * 2 + c) * 9 + i] - mean[c]) /
                                std::sqrt(var[c] + 1e-5);
          CHECK(y[(s * 2 + c) * 9 + i] == doctest::Approx(expect).epsilon(1e-9));
        }
    // Running stats moved by momentum 0.1 toward the batch stats.
    for (int c = 0; c < 2; ++c) {
      CHECK(st.mean[c] == doctest::Approx(0.9 * 0.5 + 0.1 * mean[c]).epsilon(1e-12));
      CHECK(st.var[c] == doctest::Approx(0.9 * 2.0 + 0.1 * var[c]).epsilon(1e-12));
    }
  }
  SUBCASE("batch_stats mode leaves running stats untouched") {
    BnState st{"bn", Tensor({2}, 0.5), Tensor({2}, 2.0)};
    Graph g;
    (void)g.val(batch_norm(g, g.input(x), g.input(gamma), g.input(beta), st,
                           BnMode::batch_stats));
    CHECK(st.mean[0] == 0.5);
    CHECK(st.var[1] == 2.0);
  }
  SUBCASE("eval mode uses the running statistics") {
    BnState st{"bn", Tensor({2}, 0.25), Tensor({2}, 4.0)};
    Graph g;
    const Tensor y = g.val(batch_norm(g, g.input(x), g.input(gamma),
                                      g.input(beta), st, BnMode::eval));
    for (std::int64_t i = 0; i < 5; ++i) {
      const int c = static_cast<int>((i / 9) % 2);
      const double expect = (x[i] - 0.25) / std::sqrt(4.0 + 1e-5);
      (void)c;
      CHECK(y[i] == doctest::Approx(expect).epsilon(1e-9));
    }
  }
}

TEST_CASE("generator train-mode forward updates bn running stats; eval does not") {
  GeneratorConfig cfg;
  cfg.depth = 2;
  cfg.base_filters = 4;
  Generator gen(cfg, 9);
  Rng rng(56);
  const Tensor x = random_unit({2, 3, 8, 8}, rng);

  const Tensor before = gen.bn_states()[0].mean;
  {
    Graph g;
    const std::vector<Value> pv = gen.bind(g);
    (void)g.val(gen.forward(g, pv, g.input(x), BnMode::eval));
  }
  CHECK(std::memcmp(gen.bn_states()[0].mean.data(), before.data(),
                    sizeof(double) * before.numel()) == 0);
  {
    Graph g;
    const std::vector<Value> pv = gen.bind(g);
    (void)g.val(gen.forward(g, pv, g.input(x), BnMode::train));
  }
  CHECK(std::memcmp(gen.bn_states()[0].mean.data(), before.data(),
                    sizeof(double) * before.numel()) != 0);
}

TEST_CASE("adam first step matches the closed form") {
  // With fresh moments, mhat = g and vhat = g^2, so the update is
  // lr * g / (|g| + eps) independent of beta values.
  std::vector<Param> params;
  params.push_back({"p", Tensor({3}, 0.0)});
  params[0].value[0] = 1.0;
  params[0].value[1] = -2.0;
  params[0].value[2] = 0.5;
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.beta1 = 0.5;
  cfg.beta2 = 0.9;
  cfg.eps = 1e-8;
  Adam opt(cfg, params);

  std::vector<Tensor> grads = {Tensor({3}, 0.0)};
  grads[0][0] = 0.3;
  grads[0][1] = -0.7;
  grads[0][2] = 0.0;
  opt.step(params, grads);
  CHECK(opt.t() == 1);
  CHECK(params[0].value[0] ==
        doctest::Approx(1.0 - 0.1 * 0.3 / (0.3 + 1e-8)).epsilon(1e-12));
  CHECK(params[0].value[1] ==
        doctest::Approx(-2.0 + 0.1 * 0.7 / (0.7 + 1e-8)).epsilon(1e-12));
  CHECK(params[0].value[2] == 0.5);  // zero grad, zero move

  SUBCASE("second step uses decayed moments") {
    // Closed form for step 2 with constant gradient g:
    // m2 = (1-b1)(b1+1)g, v2 = (1-b2)(b2+1)g^2; bias corrections
    // 1-b1^2, 1-b2^2 give mhat = g, vhat = g^2 again.
    const double p0 = params[0].value[0];
    opt.step(params, grads);
    CHECK(params[0].value[0] ==
          doctest::Approx(p0 - 0.1 * 0.3 / (0.3 + 1e-8)).epsilon(1e-9));
  }
  SUBCASE("shape mismatch is rejected") {
    std::vector<Tensor> bad = {Tensor({2}, 0.0)};
    CHECK_THROWS_AS(opt.step(params, bad), ShapeError);
  }
}

TEST_CASE("checkpoint round-trip preserves networks bit-for-bit") {
  const fs::path dir = fs::temp_directory_path() / "slicerec_test_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);

  GeneratorConfig gcfg;
  gcfg.depth = 2;
  gcfg.base_filters = 4;
  CriticConfig ccfg;
  ccfg.base_filters = 4;
  ccfg.n_blocks = 2;
  ccfg.input_height = 8;
  ccfg.input_width = 8;

  Generator gen(gcfg, 11);
  Critic critic(ccfg, 12);
  Rng rng(57);
  // Perturb a bn state so the round trip carries nontrivial stats.
  gen.bn_states()[1].mean[0] = 0.123456789012345;

  CheckpointData ckpt;
  ckpt.gen_cfg = gcfg;
  ckpt.critic_cfg = ccfg;
  ckpt.has_critic = true;
  ckpt.objective = Objective::wgan_gp_l1;
  ckpt.seed = 42;
  ckpt.step = 137;
  ckpt.preprocess.pad_to_width = 80;
  ckpt.preprocess.range_mode = PreprocessConfig::RangeMode::explicit_range;
  ckpt.preprocess.lo = 2;
  ckpt.preprocess.hi = 9;
  ckpt.gen_params = gen.params();
  ckpt.gen_bn = gen.bn_states();
  ckpt.critic_params = critic.params();
  ckpt.gen_adam_t = 5;
  for (const Param& p : gen.params()) {
    ckpt.gen_adam_m.push_back({p.name, Tensor(p.value.shape(), 0.25)});
    ckpt.gen_adam_v.push_back({p.name, Tensor(p.value.shape(), 0.5)});
  }

  const fs::path file = dir / "model.ckpt";
  save_checkpoint(ckpt, file);
  const CheckpointData r = load_checkpoint(file);

  CHECK(r.objective == Objective::wgan_gp_l1);
  CHECK(r.seed == 42);
  CHECK(r.step == 137);
  CHECK(r.has_critic);
  CHECK(r.gen_cfg.depth == 2);
  CHECK(r.critic_cfg.input_height == 8);
  CHECK(r.preprocess.pad_to_width == 80);
  CHECK(r.preprocess.lo == 2);
  CHECK(r.gen_adam_t == 5);
  REQUIRE(r.gen_params.size() == ckpt.gen_params.size());
  for (std::size_t i = 0; i < r.gen_params.size(); ++i) {
    CHECK(r.gen_params[i].name == ckpt.gen_params[i].name);
    CHECK(std::memcmp(r.gen_params[i].value.data(),
                      ckpt.gen_params[i].value.data(),
                      sizeof(double) * r.gen_params[i].value.numel()) == 0);
  }
  CHECK(r.gen_bn[1].mean[0] == 0.123456789012345);
  CHECK(r.gen_adam_m[0].value[0] == 0.25);

  SUBCASE("reloaded generator reproduces inference bit-for-bit") {
    const Tensor x = random_unit({3, 8, 8}, rng);
    const Tensor y0 = gen.infer(x);
    const Generator gen2 = generator_from_checkpoint(r);
    const Tensor y1 = gen2.infer(x);
    CHECK(std::memcmp(y0.data(), y1.data(), sizeof(double) * y0.numel()) == 0);
  }
  SUBCASE("critic reload matches too") {
    const Critic c2 = critic_from_checkpoint(r);
    REQUIRE(c2.params().size() == critic.params().size());
    for (std::size_t i = 0; i < c2.params().size(); ++i)
      CHECK(std::memcmp(c2.params()[i].value.data(),
                        critic.params()[i].value.data(),
                        sizeof(double) * c2.params()[i].value.numel()) == 0);
  }
  SUBCASE("a truncated checkpoint is rejected") {
    std::ifstream in(file, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    const fs::path trunc = dir / "trunc.ckpt";
    std::ofstream out(trunc, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(trunc), FormatError);
  }
  SUBCASE("a dice checkpoint carries no critic") {
    CheckpointData d = ckpt;
    d.has_critic = false;
    d.critic_params.clear();
    d.objective = Objective::dice;
    const fs::path df = dir / "dice.ckpt";
    save_checkpoint(d, df);
    const CheckpointData rd = load_checkpoint(df);
    CHECK_FALSE(rd.has_critic);
    CHECK_THROWS_AS(critic_from_checkpoint(rd), FormatError);
  }
}

TEST_CASE("a tiny generator's parameter gradients pass spot finite differences") {
  GeneratorConfig cfg;
  cfg.depth = 2;
  cfg.base_filters = 2;
  const Generator gen(cfg, 21);
  Rng rng(58);
  const Tensor x = random_unit({1, 3, 8, 8}, rng);
  const Tensor t = random_unit({1, 3, 8, 8}, rng);

  auto loss_at = [&](const std::vector<Param>& ps) {
    Graph g;
    std::vector<Value> pv;
    pv.reserve(ps.size());
    for (const Param& p : ps) pv.push_back(g.input(p.value));
    Value y = gen.forward(g, pv, g.input(x), BnMode::batch_stats);
    Value diff = g.sub(y, g.input(t));
    return g.val(g.mean_all(g.square(diff)))[0];
  };

  Graph g;
  const std::vector<Value> pv = gen.bind(g);
  Value y = gen.forward(g, pv, g.input(x), BnMode::batch_stats);
  Value loss = g.mean_all(g.square(g.sub(y, g.input(t))));
  const std::vector<Value> grads = g.backward(loss, pv);

  // Spot-check a handful of coordinates in every parameter tensor.
  Rng pick(59);
  for (std::size_t i = 0; i < pv.size(); ++i) {
    REQUIRE(grads[i].valid());
    const Tensor& gt = g.val(grads[i]);
    const std::vector<Param>& base = gen.params();
    for (int rep = 0; rep < 3; ++rep) {
      const std::int64_t e =
          static_cast<std::int64_t>(pick.bounded(static_cast<std::uint64_t>(gt.numel())));
      std::vector<Param> plus = base, minus = base;
      const double eps = 1e-5;
      plus[i].value[e] += eps;
      minus[i].value[e] -= eps;
      const double fd = (loss_at(plus) - loss_at(minus)) / (2 * eps);
      const double scale = std::max({1.0, std::fabs(fd), std::fabs(gt[e])});
      INFO("param ", gen.params()[i].name, " elem ", e);
      CHECK(std::fabs(fd - gt[e]) <= 2e-5 * scale);
    }
  }
}
