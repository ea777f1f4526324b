#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "doctest.h"
#include "slicerec/errors.hpp"
#include "slicerec/phantom.hpp"
#include "slicerec/trainer.hpp"

namespace fs = std::filesystem;
using namespace slicerec;
using slicerec::ad::Tensor;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path d = fs::temp_directory_path() / ("slicerec_trainer_" + tag);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Small, fast phantoms whose geometry fits a depth-2 network.
PhantomSpec tiny_spec(std::uint64_t seed) {
  PhantomSpec s;
  s.seed = seed;
  s.n_train_healthy = 2;
  s.n_val_healthy = 1;
  s.n_val_anomalous = 1;
  s.n_test_healthy = 1;
  s.n_test_anomalous = 1;
  s.slices_per_volume = 8;
  s.height = 24;
  s.width = 24;
  return s;
}

TrainConfig tiny_config(Objective obj) {
  TrainConfig cfg;
  cfg.loss.objective = obj;
  cfg.gen.depth = 2;
  cfg.gen.base_filters = 4;
  cfg.critic.n_blocks = 2;
  cfg.critic.base_filters = 4;
  cfg.steps = 3;
  cfg.batch_size = 2;
  cfg.seed = 11;
  cfg.log_every = 1;
  cfg.preprocess.range_mode = PreprocessConfig::RangeMode::full;
  return cfg;
}

std::vector<WindowPair> phantom_pairs(const PhantomSpec& spec) {
  const PhantomDataset ds = generate_phantoms(spec);
  std::vector<WindowPair> pairs;
  for (const Volume& v : ds.volumes) {
    if (v.split != Split::train) continue;
    const auto wp = make_window_pairs(normalize_volume(v));
    pairs.insert(pairs.end(), wp.begin(), wp.end());
  }
  return pairs;
}

double heldout_l1(const CheckpointData& ckpt, const Volume& vol) {
  const std::vector<Reconstruction> recon = reconstruct_volume(ckpt, vol);
  double total = 0;
  for (const Reconstruction& r : recon)
    total += l1_distance(r.prediction, r.pair.target);
  return total / static_cast<double>(recon.size());
}

}  // namespace

TEST_CASE("profiles fill scale defaults that explicit fields override") {
  CHECK(profile_parse("desk") == ScaleProfile::desk);
  CHECK(profile_parse("paper") == ScaleProfile::paper);
  CHECK_THROWS_AS(profile_parse("pocket"), ConfigError);

  TrainConfig desk;
  desk.profile = ScaleProfile::desk;
  desk.apply_profile();
  CHECK(desk.gen.base_filters == 8);
  CHECK(desk.critic.base_filters == 8);
  CHECK(desk.steps == 2000);
  CHECK(desk.batch_size == 8);

  TrainConfig paper;
  paper.profile = ScaleProfile::paper;
  paper.apply_profile();
  CHECK(paper.gen.base_filters == 64);
  CHECK(paper.steps == 300000);  // adversarial default objective
  CHECK(paper.batch_size == 32);

  TrainConfig paper_dice = paper;
  paper_dice.loss.objective = Objective::dice;
  paper_dice.apply_profile();
  CHECK(paper_dice.steps == 600000);
  CHECK(paper_dice.batch_size == 64);
}

TEST_CASE("adam betas default by objective and yield to explicit values") {
  TrainConfig adv;
  CHECK(adv.beta1() == 0.5);
  CHECK(adv.beta2() == 0.9);
  TrainConfig dice;
  dice.loss.objective = Objective::dice;
  CHECK(dice.beta1() == 0.9);
  CHECK(dice.beta2() == 0.999);
  dice.adam_beta1 = 0.25;
  dice.adam_beta2 = 0.75;
  CHECK(dice.beta1() == 0.25);
  CHECK(dice.beta2() == 0.75);

  TrainConfig bad;
  bad.adam_beta1 = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("training runs end to end, logs, and checkpoints deterministically") {
  const std::vector<WindowPair> pairs = phantom_pairs(tiny_spec(3));
  REQUIRE(pairs.size() == 6);  // 2 scans x (8 - 5)

  TrainConfig cfg = tiny_config(Objective::wgan_gp_l1);
  const fs::path dir = temp_dir("run");
  const TrainResult r1 = train_on_pairs(cfg, pairs, dir);

  CHECK(fs::exists(dir / "final.ckpt"));
  CHECK(fs::exists(dir / "train_log.tsv"));
  CHECK(r1.checkpoint.step == 3);
  CHECK(r1.checkpoint.has_critic);
  CHECK(r1.checkpoint.objective == Objective::wgan_gp_l1);
  REQUIRE(r1.log.size() == 3);  // log_every = 1
  CHECK(r1.log.front().step == 1);
  CHECK(r1.log.back().step == 3);
  for (const TrainLogRow& row : r1.log) {
    CHECK(std::isfinite(row.gen_total));
    CHECK(std::isfinite(row.critic_wasserstein));
    CHECK(row.gen_rec > 0.0);  // l1 part of a fresh model is strictly positive
  }

  SUBCASE("the same seed reproduces the run bit-for-bit") {
    const TrainResult r2 = train_on_pairs(cfg, pairs, "");
    REQUIRE(r2.checkpoint.gen_params.size() == r1.checkpoint.gen_params.size());
    for (std::size_t i = 0; i < r1.checkpoint.gen_params.size(); ++i) {
      const Tensor& a = r1.checkpoint.gen_params[i].value;
      const Tensor& b = r2.checkpoint.gen_params[i].value;
      CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.numel()) == 0);
    }
    for (std::size_t i = 0; i < r1.checkpoint.critic_params.size(); ++i) {
      const Tensor& a = r1.checkpoint.critic_params[i].value;
      const Tensor& b = r2.checkpoint.critic_params[i].value;
      CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.numel()) == 0);
    }
    CHECK(r2.log.size() == r1.log.size());
    for (std::size_t i = 0; i < r1.log.size(); ++i)
      CHECK(r2.log[i].gen_total == r1.log[i].gen_total);
  }
  SUBCASE("a different seed diverges in parameters") {
    TrainConfig other = cfg;
    other.seed = 12;
    const TrainResult r3 = train_on_pairs(other, pairs, "");
    const Tensor& a = r1.checkpoint.gen_params[0].value;
    const Tensor& b = r3.checkpoint.gen_params[0].value;
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.numel()) != 0);
  }
  SUBCASE("periodic checkpoints appear at the requested cadence") {
    TrainConfig pc = cfg;
    pc.checkpoint_every = 2;
    const fs::path dir2 = temp_dir("periodic");
    (void)train_on_pairs(pc, pairs, dir2);
    CHECK(fs::exists(dir2 / "ckpt_000002.ckpt"));
    CHECK(fs::exists(dir2 / "final.ckpt"));
  }
  SUBCASE("dice objective trains without a critic") {
    TrainConfig dc = tiny_config(Objective::dice);
    const TrainResult rd = train_on_pairs(dc, pairs, "");
    CHECK_FALSE(rd.checkpoint.has_critic);
    CHECK(rd.checkpoint.critic_params.empty());
    for (const TrainLogRow& row : rd.log) {
      CHECK(row.gen_adv == 0.0);
      CHECK(row.critic_wasserstein == 0.0);
    }
  }
}

TEST_CASE("a short dice run beats an untrained model on held-out data") {
  const PhantomSpec spec = tiny_spec(5);
  const PhantomDataset ds = generate_phantoms(spec);
  std::vector<WindowPair> pairs;
  const Volume* heldout = nullptr;
  for (const Volume& v : ds.volumes) {
    if (v.split == Split::train)
      for (const auto& wp : make_window_pairs(normalize_volume(v)))
        pairs.push_back(wp);
    else if (v.split == Split::validation && v.cdr == Cdr::zero)
      heldout = &v;
  }
  REQUIRE(heldout != nullptr);
  const Volume held = normalize_volume(*heldout);

  TrainConfig cfg = tiny_config(Objective::dice);
  cfg.steps = 60;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  const TrainResult trained = train_on_pairs(cfg, pairs, "");

  // An untrained model of the same architecture, any seed.
  TrainConfig fresh = cfg;
  fresh.steps = 1;
  fresh.learning_rate = 1e-12;  // one vanishing step = effectively untrained
  const TrainResult untrained = train_on_pairs(fresh, pairs, "");

  const double trained_l1 = heldout_l1(trained.checkpoint, held);
  const double untrained_l1 = heldout_l1(untrained.checkpoint, held);
  CHECK(trained_l1 < untrained_l1);
}

TEST_CASE("non-finite data trips the divergence guard and keeps a checkpoint") {
  const std::vector<WindowPair> base = phantom_pairs(tiny_spec(7));
  std::vector<WindowPair> pairs = base;
  pairs[0].input[5] = std::numeric_limits<double>::quiet_NaN();

  TrainConfig cfg = tiny_config(Objective::wgan_gp_l1);
  cfg.batch_size = static_cast<int>(pairs.size());  // NaN lands in step 1
  const fs::path dir = temp_dir("diverge");
  CHECK_THROWS_AS(train_on_pairs(cfg, pairs, dir), DivergenceError);
  CHECK(fs::exists(dir / "last_good.ckpt"));
  const CheckpointData last = load_checkpoint(dir / "last_good.ckpt");
  CHECK(last.step == 0);
}

TEST_CASE("window pairs must share geometry and satisfy the divisor") {
  const std::vector<WindowPair> pairs = phantom_pairs(tiny_spec(9));

  SUBCASE("mixed geometry is rejected") {
    std::vector<WindowPair> mixed = pairs;
    mixed.back().input = Tensor({3, 16, 16}, 0.5);
    mixed.back().target = Tensor({3, 16, 16}, 0.5);
    CHECK_THROWS_AS(train_on_pairs(tiny_config(Objective::dice), mixed, ""),
                    ShapeError);
  }
  SUBCASE("an indivisible geometry names the padding fix") {
    TrainConfig cfg = tiny_config(Objective::dice);
    cfg.gen.depth = 4;  // 24 % 16 != 0
    try {
      (void)train_on_pairs(cfg, pairs, "");
      FAIL("expected a shape error");
    } catch (const ShapeError& e) {
      CHECK(std::string(e.what()).find("pad") != std::string::npos);
    }
  }
  SUBCASE("no pairs at all is a data error") {
    CHECK_THROWS_AS(train_on_pairs(tiny_config(Objective::dice), {}, ""),
                    DataError);
  }
}

TEST_CASE("the manifest trainer enforces the healthy-only regime") {
  const fs::path dir = temp_dir("regime");
  const DatasetManifest written = write_phantoms(tiny_spec(13), dir);

  TrainConfig cfg = tiny_config(Objective::dice);

  SUBCASE("healthy manifest trains and records the scans used") {
    const TrainResult r = train(cfg, written, dir, "");
    CHECK(r.scans_used.size() == 2);
    CHECK(r.checkpoint.step == cfg.steps);
  }
  SUBCASE("an anomalous scan in the train split is refused before reading data") {
    DatasetManifest bad = written;
    // Point the poisoned entry at a file that does not exist: the regime
    // check must fire before any pixel access would discover that.
    ManifestEntry e = bad.entries[0];
    e.scan_id = "Z999_s0";
    e.subject_id = "Z999";
    e.cdr = Cdr::one;
    e.split = Split::train;
    e.path = "vols/absent.volr";
    bad.entries.push_back(e);
    CHECK_THROWS_AS(train(cfg, bad, dir, ""), RegimeViolationError);
  }
  SUBCASE("an empty train split is a data error") {
    DatasetManifest none = written;
    for (ManifestEntry& e : none.entries)
      if (e.split == Split::train) e.split = Split::test;
    CHECK_THROWS_AS(train(cfg, none, dir, ""), DataError);
  }
}

TEST_CASE("reconstruction slides the generator across the scan") {
  const PhantomSpec spec = tiny_spec(17);
  const PhantomDataset ds = generate_phantoms(spec);
  std::vector<WindowPair> pairs;
  for (const Volume& v : ds.volumes)
    if (v.split == Split::train)
      for (const auto& wp : make_window_pairs(normalize_volume(v)))
        pairs.push_back(wp);

  TrainConfig cfg = tiny_config(Objective::dice);
  cfg.steps = 2;
  const TrainResult r = train_on_pairs(cfg, pairs, "");

  const Volume held = normalize_volume(ds.volumes[0]);
  const std::vector<Reconstruction> recon =
      reconstruct_volume(r.checkpoint, held);
  REQUIRE(recon.size() == 3);  // 8 slices -> 3 windows
  for (std::size_t i = 0; i < recon.size(); ++i) {
    CHECK(recon[i].pair.start_index == static_cast<int>(i));
    REQUIRE(recon[i].prediction.rank() == 3);
    CHECK(recon[i].prediction.dim(0) == 3);
    CHECK(recon[i].prediction.dim(1) == 24);
    CHECK(recon[i].prediction.dim(2) == 24);
    CHECK(recon[i].prediction.all_finite());
  }

  // The batched eval pass must agree with one-at-a-time inference.
  const Generator gen = generator_from_checkpoint(r.checkpoint);
  const Tensor single = gen.infer(recon[1].pair.input);
  CHECK(std::memcmp(single.data(), recon[1].prediction.data(),
                    sizeof(double) * single.numel()) == 0);

  SUBCASE("scans too short to window are refused") {
    Volume stub = held;
    stub.slices.resize(4);
    CHECK_THROWS_AS(reconstruct_volume(r.checkpoint, stub), DataError);
  }
}
