#include "slicerec/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>

namespace slicerec {

std::string profile_str(ScaleProfile p) {
  return p == ScaleProfile::desk ? "desk" : "paper";
}

ScaleProfile profile_parse(const std::string& s) {
  if (s == "desk") return ScaleProfile::desk;
  if (s == "paper") return ScaleProfile::paper;
  throw ConfigError("unknown profile '" + s + "' (expected desk or paper)");
}

void TrainConfig::apply_profile() {
  if (profile == ScaleProfile::desk) {
    gen.base_filters = 8;
    critic.base_filters = 8;
    steps = 2000;
    batch_size = 8;
  } else {
    gen.base_filters = 64;
    critic.base_filters = 64;
    steps = loss.adversarial() ? 300000 : 600000;
    batch_size = loss.adversarial() ? 32 : 64;
  }
}

void TrainConfig::validate() const {
  loss.validate();
  gen.validate();
  if (loss.adversarial()) critic.validate();
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  for (double b : {adam_beta1, adam_beta2})
    if (b >= 1.0) throw ConfigError("adam betas must be < 1");
}

double TrainConfig::beta1() const {
  if (adam_beta1 >= 0) return adam_beta1;
  return loss.adversarial() ? 0.5 : 0.9;
}

double TrainConfig::beta2() const {
  if (adam_beta2 >= 0) return adam_beta2;
  return loss.adversarial() ? 0.9 : 0.999;
}

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_log_tsv(const std::vector<TrainLogRow>& rows,
                   const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out)
    throw FormatError("cannot open train log '" + path.string() + "' for writing");
  out << "step\tgen_total\tgen_adv\tgen_rec\tcritic_wasserstein\tcritic_penalty\n";
  for (const TrainLogRow& r : rows)
    out << r.step << '\t' << fmt_g(r.gen_total) << '\t' << fmt_g(r.gen_adv)
        << '\t' << fmt_g(r.gen_rec) << '\t' << fmt_g(r.critic_wasserstein)
        << '\t' << fmt_g(r.critic_penalty) << '\n';
}

}  // namespace

TrainResult train_on_pairs(const TrainConfig& cfg,
                           const std::vector<WindowPair>& pairs,
                           const std::filesystem::path& out_dir,
                           const TrainCallback& on_log) {
  cfg.validate();
  if (pairs.empty()) throw DataError("no window pairs to train on");
  const int h = pairs[0].input.dim(1);
  const int w = pairs[0].input.dim(2);
  for (const WindowPair& p : pairs) {
    if (p.input.rank() != 3 || p.input.dim(0) != kWindowIn ||
        p.input.dim(1) != h || p.input.dim(2) != w ||
        !p.target.same_shape(p.input))
      throw ShapeError("window pairs must share one [3," + std::to_string(h) +
                       "," + std::to_string(w) + "] geometry");
  }

  GeneratorConfig gcfg = cfg.gen;
  gcfg.in_channels = kWindowIn;
  gcfg.out_channels = kWindowOut;
  const int dv = gcfg.spatial_divisor();
  if (h % dv != 0 || w % dv != 0)
    throw ShapeError("slice geometry " + std::to_string(h) + "x" +
                     std::to_string(w) + " is not divisible by " +
                     std::to_string(dv) +
                     "; pad the volume (preprocess.pad_to_width) or resize");

  const Rng root(cfg.seed);
  Generator gen(gcfg, root.fork(1).seed());
  std::optional<Critic> critic;
  if (cfg.loss.adversarial()) {
    CriticConfig ccfg = cfg.critic;
    ccfg.stack_channels = kWindowIn;
    ccfg.input_height = h;
    ccfg.input_width = w;
    critic.emplace(ccfg, root.fork(2).seed());
  }
  Rng order_rng = root.fork(3);
  Rng gp_rng = root.fork(4);

  const AdamConfig acfg{cfg.learning_rate, cfg.beta1(), cfg.beta2(), 1e-8};
  Adam opt_g(acfg, gen.params());
  std::optional<Adam> opt_c;
  if (critic) opt_c.emplace(acfg, critic->params());

  std::vector<int> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  auto next_batch = [&] {
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int i = 0; i < cfg.batch_size; ++i) {
      if (cursor == order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    return idx;
  };
  const std::int64_t plane = static_cast<std::int64_t>(kWindowIn) * h * w;
  auto stack_batch = [&](const std::vector<int>& idx, bool inputs) {
    Tensor out({static_cast<int>(idx.size()), kWindowIn, h, w});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Tensor& src =
          inputs ? pairs[static_cast<std::size_t>(idx[i])].input
                 : pairs[static_cast<std::size_t>(idx[i])].target;
      std::memcpy(out.data() + static_cast<std::int64_t>(i) * plane, src.data(),
                  static_cast<std::size_t>(plane) * sizeof(double));
    }
    return out;
  };

  auto snapshot = [&](std::int64_t step) {
    CheckpointData c;
    c.gen_cfg = gen.config();
    c.critic_cfg = critic ? critic->config() : cfg.critic;
    c.has_critic = critic.has_value();
    c.objective = cfg.loss.objective;
    c.seed = cfg.seed;
    c.step = step;
    c.preprocess = cfg.preprocess;
    c.gen_params = gen.params();
    c.gen_bn = gen.bn_states();
    c.gen_adam_t = opt_g.t();
    c.gen_adam_m = opt_g.moments1();
    c.gen_adam_v = opt_g.moments2();
    if (critic) {
      c.critic_params = critic->params();
      c.critic_adam_t = opt_c->t();
      c.critic_adam_m = opt_c->moments1();
      c.critic_adam_v = opt_c->moments2();
    }
    return c;
  };

  const bool logging = !out_dir.empty();
  if (logging) std::filesystem::create_directories(out_dir);

  TrainResult result;
  CheckpointData last_good = snapshot(0);

  auto materialize = [&](const std::vector<Value>& vals, Graph& g,
                         const std::vector<Param>& ps) {
    std::vector<Tensor> out(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i)
      out[i] = vals[i].valid() ? g.val(vals[i])
                               : Tensor(ps[i].value.shape(), 0.0);
    return out;
  };
  auto diverged = [&](std::int64_t step, const std::string& what) {
    if (logging) {
      save_checkpoint(last_good, out_dir / "last_good.ckpt");
      write_log_tsv(result.log, out_dir / "train_log.tsv");
    }
    throw DivergenceError("non-finite " + what + " at step " +
                          std::to_string(step) +
                          "; last finite-loss checkpoint retained");
  };

  for (std::int64_t step = 1; step <= cfg.steps; ++step) {
    TrainLogRow row;
    row.step = step;

    if (critic) {
      for (int cstep = 0; cstep < cfg.loss.critic_steps; ++cstep) {
        const std::vector<int> idx = next_batch();
        Graph g;
        const std::vector<Value> gpv = gen.bind(g);
        const Value cond = g.input(stack_batch(idx, true));
        const Value fake_attached =
            gen.forward(g, gpv, cond, BnMode::batch_stats);
        const Value fake = g.input(g.val(fake_attached));  // detach
        const Value real = g.input(stack_batch(idx, false));
        const std::vector<Value> cpv = critic->bind(g);
        const CriticFn cfn = [&](Graph& gg, Value c2, Value cand) {
          return critic->forward(gg, cpv, c2, cand);
        };
        const CriticLossParts parts =
            critic_loss(g, cfn, cond, real, fake, cfg.loss, gp_rng);
        if (!std::isfinite(g.val(parts.total)[0]))
          diverged(step, "critic loss");
        const std::vector<Value> gv = g.backward(parts.total, cpv);
        const std::vector<Tensor> grads = materialize(gv, g, critic->params());
        for (const Tensor& t : grads)
          if (!t.all_finite()) diverged(step, "critic gradient");
        opt_c->step(critic->params(), grads);
        row.critic_wasserstein = parts.wasserstein;
        row.critic_penalty = parts.penalty;
      }
    }

    {
      const std::vector<int> idx = next_batch();
      Graph g;
      const std::vector<Value> gpv = gen.bind(g);
      const Value cond = g.input(stack_batch(idx, true));
      const Value fake = gen.forward(g, gpv, cond, BnMode::train);
      const Value target = g.input(stack_batch(idx, false));
      std::vector<Value> cpv;
      std::optional<CriticFn> cfn;
      if (critic) {
        cpv = critic->bind(g);
        cfn = [&](Graph& gg, Value c2, Value cand) {
          return critic->forward(gg, cpv, c2, cand);
        };
      }
      const GeneratorLossParts parts = generator_loss(
          g, cfn ? &*cfn : nullptr, cond, fake, target, cfg.loss);
      row.gen_total = g.val(parts.total)[0];
      row.gen_adv = parts.adversarial;
      row.gen_rec = parts.reconstruction;
      if (!std::isfinite(row.gen_total)) diverged(step, "generator loss");
      const std::vector<Value> gv = g.backward(parts.total, gpv);
      const std::vector<Tensor> grads = materialize(gv, g, gen.params());
      for (const Tensor& t : grads)
        if (!t.all_finite()) diverged(step, "generator gradient");
      opt_g.step(gen.params(), grads);
    }

    last_good = snapshot(step);
    if (step == 1 || step % cfg.log_every == 0 || step == cfg.steps) {
      result.log.push_back(row);
      if (on_log) on_log(row);
    }
    if (logging && cfg.checkpoint_every > 0 &&
        step % cfg.checkpoint_every == 0 && step != cfg.steps) {
      char name[40];
      std::snprintf(name, sizeof name, "ckpt_%06lld.ckpt",
                    static_cast<long long>(step));
      save_checkpoint(last_good, out_dir / name);
    }
  }

  result.checkpoint = snapshot(cfg.steps);
  if (logging) {
    save_checkpoint(result.checkpoint, out_dir / "final.ckpt");
    write_log_tsv(result.log, out_dir / "train_log.tsv");
  }
  return result;
}

TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest,
                  const std::filesystem::path& manifest_dir,
                  const std::filesystem::path& out_dir,
                  const TrainCallback& on_log) {
  cfg.validate();
  manifest.validate();
  const std::vector<const ManifestEntry*> train_entries =
      manifest.split_entries(Split::train);
  if (train_entries.empty())
    throw DataError("manifest has no scans in the train split");
  // Healthy-only regime, checked before any pixel data is read.
  for (const ManifestEntry* e : train_entries)
    if (e->cdr != Cdr::zero)
      throw RegimeViolationError(
          "scan '" + e->scan_id + "' with cdr " + cdr_str(e->cdr) +
          " sits in the train split; training data must be healthy (cdr 0)");

  std::vector<WindowPair> pairs;
  std::vector<std::string> used;
  for (const ManifestEntry* e : train_entries) {
    Volume v = load_manifest_volume(manifest_dir, *e);
    if (v.cdr != Cdr::zero)
      throw RegimeViolationError("scan '" + v.scan_id +
                                 "' is not healthy; refusing to train on it");
    const Volume p = preprocess_volume(v, cfg.preprocess);
    std::vector<WindowPair> wp = make_window_pairs(p);
    if (wp.empty())
      throw DataError("scan '" + v.scan_id + "' yields no window pairs (" +
                      std::to_string(p.n_slices()) +
                      " slices after preprocessing; need 6)");
    pairs.insert(pairs.end(), std::make_move_iterator(wp.begin()),
                 std::make_move_iterator(wp.end()));
    used.push_back(e->scan_id);
  }
  TrainResult result = train_on_pairs(cfg, pairs, out_dir, on_log);
  result.scans_used = std::move(used);
  return result;
}

std::vector<Reconstruction> reconstruct_volume(const CheckpointData& ckpt,
                                               const Volume& preprocessed) {
  const Generator gen = generator_from_checkpoint(ckpt);
  const std::vector<WindowPair> pairs = make_window_pairs(preprocessed);
  if (pairs.empty())
    throw DataError("scan '" + preprocessed.scan_id + "' yields no window pairs (" +
                    std::to_string(preprocessed.n_slices()) +
                    " slices after preprocessing; need 6)");
  const int h = preprocessed.height();
  const int w = preprocessed.width();
  const int n = static_cast<int>(pairs.size());
  // One batched eval-mode forward over all window positions.
  Tensor batch({n, kWindowIn, h, w});
  const std::int64_t plane = static_cast<std::int64_t>(kWindowIn) * h * w;
  for (int i = 0; i < n; ++i)
    std::memcpy(batch.data() + i * plane, pairs[static_cast<std::size_t>(i)].input.data(),
                static_cast<std::size_t>(plane) * sizeof(double));
  const Tensor preds = gen.infer(batch);
  std::vector<Reconstruction> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Reconstruction r;
    r.pair = pairs[static_cast<std::size_t>(i)];
    r.prediction = Tensor::from_data(
        {kWindowOut, h, w},
        std::vector<double>(preds.data() + i * plane,
                            preds.data() + (i + 1) * plane));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace slicerec
