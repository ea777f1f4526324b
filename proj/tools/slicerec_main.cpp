// slicerec: sliding-window slice-reconstruction anomaly detection pipeline.
//
// Subcommands: synth, train, reconstruct, score, evaluate. One JSON config
// drives every stage; any config field can be overridden by a flag. Each
// command echoes the resolved config next to its outputs and refuses to
// overwrite existing files unless --overwrite is given.
//
// Exit codes: 0 ok, 64 usage, 65 bad data, 66 missing input, 68 regime
// violation, 69 training divergence, 70 internal error, 73 overwrite
// refused, 78 config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "slicerec/checkpoint.hpp"
#include "slicerec/evaluation.hpp"
#include "slicerec/losses.hpp"
#include "slicerec/phantom.hpp"
#include "slicerec/run_config.hpp"
#include "slicerec/scoring.hpp"
#include "slicerec/trainer.hpp"
#include "slicerec/volume_io.hpp"
#include "slicerec/window.hpp"

namespace fs = std::filesystem;
using namespace slicerec;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;
constexpr int kExitMissingInput = 66;
constexpr int kExitRegime = 68;
constexpr int kExitDivergence = 69;
constexpr int kExitInternal = 70;
constexpr int kExitOverwrite = 73;
constexpr int kExitConfig = 78;

void check_device() {
  const char* dev = std::getenv("SLICEREC_DEVICE");
  if (dev != nullptr && *dev != '\0' && std::string(dev) != "cpu")
    throw ConfigError(std::string("SLICEREC_DEVICE='") + dev +
                      "' is not supported; this build computes on cpu only");
}

void ensure_writable(const fs::path& p, bool overwrite) {
  if (!overwrite && fs::exists(p))
    throw OverwriteRefusedError("'" + p.string() +
                                "' already exists; pass --overwrite to replace it");
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw FormatError("cannot open '" + p.string() + "' for writing");
  out << text;
  if (!out) throw FormatError("short write to '" + p.string() + "'");
}

void echo_config(const RunConfig& cfg, const fs::path& out_dir,
                 const std::string& command, bool overwrite) {
  const fs::path p = out_dir / (command + "_config.json");
  ensure_writable(p, overwrite);
  write_text(p, dump_run_config(cfg));
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Shared command-line state. optional<> fields only override the config
// when their flag was actually passed.
struct Cli {
  std::string config_path;
  std::string out_dir;
  bool overwrite = false;
  std::optional<std::uint64_t> seed;

  std::string manifest_path;
  std::string checkpoint_path;
  std::string split = "test";
  std::string validation_scores;
  std::string test_scores;

  // synth overrides
  std::optional<int> n_train_healthy, n_val_healthy, n_val_anomalous;
  std::optional<int> n_test_healthy, n_test_anomalous;
  std::optional<int> slices_per_volume, height, width;
  std::optional<double> severity, noise_sigma;

  // train overrides
  std::optional<std::string> objective, profile, slice_range;
  std::optional<double> l1_weight, gp_lambda, learning_rate, beta1, beta2;
  std::optional<double> gen_leaky, critic_leaky;
  std::optional<int> critic_steps, steps, batch_size, log_every,
      checkpoint_every, gen_filters, gen_depth, critic_filters, critic_blocks,
      pad_to_width, range_lo, range_hi;
  std::optional<bool> critic_conditional;

  // evaluate overrides
  std::optional<int> bins;
  std::optional<std::string> score;
};

RunConfig resolve_config(const Cli& cli) {
  RunConfig cfg = cli.config_path.empty() ? default_run_config()
                                          : load_run_config(cli.config_path);
  if (cli.seed) {
    cfg.synth.seed = *cli.seed;
    cfg.train.seed = *cli.seed;
  }
  auto set = [](auto& dst, const auto& src) {
    if (src) dst = *src;
  };
  set(cfg.synth.n_train_healthy, cli.n_train_healthy);
  set(cfg.synth.n_val_healthy, cli.n_val_healthy);
  set(cfg.synth.n_val_anomalous, cli.n_val_anomalous);
  set(cfg.synth.n_test_healthy, cli.n_test_healthy);
  set(cfg.synth.n_test_anomalous, cli.n_test_anomalous);
  set(cfg.synth.slices_per_volume, cli.slices_per_volume);
  set(cfg.synth.height, cli.height);
  set(cfg.synth.width, cli.width);
  set(cfg.synth.severity, cli.severity);
  set(cfg.synth.noise_sigma, cli.noise_sigma);

  if (cli.objective) cfg.train.loss.objective = objective_parse(*cli.objective);
  if (cli.profile) {
    cfg.train.profile = profile_parse(*cli.profile);
    cfg.train.apply_profile();
  }
  set(cfg.train.loss.l1_weight, cli.l1_weight);
  set(cfg.train.loss.gp_lambda, cli.gp_lambda);
  set(cfg.train.loss.critic_steps, cli.critic_steps);
  set(cfg.train.steps, cli.steps);
  set(cfg.train.batch_size, cli.batch_size);
  set(cfg.train.learning_rate, cli.learning_rate);
  set(cfg.train.adam_beta1, cli.beta1);
  set(cfg.train.adam_beta2, cli.beta2);
  set(cfg.train.log_every, cli.log_every);
  set(cfg.train.checkpoint_every, cli.checkpoint_every);
  set(cfg.train.gen.base_filters, cli.gen_filters);
  set(cfg.train.gen.depth, cli.gen_depth);
  set(cfg.train.gen.leaky_slope, cli.gen_leaky);
  set(cfg.train.critic.base_filters, cli.critic_filters);
  set(cfg.train.critic.n_blocks, cli.critic_blocks);
  set(cfg.train.critic.leaky_slope, cli.critic_leaky);
  set(cfg.train.critic.conditional, cli.critic_conditional);
  set(cfg.train.preprocess.pad_to_width, cli.pad_to_width);
  if (cli.slice_range) {
    if (*cli.slice_range == "full")
      cfg.train.preprocess.range_mode = PreprocessConfig::RangeMode::full;
    else if (*cli.slice_range == "middle40")
      cfg.train.preprocess.range_mode = PreprocessConfig::RangeMode::middle40;
    else if (*cli.slice_range == "explicit")
      cfg.train.preprocess.range_mode =
          PreprocessConfig::RangeMode::explicit_range;
    else
      throw ConfigError("--slice-range must be full, middle40 or explicit");
  }
  set(cfg.train.preprocess.lo, cli.range_lo);
  set(cfg.train.preprocess.hi, cli.range_hi);

  set(cfg.eval_bins, cli.bins);
  if (cli.score) {
    if (*cli.score == "auto") {
      cfg.score_fixed = false;
    } else {
      const auto underscore = cli.score->rfind('_');
      if (underscore == std::string::npos)
        throw ConfigError("--score must be auto or <metric>_<aggregation>");
      cfg.score_key.metric = metric_parse(cli.score->substr(0, underscore));
      cfg.score_key.agg = aggregation_parse(cli.score->substr(underscore + 1));
      cfg.score_fixed = true;
    }
  }
  return cfg;
}

fs::path require_out(const Cli& cli) {
  if (cli.out_dir.empty())
    throw ConfigError("--out DIR is required for this command");
  fs::create_directories(cli.out_dir);
  return cli.out_dir;
}

int cmd_synth(const Cli& cli) {
  const RunConfig cfg = resolve_config(cli);
  const fs::path out = require_out(cli);
  ensure_writable(out / "manifest.tsv", cli.overwrite);
  echo_config(cfg, out, "synth", cli.overwrite);
  const DatasetManifest manifest = write_phantoms(cfg.synth, out);
  std::cout << "wrote " << manifest.entries.size() << " scans under "
            << out.string() << '\n';
  return kExitOk;
}

int cmd_train(const Cli& cli) {
  const RunConfig cfg = resolve_config(cli);
  if (cli.manifest_path.empty())
    throw ConfigError("--manifest PATH is required for train");
  const fs::path out = require_out(cli);
  ensure_writable(out / "final.ckpt", cli.overwrite);
  ensure_writable(out / "train_log.tsv", cli.overwrite);
  echo_config(cfg, out, "train", cli.overwrite);
  const DatasetManifest manifest = load_manifest(cli.manifest_path);
  const fs::path manifest_dir = fs::path(cli.manifest_path).parent_path();
  const TrainResult result =
      train(cfg.train, manifest, manifest_dir, out, [](const TrainLogRow& r) {
        std::cerr << "step " << r.step << " gen " << fmt_g(r.gen_total)
                  << " rec " << fmt_g(r.gen_rec) << " wass "
                  << fmt_g(r.critic_wasserstein) << '\n';
      });
  std::cout << "trained " << result.checkpoint.step << " steps on "
            << result.scans_used.size() << " scans; checkpoint at "
            << (out / "final.ckpt").string() << '\n';
  return kExitOk;
}

// Average the overlapping window predictions of one scan into a volume
// covering slice indices [3, n).
Volume average_predictions(const Volume& pre,
                           const std::vector<Reconstruction>& recs) {
  const int n = pre.n_slices();
  const int h = pre.height();
  const int w = pre.width();
  std::vector<Slice> sum(static_cast<std::size_t>(n), Slice(h, w, 0.0));
  std::vector<int> cover(static_cast<std::size_t>(n), 0);
  for (const Reconstruction& r : recs)
    for (int c = 0; c < kWindowOut; ++c) {
      const int j = r.pair.start_index + kWindowIn + c;
      const std::size_t plane = static_cast<std::size_t>(h) * w;
      for (std::size_t p = 0; p < plane; ++p)
        sum[static_cast<std::size_t>(j)].pixels[p] +=
            r.prediction[static_cast<std::int64_t>(c * plane + p)];
      cover[static_cast<std::size_t>(j)]++;
    }
  Volume out;
  out.subject_id = pre.subject_id;
  out.scan_id = pre.scan_id + "_recon";
  out.cdr = pre.cdr;
  out.split = pre.split;
  for (int j = 0; j < n; ++j) {
    if (cover[static_cast<std::size_t>(j)] == 0) continue;
    Slice s = sum[static_cast<std::size_t>(j)];
    for (double& p : s.pixels) p /= cover[static_cast<std::size_t>(j)];
    out.slices.push_back(std::move(s));
  }
  return out;
}

// Fig.-2-style montage: targets on the top row, predictions below, for
// the central window of the scan. Binary PGM, one byte per pixel.
void write_montage(const fs::path& path, const Reconstruction& rec) {
  const int h = rec.prediction.dim(1);
  const int w = rec.prediction.dim(2);
  const int gap = 2;
  const int out_w = 3 * w + 2 * gap;
  const int out_h = 2 * h + gap;
  std::vector<unsigned char> img(static_cast<std::size_t>(out_w) * out_h, 255);
  auto blit = [&](const ad::Tensor& t, int channel, int row0, int col0) {
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double v = t[channel * plane + r * w + c];
        img[static_cast<std::size_t>(row0 + r) * out_w + col0 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
  };
  for (int c = 0; c < 3; ++c) {
    blit(rec.pair.target, c, 0, c * (w + gap));
    blit(rec.prediction, c, h + gap, c * (w + gap));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out << "P5\n" << out_w << ' ' << out_h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data()),
            static_cast<std::streamsize>(img.size()));
}

Split parse_split_flag(const std::string& s) { return split_parse(s); }

int cmd_reconstruct(const Cli& cli) {
  const RunConfig cfg = resolve_config(cli);
  if (cli.checkpoint_path.empty())
    throw ConfigError("--checkpoint PATH is required for reconstruct");
  if (cli.manifest_path.empty())
    throw ConfigError("--manifest PATH is required for reconstruct");
  const Split split = parse_split_flag(cli.split);
  const fs::path out = require_out(cli);
  const fs::path windows_tsv = out / "windows.tsv";
  ensure_writable(windows_tsv, cli.overwrite);
  echo_config(cfg, out, "reconstruct", cli.overwrite);

  const CheckpointData ckpt = load_checkpoint(cli.checkpoint_path);
  const DatasetManifest manifest = load_manifest(cli.manifest_path);
  const fs::path manifest_dir = fs::path(cli.manifest_path).parent_path();
  const std::vector<const ManifestEntry*> entries =
      manifest.split_entries(split);
  if (entries.empty())
    throw DataError("manifest has no scans in split '" + cli.split + "'");

  std::ostringstream rows;
  rows << "scan_id\tstart\tl1\tl2\tdice\tssim_loss\n";
  for (const ManifestEntry* e : entries) {
    const Volume pre =
        preprocess_volume(load_manifest_volume(manifest_dir, *e), ckpt.preprocess);
    const std::vector<Reconstruction> recs = reconstruct_volume(ckpt, pre);
    for (const Reconstruction& r : recs)
      rows << e->scan_id << '\t' << r.pair.start_index << '\t'
           << fmt_g(l1_distance(r.prediction, r.pair.target)) << '\t'
           << fmt_g(l2_distance(r.prediction, r.pair.target)) << '\t'
           << fmt_g(soft_dice_loss(r.prediction, r.pair.target)) << '\t'
           << fmt_g(ssim_loss(r.prediction, r.pair.target)) << '\n';
    const fs::path vol_path = out / (e->scan_id + "_recon.volr");
    const fs::path png_path = out / (e->scan_id + "_montage.pgm");
    ensure_writable(vol_path, cli.overwrite);
    ensure_writable(png_path, cli.overwrite);
    save_volume(average_predictions(pre, recs), vol_path);
    write_montage(png_path, recs[recs.size() / 2]);
  }
  write_text(windows_tsv, rows.str());
  std::cout << "reconstructed " << entries.size() << " scans into "
            << out.string() << '\n';
  return kExitOk;
}

std::vector<ScoreRecord> score_split(const CheckpointData& ckpt,
                                     const DatasetManifest& manifest,
                                     const fs::path& manifest_dir, Split split,
                                     const std::string& split_name) {
  const std::vector<const ManifestEntry*> entries =
      manifest.split_entries(split);
  if (entries.empty())
    throw DataError("manifest has no scans in split '" + split_name + "'");
  std::vector<ScoreRecord> records;
  records.reserve(entries.size());
  for (const ManifestEntry* e : entries) {
    const Volume pre =
        preprocess_volume(load_manifest_volume(manifest_dir, *e), ckpt.preprocess);
    const std::vector<Reconstruction> recs = reconstruct_volume(ckpt, pre);
    std::vector<ad::Tensor> preds, targets;
    preds.reserve(recs.size());
    targets.reserve(recs.size());
    for (const Reconstruction& r : recs) {
      preds.push_back(r.prediction);
      targets.push_back(r.pair.target);
    }
    records.push_back(score_scan(e->scan_id, e->cdr, preds, targets));
  }
  return records;
}

int cmd_score(const Cli& cli) {
  const RunConfig cfg = resolve_config(cli);
  if (cli.checkpoint_path.empty())
    throw ConfigError("--checkpoint PATH is required for score");
  if (cli.manifest_path.empty())
    throw ConfigError("--manifest PATH is required for score");
  const Split split = parse_split_flag(cli.split);
  const fs::path out = require_out(cli);
  const fs::path table = out / ("scores_" + cli.split + ".tsv");
  ensure_writable(table, cli.overwrite);
  echo_config(cfg, out, "score_" + cli.split, cli.overwrite);

  const CheckpointData ckpt = load_checkpoint(cli.checkpoint_path);
  const DatasetManifest manifest = load_manifest(cli.manifest_path);
  const std::vector<ScoreRecord> records =
      score_split(ckpt, manifest, fs::path(cli.manifest_path).parent_path(),
                  split, cli.split);
  std::ostringstream ss;
  write_score_table(records, ss);
  write_text(table, ss.str());
  std::cout << "scored " << records.size() << " scans into " << table.string()
            << '\n';
  return kExitOk;
}

std::vector<ScoreRecord> load_scores(const std::string& path,
                                     const char* what) {
  if (path.empty())
    throw ConfigError(std::string("--") + what + " PATH is required for evaluate");
  std::ifstream in(path);
  if (!in)
    throw MissingInputError(std::string("cannot open ") + what + " table '" +
                            path + "'");
  return read_score_table(in);
}

int cmd_evaluate(const Cli& cli) {
  const RunConfig cfg = resolve_config(cli);
  const fs::path out = require_out(cli);
  ensure_writable(out / "report.txt", cli.overwrite);
  ensure_writable(out / "roc.tsv", cli.overwrite);
  ensure_writable(out / "histogram.tsv", cli.overwrite);
  echo_config(cfg, out, "evaluate", cli.overwrite);

  const std::vector<ScoreRecord> validation =
      load_scores(cli.validation_scores, "validation-scores");
  const std::vector<ScoreRecord> test = load_scores(cli.test_scores, "test-scores");

  ScoreSelection selection;
  if (cfg.score_fixed) {
    // Fixed score: keep its validation AUC for provenance.
    std::vector<double> scores;
    std::vector<int> labels;
    for (const ScoreRecord& r : validation) {
      scores.push_back(r.score(cfg.score_key.metric, cfg.score_key.agg));
      labels.push_back(r.cdr == Cdr::zero ? 0 : 1);
    }
    selection.key = cfg.score_key;
    selection.validation_auc = auc(scores, labels);
  } else {
    selection = select_score(validation);
  }

  const EvalReport report = evaluate_staged(test, selection, cfg.eval_bins);
  std::ostringstream rep, roc, hist;
  write_report(report, rep);
  write_roc_table(report, roc);
  write_histogram_table(report, hist);
  write_text(out / "report.txt", rep.str());
  write_text(out / "roc.tsv", roc.str());
  write_text(out / "histogram.tsv", hist.str());
  std::cout << "selected " << selection.key.str() << " (validation auc "
            << fmt_g(selection.validation_auc) << "); overall test auc "
            << fmt_g(report.overall.auc) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sliding-window slice reconstruction for anomaly detection"};
  app.require_subcommand(1);
  Cli cli;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", cli.config_path, "JSON config file");
    sub->add_option("--out", cli.out_dir, "output directory");
    sub->add_flag("--overwrite", cli.overwrite,
                  "replace existing output files");
    sub->add_option("--seed", cli.seed, "override the stage seed");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a phantom dataset");
  add_common(synth);
  synth->add_option("--n-train-healthy", cli.n_train_healthy);
  synth->add_option("--n-val-healthy", cli.n_val_healthy);
  synth->add_option("--n-val-anomalous", cli.n_val_anomalous);
  synth->add_option("--n-test-healthy", cli.n_test_healthy);
  synth->add_option("--n-test-anomalous", cli.n_test_anomalous);
  synth->add_option("--slices-per-volume", cli.slices_per_volume);
  synth->add_option("--height", cli.height);
  synth->add_option("--width", cli.width);
  synth->add_option("--severity", cli.severity);
  synth->add_option("--noise-sigma", cli.noise_sigma);

  CLI::App* train_cmd = app.add_subcommand("train", "train the reconstructor");
  add_common(train_cmd);
  train_cmd->add_option("--manifest", cli.manifest_path, "dataset manifest");
  train_cmd->add_option("--objective", cli.objective,
                        "dice | wgan_gp | wgan_gp_l1");
  train_cmd->add_option("--profile", cli.profile, "desk | paper");
  train_cmd->add_option("--l1-weight", cli.l1_weight);
  train_cmd->add_option("--gp-lambda", cli.gp_lambda);
  train_cmd->add_option("--critic-steps", cli.critic_steps);
  train_cmd->add_option("--steps", cli.steps);
  train_cmd->add_option("--batch-size", cli.batch_size);
  train_cmd->add_option("--learning-rate", cli.learning_rate);
  train_cmd->add_option("--adam-beta1", cli.beta1);
  train_cmd->add_option("--adam-beta2", cli.beta2);
  train_cmd->add_option("--log-every", cli.log_every);
  train_cmd->add_option("--checkpoint-every", cli.checkpoint_every);
  train_cmd->add_option("--gen-filters", cli.gen_filters);
  train_cmd->add_option("--gen-depth", cli.gen_depth);
  train_cmd->add_option("--gen-leaky-slope", cli.gen_leaky);
  train_cmd->add_option("--critic-filters", cli.critic_filters);
  train_cmd->add_option("--critic-blocks", cli.critic_blocks);
  train_cmd->add_option("--critic-leaky-slope", cli.critic_leaky);
  train_cmd->add_option("--critic-conditional", cli.critic_conditional);
  train_cmd->add_option("--pad-to-width", cli.pad_to_width);
  train_cmd->add_option("--slice-range", cli.slice_range,
                        "full | middle40 | explicit");
  train_cmd->add_option("--slice-lo", cli.range_lo);
  train_cmd->add_option("--slice-hi", cli.range_hi);

  CLI::App* rec = app.add_subcommand("reconstruct",
                                     "write predicted stacks and montages");
  add_common(rec);
  rec->add_option("--checkpoint", cli.checkpoint_path, "trained checkpoint");
  rec->add_option("--manifest", cli.manifest_path, "dataset manifest");
  rec->add_option("--split", cli.split, "train | validation | test");

  CLI::App* score = app.add_subcommand("score", "score a manifest split");
  add_common(score);
  score->add_option("--checkpoint", cli.checkpoint_path, "trained checkpoint");
  score->add_option("--manifest", cli.manifest_path, "dataset manifest");
  score->add_option("--split", cli.split, "train | validation | test");

  CLI::App* eval = app.add_subcommand(
      "evaluate", "select a score on validation, evaluate test by stage");
  add_common(eval);
  eval->add_option("--validation-scores", cli.validation_scores,
                   "validation score table");
  eval->add_option("--test-scores", cli.test_scores, "test score table");
  eval->add_option("--bins", cli.bins, "histogram bins");
  eval->add_option("--score", cli.score,
                   "auto or a fixed <metric>_<aggregation>");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    check_device();
    if (synth->parsed()) return cmd_synth(cli);
    if (train_cmd->parsed()) return cmd_train(cli);
    if (rec->parsed()) return cmd_reconstruct(cli);
    if (score->parsed()) return cmd_score(cli);
    if (eval->parsed()) return cmd_evaluate(cli);
    std::cerr << "error[usage]: no subcommand\n";
    return kExitUsage;
  } catch (const OverwriteRefusedError& e) {
    std::cerr << "error[overwrite-refused]: " << e.what() << '\n';
    return kExitOverwrite;
  } catch (const MissingInputError& e) {
    std::cerr << "error[missing-input]: " << e.what() << '\n';
    return kExitMissingInput;
  } catch (const RegimeViolationError& e) {
    std::cerr << "error[regime-violation]: " << e.what() << '\n';
    return kExitRegime;
  } catch (const DivergenceError& e) {
    std::cerr << "error[divergence]: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const ConfigError& e) {
    std::cerr << "error[config]: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error[data]: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return kExitInternal;
  }
}
