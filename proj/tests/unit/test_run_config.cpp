#include <string>

#include "doctest.h"
#include "slicerec/errors.hpp"
#include "slicerec/run_config.hpp"

using namespace slicerec;

TEST_CASE("defaults carry the desk profile") {
  const RunConfig cfg = default_run_config();
  CHECK(cfg.train.gen.base_filters == 8);
  CHECK(cfg.train.critic.base_filters == 8);
  CHECK(cfg.train.steps == 2000);
  CHECK(cfg.train.batch_size == 8);
  CHECK(cfg.train.loss.objective == Objective::wgan_gp_l1);
  CHECK(cfg.train.loss.l1_weight == 100.0);
  CHECK(cfg.train.loss.gp_lambda == 10.0);
  CHECK(cfg.train.loss.critic_steps == 5);
  CHECK(cfg.eval_bins == 30);
  CHECK_FALSE(cfg.score_fixed);

  const RunConfig parsed = parse_run_config("{}", "inline");
  CHECK(parsed.train.gen.base_filters == cfg.train.gen.base_filters);
  CHECK(parsed.train.steps == cfg.train.steps);
}

TEST_CASE("unknown keys are rejected with their full path") {
  CHECK_THROWS_AS(parse_run_config(R"({"trian": {}})", "x"), ConfigError);
  try {
    parse_run_config(R"({"train": {"objectve": "dice"}})", "x");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("objectve") != std::string::npos);
  }
  CHECK_THROWS_AS(
      parse_run_config(R"({"train": {"generator": {"filters": 4}}})", "x"),
      ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"synth": {"slices": 9}})", "x"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config("[1,2]", "x"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{not json", "x"), ConfigError);
}

TEST_CASE("profile applies before explicit keys regardless of json order") {
  const RunConfig a = parse_run_config(
      R"({"train": {"profile": "paper", "steps": 123}})", "x");
  CHECK(a.train.gen.base_filters == 64);
  CHECK(a.train.steps == 123);
  CHECK(a.train.batch_size == 32);

  const RunConfig b = parse_run_config(
      R"({"train": {"steps": 123, "profile": "paper"}})", "x");
  CHECK(b.train.steps == 123);
  CHECK(b.train.gen.base_filters == 64);

  const RunConfig c = parse_run_config(
      R"({"train": {"profile": "paper", "objective": "dice"}})", "x");
  CHECK(c.train.steps == 600000);
  CHECK(c.train.batch_size == 64);

  const RunConfig d = parse_run_config(
      R"({"train": {"profile": "paper", "generator": {"base_filters": 12}}})",
      "x");
  CHECK(d.train.gen.base_filters == 12);
  CHECK(d.train.critic.base_filters == 64);
}

TEST_CASE("sections parse into their structs") {
  const RunConfig cfg = parse_run_config(R"({
    "synth": {"seed": 3, "n_train_healthy": 5, "height": 32, "width": 48,
              "severity": 0.8, "noise_sigma": 0.02},
    "train": {"objective": "dice", "seed": 21, "learning_rate": 0.001,
              "adam_beta1": 0.7,
              "generator": {"depth": 3, "leaky_slope": 0.1},
              "critic": {"conditional": false, "n_blocks": 2},
              "preprocess": {"pad_to_width": 48, "slice_range": "explicit",
                             "lo": 1, "hi": 9}},
    "evaluate": {"bins": 12, "score": "ssim_maximum"}
  })",
                                         "inline");
  CHECK(cfg.synth.seed == 3);
  CHECK(cfg.synth.n_train_healthy == 5);
  CHECK(cfg.synth.height == 32);
  CHECK(cfg.synth.width == 48);
  CHECK(cfg.synth.severity == 0.8);
  CHECK(cfg.train.loss.objective == Objective::dice);
  CHECK(cfg.train.seed == 21);
  CHECK(cfg.train.learning_rate == 0.001);
  CHECK(cfg.train.beta1() == 0.7);
  CHECK(cfg.train.beta2() == 0.999);  // dice default still
  CHECK(cfg.train.gen.depth == 3);
  CHECK(cfg.train.gen.leaky_slope == 0.1);
  CHECK_FALSE(cfg.train.critic.conditional);
  CHECK(cfg.train.critic.n_blocks == 2);
  CHECK(cfg.train.preprocess.pad_to_width == 48);
  CHECK(cfg.train.preprocess.range_mode ==
        PreprocessConfig::RangeMode::explicit_range);
  CHECK(cfg.train.preprocess.lo == 1);
  CHECK(cfg.train.preprocess.hi == 9);
  CHECK(cfg.eval_bins == 12);
  CHECK(cfg.score_fixed);
  CHECK(cfg.score_key == ScoreKey{Metric::ssim, Aggregation::maximum});

  SUBCASE("auto score keeps selection dynamic") {
    const RunConfig s =
        parse_run_config(R"({"evaluate": {"score": "auto"}})", "x");
    CHECK_FALSE(s.score_fixed);
  }
  SUBCASE("malformed score names are rejected") {
    CHECK_THROWS_AS(parse_run_config(R"({"evaluate": {"score": "l2"}})", "x"),
                    ConfigError);
    CHECK_THROWS_AS(
        parse_run_config(R"({"evaluate": {"score": "psnr_average"}})", "x"),
        ConfigError);
  }
  SUBCASE("bad slice_range is rejected") {
    CHECK_THROWS_AS(
        parse_run_config(
            R"({"train": {"preprocess": {"slice_range": "upper"}}})", "x"),
        ConfigError);
  }
}

TEST_CASE("dump and parse are mutually stable") {
  RunConfig cfg = default_run_config();
  cfg.train.loss.objective = Objective::dice;
  cfg.train.steps = 77;
  cfg.synth.severity = 0.6;
  cfg.score_fixed = true;
  cfg.score_key = {Metric::l1, Aggregation::maximum};

  const std::string text = dump_run_config(cfg);
  const RunConfig back = parse_run_config(text, "dump");
  CHECK(back.train.loss.objective == Objective::dice);
  CHECK(back.train.steps == 77);
  CHECK(back.synth.severity == 0.6);
  CHECK(back.score_fixed);
  CHECK(back.score_key == cfg.score_key);

  // Echoing a dump back through parse+dump changes nothing.
  CHECK(dump_run_config(back) == text);
  // Resolved betas are recorded as concrete numbers, not the sentinel.
  CHECK(text.find("adam_beta1") != std::string::npos);
  CHECK(text.find("\"adam_beta1\": -1") == std::string::npos);
  CHECK(text.find("\"adam_beta2\": -1") == std::string::npos);
  CHECK(text.find("\"adam_beta1\": 0.9") != std::string::npos);  // dice default
}
