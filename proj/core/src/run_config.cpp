#include "slicerec/run_config.hpp"

#include <fstream>
#include <initializer_list>

#include <nlohmann/json.hpp>

namespace slicerec {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object())
    throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("unknown config key '" + where + "." + key + "'");
  }
}

template <class T>
void get_to(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) obj.at(key).get_to(out);
}

void parse_synth(const json& j, PhantomSpec& s) {
  check_keys(j, "synth",
             {"seed", "n_train_healthy", "n_val_healthy", "n_val_anomalous",
              "n_test_healthy", "n_test_anomalous", "slices_per_volume",
              "height", "width", "severity", "noise_sigma"});
  get_to(j, "seed", s.seed);
  get_to(j, "n_train_healthy", s.n_train_healthy);
  get_to(j, "n_val_healthy", s.n_val_healthy);
  get_to(j, "n_val_anomalous", s.n_val_anomalous);
  get_to(j, "n_test_healthy", s.n_test_healthy);
  get_to(j, "n_test_anomalous", s.n_test_anomalous);
  get_to(j, "slices_per_volume", s.slices_per_volume);
  get_to(j, "height", s.height);
  get_to(j, "width", s.width);
  get_to(j, "severity", s.severity);
  get_to(j, "noise_sigma", s.noise_sigma);
}

void parse_preprocess(const json& j, PreprocessConfig& p) {
  check_keys(j, "train.preprocess", {"pad_to_width", "slice_range", "lo", "hi"});
  get_to(j, "pad_to_width", p.pad_to_width);
  if (j.contains("slice_range")) {
    const std::string s = j.at("slice_range").get<std::string>();
    if (s == "full")
      p.range_mode = PreprocessConfig::RangeMode::full;
    else if (s == "middle40")
      p.range_mode = PreprocessConfig::RangeMode::middle40;
    else if (s == "explicit")
      p.range_mode = PreprocessConfig::RangeMode::explicit_range;
    else
      throw ConfigError("train.preprocess.slice_range must be full, middle40 "
                        "or explicit, got '" + s + "'");
  }
  get_to(j, "lo", p.lo);
  get_to(j, "hi", p.hi);
}

void parse_train(const json& j, TrainConfig& t) {
  check_keys(j, "train",
             {"objective", "profile", "l1_weight", "gp_lambda", "critic_steps",
              "steps", "batch_size", "learning_rate", "adam_beta1",
              "adam_beta2", "seed", "log_every", "checkpoint_every",
              "generator", "critic", "preprocess"});
  // Objective and profile resolve first so profile defaults can still be
  // overridden by explicit keys in the same section.
  if (j.contains("objective"))
    t.loss.objective = objective_parse(j.at("objective").get<std::string>());
  if (j.contains("profile"))
    t.profile = profile_parse(j.at("profile").get<std::string>());
  t.apply_profile();
  get_to(j, "l1_weight", t.loss.l1_weight);
  get_to(j, "gp_lambda", t.loss.gp_lambda);
  get_to(j, "critic_steps", t.loss.critic_steps);
  get_to(j, "steps", t.steps);
  get_to(j, "batch_size", t.batch_size);
  get_to(j, "learning_rate", t.learning_rate);
  get_to(j, "adam_beta1", t.adam_beta1);
  get_to(j, "adam_beta2", t.adam_beta2);
  get_to(j, "seed", t.seed);
  get_to(j, "log_every", t.log_every);
  get_to(j, "checkpoint_every", t.checkpoint_every);
  if (j.contains("generator")) {
    const json& g = j.at("generator");
    check_keys(g, "train.generator", {"base_filters", "depth", "leaky_slope"});
    get_to(g, "base_filters", t.gen.base_filters);
    get_to(g, "depth", t.gen.depth);
    get_to(g, "leaky_slope", t.gen.leaky_slope);
  }
  if (j.contains("critic")) {
    const json& c = j.at("critic");
    check_keys(c, "train.critic",
               {"conditional", "n_blocks", "base_filters", "leaky_slope"});
    get_to(c, "conditional", t.critic.conditional);
    get_to(c, "n_blocks", t.critic.n_blocks);
    get_to(c, "base_filters", t.critic.base_filters);
    get_to(c, "leaky_slope", t.critic.leaky_slope);
  }
  if (j.contains("preprocess")) parse_preprocess(j.at("preprocess"), t.preprocess);
}

std::string range_mode_name(PreprocessConfig::RangeMode m) {
  switch (m) {
    case PreprocessConfig::RangeMode::full: return "full";
    case PreprocessConfig::RangeMode::middle40: return "middle40";
    case PreprocessConfig::RangeMode::explicit_range: return "explicit";
  }
  throw ConfigError("bad range mode");
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.train.apply_profile();
  return cfg;
}

RunConfig parse_run_config(const std::string& json_text,
                           const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": invalid JSON: " + e.what());
  }
  RunConfig cfg = default_run_config();
  try {
    check_keys(j, "config", {"synth", "train", "evaluate"});
    if (j.contains("synth")) parse_synth(j.at("synth"), cfg.synth);
    if (j.contains("train")) parse_train(j.at("train"), cfg.train);
    if (j.contains("evaluate")) {
      const json& e = j.at("evaluate");
      check_keys(e, "evaluate", {"bins", "score"});
      get_to(e, "bins", cfg.eval_bins);
      if (e.contains("score")) {
        const std::string s = e.at("score").get<std::string>();
        if (s == "auto") {
          cfg.score_fixed = false;
        } else {
          const auto underscore = s.rfind('_');
          if (underscore == std::string::npos)
            throw ConfigError("evaluate.score must be auto or "
                              "<metric>_<aggregation>, got '" + s + "'");
          cfg.score_key.metric = metric_parse(s.substr(0, underscore));
          cfg.score_key.agg = aggregation_parse(s.substr(underscore + 1));
          cfg.score_fixed = true;
        }
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open config '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_run_config(text, path.string());
}

std::string dump_run_config(const RunConfig& cfg) {
  ordered_json j;
  j["synth"] = {{"seed", cfg.synth.seed},
                {"n_train_healthy", cfg.synth.n_train_healthy},
                {"n_val_healthy", cfg.synth.n_val_healthy},
                {"n_val_anomalous", cfg.synth.n_val_anomalous},
                {"n_test_healthy", cfg.synth.n_test_healthy},
                {"n_test_anomalous", cfg.synth.n_test_anomalous},
                {"slices_per_volume", cfg.synth.slices_per_volume},
                {"height", cfg.synth.height},
                {"width", cfg.synth.width},
                {"severity", cfg.synth.severity},
                {"noise_sigma", cfg.synth.noise_sigma}};
  j["train"] = {
      {"objective", objective_str(cfg.train.loss.objective)},
      {"profile", profile_str(cfg.train.profile)},
      {"l1_weight", cfg.train.loss.l1_weight},
      {"gp_lambda", cfg.train.loss.gp_lambda},
      {"critic_steps", cfg.train.loss.critic_steps},
      {"steps", cfg.train.steps},
      {"batch_size", cfg.train.batch_size},
      {"learning_rate", cfg.train.learning_rate},
      {"adam_beta1", cfg.train.beta1()},
      {"adam_beta2", cfg.train.beta2()},
      {"seed", cfg.train.seed},
      {"log_every", cfg.train.log_every},
      {"checkpoint_every", cfg.train.checkpoint_every},
      {"generator",
       {{"base_filters", cfg.train.gen.base_filters},
        {"depth", cfg.train.gen.depth},
        {"leaky_slope", cfg.train.gen.leaky_slope}}},
      {"critic",
       {{"conditional", cfg.train.critic.conditional},
        {"n_blocks", cfg.train.critic.n_blocks},
        {"base_filters", cfg.train.critic.base_filters},
        {"leaky_slope", cfg.train.critic.leaky_slope}}},
      {"preprocess",
       {{"pad_to_width", cfg.train.preprocess.pad_to_width},
        {"slice_range", range_mode_name(cfg.train.preprocess.range_mode)},
        {"lo", cfg.train.preprocess.lo},
        {"hi", cfg.train.preprocess.hi}}}};
  j["evaluate"] = {{"bins", cfg.eval_bins},
                   {"score", cfg.score_fixed ? cfg.score_key.str()
                                             : std::string("auto")}};
  return j.dump(2) + "\n";
}

}  // namespace slicerec
