#include "slicerec/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace slicerec {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'S', 'R', 'C', 'K'};
constexpr std::uint32_t kCkptVersion = 1;

json tensor_dir(const std::vector<Param>& ps) {
  json arr = json::array();
  for (const Param& p : ps)
    arr.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  return arr;
}

void write_tensors(std::ofstream& out, const std::vector<Param>& ps) {
  for (const Param& p : ps)
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.numel() * sizeof(double)));
}

std::vector<Param> read_tensors(std::ifstream& in, const json& dir,
                                const std::string& path) {
  std::vector<Param> ps;
  ps.reserve(dir.size());
  for (const json& e : dir) {
    Param p;
    p.name = e.at("name").get<std::string>();
    p.value = Tensor(e.at("shape").get<std::vector<int>>());
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.numel() * sizeof(double)));
    if (in.gcount() !=
        static_cast<std::streamsize>(p.value.numel() * sizeof(double)))
      throw FormatError("checkpoint '" + path + "': truncated tensor '" +
                        p.name + "'");
    ps.push_back(std::move(p));
  }
  return ps;
}

std::string range_mode_str(PreprocessConfig::RangeMode m) {
  switch (m) {
    case PreprocessConfig::RangeMode::full: return "full";
    case PreprocessConfig::RangeMode::middle40: return "middle40";
    case PreprocessConfig::RangeMode::explicit_range: return "explicit";
  }
  throw ConfigError("bad range mode");
}

PreprocessConfig::RangeMode range_mode_parse(const std::string& s) {
  if (s == "full") return PreprocessConfig::RangeMode::full;
  if (s == "middle40") return PreprocessConfig::RangeMode::middle40;
  if (s == "explicit") return PreprocessConfig::RangeMode::explicit_range;
  throw ConfigError("unknown slice range mode '" + s + "'");
}

}  // namespace

void save_checkpoint(const CheckpointData& ckpt,
                     const std::filesystem::path& path) {
  std::vector<Param> bn_mean, bn_var;
  for (const BnState& s : ckpt.gen_bn) {
    bn_mean.push_back({s.name, s.mean});
    bn_var.push_back({s.name, s.var});
  }

  json header;
  header["format"] = "slicerec-checkpoint";
  header["objective"] = objective_str(ckpt.objective);
  header["seed"] = ckpt.seed;
  header["step"] = ckpt.step;
  header["has_critic"] = ckpt.has_critic;
  header["gen_cfg"] = {{"in_channels", ckpt.gen_cfg.in_channels},
                       {"out_channels", ckpt.gen_cfg.out_channels},
                       {"depth", ckpt.gen_cfg.depth},
                       {"base_filters", ckpt.gen_cfg.base_filters},
                       {"leaky_slope", ckpt.gen_cfg.leaky_slope}};
  header["critic_cfg"] = {{"conditional", ckpt.critic_cfg.conditional},
                          {"stack_channels", ckpt.critic_cfg.stack_channels},
                          {"n_blocks", ckpt.critic_cfg.n_blocks},
                          {"base_filters", ckpt.critic_cfg.base_filters},
                          {"leaky_slope", ckpt.critic_cfg.leaky_slope},
                          {"input_height", ckpt.critic_cfg.input_height},
                          {"input_width", ckpt.critic_cfg.input_width}};
  header["preprocess"] = {{"pad_to_width", ckpt.preprocess.pad_to_width},
                          {"range_mode", range_mode_str(ckpt.preprocess.range_mode)},
                          {"lo", ckpt.preprocess.lo},
                          {"hi", ckpt.preprocess.hi}};
  header["gen_adam_t"] = ckpt.gen_adam_t;
  header["critic_adam_t"] = ckpt.critic_adam_t;
  header["sections"] = {{"gen_params", tensor_dir(ckpt.gen_params)},
                        {"gen_bn_mean", tensor_dir(bn_mean)},
                        {"gen_bn_var", tensor_dir(bn_var)},
                        {"critic_params", tensor_dir(ckpt.critic_params)},
                        {"gen_adam_m", tensor_dir(ckpt.gen_adam_m)},
                        {"gen_adam_v", tensor_dir(ckpt.gen_adam_v)},
                        {"critic_adam_m", tensor_dir(ckpt.critic_adam_m)},
                        {"critic_adam_v", tensor_dir(ckpt.critic_adam_v)}};
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw FormatError("cannot open checkpoint '" + path.string() +
                      "' for writing");
  out.write(kMagic, 4);
  const std::uint32_t version = kCkptVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t hlen = head.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  write_tensors(out, ckpt.gen_params);
  write_tensors(out, bn_mean);
  write_tensors(out, bn_var);
  write_tensors(out, ckpt.critic_params);
  write_tensors(out, ckpt.gen_adam_m);
  write_tensors(out, ckpt.gen_adam_v);
  write_tensors(out, ckpt.critic_adam_m);
  write_tensors(out, ckpt.critic_adam_v);
  if (!out) throw FormatError("short write to checkpoint '" + path.string() + "'");
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw MissingInputError("cannot open checkpoint '" + path.string() + "'");
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("'" + path.string() + "' is not a checkpoint file");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != kCkptVersion)
    throw FormatError("checkpoint '" + path.string() +
                      "': unsupported version " + std::to_string(version));
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  if (hlen == 0 || hlen > (1ull << 30))
    throw FormatError("checkpoint '" + path.string() + "': bad header length");
  std::string head(hlen, '\0');
  in.read(head.data(), static_cast<std::streamsize>(hlen));
  if (in.gcount() != static_cast<std::streamsize>(hlen))
    throw FormatError("checkpoint '" + path.string() + "': truncated header");

  json header;
  try {
    header = json::parse(head);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint '" + path.string() + "': bad header JSON: " +
                      e.what());
  }
  try {
    CheckpointData ckpt;
    ckpt.objective = objective_parse(header.at("objective").get<std::string>());
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.step = header.at("step").get<std::int64_t>();
    ckpt.has_critic = header.at("has_critic").get<bool>();
    const json& gc = header.at("gen_cfg");
    ckpt.gen_cfg.in_channels = gc.at("in_channels").get<int>();
    ckpt.gen_cfg.out_channels = gc.at("out_channels").get<int>();
    ckpt.gen_cfg.depth = gc.at("depth").get<int>();
    ckpt.gen_cfg.base_filters = gc.at("base_filters").get<int>();
    ckpt.gen_cfg.leaky_slope = gc.at("leaky_slope").get<double>();
    const json& cc = header.at("critic_cfg");
    ckpt.critic_cfg.conditional = cc.at("conditional").get<bool>();
    ckpt.critic_cfg.stack_channels = cc.at("stack_channels").get<int>();
    ckpt.critic_cfg.n_blocks = cc.at("n_blocks").get<int>();
    ckpt.critic_cfg.base_filters = cc.at("base_filters").get<int>();
    ckpt.critic_cfg.leaky_slope = cc.at("leaky_slope").get<double>();
    ckpt.critic_cfg.input_height = cc.at("input_height").get<int>();
    ckpt.critic_cfg.input_width = cc.at("input_width").get<int>();
    const json& pp = header.at("preprocess");
    ckpt.preprocess.pad_to_width = pp.at("pad_to_width").get<int>();
    ckpt.preprocess.range_mode =
        range_mode_parse(pp.at("range_mode").get<std::string>());
    ckpt.preprocess.lo = pp.at("lo").get<int>();
    ckpt.preprocess.hi = pp.at("hi").get<int>();
    ckpt.gen_adam_t = header.at("gen_adam_t").get<std::int64_t>();
    ckpt.critic_adam_t = header.at("critic_adam_t").get<std::int64_t>();

    const json& sec = header.at("sections");
    ckpt.gen_params = read_tensors(in, sec.at("gen_params"), path.string());
    std::vector<Param> bn_mean =
        read_tensors(in, sec.at("gen_bn_mean"), path.string());
    std::vector<Param> bn_var =
        read_tensors(in, sec.at("gen_bn_var"), path.string());
    if (bn_mean.size() != bn_var.size())
      throw FormatError("checkpoint '" + path.string() +
                        "': bn mean/var section mismatch");
    for (std::size_t i = 0; i < bn_mean.size(); ++i)
      ckpt.gen_bn.push_back({bn_mean[i].name, std::move(bn_mean[i].value),
                             std::move(bn_var[i].value)});
    ckpt.critic_params = read_tensors(in, sec.at("critic_params"), path.string());
    ckpt.gen_adam_m = read_tensors(in, sec.at("gen_adam_m"), path.string());
    ckpt.gen_adam_v = read_tensors(in, sec.at("gen_adam_v"), path.string());
    ckpt.critic_adam_m = read_tensors(in, sec.at("critic_adam_m"), path.string());
    ckpt.critic_adam_v = read_tensors(in, sec.at("critic_adam_v"), path.string());
    return ckpt;
  } catch (const json::exception& e) {
    throw FormatError("checkpoint '" + path.string() + "': header field: " +
                      e.what());
  }
}

Generator generator_from_checkpoint(const CheckpointData& ckpt) {
  Generator gen(ckpt.gen_cfg, ckpt.seed);
  std::vector<Param>& ps = gen.params();
  if (ps.size() != ckpt.gen_params.size())
    throw FormatError("checkpoint: generator has " +
                      std::to_string(ckpt.gen_params.size()) +
                      " tensors, config implies " + std::to_string(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Param& src = ckpt.gen_params[i];
    if (src.name != ps[i].name || !src.value.same_shape(ps[i].value))
      throw FormatError("checkpoint: generator tensor '" + src.name +
                        "' does not match expected '" + ps[i].name + "' " +
                        ps[i].value.shape_str());
    ps[i].value = src.value;
  }
  std::vector<BnState>& bn = gen.bn_states();
  if (bn.size() != ckpt.gen_bn.size())
    throw FormatError("checkpoint: batch-norm state count mismatch");
  for (std::size_t i = 0; i < bn.size(); ++i) {
    if (ckpt.gen_bn[i].name != bn[i].name)
      throw FormatError("checkpoint: batch-norm state '" + ckpt.gen_bn[i].name +
                        "' does not match expected '" + bn[i].name + "'");
    bn[i].mean = ckpt.gen_bn[i].mean;
    bn[i].var = ckpt.gen_bn[i].var;
  }
  return gen;
}

Critic critic_from_checkpoint(const CheckpointData& ckpt) {
  if (!ckpt.has_critic)
    throw FormatError("checkpoint carries no critic (dice objective)");
  Critic critic(ckpt.critic_cfg, ckpt.seed);
  std::vector<Param>& ps = critic.params();
  if (ps.size() != ckpt.critic_params.size())
    throw FormatError("checkpoint: critic tensor count mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Param& src = ckpt.critic_params[i];
    if (src.name != ps[i].name || !src.value.same_shape(ps[i].value))
      throw FormatError("checkpoint: critic tensor '" + src.name +
                        "' does not match expected '" + ps[i].name + "'");
    ps[i].value = src.value;
  }
  return critic;
}

}  // namespace slicerec
