#include "slicerec/nn.hpp"

#include <cmath>

#include "slicerec/errors.hpp"

namespace slicerec {

namespace {

std::string istr(int i) { return std::to_string(i); }

// Decoder stage channel plan for a generator of depth d, base filters F:
// stage 0 consumes the bottleneck (F << (d-1)); later stages consume the
// previous output concatenated with its skip. The last stage has no skip
// and emits F channels for the head.
int dec_in_ch(const GeneratorConfig& c, int j) {
  return j == 0 ? (c.base_filters << (c.depth - 1))
                : 2 * (c.base_filters << (c.depth - 1 - j));
}

int dec_out_ch(const GeneratorConfig& c, int j) {
  return j < c.depth - 1 ? (c.base_filters << (c.depth - 2 - j))
                         : c.base_filters;
}

}  // namespace

void glorot_fill(Tensor& w, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (std::int64_t i = 0; i < w.numel(); ++i)
    w[i] = rng.uniform(-limit, limit);
}

void GeneratorConfig::validate() const {
  if (in_channels <= 0 || out_channels <= 0)
    throw ConfigError("generator channel counts must be positive");
  if (depth < 1 || depth > 6)
    throw ConfigError("generator depth must be in [1, 6]");
  if (base_filters < 1) throw ConfigError("generator base_filters must be >= 1");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
    throw ConfigError("generator leaky_slope must be in (0, 1)");
}

void CriticConfig::validate() const {
  if (stack_channels <= 0)
    throw ConfigError("critic stack_channels must be positive");
  if (n_blocks < 1 || n_blocks > 6)
    throw ConfigError("critic n_blocks must be in [1, 6]");
  if (base_filters < 1) throw ConfigError("critic base_filters must be >= 1");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
    throw ConfigError("critic leaky_slope must be in (0, 1)");
  if (input_height <= 0 || input_width <= 0)
    throw ConfigError("critic input size must be positive");
  const int dv = spatial_divisor();
  if (input_height % dv != 0 || input_width % dv != 0)
    throw ConfigError("critic input size must be divisible by " + istr(dv));
}

Value batch_norm(Graph& g, Value x, Value gamma, Value beta, BnState& state,
                 BnMode mode, double momentum, double eps) {
  const Tensor& xt = g.val(x);
  if (xt.rank() != 4) throw ShapeError("batch_norm expects [N,C,H,W]");
  const int c = xt.dim(1);
  if (state.mean.numel() != c || state.var.numel() != c)
    throw ShapeError("batch_norm: running stats sized for " +
                     std::to_string(state.mean.numel()) + " channels, input has " +
                     istr(c));
  const std::vector<int> xshape = xt.shape();
  const double n =
      static_cast<double>(xt.dim(0)) * xt.dim(2) * xt.dim(3);

  if (mode == BnMode::eval) {
    Tensor inv({c});
    for (int i = 0; i < c; ++i) inv[i] = 1.0 / std::sqrt(state.var[i] + eps);
    Value xn = g.mul(g.sub(x, g.broadcast_channel(g.input(state.mean), xshape)),
                     g.broadcast_channel(g.input(inv), xshape));
    return g.add(g.mul(xn, g.broadcast_channel(gamma, xshape)),
                 g.broadcast_channel(beta, xshape));
  }

  Value mean_c = g.mul_scalar(g.sum_channel(x), 1.0 / n);
  Value xc = g.sub(x, g.broadcast_channel(mean_c, xshape));
  Value var_c = g.mul_scalar(g.sum_channel(g.square(xc)), 1.0 / n);
  if (mode == BnMode::train) {
    const Tensor& mt = g.val(mean_c);
    const Tensor& vt = g.val(var_c);
    for (int i = 0; i < c; ++i) {
      state.mean[i] = (1.0 - momentum) * state.mean[i] + momentum * mt[i];
      state.var[i] = (1.0 - momentum) * state.var[i] + momentum * vt[i];
    }
  }
  Value inv_c = g.div(g.input(Tensor({c}, 1.0)),
                      g.sqrt(g.add_scalar(var_c, eps)));
  Value xn = g.mul(xc, g.broadcast_channel(inv_c, xshape));
  return g.add(g.mul(xn, g.broadcast_channel(gamma, xshape)),
               g.broadcast_channel(beta, xshape));
}

Generator::Generator(GeneratorConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int d = cfg_.depth;
  const int k = 4;

  auto add_bn = [&](const std::string& name, int c) {
    params_.push_back({name + ".gamma", Tensor({c}, 1.0)});
    params_.push_back({name + ".beta", Tensor({c}, 0.0)});
    bn_.push_back({name, Tensor({c}, 0.0), Tensor({c}, 1.0)});
  };

  int prev = cfg_.in_channels;
  for (int i = 0; i < d; ++i) {
    const int co = cfg_.base_filters << i;
    Tensor w({co, prev, k, k});
    glorot_fill(w, prev * k * k, co * k * k, rng);
    params_.push_back({"enc" + istr(i) + ".w", std::move(w)});
    params_.push_back({"enc" + istr(i) + ".b", Tensor({co}, 0.0)});
    add_bn("enc" + istr(i), co);
    prev = co;
  }
  for (int j = 0; j < d; ++j) {
    const int ci = dec_in_ch(cfg_, j);
    const int co = dec_out_ch(cfg_, j);
    // Transposed-conv weights use the forward-conv layout [ci, co, k, k]
    // because upsampling is the adjoint of a stride-2 convolution co -> ci.
    Tensor w({ci, co, k, k});
    glorot_fill(w, ci * k * k, co * k * k, rng);
    params_.push_back({"dec" + istr(j) + ".w", std::move(w)});
    params_.push_back({"dec" + istr(j) + ".b", Tensor({co}, 0.0)});
    add_bn("dec" + istr(j), co);
  }
  {
    Tensor w({cfg_.out_channels, cfg_.base_filters, 3, 3});
    glorot_fill(w, cfg_.base_filters * 9, cfg_.out_channels * 9, rng);
    params_.push_back({"head.w", std::move(w)});
    params_.push_back({"head.b", Tensor({cfg_.out_channels}, 0.0)});
  }
}

std::int64_t Generator::param_count() const {
  std::int64_t n = 0;
  for (const Param& p : params_) n += p.value.numel();
  return n;
}

std::vector<Value> Generator::bind(Graph& g) const {
  std::vector<Value> pv;
  pv.reserve(params_.size());
  for (const Param& p : params_) pv.push_back(g.input(p.value));
  return pv;
}

Value Generator::forward(Graph& g, const std::vector<Value>& pv, Value x,
                         BnMode mode) const {
  if (pv.size() != params_.size())
    throw ShapeError("generator forward: expected " +
                     std::to_string(params_.size()) + " bound params, got " +
                     std::to_string(pv.size()));
  const Tensor& xt = g.val(x);
  if (xt.rank() != 4 || xt.dim(1) != cfg_.in_channels)
    throw ShapeError("generator input must be [N," + istr(cfg_.in_channels) +
                     ",H,W], got " + xt.shape_str());
  const int n = xt.dim(0);
  const int h0 = xt.dim(2);
  const int w0 = xt.dim(3);
  const int dv = cfg_.spatial_divisor();
  if (h0 % dv != 0 || w0 % dv != 0)
    throw ShapeError("generator input spatial dims must be divisible by " +
                     istr(dv) + ", got " + xt.shape_str());

  const int d = cfg_.depth;
  std::vector<Value> skips;
  skips.reserve(static_cast<std::size_t>(d));
  Value h = x;
  int hh = h0, ww = w0;
  for (int i = 0; i < d; ++i) {
    const int base = 4 * i;
    const int co = cfg_.base_filters << i;
    Value y = g.conv2d(h, pv[base], 2, 1);
    hh /= 2;
    ww /= 2;
    y = g.add(y, g.broadcast_channel(pv[base + 1], {n, co, hh, ww}));
    y = batch_norm(g, y, pv[base + 2], pv[base + 3], bn_[i], mode);
    y = g.leaky_relu(y, cfg_.leaky_slope);
    skips.push_back(y);
    h = y;
  }
  for (int j = 0; j < d; ++j) {
    const int base = 4 * d + 4 * j;
    const int co = dec_out_ch(cfg_, j);
    hh *= 2;
    ww *= 2;
    Value y = g.conv2d_input_grad(h, pv[base], 2, 1, hh, ww);
    y = g.add(y, g.broadcast_channel(pv[base + 1], {n, co, hh, ww}));
    y = batch_norm(g, y, pv[base + 2], pv[base + 3], bn_[d + j], mode);
    y = g.relu(y);
    if (j < d - 1) y = g.concat_channels(y, skips[d - 2 - j]);
    h = y;
  }
  const int hb = 8 * d;
  Value y = g.conv2d(h, pv[hb], 1, 1);
  y = g.add(y, g.broadcast_channel(pv[hb + 1], {n, cfg_.out_channels, h0, w0}));
  return g.sigmoid(y);
}

Tensor Generator::infer(const Tensor& x) const {
  const bool squeeze = x.rank() == 3;
  Tensor xin = x;
  if (squeeze)
    xin = Tensor::from_data({1, x.dim(0), x.dim(1), x.dim(2)},
                            std::vector<double>(x.data(), x.data() + x.numel()));
  Graph g;
  std::vector<Value> pv = bind(g);
  Value out = forward(g, pv, g.input(std::move(xin)), BnMode::eval);
  Tensor y = g.val(out);
  if (squeeze)
    return Tensor::from_data({y.dim(1), y.dim(2), y.dim(3)},
                             std::vector<double>(y.data(), y.data() + y.numel()));
  return y;
}

Critic::Critic(CriticConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int k = 4;
  int prev = cfg_.in_channels();
  for (int i = 0; i < cfg_.n_blocks; ++i) {
    const int co = cfg_.base_filters << i;
    Tensor w({co, prev, k, k});
    glorot_fill(w, prev * k * k, co * k * k, rng);
    params_.push_back({"blk" + istr(i) + ".w", std::move(w)});
    params_.push_back({"blk" + istr(i) + ".b", Tensor({co}, 0.0)});
    prev = co;
  }
  const int fh = cfg_.input_height >> cfg_.n_blocks;
  const int fw = cfg_.input_width >> cfg_.n_blocks;
  const int flat = prev * fh * fw;
  Tensor w({flat, 1});
  glorot_fill(w, flat, 1, rng);
  params_.push_back({"head.w", std::move(w)});
  params_.push_back({"head.b", Tensor({1}, 0.0)});
}

std::int64_t Critic::param_count() const {
  std::int64_t n = 0;
  for (const Param& p : params_) n += p.value.numel();
  return n;
}

std::vector<Value> Critic::bind(Graph& g) const {
  std::vector<Value> pv;
  pv.reserve(params_.size());
  for (const Param& p : params_) pv.push_back(g.input(p.value));
  return pv;
}

Value Critic::forward(Graph& g, const std::vector<Value>& pv, Value cond,
                      Value candidate) const {
  if (pv.size() != params_.size())
    throw ShapeError("critic forward: expected " +
                     std::to_string(params_.size()) + " bound params, got " +
                     std::to_string(pv.size()));
  Value x = candidate;
  if (cfg_.conditional) {
    if (!cond.valid())
      throw ShapeError("conditional critic called without a condition stack");
    x = g.concat_channels(cond, candidate);
  }
  const Tensor& xt = g.val(x);
  if (xt.rank() != 4 || xt.dim(1) != cfg_.in_channels())
    throw ShapeError("critic input must be [N," + istr(cfg_.in_channels()) +
                     ",H,W], got " + xt.shape_str());
  if (xt.dim(2) != cfg_.input_height || xt.dim(3) != cfg_.input_width)
    throw ShapeError("critic head built for " + istr(cfg_.input_height) + "x" +
                     istr(cfg_.input_width) + " inputs, got " + xt.shape_str());
  const int n = xt.dim(0);
  int hh = cfg_.input_height;
  int ww = cfg_.input_width;
  Value h = x;
  for (int i = 0; i < cfg_.n_blocks; ++i) {
    const int co = cfg_.base_filters << i;
    h = g.conv2d(h, pv[2 * i], 2, 1);
    hh /= 2;
    ww /= 2;
    h = g.add(h, g.broadcast_channel(pv[2 * i + 1], {n, co, hh, ww}));
    h = g.leaky_relu(h, cfg_.leaky_slope);
  }
  const int flat = (cfg_.base_filters << (cfg_.n_blocks - 1)) * hh * ww;
  h = g.reshape(h, {n, flat});
  h = g.matmul(h, pv[2 * cfg_.n_blocks]);
  h = g.add(h, g.broadcast_rows(pv[2 * cfg_.n_blocks + 1], n));
  return g.reshape(h, {n});
}

Adam::Adam(AdamConfig cfg, const std::vector<Param>& params) : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Param& p : params) {
    m_.push_back({p.name, Tensor(p.value.shape(), 0.0)});
    v_.push_back({p.name, Tensor(p.value.shape(), 0.0)});
  }
}

void Adam::step(std::vector<Param>& params, const std::vector<Tensor>& grads) {
  if (params.size() != m_.size() || grads.size() != params.size())
    throw ShapeError("adam: params/grads count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].value;
    Tensor& m = m_[i].value;
    Tensor& v = v_[i].value;
    const Tensor& grad = grads[i];
    if (!grad.same_shape(p))
      throw ShapeError("adam: gradient shape " + grad.shape_str() +
                       " mismatches param '" + params[i].name + "' " +
                       p.shape_str());
    for (std::int64_t e = 0; e < p.numel(); ++e) {
      const double gd = grad[e];
      m[e] = cfg_.beta1 * m[e] + (1.0 - cfg_.beta1) * gd;
      v[e] = cfg_.beta2 * v[e] + (1.0 - cfg_.beta2) * gd * gd;
      p[e] -= cfg_.lr * (m[e] / c1) / (std::sqrt(v[e] / c2) + cfg_.eps);
    }
  }
}

void Adam::restore(std::int64_t t, std::vector<Param> m, std::vector<Param> v) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw ShapeError("adam restore: moment count mismatch");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace slicerec
