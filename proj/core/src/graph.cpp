#include "slicerec/graph.hpp"

#include <cmath>
#include <utility>

#include "conv_kernels.hpp"
#include "slicerec/errors.hpp"

namespace slicerec::ad {

Value Graph::emit(Tensor value, std::vector<std::int32_t> inputs) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  return Value{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Graph::set_vjp(Value v, Vjp vjp) {
  nodes_[static_cast<std::size_t>(v.id)]->vjp = std::move(vjp);
}

const Graph::Node& Graph::node(Value v) const {
  check(v);
  return *nodes_[static_cast<std::size_t>(v.id)];
}

void Graph::check(Value v) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw ShapeError("invalid graph value handle");
}

void Graph::check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

const Tensor& Graph::val(Value v) const { return node(v).value; }

Value Graph::input(Tensor t) { return emit(std::move(t), {}); }

// ---------------------------------------------------------------------------
// elementwise

Value Graph::add(Value a, Value b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  check_same_shape(ta, tb, "add");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += tb[i];
  Value v = emit(std::move(out), {a.id, b.id});
  set_vjp(v, [](Graph&, Value g, const std::vector<bool>&) {
    return std::vector<Value>{g, g};
  });
  return v;
}

Value Graph::sub(Value a, Value b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  check_same_shape(ta, tb, "sub");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= tb[i];
  Value v = emit(std::move(out), {a.id, b.id});
  set_vjp(v, [](Graph& g, Value gout, const std::vector<bool>& need) {
    std::vector<Value> r(2);
    if (need[0]) r[0] = gout;
    if (need[1]) r[1] = g.neg(gout);
    return r;
  });
  return v;
}

Value Graph::mul(Value a, Value b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  check_same_shape(ta, tb, "mul");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= tb[i];
  Value v = emit(std::move(out), {a.id, b.id});
  set_vjp(v, [a, b](Graph& g, Value gout, const std::vector<bool>& need) {
    std::vector<Value> r(2);
    if (need[0]) r[0] = g.mul(gout, b);
    if (need[1]) r[1] = g.mul(gout, a);
    return r;
  });
  return v;
}

Value Graph::div(Value a, Value b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  check_same_shape(ta, tb, "div");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] /= tb[i];
  Value v = emit(std::move(out), {a.id, b.id});
  set_vjp(v, [b, v](Graph& g, Value gout, const std::vector<bool>& need) {
    std::vector<Value> r(2);
    if (need[0]) r[0] = g.div(gout, b);
    // d(a/b)/db = -a/b^2 = -out/b
    if (need[1]) r[1] = g.neg(g.div(g.mul(gout, v), b));
    return r;
  });
  return v;
}

Value Graph::neg(Value a) { return mul_scalar(a, -1.0); }

Value Graph::abs(Value a) {
  const Tensor& ta = val(a);
  Tensor out = ta;
  Tensor mask = ta;
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    mask[i] = out[i] < 0.0 ? -1.0 : 1.0;
    out[i] = std::fabs(out[i]);
  }
  Value m = input(std::move(mask));  // sign treated as locally constant
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [m](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.mul(gout, m)};
  });
  return v;
}

Value Graph::square(Value a) {
  const Tensor& ta = val(a);
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= out[i];
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [a](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.mul_scalar(g.mul(gout, a), 2.0)};
  });
  return v;
}

Value Graph::sqrt(Value a) {
  const Tensor& ta = val(a);
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::sqrt(out[i]);
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [v](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.div(g.mul_scalar(gout, 0.5), v)};
  });
  return v;
}

Value Graph::add_scalar(Value a, double c) {
  Tensor out = val(a);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += c;
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [](Graph&, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{gout};
  });
  return v;
}

Value Graph::mul_scalar(Value a, double c) {
  Tensor out = val(a);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [c](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.mul_scalar(gout, c)};
  });
  return v;
}

Value Graph::relu(Value a) { return leaky_relu(a, 0.0); }

Value Graph::leaky_relu(Value a, double slope) {
  const Tensor& ta = val(a);
  Tensor out = ta;
  Tensor mask = ta;
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    if (out[i] < 0.0) {
      mask[i] = slope;
      out[i] *= slope;
    } else {
      mask[i] = 1.0;
    }
  }
  Value m = input(std::move(mask));
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [m](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.mul(gout, m)};
  });
  return v;
}

Value Graph::sigmoid(Value a) {
  const Tensor& ta = val(a);
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [v](Graph& g, Value gout, const std::vector<bool>&) {
    // g * y * (1 - y)
    Value one_minus = g.add_scalar(g.neg(v), 1.0);
    return std::vector<Value>{g.mul(gout, g.mul(v, one_minus))};
  });
  return v;
}

// ---------------------------------------------------------------------------
// shape ops

Value Graph::reshape(Value a, std::vector<int> shape) {
  const Tensor& ta = val(a);
  if (Tensor::shape_numel(shape) != ta.numel())
    throw ShapeError("reshape: element count mismatch");
  Tensor out = ta;  // row-major data reinterpreted
  std::vector<double> data(out.data(), out.data() + out.numel());
  Tensor res = Tensor::from_data(shape, std::move(data));
  std::vector<int> orig = ta.shape();
  Value v = emit(std::move(res), {a.id});
  set_vjp(v, [orig](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.reshape(gout, orig)};
  });
  return v;
}

Value Graph::transpose2d(Value a) {
  const Tensor& ta = val(a);
  if (ta.rank() != 2) throw ShapeError("transpose2d expects rank 2");
  const int m = ta.dim(0), n = ta.dim(1);
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::int64_t>(j) * m + i] = ta[static_cast<std::int64_t>(i) * n + j];
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.transpose2d(gout)};
  });
  return v;
}

Value Graph::concat_channels(Value a, Value b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 4 || tb.rank() != 4)
    throw ShapeError("concat_channels expects rank-4 tensors");
  if (ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(2) || ta.dim(3) != tb.dim(3))
    throw ShapeError("concat_channels: incompatible shapes " + ta.shape_str() +
                     " vs " + tb.shape_str());
  const int n = ta.dim(0), ca = ta.dim(1), cb = tb.dim(1);
  const int h = ta.dim(2), w = ta.dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({n, ca + cb, h, w});
  for (int s = 0; s < n; ++s) {
    double* dst = out.data() + static_cast<std::int64_t>(s) * (ca + cb) * hw;
    const double* pa = ta.data() + static_cast<std::int64_t>(s) * ca * hw;
    const double* pb = tb.data() + static_cast<std::int64_t>(s) * cb * hw;
    std::copy(pa, pa + ca * hw, dst);
    std::copy(pb, pb + cb * hw, dst + ca * hw);
  }
  Value v = emit(std::move(out), {a.id, b.id});
  set_vjp(v, [ca, cb](Graph& g, Value gout, const std::vector<bool>& need) {
    std::vector<Value> r(2);
    if (need[0]) r[0] = g.slice_channels(gout, 0, ca);
    if (need[1]) r[1] = g.slice_channels(gout, ca, ca + cb);
    return r;
  });
  return v;
}

Value Graph::slice_channels(Value a, int c0, int c1) {
  const Tensor& ta = val(a);
  if (ta.rank() != 4) throw ShapeError("slice_channels expects rank 4");
  const int n = ta.dim(0), c = ta.dim(1), h = ta.dim(2), w = ta.dim(3);
  if (c0 < 0 || c1 > c || c0 >= c1) throw ShapeError("slice_channels: bad range");
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({n, c1 - c0, h, w});
  for (int s = 0; s < n; ++s) {
    const double* src = ta.data() + (static_cast<std::int64_t>(s) * c + c0) * hw;
    double* dst = out.data() + static_cast<std::int64_t>(s) * (c1 - c0) * hw;
    std::copy(src, src + static_cast<std::int64_t>(c1 - c0) * hw, dst);
  }
  const int after = c - c1;
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [c0, after](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.pad_channels(gout, c0, after)};
  });
  return v;
}

Value Graph::pad_channels(Value a, int before, int after) {
  const Tensor& ta = val(a);
  if (ta.rank() != 4) throw ShapeError("pad_channels expects rank 4");
  if (before < 0 || after < 0) throw ShapeError("pad_channels: negative pad");
  const int n = ta.dim(0), c = ta.dim(1), h = ta.dim(2), w = ta.dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({n, before + c + after, h, w});
  for (int s = 0; s < n; ++s) {
    const double* src = ta.data() + static_cast<std::int64_t>(s) * c * hw;
    double* dst = out.data() +
                  (static_cast<std::int64_t>(s) * (before + c + after) + before) * hw;
    std::copy(src, src + c * hw, dst);
  }
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [before, c](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.slice_channels(gout, before, before + c)};
  });
  return v;
}

// ---------------------------------------------------------------------------
// reductions / broadcasts

Value Graph::sum_all(Value a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (std::int64_t i = 0; i < ta.numel(); ++i) s += ta[i];
  std::vector<int> shape = ta.shape();
  Value v = emit(Tensor::scalar(s), {a.id});
  set_vjp(v, [shape](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.broadcast_scalar(gout, shape)};
  });
  return v;
}

Value Graph::mean_all(Value a) {
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(val(a).numel()));
}

Value Graph::sum_per_sample(Value a) {
  const Tensor& ta = val(a);
  if (ta.rank() < 2) throw ShapeError("sum_per_sample expects rank >= 2");
  const int n = ta.dim(0);
  const std::int64_t per = ta.numel() / n;
  Tensor out({n});
  for (int s = 0; s < n; ++s) {
    double acc = 0.0;
    const double* p = ta.data() + s * per;
    for (std::int64_t i = 0; i < per; ++i) acc += p[i];
    out[s] = acc;
  }
  std::vector<int> shape = ta.shape();
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [shape](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.broadcast_per_sample(gout, shape)};
  });
  return v;
}

Value Graph::broadcast_per_sample(Value a, std::vector<int> shape) {
  const Tensor& ta = val(a);
  if (ta.rank() != 1) throw ShapeError("broadcast_per_sample expects rank 1");
  if (shape.empty() || shape[0] != ta.dim(0))
    throw ShapeError("broadcast_per_sample: leading dim mismatch");
  const int n = ta.dim(0);
  const std::int64_t per = Tensor::shape_numel(shape) / n;
  Tensor out(shape);
  for (int s = 0; s < n; ++s) {
    double* p = out.data() + s * per;
    for (std::int64_t i = 0; i < per; ++i) p[i] = ta[s];
  }
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.sum_per_sample(gout)};
  });
  return v;
}

Value Graph::broadcast_scalar(Value a, std::vector<int> shape) {
  const Tensor& ta = val(a);
  if (ta.numel() != 1) throw ShapeError("broadcast_scalar expects a scalar");
  Tensor out(shape, ta[0]);
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.sum_all(gout)};
  });
  return v;
}

Value Graph::sum_channel(Value a) {
  const Tensor& ta = val(a);
  if (ta.rank() != 4) throw ShapeError("sum_channel expects rank 4");
  const int n = ta.dim(0), c = ta.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(ta.dim(2)) * ta.dim(3);
  Tensor out({c});
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch) {
      const double* p = ta.data() + (static_cast<std::int64_t>(s) * c + ch) * hw;
      double acc = 0.0;
      for (std::int64_t i = 0; i < hw; ++i) acc += p[i];
      out[ch] += acc;
    }
  std::vector<int> shape = ta.shape();
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [shape](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.broadcast_channel(gout, shape)};
  });
  return v;
}

Value Graph::broadcast_channel(Value a, std::vector<int> shape) {
  const Tensor& ta = val(a);
  if (ta.rank() != 1) throw ShapeError("broadcast_channel expects rank 1");
  if (shape.size() != 4 || shape[1] != ta.dim(0))
    throw ShapeError("broadcast_channel: channel dim mismatch");
  const int n = shape[0], c = shape[1];
  const std::int64_t hw = static_cast<std::int64_t>(shape[2]) * shape[3];
  Tensor out(shape);
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch) {
      double* p = out.data() + (static_cast<std::int64_t>(s) * c + ch) * hw;
      for (std::int64_t i = 0; i < hw; ++i) p[i] = ta[ch];
    }
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.sum_channel(gout)};
  });
  return v;
}

Value Graph::sum_rows(Value a) {
  const Tensor& ta = val(a);
  if (ta.rank() != 2) throw ShapeError("sum_rows expects rank 2");
  const int n = ta.dim(0), f = ta.dim(1);
  Tensor out({f});
  for (int s = 0; s < n; ++s)
    for (int i = 0; i < f; ++i) out[i] += ta[static_cast<std::int64_t>(s) * f + i];
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [n](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.broadcast_rows(gout, n)};
  });
  return v;
}

Value Graph::broadcast_rows(Value a, int n) {
  const Tensor& ta = val(a);
  if (ta.rank() != 1) throw ShapeError("broadcast_rows expects rank 1");
  const int f = ta.dim(0);
  Tensor out({n, f});
  for (int s = 0; s < n; ++s)
    for (int i = 0; i < f; ++i) out[static_cast<std::int64_t>(s) * f + i] = ta[i];
  Value v = emit(std::move(out), {a.id});
  set_vjp(v, [](Graph& g, Value gout, const std::vector<bool>&) {
    return std::vector<Value>{g.sum_rows(gout)};
  });
  return v;
}

// ---------------------------------------------------------------------------
// matmul / conv

Value Graph::matmul(Value a, Value b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0))
    throw ShapeError("matmul: bad shapes " + ta.shape_str() + " x " + tb.shape_str());
  const int m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  Tensor out({m, n});
  // row-major triple loop in ikj order; matrices here are small
  for (int i = 0; i < m; ++i) {
    const double* arow = ta.data() + static_cast<std::int64_t>(i) * k;
    double* orow = out.data() + static_cast<std::int64_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = tb.data() + static_cast<std::int64_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  Value v = emit(std::move(out), {a.id, b.id});
  set_vjp(v, [a, b](Graph& g, Value gout, const std::vector<bool>& need) {
    std::vector<Value> r(2);
    if (need[0]) r[0] = g.matmul(gout, g.transpose2d(b));
    if (need[1]) r[1] = g.matmul(g.transpose2d(a), gout);
    return r;
  });
  return v;
}

Value Graph::conv2d(Value x, Value w, int stride, int pad) {
  Tensor out = detail::conv2d_forward(val(x), val(w), stride, pad);
  const int h = val(x).dim(2), wsp = val(x).dim(3), k = val(w).dim(2);
  Value v = emit(std::move(out), {x.id, w.id});
  set_vjp(v, [x, w, stride, pad, h, wsp, k](Graph& g, Value gout,
                                            const std::vector<bool>& need) {
    std::vector<Value> r(2);
    if (need[0]) r[0] = g.conv2d_input_grad(gout, w, stride, pad, h, wsp);
    if (need[1]) r[1] = g.conv2d_weight_grad(x, gout, stride, pad, k);
    return r;
  });
  return v;
}

Value Graph::conv2d_input_grad(Value gy, Value w, int stride, int pad, int h, int w_sp) {
  Tensor out = detail::conv2d_input_grad(val(gy), val(w), stride, pad, h, w_sp);
  const int k = val(w).dim(2);
  Value v = emit(std::move(out), {gy.id, w.id});
  set_vjp(v, [gy, w, stride, pad, k](Graph& g, Value gout,
                                     const std::vector<bool>& need) {
    // adjoint identities: <G, dx(gy,w)> = <conv(G,w), gy> = <dw(G,gy), w>
    std::vector<Value> r(2);
    if (need[0]) r[0] = g.conv2d(gout, w, stride, pad);
    if (need[1]) r[1] = g.conv2d_weight_grad(gout, gy, stride, pad, k);
    return r;
  });
  return v;
}

Value Graph::conv2d_weight_grad(Value x, Value gy, int stride, int pad, int kernel) {
  Tensor out = detail::conv2d_weight_grad(val(x), val(gy), stride, pad, kernel);
  const int h = val(x).dim(2), wsp = val(x).dim(3);
  Value v = emit(std::move(out), {x.id, gy.id});
  set_vjp(v, [x, gy, stride, pad, h, wsp](Graph& g, Value gout,
                                          const std::vector<bool>& need) {
    // <W~, dw(x,gy)> = <dx(gy,W~), x> = <conv(x,W~), gy>
    std::vector<Value> r(2);
    if (need[0]) r[0] = g.conv2d_input_grad(gy, gout, stride, pad, h, wsp);
    if (need[1]) r[1] = g.conv2d(x, gout, stride, pad);
    return r;
  });
  return v;
}

// ---------------------------------------------------------------------------
// backward

std::vector<Value> Graph::backward(Value root, const std::vector<Value>& targets) {
  check(root);
  if (val(root).numel() != 1)
    throw ShapeError("backward root must be a scalar");
  for (Value t : targets) check(t);

  const std::size_t n = static_cast<std::size_t>(root.id) + 1;

  // down[i]: node i depends on some target, so gradient must reach it.
  std::vector<bool> down(n, false);
  for (Value t : targets)
    if (static_cast<std::size_t>(t.id) < n) down[static_cast<std::size_t>(t.id)] = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (down[i]) continue;
    for (std::int32_t in : nodes_[i]->inputs)
      if (down[static_cast<std::size_t>(in)]) {
        down[i] = true;
        break;
      }
  }

  std::vector<Value> grads(n);
  if (down[static_cast<std::size_t>(root.id)])
    grads[static_cast<std::size_t>(root.id)] = input(Tensor::scalar(1.0));

  for (std::int32_t i = root.id; i >= 0; --i) {
    const std::size_t ui = static_cast<std::size_t>(i);
    if (!grads[ui].valid() || !down[ui]) continue;
    const auto& inputs = nodes_[ui]->inputs;
    if (inputs.empty() || !nodes_[ui]->vjp) continue;
    std::vector<bool> need(inputs.size(), false);
    bool any = false;
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      need[j] = down[static_cast<std::size_t>(inputs[j])];
      any = any || need[j];
    }
    if (!any) continue;
    std::vector<Value> contrib = nodes_[ui]->vjp(*this, grads[ui], need);
    if (contrib.size() != inputs.size())
      throw Error("internal: vjp arity mismatch");
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      if (!need[j] || !contrib[j].valid()) continue;
      const std::size_t tj = static_cast<std::size_t>(inputs[j]);
      grads[tj] = grads[tj].valid() ? add(grads[tj], contrib[j]) : contrib[j];
    }
  }

  std::vector<Value> out;
  out.reserve(targets.size());
  for (Value t : targets) {
    if (static_cast<std::size_t>(t.id) < n && grads[static_cast<std::size_t>(t.id)].valid())
      out.push_back(grads[static_cast<std::size_t>(t.id)]);
    else
      out.push_back(Value{});
  }
  return out;
}

}  // namespace slicerec::ad
