#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "slicerec/tensor.hpp"

namespace slicerec::ad {

// Handle to a node on a Graph tape.
struct Value {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff tape with eager evaluation: every op computes its
// output tensor when the node is created. backward() emits the gradient
// computation as new nodes on the same tape, so a scalar assembled from
// first-order gradient nodes can be differentiated again by a second
// backward() call. The WGAN-GP critic objective relies on this.
//
// A Graph is built per training step and discarded. Not thread-safe.
class Graph {
 public:
  // Leaf node. Whether gradients flow to it is decided per backward() call
  // by listing it in `targets`; constants and parameters use the same entry.
  Value input(Tensor t);

  // Elementwise, equal shapes.
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value div(Value a, Value b);
  Value neg(Value a);
  Value abs(Value a);
  Value square(Value a);
  Value sqrt(Value a);
  Value add_scalar(Value a, double c);
  Value mul_scalar(Value a, double c);
  Value relu(Value a);
  Value leaky_relu(Value a, double slope);
  Value sigmoid(Value a);

  // Shape ops.
  Value reshape(Value a, std::vector<int> shape);
  Value transpose2d(Value a);
  // [N,Ca,H,W] ++ [N,Cb,H,W] -> [N,Ca+Cb,H,W]
  Value concat_channels(Value a, Value b);
  // [N,C,H,W] -> [N,c1-c0,H,W]
  Value slice_channels(Value a, int c0, int c1);
  // Zero channels inserted before/after; adjoint of slice_channels.
  Value pad_channels(Value a, int before, int after);

  // Reductions and their broadcast adjoints.
  Value sum_all(Value a);    // -> [1]
  Value mean_all(Value a);   // -> [1]
  Value sum_per_sample(Value a);  // [N,...] -> [N]
  Value broadcast_per_sample(Value a, std::vector<int> shape);  // [N] -> shape
  Value broadcast_scalar(Value a, std::vector<int> shape);      // [1] -> shape
  Value sum_channel(Value a);     // [N,C,H,W] -> [C]
  Value broadcast_channel(Value a, std::vector<int> shape);     // [C] -> [N,C,H,W]
  Value sum_rows(Value a);        // [N,F] -> [F]
  Value broadcast_rows(Value a, int n);  // [F] -> [N,F]

  // [m,k] x [k,n] -> [m,n]
  Value matmul(Value a, Value b);

  // Convolution family, NCHW layout, square kernels. The three kernels are
  // mutual adjoints, which closes the family under differentiation.
  // x:[N,Ci,H,W], w:[Co,Ci,k,k] -> [N,Co,Ho,Wo]
  Value conv2d(Value x, Value w, int stride, int pad);
  // Adjoint w.r.t. x; also the forward map of a transposed convolution.
  // gy:[N,Co,Ho,Wo], w:[Co,Ci,k,k] -> [N,Ci,h,w]
  Value conv2d_input_grad(Value gy, Value w, int stride, int pad, int h, int w_sp);
  // Adjoint w.r.t. w. x:[N,Ci,H,W], gy:[N,Co,Ho,Wo] -> [Co,Ci,k,k]
  Value conv2d_weight_grad(Value x, Value gy, int stride, int pad, int kernel);

  const Tensor& val(Value v) const;
  std::size_t size() const { return nodes_.size(); }

  // Gradient of scalar `root` w.r.t. each target, as new nodes on this tape.
  // Targets with no path to root come back invalid.
  std::vector<Value> backward(Value root, const std::vector<Value>& targets);

 private:
  // vjp(graph, upstream_grad, need_input_grad) -> per-input contributions;
  // entries where need is false may be left invalid.
  using Vjp = std::function<std::vector<Value>(Graph&, Value, const std::vector<bool>&)>;

  struct Node {
    Tensor value;
    std::vector<std::int32_t> inputs;
    Vjp vjp;
  };

  // unique_ptr keeps Node storage stable while vjp closures emit new nodes
  std::vector<std::unique_ptr<Node>> nodes_;

  Value emit(Tensor value, std::vector<std::int32_t> inputs);
  void set_vjp(Value v, Vjp vjp);
  const Node& node(Value v) const;
  void check(Value v) const;
  static void check_same_shape(const Tensor& a, const Tensor& b, const char* op);
};

}  // namespace slicerec::ad
