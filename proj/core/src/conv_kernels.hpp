#pragma once

#include "slicerec/tensor.hpp"

namespace slicerec::ad::detail {

// y[n,o,i,j] = sum_{c,u,v} x[n,c,i*s-p+u,j*s-p+v] * w[o,c,u,v]
Tensor conv2d_forward(const Tensor& x, const Tensor& w, int stride, int pad);

// gx[n,c,a,b] = sum over (o,i,j,u,v) with a=i*s-p+u, b=j*s-p+v of
//              gy[n,o,i,j] * w[o,c,u,v]
// Target spatial size (h,w) is passed because it is not recoverable from gy.
Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, int stride, int pad,
                         int h, int w_sp);

// gw[o,c,u,v] = sum_{n,i,j} gy[n,o,i,j] * x[n,c,i*s-p+u,j*s-p+v]
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, int stride, int pad,
                          int kernel);

inline int conv_out_dim(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace slicerec::ad::detail
