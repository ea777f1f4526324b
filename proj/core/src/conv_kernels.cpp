#include "conv_kernels.hpp"

#include <Eigen/Core>
#include <vector>

#include "slicerec/errors.hpp"

namespace slicerec::ad::detail {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

// col[(c*k + u)*k + v, i*wo + j] = x[c, i*s-p+u, j*s-p+v], zero outside.
void im2col(const double* x, int ci, int h, int w, int k, int stride, int pad,
            int ho, int wo, double* col) {
  for (int c = 0; c < ci; ++c) {
    for (int u = 0; u < k; ++u) {
      for (int v = 0; v < k; ++v) {
        double* row = col + (static_cast<std::int64_t>(c) * k * k + u * k + v) *
                                (static_cast<std::int64_t>(ho) * wo);
        for (int i = 0; i < ho; ++i) {
          const int a = i * stride - pad + u;
          if (a < 0 || a >= h) {
            for (int j = 0; j < wo; ++j) row[i * wo + j] = 0.0;
            continue;
          }
          const double* src = x + (static_cast<std::int64_t>(c) * h + a) * w;
          for (int j = 0; j < wo; ++j) {
            const int b = j * stride - pad + v;
            row[i * wo + j] = (b < 0 || b >= w) ? 0.0 : src[b];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image.
void col2im_add(const double* col, int ci, int h, int w, int k, int stride,
                int pad, int ho, int wo, double* x) {
  for (int c = 0; c < ci; ++c) {
    for (int u = 0; u < k; ++u) {
      for (int v = 0; v < k; ++v) {
        const double* row = col + (static_cast<std::int64_t>(c) * k * k + u * k + v) *
                                      (static_cast<std::int64_t>(ho) * wo);
        for (int i = 0; i < ho; ++i) {
          const int a = i * stride - pad + u;
          if (a < 0 || a >= h) continue;
          double* dst = x + (static_cast<std::int64_t>(c) * h + a) * w;
          for (int j = 0; j < wo; ++j) {
            const int b = j * stride - pad + v;
            if (b >= 0 && b < w) dst[b] += row[i * wo + j];
          }
        }
      }
    }
  }
}

void check_conv_args(const Tensor& x, const Tensor& w, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4)
    throw ShapeError("conv2d expects x:[N,C,H,W], w:[O,C,k,k]");
  if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d kernels must be square");
  if (x.dim(1) != w.dim(1))
    throw ShapeError("conv2d channel mismatch: x " + x.shape_str() + " vs w " +
                     w.shape_str());
  if (stride < 1 || pad < 0) throw ShapeError("conv2d bad stride/pad");
}

std::vector<double>& scratch() {
  thread_local std::vector<double> buf;
  return buf;
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, int stride, int pad) {
  check_conv_args(x, w, stride, pad);
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), wsp = x.dim(3);
  const int co = w.dim(0), k = w.dim(2);
  const int ho = conv_out_dim(h, k, stride, pad), wo = conv_out_dim(wsp, k, stride, pad);
  if (ho <= 0 || wo <= 0)
    throw ShapeError("conv2d output would be empty for x " + x.shape_str());

  Tensor y({n, co, ho, wo});
  const std::int64_t ckk = static_cast<std::int64_t>(ci) * k * k;
  const std::int64_t hw = static_cast<std::int64_t>(ho) * wo;
  auto& col = scratch();
  col.resize(static_cast<std::size_t>(ckk * hw));

  MapC wm(w.data(), co, ckk);
  for (int s = 0; s < n; ++s) {
    im2col(x.data() + static_cast<std::int64_t>(s) * ci * h * wsp, ci, h, wsp, k,
           stride, pad, ho, wo, col.data());
    MapC cm(col.data(), ckk, hw);
    MapM ym(y.data() + static_cast<std::int64_t>(s) * co * hw, co, hw);
    ym.noalias() = wm * cm;
  }
  return y;
}

Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w, int stride, int pad,
                         int h, int w_sp) {
  if (gy.rank() != 4 || w.rank() != 4)
    throw ShapeError("conv2d_input_grad expects gy:[N,O,Ho,Wo], w:[O,C,k,k]");
  if (gy.dim(1) != w.dim(0))
    throw ShapeError("conv2d_input_grad channel mismatch: gy " + gy.shape_str() +
                     " vs w " + w.shape_str());
  const int n = gy.dim(0), co = w.dim(0), ci = w.dim(1), k = w.dim(2);
  const int ho = gy.dim(2), wo = gy.dim(3);
  if (conv_out_dim(h, k, stride, pad) != ho || conv_out_dim(w_sp, k, stride, pad) != wo)
    throw ShapeError("conv2d_input_grad target size inconsistent with gy");

  Tensor gx({n, ci, h, w_sp});
  const std::int64_t ckk = static_cast<std::int64_t>(ci) * k * k;
  const std::int64_t hw = static_cast<std::int64_t>(ho) * wo;
  auto& col = scratch();
  col.resize(static_cast<std::size_t>(ckk * hw));

  MapC wm(w.data(), co, ckk);
  for (int s = 0; s < n; ++s) {
    MapC gym(gy.data() + static_cast<std::int64_t>(s) * co * hw, co, hw);
    MapM cm(col.data(), ckk, hw);
    cm.noalias() = wm.transpose() * gym;
    col2im_add(col.data(), ci, h, w_sp, k, stride, pad, ho, wo,
               gx.data() + static_cast<std::int64_t>(s) * ci * h * w_sp);
  }
  return gx;
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, int stride, int pad,
                          int kernel) {
  if (x.rank() != 4 || gy.rank() != 4)
    throw ShapeError("conv2d_weight_grad expects x:[N,C,H,W], gy:[N,O,Ho,Wo]");
  if (x.dim(0) != gy.dim(0))
    throw ShapeError("conv2d_weight_grad batch mismatch");
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), wsp = x.dim(3);
  const int co = gy.dim(1), ho = gy.dim(2), wo = gy.dim(3);
  const int k = kernel;
  if (conv_out_dim(h, k, stride, pad) != ho || conv_out_dim(wsp, k, stride, pad) != wo)
    throw ShapeError("conv2d_weight_grad gy size inconsistent with x");

  Tensor gw({co, ci, k, k});
  const std::int64_t ckk = static_cast<std::int64_t>(ci) * k * k;
  const std::int64_t hw = static_cast<std::int64_t>(ho) * wo;
  auto& col = scratch();
  col.resize(static_cast<std::size_t>(ckk * hw));

  MapM gwm(gw.data(), co, ckk);
  for (int s = 0; s < n; ++s) {
    im2col(x.data() + static_cast<std::int64_t>(s) * ci * h * wsp, ci, h, wsp, k,
           stride, pad, ho, wo, col.data());
    MapC cm(col.data(), ckk, hw);
    MapC gym(gy.data() + static_cast<std::int64_t>(s) * co * hw, co, hw);
    gwm.noalias() += gym * cm.transpose();
  }
  return gw;
}

}  // namespace slicerec::ad::detail
