#include "slicerec/window.hpp"

#include <cstring>

#include "slicerec/errors.hpp"

namespace slicerec {

ad::Tensor stack_channels(const Slice& a, const Slice& b, const Slice& c) {
  const Slice* s[3] = {&a, &b, &c};
  for (int i = 1; i < 3; ++i)
    if (s[i]->height != a.height || s[i]->width != a.width)
      throw ShapeError("stack_channels: slice dimensions differ");
  ad::Tensor t({3, a.height, a.width});
  const std::size_t plane = a.pixels.size();
  for (int i = 0; i < 3; ++i)
    std::memcpy(t.data() + i * plane, s[i]->pixels.data(),
                plane * sizeof(double));
  return t;
}

std::array<Slice, 3> unstack_channels(const ad::Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3)
    throw ShapeError("unstack_channels: expected [3, H, W], got " + t.shape_str());
  const int h = static_cast<int>(t.dim(1));
  const int w = static_cast<int>(t.dim(2));
  std::array<Slice, 3> out = {Slice(h, w), Slice(h, w), Slice(h, w)};
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < 3; ++i)
    std::memcpy(out[i].pixels.data(), t.data() + i * plane,
                plane * sizeof(double));
  return out;
}

std::vector<WindowPair> make_window_pairs(const Volume& v) {
  const int n = v.n_slices();
  std::vector<WindowPair> out;
  if (n < kWindowSpan) return out;  // short scans yield no pairs
  v.validate();
  out.reserve(static_cast<std::size_t>(n - kWindowSpan + 1));
  for (int i = 0; i + kWindowSpan <= n; ++i) {
    WindowPair p;
    p.input = stack_channels(v.slices[i], v.slices[i + 1], v.slices[i + 2]);
    p.target = stack_channels(v.slices[i + 3], v.slices[i + 4], v.slices[i + 5]);
    p.start_index = i;
    p.scan_id = v.scan_id;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace slicerec
