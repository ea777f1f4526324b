#pragma once

#include <array>
#include <string>
#include <vector>

#include "slicerec/tensor.hpp"
#include "slicerec/volume.hpp"

namespace slicerec {

// Sliding-window geometry: three consecutive slices predict the next three.
inline constexpr int kWindowIn = 3;
inline constexpr int kWindowOut = 3;
inline constexpr int kWindowSpan = kWindowIn + kWindowOut;

// Three slices stacked as channels of a [3, H, W] tensor.
ad::Tensor stack_channels(const Slice& a, const Slice& b, const Slice& c);
std::array<Slice, 3> unstack_channels(const ad::Tensor& t);

struct WindowPair {
  ad::Tensor input;    // [3, H, W], slices i, i+1, i+2
  ad::Tensor target;   // [3, H, W], slices i+3, i+4, i+5
  int start_index = 0; // i
  std::string scan_id;
};

// All n - 5 pairs of a scan, in slice order. n < 6 is an error.
std::vector<WindowPair> make_window_pairs(const Volume& v);

}  // namespace slicerec
