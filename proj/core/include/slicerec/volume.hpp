#pragma once

#include <string>
#include <vector>

#include "slicerec/errors.hpp"

namespace slicerec {

// Clinical Dementia Rating label carried by every scan.
enum class Cdr { zero, half, one, two };

double cdr_value(Cdr c);
std::string cdr_str(Cdr c);
Cdr cdr_parse(const std::string& s);

enum class Split { train, validation, test };

std::string split_str(Split s);
Split split_parse(const std::string& s);

// One grayscale slice, row-major. Intensities live in [0,1] once a volume
// has been normalized; raw loaded data is already in [0,1] because the
// on-disk format stores u16 fractions.
struct Slice {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Slice() = default;
  Slice(int h, int w, double fill = 0.0);

  double at(int r, int c) const {
    return pixels[static_cast<std::size_t>(r) * width + c];
  }
  double& at(int r, int c) {
    return pixels[static_cast<std::size_t>(r) * width + c];
  }
};

// One scan: ordered slices plus identity and labels.
struct Volume {
  std::string subject_id;
  std::string scan_id;
  Cdr cdr = Cdr::zero;
  Split split = Split::train;
  std::vector<Slice> slices;

  int n_slices() const { return static_cast<int>(slices.size()); }
  int height() const { return slices.empty() ? 0 : slices.front().height; }
  int width() const { return slices.empty() ? 0 : slices.front().width; }

  // All slices share dimensions, pixel values finite.
  void validate() const;
};

// Horizontal zero padding, centered with the odd column going right.
// Cropping the result back to the original width recovers the input.
Slice zero_pad_slice(const Slice& s, int target_width);

// Per-scan min-max map to [0,1]; a constant volume maps to all zeros.
Volume normalize_volume(const Volume& v);

// Contiguous sub-volume [lo, hi], metadata unchanged.
Volume select_slices(const Volume& v, int lo, int hi);

// Preprocessing applied identically at train and inference time.
struct PreprocessConfig {
  enum class RangeMode { full, middle40, explicit_range };

  int pad_to_width = 0;  // 0 = leave width unchanged
  RangeMode range_mode = RangeMode::middle40;
  int lo = 0;
  int hi = -1;  // inclusive, used when range_mode == explicit_range

  // Resolved [lo, hi] for a volume with n slices.
  std::pair<int, int> resolve_range(int n_slices) const;
};

Volume preprocess_volume(const Volume& v, const PreprocessConfig& cfg);

}  // namespace slicerec
