#include "slicerec/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace slicerec {

double cdr_value(Cdr c) {
  switch (c) {
    case Cdr::zero: return 0.0;
    case Cdr::half: return 0.5;
    case Cdr::one: return 1.0;
    case Cdr::two: return 2.0;
  }
  throw DataError("bad cdr enum");
}

std::string cdr_str(Cdr c) {
  switch (c) {
    case Cdr::zero: return "0";
    case Cdr::half: return "0.5";
    case Cdr::one: return "1";
    case Cdr::two: return "2";
  }
  throw DataError("bad cdr enum");
}

Cdr cdr_parse(const std::string& s) {
  if (s == "0" || s == "0.0") return Cdr::zero;
  if (s == "0.5" || s == ".5") return Cdr::half;
  if (s == "1" || s == "1.0") return Cdr::one;
  if (s == "2" || s == "2.0") return Cdr::two;
  throw FormatError("invalid cdr '" + s + "' (expected 0, 0.5, 1 or 2)");
}

std::string split_str(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  throw DataError("bad split enum");
}

Split split_parse(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation" || s == "val") return Split::validation;
  if (s == "test") return Split::test;
  throw FormatError("invalid split '" + s + "'");
}

Slice::Slice(int h, int w, double fill) : height(h), width(w) {
  if (h <= 0 || w <= 0)
    throw ShapeError("slice dimensions must be positive");
  pixels.assign(static_cast<std::size_t>(h) * w, fill);
}

void Volume::validate() const {
  if (slices.empty()) throw DataError("volume '" + scan_id + "' has no slices");
  const int h = slices.front().height;
  const int w = slices.front().width;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const Slice& s = slices[i];
    if (s.height != h || s.width != w)
      throw ShapeError("volume '" + scan_id + "': slice " + std::to_string(i) +
                       " has mismatched dimensions");
    if (s.pixels.size() != static_cast<std::size_t>(h) * w)
      throw ShapeError("volume '" + scan_id + "': slice " + std::to_string(i) +
                       " pixel count does not match dimensions");
    for (double p : s.pixels)
      if (!std::isfinite(p))
        throw DataError("volume '" + scan_id + "': non-finite pixel in slice " +
                        std::to_string(i));
  }
}

Slice zero_pad_slice(const Slice& s, int target_width) {
  if (target_width < s.width)
    throw DimensionError("pad target width " + std::to_string(target_width) +
                     " smaller than slice width " + std::to_string(s.width));
  if (target_width == s.width) return s;
  Slice out(s.height, target_width, 0.0);
  // Centered; an odd surplus puts the extra column on the right.
  const int left = (target_width - s.width) / 2;
  for (int r = 0; r < s.height; ++r)
    for (int c = 0; c < s.width; ++c) out.at(r, left + c) = s.at(r, c);
  return out;
}

Volume normalize_volume(const Volume& v) {
  v.validate();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const Slice& s : v.slices)
    for (double p : s.pixels) {
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
  Volume out = v;
  const double span = hi - lo;
  for (Slice& s : out.slices)
    for (double& p : s.pixels) p = span > 0 ? (p - lo) / span : 0.0;
  return out;
}

Volume select_slices(const Volume& v, int lo, int hi) {
  if (lo < 0 || hi >= v.n_slices() || lo > hi)
    throw BoundsError("slice range [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "] invalid for " +
                      std::to_string(v.n_slices()) + " slices");
  Volume out = v;
  out.slices.assign(v.slices.begin() + lo, v.slices.begin() + hi + 1);
  return out;
}

std::pair<int, int> PreprocessConfig::resolve_range(int n_slices) const {
  switch (range_mode) {
    case RangeMode::full:
      return {0, n_slices - 1};
    case RangeMode::middle40: {
      // Central 40% of the stack: drop 30% from each end (floor), keep
      // at least one slice.
      const int drop = static_cast<int>(n_slices * 0.3);
      int a = drop, b = n_slices - 1 - drop;
      if (a > b) a = b = n_slices / 2;
      return {a, b};
    }
    case RangeMode::explicit_range:
      return {lo, hi};
  }
  throw ConfigError("bad range mode");
}

Volume preprocess_volume(const Volume& v, const PreprocessConfig& cfg) {
  Volume out = normalize_volume(v);
  auto [a, b] = cfg.resolve_range(out.n_slices());
  out = select_slices(out, a, b);
  if (cfg.pad_to_width > 0)
    for (Slice& s : out.slices) s = zero_pad_slice(s, cfg.pad_to_width);
  return out;
}

}  // namespace slicerec
