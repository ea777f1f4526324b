#include <string>
#include <vector>

#include "doctest.h"
#include "slicerec/errors.hpp"
#include "slicerec/window.hpp"

using namespace slicerec;

namespace {

Volume volume_with(int n, int h = 4, int w = 4) {
  Volume v;
  v.subject_id = "S";
  v.scan_id = "S_s0";
  for (int i = 0; i < n; ++i) {
    Slice s(h, w);
    for (double& p : s.pixels) p = 0.01 * i;
    v.slices.push_back(std::move(s));
  }
  return v;
}

}  // namespace

TEST_CASE("pair count follows max(0, n - 5) for every length") {
  for (int n = 0; n <= 60; ++n) {
    const Volume v = volume_with(n);
    const auto pairs = make_window_pairs(v);
    const int expected = n > 5 ? n - 5 : 0;
    CHECK(static_cast<int>(pairs.size()) == expected);
  }
  // The canonical case: a 40-slice scan yields 35 setups.
  CHECK(make_window_pairs(volume_with(40)).size() == 35);
  // Minimal case: exactly one window.
  const auto one = make_window_pairs(volume_with(6));
  REQUIRE(one.size() == 1);
  CHECK(one[0].start_index == 0);
}

TEST_CASE("windows are consecutive, ordered, and cover every slice") {
  const Volume v = volume_with(11);
  const auto pairs = make_window_pairs(v);
  REQUIRE(pairs.size() == 6);
  std::vector<bool> seen(11, false);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const WindowPair& p = pairs[k];
    CHECK(p.start_index == static_cast<int>(k));
    CHECK(p.scan_id == "S_s0");
    // channel c of input is slice start+c; of target, slice start+3+c
    for (int c = 0; c < 3; ++c) {
      const double got_in = p.input[static_cast<std::int64_t>(c) * 16];
      const double got_tg = p.target[static_cast<std::int64_t>(c) * 16];
      CHECK(got_in == doctest::Approx(0.01 * (p.start_index + c)));
      CHECK(got_tg == doctest::Approx(0.01 * (p.start_index + 3 + c)));
      seen[static_cast<std::size_t>(p.start_index + c)] = true;
      seen[static_cast<std::size_t>(p.start_index + 3 + c)] = true;
    }
  }
  for (bool b : seen) CHECK(b);
}

TEST_CASE("stacking preserves values and round-trips") {
  Slice a(3, 2), b(3, 2), c(3, 2);
  for (int i = 0; i < 6; ++i) {
    a.pixels[static_cast<std::size_t>(i)] = 0.1 * i;
    b.pixels[static_cast<std::size_t>(i)] = 0.1 * i + 0.01;
    c.pixels[static_cast<std::size_t>(i)] = 0.1 * i + 0.02;
  }
  const ad::Tensor t = stack_channels(a, b, c);
  REQUIRE(t.rank() == 3);
  CHECK(t.dim(0) == 3);
  CHECK(t.dim(1) == 3);
  CHECK(t.dim(2) == 2);
  // channel 1 is exactly the middle slice
  for (int i = 0; i < 6; ++i)
    CHECK(t[6 + i] == b.pixels[static_cast<std::size_t>(i)]);

  const auto back = unstack_channels(t);
  CHECK(back[0].pixels == a.pixels);
  CHECK(back[1].pixels == b.pixels);
  CHECK(back[2].pixels == c.pixels);

  Slice wrong(2, 2);
  CHECK_THROWS_AS(stack_channels(a, b, wrong), ShapeError);
}
