#include <algorithm>
#include <map>
#include <vector>

#include "doctest.h"
#include "fasam/error.hpp"
#include "fasam/prompt.hpp"
#include "fasam/rng.hpp"

using namespace fasam;

namespace {

/// Independent flood-fill oracle (explicit stack, depth-first).
struct FloodFillOracle {
  std::vector<int> labels;
  std::vector<long> sizes;
  int h, w;

  FloodFillOracle(const Mask& mask, int connectivity) : h(mask.h), w(mask.w) {
    labels.assign(static_cast<std::size_t>(h) * w, 0);
    int next = 0;
    std::vector<std::pair<int, int>> stack;
    for (int r0 = 0; r0 < h; ++r0) {
      for (int c0 = 0; c0 < w; ++c0) {
        if (mask.at(r0, c0) == 0 || labels[static_cast<std::size_t>(r0) * w + c0])
          continue;
        ++next;
        long size = 0;
        stack.push_back({r0, c0});
        labels[static_cast<std::size_t>(r0) * w + c0] = next;
        while (!stack.empty()) {
          const auto [r, c] = stack.back();
          stack.pop_back();
          ++size;
          for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
              if (dr == 0 && dc == 0) continue;
              if (connectivity == 4 && dr != 0 && dc != 0) continue;
              const int nr = r + dr, nc = c + dc;
              if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
              if (mask.at(nr, nc) == 0 ||
                  labels[static_cast<std::size_t>(nr) * w + nc])
                continue;
              labels[static_cast<std::size_t>(nr) * w + nc] = next;
              stack.push_back({nr, nc});
            }
          }
        }
        sizes.push_back(size);
      }
    }
  }
};

/// Renumbers labels by first appearance in row-major order.
std::vector<int> canonical(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out(labels.size(), 0);
  int next = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 0) continue;
    auto [it, inserted] = remap.emplace(labels[i], next + 1);
    if (inserted) ++next;
    out[i] = it->second;
  }
  return out;
}

Mask random_mask(int h, int w, double density, RngStream& rng) {
  Mask m(h, w);
  for (auto& v : m.v) v = rng.uniform01() < density ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("labeling on an empty mask finds no components") {
  const Mask m(5, 7);
  for (int conn : {4, 8}) {
    const ComponentLabeling lab = connected_components(m, conn);
    CHECK(lab.component_count() == 0);
    for (int l : lab.labels) CHECK(l == 0);
  }
}

TEST_CASE("labeling on a full mask finds one component of full size") {
  Mask m(4, 6);
  for (auto& v : m.v) v = 1;
  for (int conn : {4, 8}) {
    const ComponentLabeling lab = connected_components(m, conn);
    REQUIRE(lab.component_count() == 1);
    CHECK(lab.sizes[0] == 24);
  }
}

TEST_CASE("labeling matches the flood-fill oracle on every 3x3 mask") {
  for (int bits = 0; bits < 512; ++bits) {
    Mask m(3, 3);
    for (int i = 0; i < 9; ++i) m.v[static_cast<std::size_t>(i)] = (bits >> i) & 1;
    for (int conn : {4, 8}) {
      const ComponentLabeling lab = connected_components(m, conn);
      const FloodFillOracle oracle(m, conn);
      REQUIRE(canonical(lab.labels) == canonical(oracle.labels));
      std::vector<long> a = lab.sizes, b = oracle.sizes;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      REQUIRE(a == b);
    }
  }
}

TEST_CASE("labeling matches the flood-fill oracle on random 16x16 masks") {
  RngStream rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const Mask m = random_mask(16, 16, 0.2 + 0.6 * rng.uniform01(), rng);
    for (int conn : {4, 8}) {
      const ComponentLabeling lab = connected_components(m, conn);
      const FloodFillOracle oracle(m, conn);
      REQUIRE(canonical(lab.labels) == canonical(oracle.labels));
    }
  }
}

TEST_CASE("largest_component keeps exactly the larger of two blobs") {
  Mask m(6, 6);
  // 5-pixel plus-shape and a 3-pixel bar.
  m.at(1, 1) = m.at(0, 1) = m.at(2, 1) = m.at(1, 0) = m.at(1, 2) = 1;
  m.at(4, 4) = m.at(4, 5) = m.at(5, 4) = 1;
  const Mask out = largest_component(m, 4);
  CHECK(out.foreground_count() == 5);
  CHECK(out.at(1, 1) == 1);
  CHECK(out.at(4, 4) == 0);
}

TEST_CASE("equal-size tie goes to the first row-major seed") {
  Mask m(3, 5);
  m.at(0, 0) = m.at(0, 1) = 1;  // first in scan order
  m.at(2, 3) = m.at(2, 4) = 1;
  const Mask out = largest_component(m, 4);
  CHECK(out.at(0, 0) == 1);
  CHECK(out.at(0, 1) == 1);
  CHECK(out.at(2, 3) == 0);
}

TEST_CASE("largest_component is an identity on single components and idempotent") {
  RngStream rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const Mask m = random_mask(12, 12, 0.4, rng);
    const Mask once = largest_component(m, 8);
    const Mask twice = largest_component(once, 8);
    REQUIRE(once.v == twice.v);
  }
  Mask single(5, 5);
  single.at(2, 2) = single.at(2, 3) = single.at(3, 2) = 1;
  CHECK(largest_component(single, 4).v == single.v);
}

TEST_CASE("empty masks produce empty output and no box") {
  const Mask m(4, 4);
  CHECK(largest_component(m, 4).empty_foreground());
  CHECK(!bbox_from_mask(m, 0).has_value());
  CHECK(!generate_prompt(m, 4, 0).has_value());
}

TEST_CASE("bbox of a single pixel is that pixel") {
  Mask m(8, 10);
  m.at(3, 7) = 1;
  const auto box = bbox_from_mask(m, 0);
  REQUIRE(box.has_value());
  CHECK(*box == BoundingBoxPrompt{3, 7, 3, 7});
}

TEST_CASE("bbox of an L-shaped set spans its extents") {
  Mask m(6, 6);
  m.at(1, 1) = m.at(1, 2) = m.at(4, 1) = 1;
  const auto box = bbox_from_mask(m, 0);
  REQUIRE(box.has_value());
  CHECK(*box == BoundingBoxPrompt{1, 1, 4, 2});
}

TEST_CASE("bbox padding clips at the image border") {
  Mask m(32, 32);
  for (auto& v : m.v) v = 1;
  const auto box = bbox_from_mask(m, 5);
  REQUIRE(box.has_value());
  CHECK(*box == BoundingBoxPrompt{0, 0, 31, 31});
}

TEST_CASE("prompt generation ignores speckle noise around a dominant blob") {
  Mask m(20, 20);
  for (int r = 5; r <= 12; ++r)
    for (int c = 6; c <= 13; ++c) m.at(r, c) = 1;
  m.at(0, 0) = 1;   // speckles away from the blob
  m.at(19, 2) = 1;
  m.at(2, 18) = 1;
  const auto box = generate_prompt(m, 4, 0);
  REQUIRE(box.has_value());
  CHECK(*box == BoundingBoxPrompt{5, 6, 12, 13});
}

TEST_CASE("single-blob prompts equal the raw tight box") {
  Mask m(16, 16);
  for (int r = 4; r <= 9; ++r)
    for (int c = 2; c <= 6; ++c) m.at(r, c) = 1;
  CHECK(*generate_prompt(m, 4, 0) == *bbox_from_mask(m, 0));
}

TEST_CASE("prompt box contains its component and touches all four extents") {
  RngStream rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    Mask m = random_mask(14, 14, 0.35, rng);
    if (m.empty_foreground()) continue;
    const Mask keep = largest_component(m, 4);
    const auto box = generate_prompt(m, 4, 0);
    REQUIRE(box.has_value());
    bool touch_top = false, touch_bottom = false, touch_left = false,
         touch_right = false;
    for (int r = 0; r < keep.h; ++r) {
      for (int c = 0; c < keep.w; ++c) {
        if (!keep.at(r, c)) continue;
        REQUIRE(r >= box->row_min);
        REQUIRE(r <= box->row_max);
        REQUIRE(c >= box->col_min);
        REQUIRE(c <= box->col_max);
        touch_top |= r == box->row_min;
        touch_bottom |= r == box->row_max;
        touch_left |= c == box->col_min;
        touch_right |= c == box->col_max;
      }
    }
    CHECK(touch_top);
    CHECK(touch_bottom);
    CHECK(touch_left);
    CHECK(touch_right);
  }
}

TEST_CASE("filling pixels inside the box never changes the box") {
  Mask m(12, 12);
  for (int r = 3; r <= 8; ++r)
    for (int c = 4; c <= 9; ++c)
      if ((r + c) % 2 == 0) m.at(r, c) = 1;
  m.at(3, 4) = m.at(8, 9) = 1;  // pin the extents
  const auto before = generate_prompt(m, 8, 0);
  REQUIRE(before.has_value());
  for (int r = before->row_min; r <= before->row_max; ++r)
    for (int c = before->col_min; c <= before->col_max; ++c) m.at(r, c) = 1;
  const auto after = generate_prompt(m, 8, 0);
  REQUIRE(after.has_value());
  CHECK(*before == *after);
}

TEST_CASE("jitter with neutral parameters is an identity") {
  RngStream rng(1);
  const BoundingBoxPrompt box{4, 5, 10, 12};
  CHECK(jitter_prompt(box, 1.0, 0, rng, 32, 32) == box);
}

TEST_CASE("doubling scale doubles each side before clipping") {
  RngStream rng(2);
  const BoundingBoxPrompt box{8, 6, 12, 14};  // extents 4 and 8
  const BoundingBoxPrompt out = jitter_prompt(box, 2.0, 0, rng, 64, 64);
  CHECK(out.row_max - out.row_min == 8);
  CHECK(out.col_max - out.col_min == 16);
  CHECK(out.row_min == 6);
  CHECK(out.col_min == 2);
}

TEST_CASE("repeated shrinking never collapses below one pixel") {
  RngStream rng(3);
  BoundingBoxPrompt box{10, 10, 11, 11};
  for (int i = 0; i < 20; ++i) {
    box = jitter_prompt(box, 0.5, 0, rng, 32, 32);
    REQUIRE(box.row_max >= box.row_min);
    REQUIRE(box.col_max >= box.col_min);
  }
}

TEST_CASE("jittered boxes stay within bounds") {
  RngStream rng(4);
  const BoundingBoxPrompt box{2, 2, 29, 29};
  for (int i = 0; i < 100; ++i) {
    const BoundingBoxPrompt out = jitter_prompt(box, 1.5, 8, rng, 32, 32);
    REQUIRE(out.row_min >= 0);
    REQUIRE(out.col_min >= 0);
    REQUIRE(out.row_max < 32);
    REQUIRE(out.col_max < 32);
  }
}

TEST_CASE("prompt quality is box-to-tight-box IoU") {
  Mask gt(32, 32);
  for (int r = 10; r <= 19; ++r)
    for (int c = 10; c <= 19; ++c) gt.at(r, c) = 1;

  CHECK(prompt_quality({10, 10, 19, 19}, gt) == doctest::Approx(1.0));
  CHECK(prompt_quality({0, 0, 5, 5}, gt) == doctest::Approx(0.0));
  // Same 10x10 box shifted by 5 columns: overlap 50, union 150.
  CHECK(prompt_quality({10, 15, 19, 24}, gt) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("prompt quality rejects an empty ground truth") {
  const Mask gt(8, 8);
  CHECK_THROWS_AS(prompt_quality({0, 0, 3, 3}, gt), InvalidInputError);
}

TEST_CASE("connectivity distinguishes a diagonal pair") {
  Mask m(2, 2);
  m.at(0, 0) = m.at(1, 1) = 1;
  CHECK(connected_components(m, 4).component_count() == 2);
  CHECK(connected_components(m, 8).component_count() == 1);
  CHECK_THROWS_AS(connected_components(m, 6), InvalidInputError);
}
