#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fasam/rng.hpp"

namespace fasam {

/// Binary 2-D mask; values are 0 or 1.
struct Mask {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> v;

  Mask() = default;
  Mask(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, 0) {}

  std::uint8_t& at(int r, int c) { return v[static_cast<std::size_t>(r) * w + c]; }
  std::uint8_t at(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c]; }
  std::size_t foreground_count() const;
  bool empty_foreground() const { return foreground_count() == 0; }
};

/// Axis-aligned box in pixel coordinates, all bounds inclusive.
struct BoundingBoxPrompt {
  int row_min = 0;
  int col_min = 0;
  int row_max = 0;
  int col_max = 0;

  long height() const { return row_max - row_min + 1; }
  long width() const { return col_max - col_min + 1; }
  long area() const { return height() * width(); }
  bool operator==(const BoundingBoxPrompt&) const = default;
};

struct ComponentLabeling {
  std::vector<int> labels;        // (h*w), 0 = background, components from 1
  std::vector<long> sizes;        // sizes[i] = pixel count of label i+1
  int h = 0, w = 0;

  int label_at(int r, int c) const { return labels[static_cast<std::size_t>(r) * w + c]; }
  int component_count() const { return static_cast<int>(sizes.size()); }
};

/// BFS labeling of foreground components. Seeds are visited in row-major
/// order, so label numbering is deterministic. Connectivity is 4 or 8.
ComponentLabeling connected_components(const Mask& mask, int connectivity);

/// Keeps exactly one maximum-size component; ties go to the component whose
/// BFS seed comes first in row-major order. Empty input stays empty.
Mask largest_component(const Mask& mask, int connectivity);

/// Tight inclusive extents of the foreground, grown by `padding` and clipped
/// to the image. Empty mask yields nullopt.
std::optional<BoundingBoxPrompt> bbox_from_mask(const Mask& mask, int padding);

/// bbox_from_mask(largest_component(raw_mask)).
std::optional<BoundingBoxPrompt> generate_prompt(const Mask& raw_mask,
                                                 int connectivity, int padding);

/// Rescales the box about its center by scale_factor, shifts it by uniform
/// integer offsets in [-shift_px, shift_px] (rows then columns, one
/// uniform_int draw each), clips to the image, and never collapses below a
/// 1x1 extent.
BoundingBoxPrompt jitter_prompt(const BoundingBoxPrompt& box, double scale_factor,
                                int shift_px, RngStream& rng, int img_h, int img_w);

/// IoU between `box` and the tight box of the ground-truth mask.
double prompt_quality(const BoundingBoxPrompt& box, const Mask& gt_mask);

}  // namespace fasam
