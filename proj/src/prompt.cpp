#include "fasam/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "fasam/error.hpp"

namespace fasam {

std::size_t Mask::foreground_count() const {
  std::size_t n = 0;
  for (std::uint8_t x : v) n += x != 0;
  return n;
}

namespace {

void require_connectivity(int connectivity) {
  if (connectivity != 4 && connectivity != 8)
    throw InvalidInputError("connectivity must be 4 or 8");
}

constexpr int kDr8[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
constexpr int kDc8[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
constexpr int kDr4[4] = {-1, 0, 0, 1};
constexpr int kDc4[4] = {0, -1, 1, 0};

}  // namespace

ComponentLabeling connected_components(const Mask& mask, int connectivity) {
  require_connectivity(connectivity);
  ComponentLabeling out;
  out.h = mask.h;
  out.w = mask.w;
  out.labels.assign(static_cast<std::size_t>(mask.h) * mask.w, 0);

  const int* dr = connectivity == 4 ? kDr4 : kDr8;
  const int* dc = connectivity == 4 ? kDc4 : kDc8;
  const int n_dir = connectivity;

  std::deque<std::pair<int, int>> queue;
  int next_label = 0;
  for (int r0 = 0; r0 < mask.h; ++r0) {
    for (int c0 = 0; c0 < mask.w; ++c0) {
      if (mask.at(r0, c0) == 0 || out.label_at(r0, c0) != 0) continue;
      ++next_label;
      long size = 0;
      queue.clear();
      queue.emplace_back(r0, c0);
      out.labels[static_cast<std::size_t>(r0) * mask.w + c0] = next_label;
      while (!queue.empty()) {
        const auto [r, c] = queue.front();
        queue.pop_front();
        ++size;
        for (int d = 0; d < n_dir; ++d) {
          const int nr = r + dr[d], nc = c + dc[d];
          if (nr < 0 || nr >= mask.h || nc < 0 || nc >= mask.w) continue;
          if (mask.at(nr, nc) == 0 || out.label_at(nr, nc) != 0) continue;
          out.labels[static_cast<std::size_t>(nr) * mask.w + nc] = next_label;
          queue.emplace_back(nr, nc);
        }
      }
      out.sizes.push_back(size);
    }
  }
  return out;
}

Mask largest_component(const Mask& mask, int connectivity) {
  const ComponentLabeling labeling = connected_components(mask, connectivity);
  Mask out(mask.h, mask.w);
  if (labeling.sizes.empty()) return out;
  // Labels are assigned in row-major seed order, so the first maximum wins
  // ties by construction.
  int best = 1;
  for (int i = 2; i <= labeling.component_count(); ++i) {
    if (labeling.sizes[static_cast<std::size_t>(i) - 1] >
        labeling.sizes[static_cast<std::size_t>(best) - 1])
      best = i;
  }
  for (std::size_t i = 0; i < labeling.labels.size(); ++i)
    out.v[i] = labeling.labels[i] == best ? 1 : 0;
  return out;
}

std::optional<BoundingBoxPrompt> bbox_from_mask(const Mask& mask, int padding) {
  if (padding < 0) throw InvalidInputError("bbox padding must be >= 0");
  int rmin = mask.h, rmax = -1, cmin = mask.w, cmax = -1;
  for (int r = 0; r < mask.h; ++r) {
    for (int c = 0; c < mask.w; ++c) {
      if (mask.at(r, c) == 0) continue;
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
      cmin = std::min(cmin, c);
      cmax = std::max(cmax, c);
    }
  }
  if (rmax < 0) return std::nullopt;
  BoundingBoxPrompt box;
  box.row_min = std::max(0, rmin - padding);
  box.col_min = std::max(0, cmin - padding);
  box.row_max = std::min(mask.h - 1, rmax + padding);
  box.col_max = std::min(mask.w - 1, cmax + padding);
  return box;
}

std::optional<BoundingBoxPrompt> generate_prompt(const Mask& raw_mask,
                                                 int connectivity, int padding) {
  return bbox_from_mask(largest_component(raw_mask, connectivity), padding);
}

BoundingBoxPrompt jitter_prompt(const BoundingBoxPrompt& box, double scale_factor,
                                int shift_px, RngStream& rng, int img_h,
                                int img_w) {
  if (!(scale_factor > 0.0))
    throw InvalidInputError("jitter_prompt: scale_factor must be > 0");
  if (shift_px < 0) throw InvalidInputError("jitter_prompt: shift_px must be >= 0");

  const double cr = 0.5 * (box.row_min + box.row_max);
  const double cc = 0.5 * (box.col_min + box.col_max);
  const double half_h = 0.5 * static_cast<double>(box.row_max - box.row_min) * scale_factor;
  const double half_w = 0.5 * static_cast<double>(box.col_max - box.col_min) * scale_factor;

  const int shift_r = shift_px > 0 ? rng.uniform_int(2 * shift_px + 1) - shift_px : 0;
  const int shift_c = shift_px > 0 ? rng.uniform_int(2 * shift_px + 1) - shift_px : 0;

  BoundingBoxPrompt out;
  out.row_min = static_cast<int>(std::lround(cr - half_h)) + shift_r;
  out.row_max = static_cast<int>(std::lround(cr + half_h)) + shift_r;
  out.col_min = static_cast<int>(std::lround(cc - half_w)) + shift_c;
  out.col_max = static_cast<int>(std::lround(cc + half_w)) + shift_c;

  out.row_min = std::clamp(out.row_min, 0, img_h - 1);
  out.row_max = std::clamp(out.row_max, 0, img_h - 1);
  out.col_min = std::clamp(out.col_min, 0, img_w - 1);
  out.col_max = std::clamp(out.col_max, 0, img_w - 1);
  if (out.row_max < out.row_min) std::swap(out.row_min, out.row_max);
  if (out.col_max < out.col_min) std::swap(out.col_min, out.col_max);
  return out;
}

double prompt_quality(const BoundingBoxPrompt& box, const Mask& gt_mask) {
  const auto gt_box = bbox_from_mask(gt_mask, 0);
  if (!gt_box)
    throw InvalidInputError("prompt_quality: ground-truth mask is empty");
  const long ri = std::max(box.row_min, gt_box->row_min);
  const long ra = std::min(box.row_max, gt_box->row_max);
  const long ci = std::max(box.col_min, gt_box->col_min);
  const long ca = std::min(box.col_max, gt_box->col_max);
  const long ih = ra - ri + 1, iw = ca - ci + 1;
  const long inter = (ih > 0 && iw > 0) ? ih * iw : 0;
  const long uni = box.area() + gt_box->area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace fasam
