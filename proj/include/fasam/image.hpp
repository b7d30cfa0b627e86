#pragma once

#include <string>
#include <vector>

#include "fasam/prompt.hpp"

namespace fasam {

/// Single-channel image with intensities in [0, 1].
struct Image {
  int h = 0;
  int w = 0;
  std::vector<double> v;

  Image() = default;
  Image(int h_, int w_, double fill = 0.0)
      : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * w + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c]; }
};

/// Bilinear resize with half-pixel centers.
Image resize_bilinear(const Image& img, int out_h, int out_w);

/// Nearest-neighbor resize; preserves binarity.
Mask resize_nearest(const Mask& mask, int out_h, int out_w);

/// Separable Gaussian blur with reflected borders; sigma <= 0 is identity.
Image gaussian_blur(const Image& img, double sigma);

/// Per-image min-max normalization to [0, 1]; a constant image maps to all
/// zeros.
Image minmax_normalize(const Image& img);

/// Resize and (optionally) normalize, the standard model-input preparation.
Image preprocess(const Image& img, int target_h, int target_w, bool normalize);

void clamp01(Image& img);

// 8-bit grayscale PNG I/O (image_io.cpp).
Image load_image_png(const std::string& path);
Mask load_mask_png(const std::string& path);  // nonzero -> 1
void save_image_png(const Image& img, const std::string& path);
void save_mask_png(const Mask& mask, const std::string& path);  // 0 / 255

/// Grayscale base with mask contours burned in: prediction in red, ground
/// truth in green. Written as an RGB PNG.
void save_overlay_png(const Image& img, const Mask& pred, const Mask* gt,
                      const std::string& path);

}  // namespace fasam
