#include "fasam/image.hpp"

#include <algorithm>
#include <cmath>

#include "fasam/error.hpp"

namespace fasam {

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

}  // namespace

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1)
    throw InvalidInputError("resize_bilinear: target size must be >= 1");
  if (img.h == out_h && img.w == out_w) return img;
  Image out(out_h, out_w);
  const double sy = static_cast<double>(img.h) / out_h;
  const double sx = static_cast<double>(img.w) / out_w;
  for (int r = 0; r < out_h; ++r) {
    const double fy = (r + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    const int y0c = std::clamp(y0, 0, img.h - 1);
    const int y1c = std::clamp(y0 + 1, 0, img.h - 1);
    for (int c = 0; c < out_w; ++c) {
      const double fx = (c + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      const int x0c = std::clamp(x0, 0, img.w - 1);
      const int x1c = std::clamp(x0 + 1, 0, img.w - 1);
      const double top = img.at(y0c, x0c) * (1.0 - wx) + img.at(y0c, x1c) * wx;
      const double bot = img.at(y1c, x0c) * (1.0 - wx) + img.at(y1c, x1c) * wx;
      out.at(r, c) = top * (1.0 - wy) + bot * wy;
    }
  }
  return out;
}

Mask resize_nearest(const Mask& mask, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1)
    throw InvalidInputError("resize_nearest: target size must be >= 1");
  if (mask.h == out_h && mask.w == out_w) return mask;
  Mask out(out_h, out_w);
  const double sy = static_cast<double>(mask.h) / out_h;
  const double sx = static_cast<double>(mask.w) / out_w;
  for (int r = 0; r < out_h; ++r) {
    const int src_r = std::clamp(static_cast<int>((r + 0.5) * sy), 0, mask.h - 1);
    for (int c = 0; c < out_w; ++c) {
      const int src_c = std::clamp(static_cast<int>((c + 0.5) * sx), 0, mask.w - 1);
      out.at(r, c) = mask.at(src_r, src_c);
    }
  }
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double k = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = k;
    sum += k;
  }
  for (double& k : kernel) k /= sum;

  Image tmp(img.h, img.w);
  for (int r = 0; r < img.h; ++r) {
    for (int c = 0; c < img.w; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               img.at(r, reflect_index(c + i, img.w));
      tmp.at(r, c) = acc;
    }
  }
  Image out(img.h, img.w);
  for (int r = 0; r < img.h; ++r) {
    for (int c = 0; c < img.w; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               tmp.at(reflect_index(r + i, img.h), c);
      out.at(r, c) = acc;
    }
  }
  return out;
}

Image minmax_normalize(const Image& img) {
  const auto [mn, mx] = std::minmax_element(img.v.begin(), img.v.end());
  Image out(img.h, img.w);
  const double range = *mx - *mn;
  if (range <= 0.0) return out;  // constant input maps to zeros
  for (std::size_t i = 0; i < img.v.size(); ++i)
    out.v[i] = (img.v[i] - *mn) / range;
  return out;
}

Image preprocess(const Image& img, int target_h, int target_w, bool normalize) {
  Image out = resize_bilinear(img, target_h, target_w);
  if (normalize) out = minmax_normalize(out);
  return out;
}

void clamp01(Image& img) {
  for (double& x : img.v) x = std::clamp(x, 0.0, 1.0);
}

}  // namespace fasam
