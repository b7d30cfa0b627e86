#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "fasam/error.hpp"
#include "fasam/image.hpp"

namespace fasam {

Image load_image_png(const std::string& path) {
  const cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw IoError("cannot read image: " + path);
  Image img(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c)
      img.at(r, c) = m.at<std::uint8_t>(r, c) / 255.0;
  return img;
}

Mask load_mask_png(const std::string& path) {
  const cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw IoError("cannot read mask: " + path);
  Mask mask(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c)
      mask.at(r, c) = m.at<std::uint8_t>(r, c) != 0 ? 1 : 0;
  return mask;
}

void save_image_png(const Image& img, const std::string& path) {
  cv::Mat m(img.h, img.w, CV_8UC1);
  for (int r = 0; r < img.h; ++r) {
    for (int c = 0; c < img.w; ++c) {
      const double x = std::min(1.0, std::max(0.0, img.at(r, c)));
      m.at<std::uint8_t>(r, c) = static_cast<std::uint8_t>(x * 255.0 + 0.5);
    }
  }
  if (!cv::imwrite(path, m)) throw IoError("cannot write image: " + path);
}

void save_mask_png(const Mask& mask, const std::string& path) {
  cv::Mat m(mask.h, mask.w, CV_8UC1);
  for (int r = 0; r < mask.h; ++r)
    for (int c = 0; c < mask.w; ++c)
      m.at<std::uint8_t>(r, c) = mask.at(r, c) ? 255 : 0;
  if (!cv::imwrite(path, m)) throw IoError("cannot write mask: " + path);
}

namespace {

bool is_boundary(const Mask& m, int r, int c) {
  if (m.at(r, c) == 0) return false;
  const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
  for (int d = 0; d < 4; ++d) {
    const int nr = r + dr[d], nc = c + dc[d];
    if (nr < 0 || nr >= m.h || nc < 0 || nc >= m.w) return true;
    if (m.at(nr, nc) == 0) return true;
  }
  return false;
}

}  // namespace

void save_overlay_png(const Image& img, const Mask& pred, const Mask* gt,
                      const std::string& path) {
  cv::Mat m(img.h, img.w, CV_8UC3);
  for (int r = 0; r < img.h; ++r) {
    for (int c = 0; c < img.w; ++c) {
      const double x = std::min(1.0, std::max(0.0, img.at(r, c)));
      const auto g = static_cast<std::uint8_t>(x * 255.0 + 0.5);
      m.at<cv::Vec3b>(r, c) = {g, g, g};  // BGR
      if (gt && gt->h == img.h && gt->w == img.w && is_boundary(*gt, r, c))
        m.at<cv::Vec3b>(r, c) = {0, 255, 0};
      if (pred.h == img.h && pred.w == img.w && is_boundary(pred, r, c))
        m.at<cv::Vec3b>(r, c) = {0, 0, 255};
    }
  }
  if (!cv::imwrite(path, m)) throw IoError("cannot write overlay: " + path);
}

}  // namespace fasam
