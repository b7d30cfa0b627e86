#include "fasam/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "fasam/error.hpp"

namespace fasam::nn {

namespace {

void require_bchw(const Tensor& x, const char* who) {
  if (x.rank() != 4)
    throw InvalidInputError(std::string(who) + ": expected (B,C,H,W), got " +
                            x.shape_str());
}

double he_uniform_bound(int fan_in) { return std::sqrt(6.0 / fan_in); }

// col is (cin*k*k, ho*wo) for one image plane.
void im2col(const double* in, int cin, int h, int w, int k, int stride, int pad,
            int ho, int wo, double* col) {
  for (int ci = 0; ci < cin; ++ci) {
    const double* plane = in + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row =
            col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) *
                      static_cast<std::size_t>(ho) * wo;
        for (int y = 0; y < ho; ++y) {
          const int sy = y * stride + ky - pad;
          double* dst = row + static_cast<std::size_t>(y) * wo;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(sy) * w;
          for (int x = 0; x < wo; ++x) {
            const int sx = x * stride + kx - pad;
            dst[x] = (sx >= 0 && sx < w) ? src[sx] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int cin, int h, int w, int k, int stride,
                int pad, int ho, int wo, double* out) {
  for (int ci = 0; ci < cin; ++ci) {
    double* plane = out + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row =
            col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) *
                      static_cast<std::size_t>(ho) * wo;
        for (int y = 0; y < ho; ++y) {
          const int sy = y * stride + ky - pad;
          if (sy < 0 || sy >= h) continue;
          double* dst = plane + static_cast<std::size_t>(sy) * w;
          const double* src = row + static_cast<std::size_t>(y) * wo;
          for (int x = 0; x < wo; ++x) {
            const int sx = x * stride + kx - pad;
            if (sx >= 0 && sx < w) dst[sx] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_ch, int out_ch, int ksize, int stride,
               bool bias)
    : name_(std::move(name)),
      cin_(in_ch),
      cout_(out_ch),
      k_(ksize),
      stride_(stride),
      pad_((ksize - 1) / 2),
      has_bias_(bias),
      w_({out_ch, in_ch * ksize * ksize}),
      b_({out_ch}, 0.0),
      wg_({out_ch, in_ch * ksize * ksize}, 0.0),
      bg_({out_ch}, 0.0) {}

void Conv2d::init(RngStream& rng) {
  const double bound = he_uniform_bound(cin_ * k_ * k_);
  for (double& x : w_.v) x = (2.0 * rng.uniform01() - 1.0) * bound;
  b_.fill(0.0);
}

Tensor Conv2d::forward(const Tensor& x) {
  require_bchw(x, "Conv2d");
  if (x.dim(1) != cin_)
    throw InvalidInputError("Conv2d " + name_ + ": channel mismatch");
  x_ = x;
  const int bsz = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int ho = (h + 2 * pad_ - k_) / stride_ + 1;
  const int wo = (w + 2 * pad_ - k_) / stride_ + 1;
  const int ck2 = cin_ * k_ * k_;
  const std::size_t in_plane = static_cast<std::size_t>(cin_) * h * w;
  const std::size_t out_plane = static_cast<std::size_t>(cout_) * ho * wo;

  Tensor y({bsz, cout_, ho, wo});
  const bool direct = (k_ == 1 && stride_ == 1 && pad_ == 0);
  Tensor col;
  if (!direct) col = Tensor({ck2, ho * wo});
  for (int b = 0; b < bsz; ++b) {
    const double* in = x.data() + b * in_plane;
    const double* cp = in;
    if (!direct) {
      im2col(in, cin_, h, w, k_, stride_, pad_, ho, wo, col.data());
      cp = col.data();
    }
    double* out = y.data() + b * out_plane;
    gemm(false, false, cout_, ho * wo, ck2, 1.0, w_.data(), ck2, cp, ho * wo,
         0.0, out, ho * wo);
    if (has_bias_) {
      for (int o = 0; o < cout_; ++o) {
        double* row = out + static_cast<std::size_t>(o) * ho * wo;
        const double bias = b_.at(o);
        for (int i = 0; i < ho * wo; ++i) row[i] += bias;
      }
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_y) {
  const int bsz = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
  const int ho = grad_y.dim(2), wo = grad_y.dim(3);
  const int ck2 = cin_ * k_ * k_;
  const std::size_t in_plane = static_cast<std::size_t>(cin_) * h * w;
  const std::size_t out_plane = static_cast<std::size_t>(cout_) * ho * wo;
  const bool direct = (k_ == 1 && stride_ == 1 && pad_ == 0);

  Tensor gx = Tensor::zeros(x_.shape);
  Tensor col, gcol({ck2, ho * wo});
  if (!direct) col = Tensor({ck2, ho * wo});
  for (int b = 0; b < bsz; ++b) {
    const double* in = x_.data() + b * in_plane;
    const double* gy = grad_y.data() + b * out_plane;
    const double* cp = in;
    if (!direct) {
      im2col(in, cin_, h, w, k_, stride_, pad_, ho, wo, col.data());
      cp = col.data();
    }
    gemm(false, true, cout_, ck2, ho * wo, 1.0, gy, ho * wo, cp, ho * wo, 1.0,
         wg_.data(), ck2);
    if (has_bias_) {
      for (int o = 0; o < cout_; ++o) {
        const double* row = gy + static_cast<std::size_t>(o) * ho * wo;
        double s = 0.0;
        for (int i = 0; i < ho * wo; ++i) s += row[i];
        bg_.at(o) += s;
      }
    }
    double* gxp = gx.data() + b * in_plane;
    if (direct) {
      gemm(true, false, ck2, ho * wo, cout_, 1.0, w_.data(), ck2, gy, ho * wo,
           1.0, gxp, ho * wo);
    } else {
      gemm(true, false, ck2, ho * wo, cout_, 1.0, w_.data(), ck2, gy, ho * wo,
           0.0, gcol.data(), ho * wo);
      col2im_add(gcol.data(), cin_, h, w, k_, stride_, pad_, ho, wo, gxp);
    }
  }
  return gx;
}

void Conv2d::collect(ParamList& out) {
  out.push_back({name_ + ".w", &w_, &wg_});
  if (has_bias_) out.push_back({name_ + ".b", &b_, &bg_});
}

void Conv2d::zero_grad() {
  wg_.fill(0.0);
  bg_.fill(0.0);
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(std::string name, int in_ch, int out_ch)
    : name_(std::move(name)),
      cin_(in_ch),
      cout_(out_ch),
      w_({in_ch, out_ch, 2, 2}),
      b_({out_ch}, 0.0),
      wg_({in_ch, out_ch, 2, 2}, 0.0),
      bg_({out_ch}, 0.0) {}

void ConvTranspose2d::init(RngStream& rng) {
  const double bound = he_uniform_bound(cin_ * 4);
  for (double& x : w_.v) x = (2.0 * rng.uniform01() - 1.0) * bound;
  b_.fill(0.0);
}

Tensor ConvTranspose2d::forward(const Tensor& x) {
  require_bchw(x, "ConvTranspose2d");
  x_ = x;
  const int bsz = x.dim(0), h = x.dim(2), w = x.dim(3);
  Tensor y({bsz, cout_, 2 * h, 2 * w});
  for (int b = 0; b < bsz; ++b)
    for (int co = 0; co < cout_; ++co) {
      const double bias = b_.at(co);
      double* plane = &y.at(b, co, 0, 0);
      for (int i = 0; i < 4 * h * w; ++i) plane[i] = bias;
    }
  for (int b = 0; b < bsz; ++b) {
    for (int ci = 0; ci < cin_; ++ci) {
      for (int y0 = 0; y0 < h; ++y0) {
        for (int x0 = 0; x0 < w; ++x0) {
          const double v = x_.at(b, ci, y0, x0);
          for (int co = 0; co < cout_; ++co) {
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx)
                y.at(b, co, 2 * y0 + dy, 2 * x0 + dx) +=
                    v * w_.at(ci, co, dy, dx);
          }
        }
      }
    }
  }
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& grad_y) {
  const int bsz = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
  Tensor gx = Tensor::zeros(x_.shape);
  for (int b = 0; b < bsz; ++b) {
    for (int ci = 0; ci < cin_; ++ci) {
      for (int y0 = 0; y0 < h; ++y0) {
        for (int x0 = 0; x0 < w; ++x0) {
          const double v = x_.at(b, ci, y0, x0);
          double acc = 0.0;
          for (int co = 0; co < cout_; ++co) {
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const double g = grad_y.at(b, co, 2 * y0 + dy, 2 * x0 + dx);
                acc += g * w_.at(ci, co, dy, dx);
                wg_.at(ci, co, dy, dx) += g * v;
              }
            }
          }
          gx.at(b, ci, y0, x0) = acc;
        }
      }
    }
  }
  for (int co = 0; co < cout_; ++co) {
    double s = 0.0;
    for (int b = 0; b < bsz; ++b) {
      const double* plane = &grad_y.at(b, co, 0, 0);
      for (int i = 0; i < 4 * h * w; ++i) s += plane[i];
    }
    bg_.at(co) += s;
  }
  return gx;
}

void ConvTranspose2d::collect(ParamList& out) {
  out.push_back({name_ + ".w", &w_, &wg_});
  out.push_back({name_ + ".b", &b_, &bg_});
}

void ConvTranspose2d::zero_grad() {
  wg_.fill(0.0);
  bg_.fill(0.0);
}

// -------------------------------------------------------------- MaxPool2d

Tensor MaxPool2d::forward(const Tensor& x) {
  require_bchw(x, "MaxPool2d");
  const int bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0)
    throw InvalidInputError("MaxPool2d: spatial dims must be even");
  in_shape_ = x.shape;
  const int ho = h / 2, wo = w / 2;
  Tensor y({bsz, c, ho, wo});
  argmax_.assign(y.size(), 0);
  std::size_t oi = 0;
  for (int b = 0; b < bsz; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      for (int yo = 0; yo < ho; ++yo) {
        for (int xo = 0; xo < wo; ++xo, ++oi) {
          double best = -1e300;
          int best_idx = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int yy = 2 * yo + dy, xx = 2 * xo + dx;
              const double v = x.at(b, ch, yy, xx);
              if (v > best) {
                best = v;
                best_idx =
                    ((b * c + ch) * h + yy) * w + xx;
              }
            }
          }
          y.v[oi] = best;
          argmax_[oi] = best_idx;
        }
      }
    }
  }
  return y;
}

Tensor MaxPool2d::backward(const Tensor& grad_y) {
  Tensor gx = Tensor::zeros(in_shape_);
  for (std::size_t i = 0; i < grad_y.size(); ++i)
    gx.v[static_cast<std::size_t>(argmax_[i])] += grad_y.v[i];
  return gx;
}

// ------------------------------------------------------------ BilinearUp2

namespace {
struct Tap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> up2_taps(int n_out, int n_in) {
  std::vector<Tap> taps(static_cast<std::size_t>(n_out));
  for (int i = 0; i < n_out; ++i) {
    const double s = (i + 0.5) / 2.0 - 0.5;
    const int f = static_cast<int>(std::floor(s));
    double w1 = s - f;
    int i0 = std::clamp(f, 0, n_in - 1);
    int i1 = std::clamp(f + 1, 0, n_in - 1);
    taps[static_cast<std::size_t>(i)] = {i0, i1, w1};
  }
  return taps;
}
}  // namespace

Tensor BilinearUp2::forward(const Tensor& x) {
  require_bchw(x, "BilinearUp2");
  in_shape_ = x.shape;
  const int bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto ty = up2_taps(2 * h, h);
  const auto tx = up2_taps(2 * w, w);
  Tensor y({bsz, c, 2 * h, 2 * w});
  for (int b = 0; b < bsz; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double* in = &x.at(b, ch, 0, 0);
      double* out = &y.at(b, ch, 0, 0);
      for (int yo = 0; yo < 2 * h; ++yo) {
        const Tap& a = ty[static_cast<std::size_t>(yo)];
        const double* r0 = in + static_cast<std::size_t>(a.i0) * w;
        const double* r1 = in + static_cast<std::size_t>(a.i1) * w;
        double* dst = out + static_cast<std::size_t>(yo) * 2 * w;
        for (int xo = 0; xo < 2 * w; ++xo) {
          const Tap& tb = tx[static_cast<std::size_t>(xo)];
          const double v0 = r0[tb.i0] * (1.0 - tb.w1) + r0[tb.i1] * tb.w1;
          const double v1 = r1[tb.i0] * (1.0 - tb.w1) + r1[tb.i1] * tb.w1;
          dst[xo] = v0 * (1.0 - a.w1) + v1 * a.w1;
        }
      }
    }
  }
  return y;
}

Tensor BilinearUp2::backward(const Tensor& grad_y) const {
  const int bsz = in_shape_[0], c = in_shape_[1], h = in_shape_[2],
            w = in_shape_[3];
  const auto ty = up2_taps(2 * h, h);
  const auto tx = up2_taps(2 * w, w);
  Tensor gx = Tensor::zeros(in_shape_);
  for (int b = 0; b < bsz; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      double* out = &gx.at(b, ch, 0, 0);
      const double* gin = &grad_y.at(b, ch, 0, 0);
      for (int yo = 0; yo < 2 * h; ++yo) {
        const Tap& a = ty[static_cast<std::size_t>(yo)];
        const double* src = gin + static_cast<std::size_t>(yo) * 2 * w;
        for (int xo = 0; xo < 2 * w; ++xo) {
          const Tap& tb = tx[static_cast<std::size_t>(xo)];
          const double g = src[xo];
          out[a.i0 * w + tb.i0] += g * (1.0 - a.w1) * (1.0 - tb.w1);
          out[a.i0 * w + tb.i1] += g * (1.0 - a.w1) * tb.w1;
          out[a.i1 * w + tb.i0] += g * a.w1 * (1.0 - tb.w1);
          out[a.i1 * w + tb.i1] += g * a.w1 * tb.w1;
        }
      }
    }
  }
  return gx;
}

// -------------------------------------------------------------- LeakyReLU

Tensor LeakyReLU::forward(const Tensor& x) {
  neg_.assign(x.size(), 0);
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x.v[i] < 0.0) {
      neg_[i] = 1;
      y.v[i] = slope_ * x.v[i];
    } else {
      y.v[i] = x.v[i];
    }
  }
  return y;
}

Tensor LeakyReLU::backward(const Tensor& grad_y) const {
  Tensor gx(grad_y.shape);
  for (std::size_t i = 0; i < grad_y.size(); ++i)
    gx.v[i] = neg_[i] ? slope_ * grad_y.v[i] : grad_y.v[i];
  return gx;
}

// ---------------------------------------------------------------- Sigmoid

Tensor Sigmoid::forward(const Tensor& x) {
  y_ = Tensor(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i)
    y_.v[i] = 1.0 / (1.0 + std::exp(-x.v[i]));
  return y_;
}

Tensor Sigmoid::backward(const Tensor& grad_y) const {
  Tensor gx(grad_y.shape);
  for (std::size_t i = 0; i < grad_y.size(); ++i)
    gx.v[i] = grad_y.v[i] * y_.v[i] * (1.0 - y_.v[i]);
  return gx;
}

// --------------------------------------------------------- InstanceNorm2d

Tensor InstanceNorm2d::forward(const Tensor& x) {
  require_bchw(x, "InstanceNorm2d");
  const int bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int n = h * w;
  xhat_ = Tensor(x.shape);
  inv_std_ = Tensor({bsz, c});
  for (int b = 0; b < bsz; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double* in = &x.at(b, ch, 0, 0);
      double* out = &xhat_.at(b, ch, 0, 0);
      double m = 0.0;
      for (int i = 0; i < n; ++i) m += in[i];
      m /= n;
      double var = 0.0;
      for (int i = 0; i < n; ++i) {
        const double d = in[i] - m;
        var += d * d;
      }
      var /= n;
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_.at(b, ch) = inv;
      for (int i = 0; i < n; ++i) out[i] = (in[i] - m) * inv;
    }
  }
  return xhat_;
}

Tensor InstanceNorm2d::backward(const Tensor& grad_y) const {
  const int bsz = grad_y.dim(0), c = grad_y.dim(1), h = grad_y.dim(2),
            w = grad_y.dim(3);
  const int n = h * w;
  Tensor gx(grad_y.shape);
  for (int b = 0; b < bsz; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double* g = &grad_y.at(b, ch, 0, 0);
      const double* xh = &xhat_.at(b, ch, 0, 0);
      double* out = &gx.at(b, ch, 0, 0);
      double mg = 0.0, mgx = 0.0;
      for (int i = 0; i < n; ++i) {
        mg += g[i];
        mgx += g[i] * xh[i];
      }
      mg /= n;
      mgx /= n;
      const double inv = inv_std_.at(b, ch);
      for (int i = 0; i < n; ++i) out[i] = inv * (g[i] - mg - xh[i] * mgx);
    }
  }
  return gx;
}

// ---------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x) {
  require_bchw(x, "GlobalAvgPool");
  in_shape_ = x.shape;
  const int bsz = x.dim(0), c = x.dim(1), n = x.dim(2) * x.dim(3);
  Tensor y({bsz, c});
  for (int b = 0; b < bsz; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double* in = &x.at(b, ch, 0, 0);
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += in[i];
      y.at(b, ch) = s / n;
    }
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_y) const {
  const int n = in_shape_[2] * in_shape_[3];
  Tensor gx(in_shape_);
  for (int b = 0; b < in_shape_[0]; ++b) {
    for (int ch = 0; ch < in_shape_[1]; ++ch) {
      const double g = grad_y.at(b, ch) / n;
      double* out = &gx.at(b, ch, 0, 0);
      for (int i = 0; i < n; ++i) out[i] = g;
    }
  }
  return gx;
}

// ----------------------------------------------------------------- Linear

Linear::Linear(std::string name, int in_dim, int out_dim)
    : name_(std::move(name)),
      in_(in_dim),
      out_(out_dim),
      w_({out_dim, in_dim}),
      b_({out_dim}, 0.0),
      wg_({out_dim, in_dim}, 0.0),
      bg_({out_dim}, 0.0) {}

void Linear::init(RngStream& rng) {
  const double bound = he_uniform_bound(in_);
  for (double& x : w_.v) x = (2.0 * rng.uniform01() - 1.0) * bound;
  b_.fill(0.0);
}

Tensor Linear::forward(const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw InvalidInputError("Linear " + name_ + ": bad input " + x.shape_str());
  x_ = x;
  const int bsz = x.dim(0);
  Tensor y({bsz, out_});
  gemm(false, true, bsz, out_, in_, 1.0, x.data(), in_, w_.data(), in_, 0.0,
       y.data(), out_);
  for (int b = 0; b < bsz; ++b)
    for (int o = 0; o < out_; ++o) y.at(b, o) += b_.at(o);
  return y;
}

Tensor Linear::backward(const Tensor& grad_y) {
  const int bsz = x_.dim(0);
  gemm(true, false, out_, in_, bsz, 1.0, grad_y.data(), out_, x_.data(), in_,
       1.0, wg_.data(), in_);
  for (int b = 0; b < bsz; ++b)
    for (int o = 0; o < out_; ++o) bg_.at(o) += grad_y.at(b, o);
  Tensor gx({bsz, in_});
  gemm(false, false, bsz, in_, out_, 1.0, grad_y.data(), out_, w_.data(), in_,
       0.0, gx.data(), in_);
  return gx;
}

void Linear::collect(ParamList& out) {
  out.push_back({name_ + ".w", &w_, &wg_});
  out.push_back({name_ + ".b", &b_, &bg_});
}

void Linear::zero_grad() {
  wg_.fill(0.0);
  bg_.fill(0.0);
}

// ------------------------------------------------------- channel helpers

Tensor scale_channels(const Tensor& x, const Tensor& s) {
  const int bsz = x.dim(0), c = x.dim(1), n = x.dim(2) * x.dim(3);
  Tensor y(x.shape);
  for (int b = 0; b < bsz; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double sc = s.at(b, ch);
      const double* in = &x.at(b, ch, 0, 0);
      double* out = &y.at(b, ch, 0, 0);
      for (int i = 0; i < n; ++i) out[i] = in[i] * sc;
    }
  }
  return y;
}

void scale_channels_backward(const Tensor& x, const Tensor& s,
                             const Tensor& grad_y, Tensor& grad_x,
                             Tensor& grad_s) {
  const int bsz = x.dim(0), c = x.dim(1), n = x.dim(2) * x.dim(3);
  grad_x = Tensor(x.shape);
  grad_s = Tensor({bsz, c});
  for (int b = 0; b < bsz; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double sc = s.at(b, ch);
      const double* in = &x.at(b, ch, 0, 0);
      const double* g = &grad_y.at(b, ch, 0, 0);
      double* gx = &grad_x.at(b, ch, 0, 0);
      double gs = 0.0;
      for (int i = 0; i < n; ++i) {
        gx[i] = g[i] * sc;
        gs += g[i] * in[i];
      }
      grad_s.at(b, ch) = gs;
    }
  }
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw InvalidInputError("concat_channels: shape mismatch " + a.shape_str() +
                            " vs " + b.shape_str());
  const int bsz = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2),
            w = a.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor y({bsz, ca + cb, h, w});
  for (int i = 0; i < bsz; ++i) {
    std::copy_n(a.data() + i * ca * plane, ca * plane,
                y.data() + static_cast<std::size_t>(i) * (ca + cb) * plane);
    std::copy_n(b.data() + i * cb * plane, cb * plane,
                y.data() + (static_cast<std::size_t>(i) * (ca + cb) + ca) * plane);
  }
  return y;
}

void split_channels(const Tensor& grad, int a_channels, Tensor& grad_a,
                    Tensor& grad_b) {
  const int bsz = grad.dim(0), c = grad.dim(1), h = grad.dim(2), w = grad.dim(3);
  const int cb = c - a_channels;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  grad_a = Tensor({bsz, a_channels, h, w});
  grad_b = Tensor({bsz, cb, h, w});
  for (int i = 0; i < bsz; ++i) {
    std::copy_n(grad.data() + static_cast<std::size_t>(i) * c * plane,
                a_channels * plane, grad_a.data() + i * a_channels * plane);
    std::copy_n(grad.data() + (static_cast<std::size_t>(i) * c + a_channels) * plane,
                cb * plane, grad_b.data() + i * cb * plane);
  }
}

Tensor broadcast_vector(const Tensor& vec, int batch, int h, int w) {
  const int d = vec.dim(0);
  Tensor y({batch, d, h, w});
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < d; ++c) {
      double* out = &y.at(b, c, 0, 0);
      const double v = vec.at(c);
      for (int i = 0; i < h * w; ++i) out[i] = v;
    }
  }
  return y;
}

Tensor broadcast_vector_backward(const Tensor& grad_y) {
  const int bsz = grad_y.dim(0), d = grad_y.dim(1),
            n = grad_y.dim(2) * grad_y.dim(3);
  Tensor g({d}, 0.0);
  for (int b = 0; b < bsz; ++b) {
    for (int c = 0; c < d; ++c) {
      const double* in = &grad_y.at(b, c, 0, 0);
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += in[i];
      g.at(c) += s;
    }
  }
  return g;
}

// ------------------------------------------------------------- SEResBlock

SEResBlock::SEResBlock(std::string name, int in_ch, int out_ch,
                       int se_reduction, bool se_identity)
    : has_shortcut_conv_(in_ch != out_ch),
      se_identity_(se_identity),
      conv1_(name + ".conv1", in_ch, out_ch, 3, 1, false),
      conv2_(name + ".conv2", out_ch, out_ch, 3, 1, false) {
  if (!se_identity_) {
    if (se_reduction < 1 || out_ch % se_reduction != 0)
      throw ConfigError("SEResBlock " + name + ": se_reduction " +
                        std::to_string(se_reduction) +
                        " must divide channel width " + std::to_string(out_ch));
    fc1_ = Linear(name + ".se_fc1", out_ch, out_ch / se_reduction);
    fc2_ = Linear(name + ".se_fc2", out_ch / se_reduction, out_ch);
  }
  if (has_shortcut_conv_) shortcut_ = Conv2d(name + ".shortcut", in_ch, out_ch, 1);
}

void SEResBlock::init(RngStream& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
  if (!se_identity_) {
    fc1_.init(rng);
    fc2_.init(rng);
  }
  if (has_shortcut_conv_) shortcut_.init(rng);
}

Tensor SEResBlock::forward(const Tensor& x) {
  x_ = x;
  Tensor h = act1_.forward(norm1_.forward(conv1_.forward(x)));
  h2_ = act2_.forward(norm2_.forward(conv2_.forward(h)));
  Tensor hse;
  if (se_identity_) {
    hse = h2_;
  } else {
    Tensor z = gap_.forward(h2_);
    se_scale_ = se_gate_.forward(fc2_.forward(se_act_.forward(fc1_.forward(z))));
    hse = scale_channels(h2_, se_scale_);
  }
  Tensor sc = has_shortcut_conv_ ? shortcut_.forward(x) : x;
  for (std::size_t i = 0; i < hse.size(); ++i) hse.v[i] += sc.v[i];
  return act_out_.forward(hse);
}

Tensor SEResBlock::backward(const Tensor& grad_y) {
  const Tensor g = act_out_.backward(grad_y);
  Tensor g_h2;
  if (se_identity_) {
    g_h2 = g;
  } else {
    Tensor g_s;
    scale_channels_backward(h2_, se_scale_, g, g_h2, g_s);
    Tensor g_z = fc1_.backward(
        se_act_.backward(fc2_.backward(se_gate_.backward(g_s))));
    const Tensor g_gap = gap_.backward(g_z);
    for (std::size_t i = 0; i < g_h2.size(); ++i) g_h2.v[i] += g_gap.v[i];
  }
  const Tensor g_h =
      conv2_.backward(norm2_.backward(act2_.backward(g_h2)));
  Tensor g_x =
      conv1_.backward(norm1_.backward(act1_.backward(g_h)));
  if (has_shortcut_conv_) {
    const Tensor g_sc = shortcut_.backward(g);
    for (std::size_t i = 0; i < g_x.size(); ++i) g_x.v[i] += g_sc.v[i];
  } else {
    for (std::size_t i = 0; i < g_x.size(); ++i) g_x.v[i] += g.v[i];
  }
  return g_x;
}

void SEResBlock::collect(ParamList& out) {
  conv1_.collect(out);
  conv2_.collect(out);
  if (!se_identity_) {
    fc1_.collect(out);
    fc2_.collect(out);
  }
  if (has_shortcut_conv_) shortcut_.collect(out);
}

void SEResBlock::zero_grad() {
  conv1_.zero_grad();
  conv2_.zero_grad();
  if (!se_identity_) {
    fc1_.zero_grad();
    fc2_.zero_grad();
  }
  if (has_shortcut_conv_) shortcut_.zero_grad();
}

}  // namespace fasam::nn
