#pragma once

#include <string>
#include <vector>

#include "fasam/rng.hpp"
#include "fasam/tensor.hpp"

namespace fasam::nn {

struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};
using ParamList = std::vector<ParamRef>;

/// Layers cache their forward context, so one instance serves one
/// forward/backward pair at a time. Parameter gradients accumulate until
/// zero_grad().

class Conv2d {
public:
  Conv2d() = default;
  /// 'same' padding for stride 1; stride 2 halves even spatial dims.
  /// Bias can be dropped for convolutions feeding a normalization.
  Conv2d(std::string name, int in_ch, int out_ch, int ksize, int stride = 1,
         bool bias = true);
  void init(RngStream& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_y);
  void collect(ParamList& out);
  void zero_grad();

  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }

private:
  std::string name_;
  int cin_ = 0, cout_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  bool has_bias_ = true;
  Tensor w_;  // (cout, cin*k*k)
  Tensor b_;  // (cout)
  Tensor wg_, bg_;
  Tensor x_;  // cached input
};

/// 2x2 stride-2 transposed convolution (exact x2 upsampling).
class ConvTranspose2d {
public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, int in_ch, int out_ch);
  void init(RngStream& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_y);
  void collect(ParamList& out);
  void zero_grad();

private:
  std::string name_;
  int cin_ = 0, cout_ = 0;
  Tensor w_;  // (cin, cout, 2, 2)
  Tensor b_;  // (cout)
  Tensor wg_, bg_;
  Tensor x_;
};

class MaxPool2d {
public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_y);

private:
  std::vector<int> argmax_;
  std::vector<int> in_shape_;
};

/// Deterministic x2 bilinear upsampling (half-pixel centers).
class BilinearUp2 {
public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_y) const;

private:
  std::vector<int> in_shape_;
};

class LeakyReLU {
public:
  explicit LeakyReLU(double slope = 0.01) : slope_(slope) {}
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_y) const;

private:
  double slope_;
  std::vector<std::uint8_t> neg_;
};

class Sigmoid {
public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_y) const;

private:
  Tensor y_;
};

/// Per-(instance, channel) normalization over the spatial axes, no affine.
class InstanceNorm2d {
public:
  explicit InstanceNorm2d(double eps = 1e-5) : eps_(eps) {}
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_y) const;

private:
  double eps_;
  Tensor xhat_;
  Tensor inv_std_;  // (B, C)
};

class GlobalAvgPool {
public:
  Tensor forward(const Tensor& x);  // (B,C,H,W) -> (B,C)
  Tensor backward(const Tensor& grad_y) const;

private:
  std::vector<int> in_shape_;
};

class Linear {
public:
  Linear() = default;
  Linear(std::string name, int in_dim, int out_dim);
  void init(RngStream& rng);

  Tensor forward(const Tensor& x);  // (B, in) -> (B, out)
  Tensor backward(const Tensor& grad_y);
  void collect(ParamList& out);
  void zero_grad();

private:
  std::string name_;
  int in_ = 0, out_ = 0;
  Tensor w_;  // (out, in)
  Tensor b_;  // (out)
  Tensor wg_, bg_;
  Tensor x_;
};

/// y[b,c,:,:] = x[b,c,:,:] * s[b,c]
Tensor scale_channels(const Tensor& x, const Tensor& s);
void scale_channels_backward(const Tensor& x, const Tensor& s,
                             const Tensor& grad_y, Tensor& grad_x,
                             Tensor& grad_s);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& grad, int a_channels, Tensor& grad_a,
                    Tensor& grad_b);

/// Tiles a (D) vector into a (B, D, H, W) map.
Tensor broadcast_vector(const Tensor& vec, int batch, int h, int w);
/// Reduces a (B, D, H, W) gradient back onto the (D) vector.
Tensor broadcast_vector_backward(const Tensor& grad_y);

/// conv-norm-act twice, then a squeeze-excitation gate over the activated
/// map, a residual shortcut, and an output activation. The squeeze pools
/// the post-activation map: an instance-normalized map has zero spatial
/// mean, so pooling it directly would make the gate content-blind. With
/// se_identity the gate is bypassed and the block is a plain residual
/// block.
class SEResBlock {
public:
  SEResBlock() = default;
  SEResBlock(std::string name, int in_ch, int out_ch, int se_reduction,
             bool se_identity = false);
  void init(RngStream& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_y);
  void collect(ParamList& out);
  void zero_grad();

private:
  bool has_shortcut_conv_ = false;
  bool se_identity_ = false;
  Conv2d conv1_, conv2_, shortcut_;
  InstanceNorm2d norm1_, norm2_;
  LeakyReLU act1_{0.01}, act2_{0.01}, act_out_{0.01};
  GlobalAvgPool gap_;
  Linear fc1_, fc2_;
  LeakyReLU se_act_{0.0};  // plain ReLU
  Sigmoid se_gate_;
  Tensor x_, h2_, se_scale_;
};

}  // namespace fasam::nn
