#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fasam {

class RngStream;

/// Dense row-major tensor of doubles, rank 1 to 4.
/// Activation maps use the (batch, channel, height, width) layout.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);
  Tensor(std::vector<int> s, double fill);

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s), 0.0); }
  static Tensor full(std::vector<int> s, double x) { return Tensor(std::move(s), x); }
  /// Entries drawn i.i.d. uniform in [-bound, bound].
  static Tensor uniform(std::vector<int> s, double bound, RngStream& rng);

  int rank() const { return static_cast<int>(shape.size()); }
  std::size_t size() const { return v.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  double& at(int a) { return v[static_cast<std::size_t>(a)]; }
  const double& at(int a) const { return v[static_cast<std::size_t>(a)]; }
  double& at(int a, int b);
  const double& at(int a, int b) const;
  double& at(int a, int b, int c, int d);
  const double& at(int a, int b, int c, int d) const;

  void fill(double x);
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

std::size_t shape_numel(const std::vector<int>& s);

/// c = alpha * op(a) * op(b) + beta * c, row-major.
/// a is m x k after optional transpose, b is k x n, c is m x n.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);

}  // namespace fasam
