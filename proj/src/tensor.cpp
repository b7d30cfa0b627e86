#include "fasam/tensor.hpp"

#include <cblas.h>

#include <cmath>
#include <sstream>

#include "fasam/error.hpp"
#include "fasam/rng.hpp"

extern "C" void openblas_set_num_threads(int);

namespace fasam {

namespace {
// Per-element accumulation order must not depend on the machine; pin the
// BLAS to one thread so results are reproducible everywhere.
[[maybe_unused]] const int kBlasInit = [] {
  openblas_set_num_threads(1);
  return 1;
}();
}  // namespace

std::size_t shape_numel(const std::vector<int>& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 1) throw InvalidInputError("tensor dimension must be >= 1");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)), v(shape_numel(shape)) {}

Tensor::Tensor(std::vector<int> s, double fill)
    : shape(std::move(s)), v(shape_numel(shape), fill) {}

Tensor Tensor::uniform(std::vector<int> s, double bound, RngStream& rng) {
  Tensor t(std::move(s));
  for (double& x : t.v) x = (2.0 * rng.uniform01() - 1.0) * bound;
  return t;
}

double& Tensor::at(int a, int b) {
  return v[static_cast<std::size_t>(a) * shape[1] + b];
}
const double& Tensor::at(int a, int b) const {
  return v[static_cast<std::size_t>(a) * shape[1] + b];
}

double& Tensor::at(int a, int b, int c, int d) {
  const std::size_t i =
      ((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d;
  return v[i];
}
const double& Tensor::at(int a, int b, int c, int d) const {
  const std::size_t i =
      ((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d;
  return v[i];
}

void Tensor::fill(double x) {
  for (double& e : v) e = x;
}

bool Tensor::all_finite() const {
  for (double e : v) {
    if (!std::isfinite(e)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

}  // namespace fasam
