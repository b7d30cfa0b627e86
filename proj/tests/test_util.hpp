#pragma once

#include <cmath>
#include <functional>

#include "fasam/rng.hpp"
#include "fasam/tensor.hpp"

namespace fasam::testutil {

inline Tensor random_tensor(std::vector<int> shape, RngStream& rng,
                            double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.v) x = lo + (hi - lo) * rng.uniform01();
  return t;
}

/// Central-difference derivative of a scalar functional at one entry. The
/// step is kept small so that activation kinks are crossed only for
/// pre-activations within an h-wide window of zero.
inline double central_diff(const std::function<double()>& eval, double* slot,
                           double h = 1e-6) {
  const double saved = *slot;
  *slot = saved + h;
  const double up = eval();
  *slot = saved - h;
  const double down = eval();
  *slot = saved;
  return (up - down) / (2.0 * h);
}

inline double rel_err(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / scale;
}

/// Finite-difference noise floors around 1e-10 for unit-scale functionals,
/// so near-zero derivative pairs compare on absolute error.
inline bool grad_close(double fd, double analytic, double rel_tol) {
  if (std::fabs(fd - analytic) < 5e-8) return true;
  return rel_err(fd, analytic) < rel_tol;
}

/// Fixed random projection turning a tensor output into a scalar loss.
struct LossProbe {
  Tensor weights;
  explicit LossProbe(const std::vector<int>& shape, std::uint64_t seed = 99) {
    RngStream rng(seed);
    weights = random_tensor(shape, rng, -1.0, 1.0);
  }
  double operator()(const Tensor& y) const {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.v[i] * weights.v[i];
    return s;
  }
  /// dL/dy for the probe.
  Tensor grad() const { return weights; }
};

}  // namespace fasam::testutil
