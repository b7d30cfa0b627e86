#pragma once

#include "fasam/nn/layers.hpp"

namespace fasam::nn {

struct OptimConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer; state is kept per parameter in collection
/// order, so the same ParamList must be passed to every step.
class Adam {
public:
  explicit Adam(OptimConfig cfg = {}) : cfg_(cfg) {}

  void step(const ParamList& params);
  long iterations() const { return t_; }

private:
  OptimConfig cfg_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace fasam::nn
