#include "fasam/nn/adam.hpp"

#include <cmath>

#include "fasam/error.hpp"

namespace fasam::nn {

void Adam::step(const ParamList& params) {
  if (m_.empty()) {
    for (const ParamRef& p : params) {
      m_.push_back(Tensor::zeros(p.value->shape));
      v_.push_back(Tensor::zeros(p.value->shape));
    }
  }
  if (m_.size() != params.size())
    throw InvalidInputError("Adam: parameter list changed between steps");

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = *params[i].value;
    const Tensor& g = *params[i].grad;
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m.v[j] = cfg_.beta1 * m.v[j] + (1.0 - cfg_.beta1) * g.v[j];
      v.v[j] = cfg_.beta2 * v.v[j] + (1.0 - cfg_.beta2) * g.v[j] * g.v[j];
      const double mhat = m.v[j] / bc1;
      const double vhat = v.v[j] / bc2;
      w.v[j] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace fasam::nn
