#include "fasam/losses.hpp"

#include <algorithm>
#include <cmath>

#include "fasam/error.hpp"

namespace fasam {

double dice_score(const Mask& pred, const Mask& gt) {
  if (pred.h != gt.h || pred.w != gt.w)
    throw InvalidInputError("dice_score: mask shapes differ");
  long p = 0, g = 0, inter = 0;
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    const bool pi = pred.v[i] != 0, gi = gt.v[i] != 0;
    p += pi;
    g += gi;
    inter += pi && gi;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(p + g);
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b))
    throw InvalidInputError(std::string(who) + ": shape mismatch " +
                            a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

double dice_loss(const Tensor& probs, const Tensor& gt, double smooth) {
  require_same_shape(probs, gt, "dice_loss");
  double pg = 0.0, p = 0.0, g = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    pg += probs.v[i] * gt.v[i];
    p += probs.v[i];
    g += gt.v[i];
  }
  return 1.0 - (2.0 * pg + smooth) / (p + g + smooth);
}

Tensor dice_loss_grad(const Tensor& probs, const Tensor& gt, double smooth) {
  require_same_shape(probs, gt, "dice_loss_grad");
  double pg = 0.0, p = 0.0, g = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    pg += probs.v[i] * gt.v[i];
    p += probs.v[i];
    g += gt.v[i];
  }
  const double denom = p + g + smooth;
  const double num = 2.0 * pg + smooth;
  Tensor grad(probs.shape);
  for (std::size_t i = 0; i < probs.size(); ++i)
    grad.v[i] = -(2.0 * gt.v[i] * denom - num) / (denom * denom);
  return grad;
}

double bce_loss(const Tensor& probs, const Tensor& gt) {
  require_same_shape(probs, gt, "bce_loss");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs.v[i], kProbClamp, 1.0 - kProbClamp);
    sum += -(gt.v[i] * std::log(p) + (1.0 - gt.v[i]) * std::log(1.0 - p));
  }
  return sum / static_cast<double>(probs.size());
}

Tensor bce_loss_grad(const Tensor& probs, const Tensor& gt) {
  require_same_shape(probs, gt, "bce_loss_grad");
  const double inv_n = 1.0 / static_cast<double>(probs.size());
  Tensor grad(probs.shape);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs.v[i], kProbClamp, 1.0 - kProbClamp);
    grad.v[i] = inv_n * (-(gt.v[i] / p) + (1.0 - gt.v[i]) / (1.0 - p));
    // Zero slope outside the clamp window.
    if (probs.v[i] < kProbClamp || probs.v[i] > 1.0 - kProbClamp) grad.v[i] = 0.0;
  }
  return grad;
}

LossValue combined_loss(const Tensor& probs, const Tensor& gt, double ce_weight,
                        double dice_weight, double smooth) {
  LossValue out;
  out.ce_part = bce_loss(probs, gt);
  out.dice_part = dice_loss(probs, gt, smooth);
  out.total = ce_weight * out.ce_part + dice_weight * out.dice_part;
  return out;
}

Tensor combined_loss_grad(const Tensor& probs, const Tensor& gt,
                          double ce_weight, double dice_weight, double smooth) {
  Tensor g_ce = bce_loss_grad(probs, gt);
  const Tensor g_dice = dice_loss_grad(probs, gt, smooth);
  for (std::size_t i = 0; i < g_ce.size(); ++i)
    g_ce.v[i] = ce_weight * g_ce.v[i] + dice_weight * g_dice.v[i];
  return g_ce;
}

}  // namespace fasam
