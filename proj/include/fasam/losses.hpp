#pragma once

#include "fasam/prompt.hpp"
#include "fasam/tensor.hpp"

namespace fasam {

struct LossValue {
  double total = 0.0;
  double ce_part = 0.0;
  double dice_part = 0.0;
};

/// 2|P & G| / (|P| + |G|). Both masks empty gives 1.0, exactly one empty
/// gives 0.0.
double dice_score(const Mask& pred, const Mask& gt);

/// 1 - (2 sum(p*g) + smooth) / (sum(p) + sum(g) + smooth) over all entries.
/// `probs` holds probabilities in [0,1], `gt` holds 0/1 values; shapes match.
double dice_loss(const Tensor& probs, const Tensor& gt, double smooth = 1.0);

/// d dice_loss / d probs.
Tensor dice_loss_grad(const Tensor& probs, const Tensor& gt, double smooth = 1.0);

/// Pixel-mean binary cross-entropy; probabilities are clamped to
/// [kProbClamp, 1 - kProbClamp] before the logs.
double bce_loss(const Tensor& probs, const Tensor& gt);
Tensor bce_loss_grad(const Tensor& probs, const Tensor& gt);

inline constexpr double kProbClamp = 1e-7;

LossValue combined_loss(const Tensor& probs, const Tensor& gt,
                        double ce_weight = 1.0, double dice_weight = 1.0,
                        double smooth = 1.0);
Tensor combined_loss_grad(const Tensor& probs, const Tensor& gt,
                          double ce_weight = 1.0, double dice_weight = 1.0,
                          double smooth = 1.0);

}  // namespace fasam
