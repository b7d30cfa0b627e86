#pragma once

#include <cstdint>

#include "fasam/rng.hpp"
#include "fasam/tensor.hpp"

namespace fasam::sufm {

/// Per-instance, per-channel first and second moments of a (B,C,H,W)
/// feature map, reduced over the spatial axes only.
struct FeatureStatistics {
  Tensor mean;   // (B, C)
  Tensor stdev;  // (B, C), always > 0 thanks to the epsilon_std floor
};

/// Batch-level spread of the per-instance statistics: one value per channel,
/// the square root of the across-batch variance of mean and stdev.
struct UncertaintyEstimate {
  Tensor sigma_mu;     // (C)
  Tensor sigma_sigma;  // (C)
};

/// Sampled replacement statistics used to re-transform the feature map.
struct PerturbedStatistics {
  Tensor beta;   // (B, C) replacement mean
  Tensor gamma;  // (B, C) replacement stdev, clamped to >= gamma_floor
};

enum class NoiseMode { kGaussian, kPoisson, kUnited };
enum class SamplingMode { kReparameterized, kLiteral };

struct SufmConfig {
  NoiseMode noise_mode = NoiseMode::kUnited;
  SamplingMode sampling_mode = SamplingMode::kReparameterized;
  double apply_probability = 0.5;
  double gamma_floor = 1e-4;
  double epsilon_std = 1e-6;
  double poisson_scale = 0.1;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// mean[b,c] and stdev[b,c] of f over H*W, with
/// stdev = sqrt(variance + epsilon_std^2). Pure function of the input.
FeatureStatistics instance_channel_stats(const Tensor& f, double epsilon_std);

/// Population standard deviation of the per-instance statistics across the
/// batch, per channel. Exactly zero for B = 1 or identical instances.
UncertaintyEstimate uncertainty_estimates(const FeatureStatistics& stats);

/// Draws replacement statistics. Draw contract (replayable in tests):
///   1. rng_mu = rng.fork(), then rng_sigma = rng.fork().
///   2. On each branch stream, first B*C normal() draws eps in row-major
///      (b, c) order. The sampled statistic is stat* = stat + eps * unc.
///   3. If noise_mode includes the Poisson term, then B*C poisson() draws
///      in row-major order with rate |stat*|, after all normals of that
///      branch.
/// Term assembly per (b, c):
///   gaussian_term = eps * unc                  (reparameterized)
///                 = (stat + eps * unc) * unc   (literal)
///   poisson_term  = sign(stat*) * poisson_scale * k
///   beta  = mean  + [gaussian_term] + [poisson_term]   per noise_mode
///   gamma = clamp(stdev + [gaussian_term] + [poisson_term], gamma_floor)
/// kGaussian drops the Poisson term, kPoisson drops the Gaussian term
/// (the Poisson rate still derives from the Gaussian-sampled statistic),
/// kUnited keeps both.
PerturbedStatistics sample_perturbed_stats(const FeatureStatistics& stats,
                                           const UncertaintyEstimate& unc,
                                           const SufmConfig& cfg,
                                           RngStream& rng);

/// out[b,c,h,w] = gamma[b,c] * (f[b,c,h,w] - mean[b,c]) / stdev[b,c] + beta[b,c]
Tensor perturb_features(const Tensor& f, const FeatureStatistics& stats,
                        const PerturbedStatistics& pert);

/// Full module: statistics -> uncertainty -> sampling -> re-transformation.
/// Identity when training is false or the Bernoulli(apply_probability) gate
/// (one uniform01 draw, taken before the branch forks) comes up false.
Tensor sufm_forward(const Tensor& f, const SufmConfig& cfg, RngStream& rng,
                    bool training);

/// Differentiable SUFM step for use inside a training graph. The sampled
/// noise values are constants of the forward pass; gradients flow through
/// the statistics, the uncertainty estimates, and the normalization.
class SufmOp {
public:
  /// Returns the input unchanged (and records that) when not applied.
  Tensor forward(const Tensor& f, const SufmConfig& cfg, RngStream& rng,
                 bool training);
  Tensor backward(const Tensor& grad_out) const;
  bool applied() const { return applied_; }

private:
  bool applied_ = false;
  SufmConfig cfg_;
  Tensor input_;
  FeatureStatistics stats_;
  UncertaintyEstimate unc_;
  PerturbedStatistics pert_;
  Tensor eps_mu_, eps_sigma_;      // (B,C) normal draws
  Tensor gamma_clamped_;           // (B,C) 1.0 where the floor engaged
  Tensor batch_mean_mu_, batch_mean_sigma_;  // (C) across-batch means
};

}  // namespace fasam::sufm
