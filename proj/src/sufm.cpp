#include "fasam/sufm.hpp"

#include <cmath>

#include "fasam/error.hpp"

namespace fasam::sufm {

namespace {

void require_bchw(const Tensor& f) {
  if (f.rank() != 4) {
    throw InvalidInputError("feature map must have shape (B,C,H,W), got " +
                            f.shape_str());
  }
}

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

bool has_gaussian(NoiseMode m) {
  return m == NoiseMode::kGaussian || m == NoiseMode::kUnited;
}
bool has_poisson(NoiseMode m) {
  return m == NoiseMode::kPoisson || m == NoiseMode::kUnited;
}

struct BranchDraws {
  Tensor eps;      // (B,C) normal draws
  Tensor poisson;  // (B,C) signed, scaled Poisson noise (zeros if unused)
};

// Sampled statistic is stat + eps * unc; the Poisson rate is its magnitude.
BranchDraws draw_branch(const Tensor& stat, const Tensor& unc,
                        const SufmConfig& cfg, RngStream& rng) {
  const int b_n = stat.dim(0), c_n = stat.dim(1);
  BranchDraws d;
  d.eps = Tensor({b_n, c_n});
  d.poisson = Tensor::zeros({b_n, c_n});
  for (int b = 0; b < b_n; ++b)
    for (int c = 0; c < c_n; ++c) d.eps.at(b, c) = rng.normal();
  if (has_poisson(cfg.noise_mode)) {
    for (int b = 0; b < b_n; ++b) {
      for (int c = 0; c < c_n; ++c) {
        const double sampled = stat.at(b, c) + d.eps.at(b, c) * unc.at(c);
        const long k = rng.poisson(std::fabs(sampled));
        d.poisson.at(b, c) =
            sign_of(sampled) * cfg.poisson_scale * static_cast<double>(k);
      }
    }
  }
  return d;
}

double gaussian_term(double stat, double eps, double unc, SamplingMode mode) {
  if (mode == SamplingMode::kLiteral) return (stat + eps * unc) * unc;
  return eps * unc;
}

}  // namespace

void SufmConfig::validate() const {
  if (!(apply_probability >= 0.0 && apply_probability <= 1.0))
    throw ConfigError("sufm: apply_probability must be in [0,1]");
  if (!(gamma_floor > 0.0)) throw ConfigError("sufm: gamma_floor must be > 0");
  if (!(epsilon_std > 0.0)) throw ConfigError("sufm: epsilon_std must be > 0");
  if (!(poisson_scale >= 0.0))
    throw ConfigError("sufm: poisson_scale must be >= 0");
  switch (noise_mode) {
    case NoiseMode::kGaussian:
    case NoiseMode::kPoisson:
    case NoiseMode::kUnited:
      break;
    default:
      throw ConfigError("sufm: invalid noise_mode");
  }
}

FeatureStatistics instance_channel_stats(const Tensor& f, double epsilon_std) {
  require_bchw(f);
  if (!f.all_finite())
    throw InvalidInputError("instance_channel_stats: non-finite input");
  const int b_n = f.dim(0), c_n = f.dim(1), h_n = f.dim(2), w_n = f.dim(3);
  const double inv_n = 1.0 / (static_cast<double>(h_n) * w_n);

  FeatureStatistics s;
  s.mean = Tensor({b_n, c_n});
  s.stdev = Tensor({b_n, c_n});
  for (int b = 0; b < b_n; ++b) {
    for (int c = 0; c < c_n; ++c) {
      const double* p = f.data() + (static_cast<std::size_t>(b) * c_n + c) *
                                       static_cast<std::size_t>(h_n) * w_n;
      double sum = 0.0;
      for (int i = 0; i < h_n * w_n; ++i) sum += p[i];
      const double mean = sum * inv_n;
      double var = 0.0;
      for (int i = 0; i < h_n * w_n; ++i) {
        const double d = p[i] - mean;
        var += d * d;
      }
      var *= inv_n;
      s.mean.at(b, c) = mean;
      s.stdev.at(b, c) = std::sqrt(var + epsilon_std * epsilon_std);
    }
  }
  return s;
}

namespace {

// Population stdev across the batch axis of a (B,C) tensor.
Tensor batch_spread(const Tensor& stat, Tensor* batch_mean_out) {
  const int b_n = stat.dim(0), c_n = stat.dim(1);
  Tensor out({c_n});
  Tensor bm({c_n});
  for (int c = 0; c < c_n; ++c) {
    double m = 0.0;
    for (int b = 0; b < b_n; ++b) m += stat.at(b, c);
    m /= b_n;
    double var = 0.0;
    for (int b = 0; b < b_n; ++b) {
      const double d = stat.at(b, c) - m;
      var += d * d;
    }
    var /= b_n;
    bm.at(c) = m;
    out.at(c) = std::sqrt(var);
  }
  if (batch_mean_out) *batch_mean_out = std::move(bm);
  return out;
}

}  // namespace

UncertaintyEstimate uncertainty_estimates(const FeatureStatistics& stats) {
  if (stats.mean.rank() != 2 || !stats.mean.same_shape(stats.stdev))
    throw InvalidInputError("uncertainty_estimates: mean/stdev must both be (B,C)");
  UncertaintyEstimate u;
  u.sigma_mu = batch_spread(stats.mean, nullptr);
  u.sigma_sigma = batch_spread(stats.stdev, nullptr);
  return u;
}

PerturbedStatistics sample_perturbed_stats(const FeatureStatistics& stats,
                                           const UncertaintyEstimate& unc,
                                           const SufmConfig& cfg,
                                           RngStream& rng) {
  cfg.validate();
  const int b_n = stats.mean.dim(0), c_n = stats.mean.dim(1);
  if (unc.sigma_mu.rank() != 1 || unc.sigma_mu.dim(0) != c_n)
    throw InvalidInputError("sample_perturbed_stats: uncertainty shape mismatch");

  RngStream rng_mu = rng.fork();
  RngStream rng_sigma = rng.fork();
  const BranchDraws mu_d = draw_branch(stats.mean, unc.sigma_mu, cfg, rng_mu);
  const BranchDraws sg_d =
      draw_branch(stats.stdev, unc.sigma_sigma, cfg, rng_sigma);

  PerturbedStatistics p;
  p.beta = Tensor({b_n, c_n});
  p.gamma = Tensor({b_n, c_n});
  const bool g_on = has_gaussian(cfg.noise_mode);
  const bool p_on = has_poisson(cfg.noise_mode);
  for (int b = 0; b < b_n; ++b) {
    for (int c = 0; c < c_n; ++c) {
      double beta = stats.mean.at(b, c);
      if (g_on)
        beta += gaussian_term(stats.mean.at(b, c), mu_d.eps.at(b, c),
                              unc.sigma_mu.at(c), cfg.sampling_mode);
      if (p_on) beta += mu_d.poisson.at(b, c);
      double gamma = stats.stdev.at(b, c);
      if (g_on)
        gamma += gaussian_term(stats.stdev.at(b, c), sg_d.eps.at(b, c),
                               unc.sigma_sigma.at(c), cfg.sampling_mode);
      if (p_on) gamma += sg_d.poisson.at(b, c);
      p.beta.at(b, c) = beta;
      p.gamma.at(b, c) = std::max(gamma, cfg.gamma_floor);
    }
  }
  return p;
}

Tensor perturb_features(const Tensor& f, const FeatureStatistics& stats,
                        const PerturbedStatistics& pert) {
  require_bchw(f);
  const int b_n = f.dim(0), c_n = f.dim(1), h_n = f.dim(2), w_n = f.dim(3);
  if (stats.mean.dim(0) != b_n || stats.mean.dim(1) != c_n ||
      !stats.mean.same_shape(pert.beta))
    throw InvalidInputError("perturb_features: statistics shape mismatch");

  Tensor out(f.shape);
  const std::size_t plane = static_cast<std::size_t>(h_n) * w_n;
  for (int b = 0; b < b_n; ++b) {
    for (int c = 0; c < c_n; ++c) {
      const double mean = stats.mean.at(b, c);
      const double inv_std = 1.0 / stats.stdev.at(b, c);
      const double gamma = pert.gamma.at(b, c);
      const double beta = pert.beta.at(b, c);
      const double* src =
          f.data() + (static_cast<std::size_t>(b) * c_n + c) * plane;
      double* dst = out.data() + (static_cast<std::size_t>(b) * c_n + c) * plane;
      for (std::size_t i = 0; i < plane; ++i)
        dst[i] = gamma * (src[i] - mean) * inv_std + beta;
    }
  }
  return out;
}

Tensor sufm_forward(const Tensor& f, const SufmConfig& cfg, RngStream& rng,
                    bool training) {
  cfg.validate();
  if (!training) return f;
  if (!rng.bernoulli(cfg.apply_probability)) return f;
  const FeatureStatistics stats = instance_channel_stats(f, cfg.epsilon_std);
  const UncertaintyEstimate unc = uncertainty_estimates(stats);
  const PerturbedStatistics pert = sample_perturbed_stats(stats, unc, cfg, rng);
  return perturb_features(f, stats, pert);
}

Tensor SufmOp::forward(const Tensor& f, const SufmConfig& cfg, RngStream& rng,
                       bool training) {
  cfg.validate();
  applied_ = training && rng.bernoulli(cfg.apply_probability);
  if (!applied_) return f;

  cfg_ = cfg;
  input_ = f;
  stats_ = instance_channel_stats(f, cfg.epsilon_std);
  unc_.sigma_mu = batch_spread(stats_.mean, &batch_mean_mu_);
  unc_.sigma_sigma = batch_spread(stats_.stdev, &batch_mean_sigma_);

  // Replays the same fork/draw contract as sample_perturbed_stats but keeps
  // the normal draws for the backward pass.
  RngStream rng_mu = rng.fork();
  RngStream rng_sigma = rng.fork();
  const BranchDraws mu_d = draw_branch(stats_.mean, unc_.sigma_mu, cfg, rng_mu);
  const BranchDraws sg_d =
      draw_branch(stats_.stdev, unc_.sigma_sigma, cfg, rng_sigma);
  eps_mu_ = mu_d.eps;
  eps_sigma_ = sg_d.eps;

  const int b_n = f.dim(0), c_n = f.dim(1);
  pert_.beta = Tensor({b_n, c_n});
  pert_.gamma = Tensor({b_n, c_n});
  gamma_clamped_ = Tensor::zeros({b_n, c_n});
  const bool g_on = has_gaussian(cfg.noise_mode);
  const bool p_on = has_poisson(cfg.noise_mode);
  for (int b = 0; b < b_n; ++b) {
    for (int c = 0; c < c_n; ++c) {
      double beta = stats_.mean.at(b, c);
      if (g_on)
        beta += gaussian_term(stats_.mean.at(b, c), eps_mu_.at(b, c),
                              unc_.sigma_mu.at(c), cfg.sampling_mode);
      if (p_on) beta += mu_d.poisson.at(b, c);
      double gamma = stats_.stdev.at(b, c);
      if (g_on)
        gamma += gaussian_term(stats_.stdev.at(b, c), eps_sigma_.at(b, c),
                               unc_.sigma_sigma.at(c), cfg.sampling_mode);
      if (p_on) gamma += sg_d.poisson.at(b, c);
      pert_.beta.at(b, c) = beta;
      gamma_clamped_.at(b, c) = gamma < cfg_.gamma_floor ? 1.0 : 0.0;
      pert_.gamma.at(b, c) = std::max(gamma, cfg_.gamma_floor);
    }
  }
  return perturb_features(f, stats_, pert_);
}

Tensor SufmOp::backward(const Tensor& grad_out) const {
  if (!applied_) return grad_out;

  const Tensor& f = input_;
  const int b_n = f.dim(0), c_n = f.dim(1), h_n = f.dim(2), w_n = f.dim(3);
  const int n_sp = h_n * w_n;
  const double inv_n = 1.0 / n_sp;
  const bool g_on = has_gaussian(cfg_.noise_mode);
  const bool literal = cfg_.sampling_mode == SamplingMode::kLiteral;

  Tensor grad_in(f.shape);
  Tensor g_beta({b_n, c_n});        // dL/d beta
  Tensor g_gamma_raw({b_n, c_n});   // dL/d gamma before the clamp gate
  Tensor g_mu = Tensor::zeros({b_n, c_n});
  Tensor g_sigma = Tensor::zeros({b_n, c_n});

  // Direct paths through the re-transformation out = gamma * xhat + beta.
  for (int b = 0; b < b_n; ++b) {
    for (int c = 0; c < c_n; ++c) {
      const std::size_t off =
          (static_cast<std::size_t>(b) * c_n + c) * static_cast<std::size_t>(n_sp);
      const double mean = stats_.mean.at(b, c);
      const double inv_std = 1.0 / stats_.stdev.at(b, c);
      const double gamma = pert_.gamma.at(b, c);
      double sum_g = 0.0, sum_gx = 0.0;
      for (int i = 0; i < n_sp; ++i) {
        const double g = grad_out.v[off + i];
        const double xhat = (f.v[off + i] - mean) * inv_std;
        sum_g += g;
        sum_gx += g * xhat;
        grad_in.v[off + i] = g * gamma * inv_std;
      }
      g_beta.at(b, c) = sum_g;
      // The clamp has zero slope where it engaged.
      g_gamma_raw.at(b, c) = gamma_clamped_.at(b, c) > 0.0 ? 0.0 : sum_gx;
      // xhat pulls on mean and stdev.
      g_mu.at(b, c) += -gamma * inv_std * sum_g;
      g_sigma.at(b, c) += -inv_std * gamma * sum_gx;
    }
  }

  // beta = mean + gaussian_term(mean) + const, same structure for gamma.
  Tensor g_sigma_mu = Tensor::zeros({c_n});
  Tensor g_sigma_sigma = Tensor::zeros({c_n});
  for (int b = 0; b < b_n; ++b) {
    for (int c = 0; c < c_n; ++c) {
      double d_beta_d_mu = 1.0;
      double d_gamma_d_sigma = 1.0;
      if (g_on && literal) {
        d_beta_d_mu += unc_.sigma_mu.at(c);
        d_gamma_d_sigma += unc_.sigma_sigma.at(c);
      }
      g_mu.at(b, c) += g_beta.at(b, c) * d_beta_d_mu;
      g_sigma.at(b, c) += g_gamma_raw.at(b, c) * d_gamma_d_sigma;
      if (g_on) {
        const double d_beta_d_unc =
            literal ? stats_.mean.at(b, c) +
                          2.0 * eps_mu_.at(b, c) * unc_.sigma_mu.at(c)
                    : eps_mu_.at(b, c);
        const double d_gamma_d_unc =
            literal ? stats_.stdev.at(b, c) +
                          2.0 * eps_sigma_.at(b, c) * unc_.sigma_sigma.at(c)
                    : eps_sigma_.at(b, c);
        g_sigma_mu.at(c) += g_beta.at(b, c) * d_beta_d_unc;
        g_sigma_sigma.at(c) += g_gamma_raw.at(b, c) * d_gamma_d_unc;
      }
    }
  }

  // Uncertainty estimates pull on the per-instance statistics:
  // d sigma_mu[c] / d mu[b,c] = (mu[b,c] - batch_mean[c]) / (B * sigma_mu[c]).
  for (int b = 0; b < b_n; ++b) {
    for (int c = 0; c < c_n; ++c) {
      const double smu = unc_.sigma_mu.at(c);
      if (smu > 0.0) {
        g_mu.at(b, c) += g_sigma_mu.at(c) *
                         (stats_.mean.at(b, c) - batch_mean_mu_.at(c)) /
                         (b_n * smu);
      }
      const double ssg = unc_.sigma_sigma.at(c);
      if (ssg > 0.0) {
        g_sigma.at(b, c) += g_sigma_sigma.at(c) *
                            (stats_.stdev.at(b, c) - batch_mean_sigma_.at(c)) /
                            (b_n * ssg);
      }
    }
  }

  // Statistics pull on the input: d mu / d f = 1/N and
  // d stdev / d f = (f - mu) / (N * stdev).
  for (int b = 0; b < b_n; ++b) {
    for (int c = 0; c < c_n; ++c) {
      const std::size_t off =
          (static_cast<std::size_t>(b) * c_n + c) * static_cast<std::size_t>(n_sp);
      const double mean = stats_.mean.at(b, c);
      const double inv_std = 1.0 / stats_.stdev.at(b, c);
      const double gm = g_mu.at(b, c) * inv_n;
      const double gs = g_sigma.at(b, c) * inv_n * inv_std;
      for (int i = 0; i < n_sp; ++i)
        grad_in.v[off + i] += gm + gs * (f.v[off + i] - mean);
    }
  }
  return grad_in;
}

}  // namespace fasam::sufm
