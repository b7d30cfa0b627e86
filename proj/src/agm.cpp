#include "fasam/agm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fasam/config.hpp"
#include "fasam/error.hpp"
#include "fasam/losses.hpp"

namespace fasam {

void AgmConfig::validate() const {
  if (encoder_channels.size() < 2)
    throw ConfigError("agm: need at least two encoder blocks");
  for (int c : encoder_channels)
    if (c < 1) throw ConfigError("agm: encoder channels must be >= 1");
  for (int p : sufm_positions)
    if (p < 0 || p >= slot_count())
      throw ConfigError("agm: sufm position " + std::to_string(p) +
                        " outside valid slots [0," +
                        std::to_string(slot_count() - 1) + "]");
  const int f = downsample_factor();
  if (input_h < f || input_w < f || input_h % f != 0 || input_w % f != 0)
    throw ConfigError("agm: input size must be divisible by " +
                      std::to_string(f));
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw ConfigError("agm: threshold must be in [0,1]");
}

namespace {
// Slot 0 follows block 0; deeper blocks use slot index block+1 (slot 1 is
// reserved for the first pooling).
int slot_of_block(int block) { return block == 0 ? 0 : block + 1; }
}  // namespace

AgmModel::AgmModel(const AgmConfig& cfg, const sufm::SufmConfig& sufm_cfg,
                   std::uint64_t init_seed)
    : cfg_(cfg), sufm_cfg_(sufm_cfg) {
  cfg_.validate();
  sufm_cfg_.validate();
  levels_ = static_cast<int>(cfg_.encoder_channels.size());
  const std::vector<int>& ch = cfg_.encoder_channels;

  for (int i = 0; i < levels_; ++i) {
    const int cin = i == 0 ? 1 : ch[static_cast<std::size_t>(i) - 1];
    const int cout = ch[static_cast<std::size_t>(i)];
    enc_a_.emplace_back("enc" + std::to_string(i) + "a", cin, cout, 3);
    enc_b_.emplace_back("enc" + std::to_string(i) + "b", cout, cout, 3);
  }
  pools_.resize(static_cast<std::size_t>(levels_) - 1);
  ups_.resize(static_cast<std::size_t>(levels_) - 1);
  for (int i = 0; i < levels_ - 1; ++i) {
    const int c_lo = ch[static_cast<std::size_t>(i)];
    const int c_hi = ch[static_cast<std::size_t>(i) + 1];
    up_conv_.emplace_back("up" + std::to_string(i), c_hi, c_lo, 3);
    dec_a_.emplace_back("dec" + std::to_string(i) + "a", 2 * c_lo, c_lo, 3);
    dec_b_.emplace_back("dec" + std::to_string(i) + "b", c_lo, c_lo, 3);
  }
  head_ = nn::Conv2d("head", ch[0], 1, 1);

  enc_act_a_.resize(static_cast<std::size_t>(levels_));
  enc_act_b_.resize(static_cast<std::size_t>(levels_));
  up_act_.resize(static_cast<std::size_t>(levels_) - 1);
  dec_act_a_.resize(static_cast<std::size_t>(levels_) - 1);
  dec_act_b_.resize(static_cast<std::size_t>(levels_) - 1);
  sufm_ops_.resize(static_cast<std::size_t>(cfg_.slot_count()));
  skip_cache_.resize(static_cast<std::size_t>(levels_) - 1);

  RngStream rng(init_seed);
  for (auto& c : enc_a_) c.init(rng);
  for (auto& c : enc_b_) c.init(rng);
  for (auto& c : up_conv_) c.init(rng);
  for (auto& c : dec_a_) c.init(rng);
  for (auto& c : dec_b_) c.init(rng);
  head_.init(rng);
}

Tensor AgmModel::forward(const Tensor& image, bool training, RngStream* rng) {
  if (image.rank() != 4 || image.dim(1) != 1 || image.dim(2) != cfg_.input_h ||
      image.dim(3) != cfg_.input_w)
    throw InvalidInputError("agm_forward: expected (B,1," +
                            std::to_string(cfg_.input_h) + "," +
                            std::to_string(cfg_.input_w) + "), got " +
                            image.shape_str());
  if (training && rng == nullptr)
    throw InvalidInputError("agm_forward: training mode needs an rng");

  auto slot = [&](int s, Tensor t) -> Tensor {
    if (!training || !cfg_.sufm_positions.count(s)) return t;
    return sufm_ops_[static_cast<std::size_t>(s)].forward(t, sufm_cfg_, *rng,
                                                          true);
  };

  Tensor t = image;
  for (int i = 0; i < levels_; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    t = enc_act_a_[iu].forward(enc_a_[iu].forward(t));
    t = enc_act_b_[iu].forward(enc_b_[iu].forward(t));
    t = slot(slot_of_block(i), std::move(t));
    if (i < levels_ - 1) {
      skip_cache_[iu] = t;
      t = pools_[iu].forward(t);
      if (i == 0) t = slot(1, std::move(t));
    }
  }
  for (int i = levels_ - 2; i >= 0; --i) {
    const auto iu = static_cast<std::size_t>(i);
    t = ups_[iu].forward(t);
    t = up_act_[iu].forward(up_conv_[iu].forward(t));
    t = nn::concat_channels(t, skip_cache_[iu]);
    t = dec_act_a_[iu].forward(dec_a_[iu].forward(t));
    t = dec_act_b_[iu].forward(dec_b_[iu].forward(t));
  }
  return head_.forward(t);
}

Tensor AgmModel::backward(const Tensor& grad_logits) {
  const std::vector<int>& ch = cfg_.encoder_channels;
  Tensor g = head_.backward(grad_logits);
  std::vector<Tensor> g_skip(static_cast<std::size_t>(levels_) - 1);
  for (int i = 0; i <= levels_ - 2; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    g = dec_b_[iu].backward(dec_act_b_[iu].backward(g));
    g = dec_a_[iu].backward(dec_act_a_[iu].backward(g));
    Tensor g_up;
    nn::split_channels(g, ch[iu], g_up, g_skip[iu]);
    g = ups_[iu].backward(up_conv_[iu].backward(up_act_[iu].backward(g_up)));
  }
  for (int i = levels_ - 1; i >= 0; --i) {
    const auto iu = static_cast<std::size_t>(i);
    if (i < levels_ - 1) {
      if (i == 0) g = sufm_ops_[1].backward(g);
      g = pools_[iu].backward(g);
      for (std::size_t j = 0; j < g.size(); ++j) g.v[j] += g_skip[iu].v[j];
    }
    g = sufm_ops_[static_cast<std::size_t>(slot_of_block(i))].backward(g);
    g = enc_b_[iu].backward(enc_act_b_[iu].backward(g));
    g = enc_a_[iu].backward(enc_act_a_[iu].backward(g));
  }
  return g;
}

nn::ParamList AgmModel::params() {
  nn::ParamList out;
  for (auto& c : enc_a_) c.collect(out);
  for (auto& c : enc_b_) c.collect(out);
  for (auto& c : up_conv_) c.collect(out);
  for (auto& c : dec_a_) c.collect(out);
  for (auto& c : dec_b_) c.collect(out);
  head_.collect(out);
  return out;
}

void AgmModel::zero_grad() {
  for (auto& c : enc_a_) c.zero_grad();
  for (auto& c : enc_b_) c.zero_grad();
  for (auto& c : up_conv_) c.zero_grad();
  for (auto& c : dec_a_) c.zero_grad();
  for (auto& c : dec_b_) c.zero_grad();
  head_.zero_grad();
}

// ---------------------------------------------------------------- training

namespace {

Tensor image_to_tensor(const Image& img) {
  Tensor t({1, 1, img.h, img.w});
  std::copy(img.v.begin(), img.v.end(), t.v.begin());
  return t;
}

Tensor mask_to_tensor(const Mask& mask) {
  Tensor t({1, 1, mask.h, mask.w});
  for (std::size_t i = 0; i < mask.v.size(); ++i)
    t.v[i] = mask.v[i] ? 1.0 : 0.0;
  return t;
}

Tensor stack_batch(const std::vector<Tensor>& rows,
                   const std::vector<std::size_t>& pick) {
  const Tensor& first = rows[pick[0]];
  Tensor out({static_cast<int>(pick.size()), first.dim(1), first.dim(2),
              first.dim(3)});
  const std::size_t stride = first.size();
  for (std::size_t i = 0; i < pick.size(); ++i)
    std::copy(rows[pick[i]].v.begin(), rows[pick[i]].v.end(),
              out.v.begin() + static_cast<long>(i * stride));
  return out;
}

double batch_dice(const Tensor& probs, const Tensor& gt, double threshold) {
  long p = 0, g = 0, inter = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool pi = probs.v[i] > threshold;
    const bool gi = gt.v[i] > 0.5;
    p += pi;
    g += gi;
    inter += pi && gi;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(p + g);
}

}  // namespace

AgmTrainResult train_agm(const Dataset& dataset,
                         const std::vector<std::size_t>& train_indices,
                         const AgmConfig& cfg, const sufm::SufmConfig& sufm_cfg,
                         const AgmTrainOptions& opts) {
  cfg.validate();
  if (train_indices.empty()) throw ConfigError("train_agm: empty dataset");
  if (opts.batch_size < 1) throw ConfigError("train_agm: batch_size must be >= 1");
  for (std::size_t idx : train_indices) {
    const Mask& m = dataset.samples[idx].mask;
    for (std::uint8_t v : m.v)
      if (v > 1) throw InvalidInputError("train_agm: mask is not binary");
  }

  std::vector<Tensor> images, masks;
  images.reserve(train_indices.size());
  masks.reserve(train_indices.size());
  for (std::size_t idx : train_indices) {
    const DomainSample& s = dataset.samples[idx];
    images.push_back(image_to_tensor(
        preprocess(s.image, cfg.input_h, cfg.input_w, true)));
    masks.push_back(
        mask_to_tensor(resize_nearest(s.mask, cfg.input_h, cfg.input_w)));
  }

  AgmModel model(cfg, sufm_cfg, mix_seed(opts.seed, 0x11));
  RngStream shuffle_rng(mix_seed(opts.seed, 0x22));
  RngStream sufm_rng(mix_seed(opts.seed, 0x33));
  nn::Adam adam(opts.optim);
  nn::ParamList params = model.params();

  const std::size_t n = train_indices.size();
  const long batches_per_epoch = static_cast<long>(
      (n + static_cast<std::size_t>(opts.batch_size) - 1) /
      static_cast<std::size_t>(opts.batch_size));
  const long total_steps = opts.unit == IterationUnit::kStep
                               ? opts.iterations
                               : opts.iterations * batches_per_epoch;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::size_t cursor = n;  // forces an initial shuffle

  AgmTrainResult result;
  result.log.reserve(static_cast<std::size_t>(total_steps));
  for (long step = 0; step < total_steps; ++step) {
    std::vector<std::size_t> pick;
    pick.reserve(static_cast<std::size_t>(opts.batch_size));
    for (int k = 0; k < opts.batch_size; ++k) {
      if (cursor >= n) {
        for (std::size_t i = n; i > 1; --i) {
          const auto j = static_cast<std::size_t>(
              shuffle_rng.uniform_int(static_cast<int>(i)));
          std::swap(order[i - 1], order[j]);
        }
        cursor = 0;
      }
      pick.push_back(order[cursor++]);
    }

    const Tensor x = stack_batch(images, pick);
    const Tensor y = stack_batch(masks, pick);
    const Tensor logits = model.forward(x, true, &sufm_rng);
    Tensor probs(logits.shape);
    for (std::size_t i = 0; i < logits.size(); ++i)
      probs.v[i] = 1.0 / (1.0 + std::exp(-logits.v[i]));

    const LossValue loss = combined_loss(probs, y);
    if (!std::isfinite(loss.total))
      throw DivergenceError("train_agm: non-finite loss", step);

    Tensor grad = combined_loss_grad(probs, y);
    for (std::size_t i = 0; i < grad.size(); ++i)
      grad.v[i] *= probs.v[i] * (1.0 - probs.v[i]);

    model.zero_grad();
    model.backward(grad);
    adam.step(params);

    result.log.push_back({step, loss.total, batch_dice(probs, y, cfg.threshold)});
  }

  result.checkpoint = agm_to_checkpoint(model, total_steps, opts.seed);
  return result;
}

Checkpoint agm_to_checkpoint(AgmModel& model, long iteration,
                             std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.config_json = agm_config_to_json(model.config(), model.sufm_config());
  ckpt.iteration = iteration;
  ckpt.rng_seed = seed;
  ckpt.capture(model.params());
  return ckpt;
}

AgmModel agm_from_checkpoint(const Checkpoint& ckpt) {
  AgmConfig cfg;
  sufm::SufmConfig sufm_cfg;
  agm_config_from_json(ckpt.config_json, cfg, sufm_cfg);
  AgmModel model(cfg, sufm_cfg, 0);
  ckpt.restore(model.params());
  return model;
}

Mask predict_mask(const Image& image, AgmModel& model, double threshold) {
  const AgmConfig& cfg = model.config();
  const Image prepped = preprocess(image, cfg.input_h, cfg.input_w, true);
  const Tensor logits = model.forward(image_to_tensor(prepped), false, nullptr);
  Mask mask(cfg.input_h, cfg.input_w);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits.v[i]));
    mask.v[i] = p > threshold ? 1 : 0;
  }
  return mask;
}

Mask predict_mask_native(const Image& image, AgmModel& model, double threshold) {
  return resize_nearest(predict_mask(image, model, threshold), image.h, image.w);
}

void write_train_log_csv(const std::vector<TrainLogRow>& log,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training log: " + path);
  out << "iteration,loss,dice\n";
  for (const TrainLogRow& row : log)
    out << row.iteration << "," << row.loss << "," << row.dice << "\n";
}

}  // namespace fasam
