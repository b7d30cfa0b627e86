#include "fasam/segmenter.hpp"

#include <algorithm>
#include <cmath>

#include "fasam/config.hpp"
#include "fasam/error.hpp"
#include "fasam/image.hpp"
#include "fasam/losses.hpp"

namespace fasam {

void MultiScaleEmbeddings::validate() const {
  if (coarse.rank() != 4 || mid.rank() != 4 || fine.rank() != 4)
    throw InvalidInputError("embeddings must be (B,C,H,W)");
  if (!(coarse.dim(1) > mid.dim(1) && mid.dim(1) > fine.dim(1)))
    throw InvalidInputError("tap channel widths must strictly decrease");
  if (mid.dim(2) != 2 * coarse.dim(2) || fine.dim(2) != 4 * coarse.dim(2))
    throw InvalidInputError("tap spatial sizes must double per stage");
}

void IpefConfig::validate(const std::vector<int>& tap_channels) const {
  if (fused_channels.size() != 3)
    throw ConfigError("ipef: fused_channels must have three entries");
  if (tap_channels.size() != 3)
    throw ConfigError("segmenter: tap_channels must have three entries");
  for (int c : fused_channels)
    if (c < 1) throw ConfigError("ipef: fused channels must be >= 1");
  if (enabled) {
    for (int c : fused_channels)
      if (se_reduction < 1 || c % se_reduction != 0)
        throw ConfigError("ipef: se_reduction must divide every fused width");
  }
}

void SegmenterConfig::validate() const {
  if (input_size < 16 || input_size % 16 != 0)
    throw ConfigError("segmenter: input_size must be a multiple of 16");
  if (base_channels < 1) throw ConfigError("segmenter: base_channels must be >= 1");
  if (!(tap_channels.size() == 3 && tap_channels[0] > tap_channels[1] &&
        tap_channels[1] > tap_channels[2] && tap_channels[2] >= 1))
    throw ConfigError("segmenter: tap_channels must be three decreasing widths");
  if (prompt_dim < 2 || prompt_dim % 2 != 0)
    throw ConfigError("segmenter: prompt_dim must be even and >= 2");
  ipef.validate(tap_channels);
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw ConfigError("segmenter: threshold must be in [0,1]");
}

namespace {

Tensor stack_rows(const std::vector<const Tensor*>& rows) {
  const Tensor& first = *rows[0];
  Tensor out({static_cast<int>(rows.size()), first.dim(1), first.dim(2),
              first.dim(3)});
  const std::size_t stride = first.size();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i]->v.begin(), rows[i]->v.end(),
              out.v.begin() + static_cast<long>(i * stride));
  return out;
}

/// (B, D) prompt rows tiled to (B, D, h, w).
Tensor broadcast_rows(const Tensor& rows, int h, int w) {
  const int bsz = rows.dim(0), d = rows.dim(1);
  Tensor out({bsz, d, h, w});
  for (int b = 0; b < bsz; ++b)
    for (int c = 0; c < d; ++c) {
      double* dst = &out.at(b, c, 0, 0);
      const double val = rows.at(b, c);
      for (int i = 0; i < h * w; ++i) dst[i] = val;
    }
  return out;
}

}  // namespace

SegmenterModel::SegmenterModel(const SegmenterConfig& cfg,
                               std::uint64_t init_seed)
    : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.base_channels;
  const std::vector<int>& tap = cfg_.tap_channels;
  const std::vector<int>& f = cfg_.ipef.fused_channels;
  const bool skips = cfg_.ipef.enabled && cfg_.ipef.skip_connections;
  const bool se_identity = !cfg_.ipef.enabled;

  stem_ = nn::Conv2d("encoder.stem", 1, c, 3);
  stem_act_.resize(1);
  int prev = c;
  for (int i = 0; i < 4; ++i) {
    const int next = prev * 2;
    down_a_.emplace_back("encoder.d" + std::to_string(i) + "a", prev, next, 3, 2);
    down_b_.emplace_back("encoder.d" + std::to_string(i) + "b", next, next, 3);
    prev = next;
  }
  down_act_a_.resize(4);
  down_act_b_.resize(4);
  tap3_ = nn::Conv2d("encoder.tap_fine", 4 * c, tap[2], 1);
  tap2_ = nn::Conv2d("encoder.tap_mid", 8 * c, tap[1], 1);
  tap1_ = nn::Conv2d("encoder.tap_coarse", 16 * c, tap[0], 1);

  prompt_freq_ = Tensor({cfg_.prompt_dim / 2, 4});
  prompt_freq_grad_ = Tensor::zeros(prompt_freq_.shape);

  stage_in_ch_[0] = tap[0] + cfg_.prompt_dim;
  stage_in_ch_[1] = f[1] + (skips ? tap[1] : 0) + cfg_.prompt_dim;
  stage_in_ch_[2] = f[2] + (skips ? tap[2] : 0) + cfg_.prompt_dim;
  for (int i = 0; i < 3; ++i)
    stage_[i] = nn::SEResBlock("ipef.stage" + std::to_string(i), stage_in_ch_[i],
                               f[static_cast<std::size_t>(i)],
                               cfg_.ipef.se_reduction, se_identity);
  up_conv_[0] = nn::Conv2d("ipef.up0", f[0], f[1], 3);
  up_conv_[1] = nn::Conv2d("ipef.up1", f[1], f[2], 3);
  up_transposed_[0] = nn::ConvTranspose2d("ipef.up0t", f[0], f[1]);
  up_transposed_[1] = nn::ConvTranspose2d("ipef.up1t", f[1], f[2]);

  build_decoder(cfg_.input_size);

  RngStream rng(init_seed);
  stem_.init(rng);
  for (auto& l : down_a_) l.init(rng);
  for (auto& l : down_b_) l.init(rng);
  tap1_.init(rng);
  tap2_.init(rng);
  tap3_.init(rng);
  // Spread-out fixed frequencies for the positional corner encoding.
  for (double& x : prompt_freq_.v) x = rng.normal() * 3.0;
  for (auto& s : stage_) s.init(rng);
  for (auto& l : up_conv_) l.init(rng);
  for (auto& l : up_transposed_) l.init(rng);
  dec_pre_.init(rng);
  for (auto& l : dec_convs_) l.init(rng);
  dec_head_.init(rng);
}

void SegmenterModel::build_decoder(int target) {
  const int start = 4 * cfg_.coarse_size();
  int size = start;
  int stages = 0;
  while (size < target) {
    size *= 2;
    ++stages;
  }
  if (size != target)
    throw ConfigError("segmenter: input_size must be coarse*4*2^k");
  const int f2 = cfg_.ipef.fused_channels[2];
  dec_pre_ = nn::Conv2d("decoder.pre", f2, 16, 3);
  int prev = 16;
  for (int i = 0; i < stages; ++i) {
    const int next = std::max(8, prev / 2);
    dec_ups_.emplace_back();
    dec_convs_.emplace_back("decoder.up" + std::to_string(i), prev, next, 3);
    prev = next;
  }
  dec_acts_.resize(static_cast<std::size_t>(stages));
  dec_head_ = nn::Conv2d("decoder.head", prev, 1, 1);
  dec_stages_built_ = stages;
}

MultiScaleEmbeddings SegmenterModel::encode_image(const Tensor& image) {
  if (image.rank() != 4 || image.dim(1) != 1 ||
      image.dim(2) != cfg_.input_size || image.dim(3) != cfg_.input_size)
    throw InvalidInputError("encode_image: expected (B,1," +
                            std::to_string(cfg_.input_size) + "," +
                            std::to_string(cfg_.input_size) + "), got " +
                            image.shape_str());
  Tensor t = stem_act_[0].forward(stem_.forward(image));
  Tensor at4, at8;
  for (int i = 0; i < 4; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    t = down_act_a_[iu].forward(down_a_[iu].forward(t));
    t = down_act_b_[iu].forward(down_b_[iu].forward(t));
    if (i == 1) at4 = t;
    if (i == 2) at8 = t;
  }
  MultiScaleEmbeddings out;
  out.fine = tap3_.forward(at4);
  out.mid = tap2_.forward(at8);
  out.coarse = tap1_.forward(t);
  out.validate();
  return out;
}

Tensor SegmenterModel::encode_prompt(const BoundingBoxPrompt& box, int img_h,
                                     int img_w) const {
  if (box.row_min < 0 || box.col_min < 0 || box.row_max >= img_h ||
      box.col_max >= img_w || box.row_min > box.row_max ||
      box.col_min > box.col_max)
    throw InvalidInputError("encode_prompt: box out of bounds");
  const double hn = std::max(1, img_h - 1);
  const double wn = std::max(1, img_w - 1);
  const double x[4] = {box.row_min / hn, box.col_min / wn, box.row_max / hn,
                       box.col_max / wn};
  const int half = cfg_.prompt_dim / 2;
  Tensor emb({cfg_.prompt_dim});
  for (int i = 0; i < half; ++i) {
    double z = 0.0;
    for (int j = 0; j < 4; ++j) z += prompt_freq_.at(i, j) * x[j];
    emb.at(i) = std::sin(2.0 * M_PI * z);
    emb.at(half + i) = std::cos(2.0 * M_PI * z);
  }
  return emb;
}

Tensor SegmenterModel::no_localization_embedding() const {
  BoundingBoxPrompt full{0, 0, cfg_.input_size - 1, cfg_.input_size - 1};
  return encode_prompt(full, cfg_.input_size, cfg_.input_size);
}

Tensor SegmenterModel::up_forward(int i, const Tensor& x) {
  if (cfg_.ipef.upsample_mode == UpsampleMode::kTransposed)
    return up_act_[i].forward(up_transposed_[i].forward(x));
  return up_act_[i].forward(up_conv_[i].forward(up_bilinear_[i].forward(x)));
}

Tensor SegmenterModel::up_backward(int i, const Tensor& g) {
  if (cfg_.ipef.upsample_mode == UpsampleMode::kTransposed)
    return up_transposed_[i].backward(up_act_[i].backward(g));
  return up_bilinear_[i].backward(up_conv_[i].backward(up_act_[i].backward(g)));
}

Tensor SegmenterModel::ipef_fuse(const MultiScaleEmbeddings& embeds,
                                 const Tensor& prompts) {
  embeds.validate();
  if (prompts.rank() != 2 || prompts.dim(1) != cfg_.prompt_dim ||
      prompts.dim(0) != embeds.coarse.dim(0))
    throw InvalidInputError("ipef_fuse: prompts must be (B,prompt_dim)");
  if (embeds.coarse.dim(1) != cfg_.tap_channels[0] ||
      embeds.mid.dim(1) != cfg_.tap_channels[1] ||
      embeds.fine.dim(1) != cfg_.tap_channels[2])
    throw ConfigError("ipef_fuse: tap widths do not match the configuration");
  const bool skips = cfg_.ipef.enabled && cfg_.ipef.skip_connections;
  batch_ = embeds.coarse.dim(0);
  const int s = embeds.coarse.dim(2);

  Tensor x = nn::concat_channels(embeds.coarse, broadcast_rows(prompts, s, s));
  x = stage_[0].forward(x);
  x = up_forward(0, x);

  skip_ch_[1] = 0;
  if (skips) {
    x = nn::concat_channels(x, embeds.mid);
    skip_ch_[1] = embeds.mid.dim(1);
  }
  x = nn::concat_channels(x, broadcast_rows(prompts, 2 * s, 2 * s));
  x = stage_[1].forward(x);
  x = up_forward(1, x);

  skip_ch_[2] = 0;
  if (skips) {
    x = nn::concat_channels(x, embeds.fine);
    skip_ch_[2] = embeds.fine.dim(1);
  }
  x = nn::concat_channels(x, broadcast_rows(prompts, 4 * s, 4 * s));
  return stage_[2].forward(x);
}

Tensor SegmenterModel::decode_mask(const Tensor& fused, int target) {
  if (target != cfg_.input_size)
    throw InvalidInputError("decode_mask: decoder is built for target " +
                            std::to_string(cfg_.input_size));
  if (fused.dim(1) != cfg_.ipef.fused_channels[2])
    throw InvalidInputError("decode_mask: fused channel mismatch");
  Tensor t = dec_pre_act_.forward(dec_pre_.forward(fused));
  for (int i = 0; i < dec_stages_built_; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    t = dec_ups_[iu].forward(t);
    t = dec_acts_[iu].forward(dec_convs_[iu].forward(t));
  }
  return dec_head_.forward(t);
}

Tensor SegmenterModel::forward(const Tensor& image, const Tensor& prompts) {
  return decode_mask(ipef_fuse(encode_image(image), prompts), cfg_.input_size);
}

void SegmenterModel::backward(const Tensor& grad_logits) {
  Tensor g = dec_head_.backward(grad_logits);
  for (int i = dec_stages_built_ - 1; i >= 0; --i) {
    const auto iu = static_cast<std::size_t>(i);
    g = dec_convs_[iu].backward(dec_acts_[iu].backward(g));
    g = dec_ups_[iu].backward(g);
  }
  g = dec_pre_.backward(dec_pre_act_.backward(g));

  // Trunk stages in reverse; tap and prompt gradients stop here because the
  // encoders are frozen.
  g = stage_[2].backward(g);
  Tensor g_left, g_discard;
  nn::split_channels(g, g.dim(1) - cfg_.prompt_dim, g_left, g_discard);
  if (skip_ch_[2] > 0) {
    Tensor g_up;
    nn::split_channels(g_left, g_left.dim(1) - skip_ch_[2], g_up, g_discard);
    g_left = std::move(g_up);
  }
  g = up_backward(1, g_left);

  g = stage_[1].backward(g);
  nn::split_channels(g, g.dim(1) - cfg_.prompt_dim, g_left, g_discard);
  if (skip_ch_[1] > 0) {
    Tensor g_up;
    nn::split_channels(g_left, g_left.dim(1) - skip_ch_[1], g_up, g_discard);
    g_left = std::move(g_up);
  }
  g = up_backward(0, g_left);

  g = stage_[0].backward(g);
}

nn::ParamList SegmenterModel::decoder_params() {
  nn::ParamList out;
  for (auto& s : stage_) s.collect(out);
  if (cfg_.ipef.upsample_mode == UpsampleMode::kTransposed) {
    for (auto& l : up_transposed_) l.collect(out);
  } else {
    for (auto& l : up_conv_) l.collect(out);
  }
  dec_pre_.collect(out);
  for (auto& l : dec_convs_) l.collect(out);
  dec_head_.collect(out);
  return out;
}

nn::ParamList SegmenterModel::encoder_params() {
  nn::ParamList out;
  stem_.collect(out);
  for (auto& l : down_a_) l.collect(out);
  for (auto& l : down_b_) l.collect(out);
  tap1_.collect(out);
  tap2_.collect(out);
  tap3_.collect(out);
  out.push_back({"prompt_encoder.freq", &prompt_freq_, &prompt_freq_grad_});
  return out;
}

nn::ParamList SegmenterModel::all_params() {
  nn::ParamList out = encoder_params();
  nn::ParamList dec = decoder_params();
  out.insert(out.end(), dec.begin(), dec.end());
  // Both upsampling variants live in the checkpoint so the file is
  // self-contained regardless of the configured mode.
  if (cfg_.ipef.upsample_mode == UpsampleMode::kTransposed) {
    for (auto& l : up_conv_) l.collect(out);
  } else {
    for (auto& l : up_transposed_) l.collect(out);
  }
  return out;
}

void SegmenterModel::zero_grad() {
  for (auto& s : stage_) s.zero_grad();
  for (auto& l : up_conv_) l.zero_grad();
  for (auto& l : up_transposed_) l.zero_grad();
  dec_pre_.zero_grad();
  for (auto& l : dec_convs_) l.zero_grad();
  dec_head_.zero_grad();
}

// --------------------------------------------------------------- inference

BoundingBoxPrompt rescale_box(const BoundingBoxPrompt& box, int from_h,
                              int from_w, int to_h, int to_w) {
  const double sy = static_cast<double>(to_h) / from_h;
  const double sx = static_cast<double>(to_w) / from_w;
  BoundingBoxPrompt out;
  out.row_min = std::clamp(static_cast<int>(std::floor(box.row_min * sy)), 0, to_h - 1);
  out.col_min = std::clamp(static_cast<int>(std::floor(box.col_min * sx)), 0, to_w - 1);
  out.row_max = std::clamp(static_cast<int>(std::ceil((box.row_max + 1) * sy)) - 1,
                           out.row_min, to_h - 1);
  out.col_max = std::clamp(static_cast<int>(std::ceil((box.col_max + 1) * sx)) - 1,
                           out.col_min, to_w - 1);
  return out;
}

Mask segment(const Image& image, const BoundingBoxPrompt& box,
             SegmenterModel& model, double threshold) {
  const SegmenterConfig& cfg = model.config();
  const Image prepped = preprocess(image, cfg.input_size, cfg.input_size, true);
  Tensor x({1, 1, cfg.input_size, cfg.input_size});
  std::copy(prepped.v.begin(), prepped.v.end(), x.v.begin());

  const BoundingBoxPrompt scaled =
      rescale_box(box, image.h, image.w, cfg.input_size, cfg.input_size);
  const Tensor emb = model.encode_prompt(scaled, cfg.input_size, cfg.input_size);
  Tensor prompts({1, cfg.prompt_dim});
  std::copy(emb.v.begin(), emb.v.end(), prompts.v.begin());

  const Tensor logits = model.forward(x, prompts);
  Mask mask(cfg.input_size, cfg.input_size);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits.v[i]));
    mask.v[i] = p > threshold ? 1 : 0;
  }
  return resize_nearest(mask, image.h, image.w);
}

// ---------------------------------------------------------------- training

FinetuneResult finetune_decoder(const Dataset& dataset,
                                const std::vector<FinetuneSample>& samples,
                                SegmenterModel& model,
                                const FinetuneOptions& opts) {
  if (samples.empty()) throw ConfigError("finetune_decoder: no samples");
  const SegmenterConfig& cfg = model.config();
  const int sz = cfg.input_size;

  // The encoder is frozen, so embeddings and prompts are constants of the
  // whole run; compute them once.
  std::vector<MultiScaleEmbeddings> embeds;
  std::vector<Tensor> prompt_rows, gt;
  embeds.reserve(samples.size());
  for (const FinetuneSample& fs : samples) {
    const DomainSample& s = dataset.samples[fs.dataset_index];
    const Image prepped = preprocess(s.image, sz, sz, true);
    Tensor x({1, 1, sz, sz});
    std::copy(prepped.v.begin(), prepped.v.end(), x.v.begin());
    embeds.push_back(model.encode_image(x));

    const BoundingBoxPrompt scaled = rescale_box(fs.box, s.image.h, s.image.w, sz, sz);
    prompt_rows.push_back(model.encode_prompt(scaled, sz, sz));

    const Mask m = resize_nearest(s.mask, sz, sz);
    Tensor y({1, 1, sz, sz});
    for (std::size_t i = 0; i < m.v.size(); ++i) y.v[i] = m.v[i] ? 1.0 : 0.0;
    gt.push_back(std::move(y));
  }

  RngStream shuffle_rng(mix_seed(opts.seed, 0x44));
  nn::Adam adam(opts.optim);
  nn::ParamList trainable = model.decoder_params();

  const std::size_t n = samples.size();
  const long batches_per_epoch = static_cast<long>(
      (n + static_cast<std::size_t>(opts.batch_size) - 1) /
      static_cast<std::size_t>(opts.batch_size));
  const long total_steps = opts.unit == IterationUnit::kStep
                               ? opts.iterations
                               : opts.iterations * batches_per_epoch;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::size_t cursor = n;

  FinetuneResult result;
  for (long step = 0; step < total_steps; ++step) {
    std::vector<std::size_t> pick;
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

    MultiScaleEmbeddings batch;
    {
      std::vector<const Tensor*> c, m, f;
      for (std::size_t i : pick) {
        c.push_back(&embeds[i].coarse);
        m.push_back(&embeds[i].mid);
        f.push_back(&embeds[i].fine);
      }
      batch.coarse = stack_rows(c);
      batch.mid = stack_rows(m);
      batch.fine = stack_rows(f);
    }
    Tensor prompts({static_cast<int>(pick.size()), cfg.prompt_dim});
    Tensor y({static_cast<int>(pick.size()), 1, sz, sz});
    for (std::size_t i = 0; i < pick.size(); ++i) {
      std::copy(prompt_rows[pick[i]].v.begin(), prompt_rows[pick[i]].v.end(),
                prompts.v.begin() + static_cast<long>(i) * cfg.prompt_dim);
      std::copy(gt[pick[i]].v.begin(), gt[pick[i]].v.end(),
                y.v.begin() + static_cast<long>(i * gt[pick[i]].size()));
    }

    const Tensor logits = model.decode_mask(model.ipef_fuse(batch, prompts), sz);
    Tensor probs(logits.shape);
    for (std::size_t i = 0; i < logits.size(); ++i)
      probs.v[i] = 1.0 / (1.0 + std::exp(-logits.v[i]));

    const LossValue loss = combined_loss(probs, y);
    if (!std::isfinite(loss.total))
      throw DivergenceError("finetune_decoder: non-finite loss", step);

    Tensor grad = combined_loss_grad(probs, y);
    for (std::size_t i = 0; i < grad.size(); ++i)
      grad.v[i] *= probs.v[i] * (1.0 - probs.v[i]);

    model.zero_grad();
    model.backward(grad);
    adam.step(trainable);

    double dice = 0.0;
    {
      long p = 0, gq = 0, inter = 0;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        const bool pi = probs.v[i] > cfg.threshold;
        const bool gi = y.v[i] > 0.5;
        p += pi;
        gq += gi;
        inter += pi && gi;
      }
      dice = (p + gq) == 0 ? 1.0 : 2.0 * inter / static_cast<double>(p + gq);
    }
    result.log.push_back({step, loss.total, dice});
  }

  result.checkpoint = segmenter_to_checkpoint(model, total_steps, opts.seed);
  return result;
}

Checkpoint segmenter_to_checkpoint(SegmenterModel& model, long iteration,
                                   std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.config_json = segmenter_config_to_json(model.config());
  ckpt.iteration = iteration;
  ckpt.rng_seed = seed;
  ckpt.capture(model.all_params());
  return ckpt;
}

SegmenterModel segmenter_from_checkpoint(const Checkpoint& ckpt) {
  SegmenterConfig cfg = segmenter_config_from_json(ckpt.config_json);
  SegmenterModel model(cfg, 0);
  ckpt.restore(model.all_params());
  return model;
}

}  // namespace fasam
