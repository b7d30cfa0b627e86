#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fasam/agm.hpp"
#include "fasam/checkpoint.hpp"
#include "fasam/data.hpp"
#include "fasam/nn/adam.hpp"
#include "fasam/nn/layers.hpp"
#include "fasam/prompt.hpp"

namespace fasam {

/// Image embeddings tapped at three encoder depths: channel widths strictly
/// decreasing, spatial sizes doubling from coarsest to finest.
struct MultiScaleEmbeddings {
  Tensor coarse;  // (B, c1, s, s)
  Tensor mid;     // (B, c2, 2s, 2s)
  Tensor fine;    // (B, c3, 4s, 4s)

  void validate() const;
};

enum class UpsampleMode { kBilinear, kTransposed };

struct IpefConfig {
  bool enabled = true;
  int se_reduction = 4;
  UpsampleMode upsample_mode = UpsampleMode::kBilinear;
  std::vector<int> fused_channels = {128, 64, 64};
  bool skip_connections = true;

  void validate(const std::vector<int>& tap_channels) const;
};

struct SegmenterConfig {
  int input_size = 128;                          // square, divisible by 16
  int base_channels = 16;                        // encoder trunk width
  std::vector<int> tap_channels = {256, 128, 64};
  int prompt_dim = 16;                           // even
  IpefConfig ipef;
  double threshold = 0.5;

  int coarse_size() const { return input_size / 16; }
  void validate() const;
};

/// Promptable segmenter: frozen convolutional image encoder with projection
/// taps, a frozen positional prompt encoder over normalized box corners, a
/// trainable fusion trunk, and a trainable decoder head. With ipef.enabled
/// the trunk fuses all three taps through squeeze-excitation residual
/// blocks with skip concatenations; without it the trunk sees only the
/// coarsest tap and the prompt through plain residual blocks.
class SegmenterModel {
public:
  SegmenterModel(const SegmenterConfig& cfg, std::uint64_t init_seed);

  /// Frozen, deterministic; input (B,1,input_size,input_size).
  MultiScaleEmbeddings encode_image(const Tensor& image);

  /// Frozen positional encoding of the normalized box corners, shape
  /// (prompt_dim). The full-image box yields the no-localization anchor.
  Tensor encode_prompt(const BoundingBoxPrompt& box, int img_h, int img_w) const;
  Tensor no_localization_embedding() const;

  /// Fusion trunk; prompts is (B, prompt_dim), one row per batch sample.
  /// Output is (B, fused_channels.back(), 4s, 4s).
  Tensor ipef_fuse(const MultiScaleEmbeddings& embeds, const Tensor& prompts);

  /// Decoder head to (B, 1, target, target) logits; target must be
  /// 4s * 2^k for integer k >= 0.
  Tensor decode_mask(const Tensor& fused, int target);

  Tensor forward(const Tensor& image, const Tensor& prompts);
  /// Backward through decoder and fusion trunk only; the encoders are
  /// frozen and receive no gradient.
  void backward(const Tensor& grad_logits);

  nn::ParamList decoder_params();  // fusion trunk + decoder head
  nn::ParamList encoder_params();  // image encoder taps + prompt encoder
  nn::ParamList all_params();
  void zero_grad();

  const SegmenterConfig& config() const { return cfg_; }

private:
  SegmenterConfig cfg_;
  int stage_in_ch_[3] = {0, 0, 0};

  // frozen image encoder
  nn::Conv2d stem_;
  std::vector<nn::Conv2d> down_a_, down_b_;  // four stride-2 stages
  std::vector<nn::LeakyReLU> stem_act_, down_act_a_, down_act_b_;
  nn::Conv2d tap1_, tap2_, tap3_;

  // frozen prompt encoder
  Tensor prompt_freq_;  // (prompt_dim/2, 4)

  // trainable fusion trunk
  nn::SEResBlock stage_[3];
  nn::BilinearUp2 up_bilinear_[2];
  nn::Conv2d up_conv_[2];
  nn::ConvTranspose2d up_transposed_[2];
  nn::LeakyReLU up_act_[2];

  // trainable decoder head
  nn::Conv2d dec_pre_;
  nn::LeakyReLU dec_pre_act_;
  std::vector<nn::BilinearUp2> dec_ups_;
  std::vector<nn::Conv2d> dec_convs_;
  std::vector<nn::LeakyReLU> dec_acts_;
  nn::Conv2d dec_head_;
  int dec_stages_built_ = 0;

  // forward caches
  int batch_ = 0;
  int skip_ch_[3] = {0, 0, 0};
  Tensor prompt_freq_grad_;  // zero sink; the prompt encoder is frozen

  Tensor up_forward(int i, const Tensor& x);
  Tensor up_backward(int i, const Tensor& g);
  void build_decoder(int target);
};

Mask segment(const Image& image, const BoundingBoxPrompt& box,
             SegmenterModel& model, double threshold = 0.5);

struct FinetuneSample {
  std::size_t dataset_index;
  BoundingBoxPrompt box;  // in native image coordinates
};

struct FinetuneOptions {
  nn::OptimConfig optim;
  int batch_size = 4;
  long iterations = 100;
  IterationUnit unit = IterationUnit::kStep;
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRow> log;
};

/// Stage-2 training: only the fusion trunk and decoder head receive
/// updates; encoder and prompt-encoder blobs stay bit-identical. Image
/// embeddings are precomputed once since the encoder is frozen.
FinetuneResult finetune_decoder(const Dataset& dataset,
                                const std::vector<FinetuneSample>& samples,
                                SegmenterModel& model,
                                const FinetuneOptions& opts);

Checkpoint segmenter_to_checkpoint(SegmenterModel& model, long iteration,
                                   std::uint64_t seed);
SegmenterModel segmenter_from_checkpoint(const Checkpoint& ckpt);

/// Scales a native-coordinate box onto the model's input grid.
BoundingBoxPrompt rescale_box(const BoundingBoxPrompt& box, int from_h,
                              int from_w, int to_h, int to_w);

}  // namespace fasam
