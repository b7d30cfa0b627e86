#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "fasam/checkpoint.hpp"
#include "fasam/data.hpp"
#include "fasam/nn/adam.hpp"
#include "fasam/nn/layers.hpp"
#include "fasam/sufm.hpp"

namespace fasam {

/// Encoder-decoder segmentation backbone with statistics-perturbation slots.
/// Slot 0 sits after the first encoder block, slot 1 after the first
/// pooling, slot k >= 2 after encoder block k-1.
struct AgmConfig {
  std::vector<int> encoder_channels = {16, 32, 64, 128};
  std::set<int> sufm_positions = {0, 1};
  int input_h = 64;
  int input_w = 64;
  double threshold = 0.5;

  int slot_count() const { return static_cast<int>(encoder_channels.size()) + 1; }
  int downsample_factor() const {
    return 1 << (static_cast<int>(encoder_channels.size()) - 1);
  }
  void validate() const;
};

class AgmModel {
public:
  AgmModel(const AgmConfig& cfg, const sufm::SufmConfig& sufm_cfg,
           std::uint64_t init_seed);

  /// `rng` is only consumed in training mode, one gate draw (plus noise
  /// draws when the gate fires) per active slot in slot order.
  Tensor forward(const Tensor& image, bool training, RngStream* rng);
  Tensor backward(const Tensor& grad_logits);

  nn::ParamList params();
  void zero_grad();

  const AgmConfig& config() const { return cfg_; }
  const sufm::SufmConfig& sufm_config() const { return sufm_cfg_; }

private:
  AgmConfig cfg_;
  sufm::SufmConfig sufm_cfg_;
  int levels_ = 0;

  std::vector<nn::Conv2d> enc_a_, enc_b_;
  std::vector<nn::LeakyReLU> enc_act_a_, enc_act_b_;
  std::vector<nn::MaxPool2d> pools_;
  std::vector<nn::BilinearUp2> ups_;
  std::vector<nn::Conv2d> up_conv_, dec_a_, dec_b_;
  std::vector<nn::LeakyReLU> up_act_, dec_act_a_, dec_act_b_;
  nn::Conv2d head_;
  std::vector<sufm::SufmOp> sufm_ops_;  // one per slot
  std::vector<Tensor> skip_cache_;      // encoder taps for the decoder concat
};

struct TrainLogRow {
  long iteration = 0;
  double loss = 0.0;
  double dice = 0.0;
};

enum class IterationUnit { kStep, kEpoch };

struct AgmTrainOptions {
  nn::OptimConfig optim;
  int batch_size = 8;
  long iterations = 200;
  IterationUnit unit = IterationUnit::kStep;
  std::uint64_t seed = 0;
};

struct AgmTrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRow> log;
};

/// Supervised source-domain training with the combined cross-entropy and
/// dice objective. Samples are preprocessed to the configured input size.
AgmTrainResult train_agm(const Dataset& dataset,
                         const std::vector<std::size_t>& train_indices,
                         const AgmConfig& cfg, const sufm::SufmConfig& sufm_cfg,
                         const AgmTrainOptions& opts);

/// Rebuilds a model from a checkpoint produced by train_agm.
AgmModel agm_from_checkpoint(const Checkpoint& ckpt);
Checkpoint agm_to_checkpoint(AgmModel& model, long iteration,
                             std::uint64_t seed);

/// Thresholded sigmoid response at the model's input resolution;
/// probability strictly greater than `threshold` becomes foreground.
Mask predict_mask(const Image& image, AgmModel& model, double threshold = 0.5);

/// predict_mask resized back to the sample's native resolution.
Mask predict_mask_native(const Image& image, AgmModel& model,
                         double threshold = 0.5);

void write_train_log_csv(const std::vector<TrainLogRow>& log,
                         const std::string& path);

}  // namespace fasam
