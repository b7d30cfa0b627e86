#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fasam/agm.hpp"
#include "fasam/data.hpp"
#include "fasam/segmenter.hpp"
#include "fasam/sufm.hpp"

namespace fasam {

struct SyntheticDomainSpec {
  std::string name;
  DomainRole role = DomainRole::kTarget;
  DomainStyle style;
};

struct SyntheticSpec {
  int image_size = 128;
  int train_per_domain = 64;
  int test_per_domain = 16;
  ShapeFamily shape_family = ShapeFamily::kBlob;
  std::vector<SyntheticDomainSpec> domains;
};

struct DataConfig {
  std::string root = "data/synth";
  std::optional<SyntheticSpec> synthetic;
  double train_fraction = 0.9;
};

struct StageConfig {
  nn::OptimConfig optim;       // learning_rate 0.001 default
  int batch_size = 8;
  long iterations = 200;
  IterationUnit unit = IterationUnit::kStep;
};

struct PromptsConfig {
  int connectivity = 4;
  int padding = 0;
  bool use_gt_boxes = false;
  double jitter_scale = 1.0;
  double jitter_shift_frac = 0.0;  // fraction of the image side
};

struct EvalConfig {
  double threshold = 0.5;
  std::string output_dir = "runs/out";
  bool write_overlays = false;
};

/// One file fully determines a run: data, both training stages, module
/// settings, and the master seed.
struct PipelineConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  AgmConfig agm;
  StageConfig agm_train;       // stage 1: batch 8, 200 iterations
  sufm::SufmConfig sufm;
  bool sufm_enabled = true;
  SegmenterConfig segmenter;
  StageConfig finetune;        // stage 2: batch 4, 100 iterations
  bool freeze_encoders = true;
  PromptsConfig prompts;
  EvalConfig eval;

  void validate() const;
};

PipelineConfig load_pipeline_config(const std::string& path);
void save_pipeline_config(const PipelineConfig& cfg, const std::string& path);
std::string pipeline_config_to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const std::string& json);

/// Built-in desk-scale default (used when no config file is given).
PipelineConfig default_pipeline_config();

// Checkpoint header snapshots.
std::string agm_config_to_json(const AgmConfig& cfg,
                               const sufm::SufmConfig& sufm_cfg);
void agm_config_from_json(const std::string& json, AgmConfig& cfg,
                          sufm::SufmConfig& sufm_cfg);
std::string segmenter_config_to_json(const SegmenterConfig& cfg);
SegmenterConfig segmenter_config_from_json(const std::string& json);

}  // namespace fasam
