#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fasam/agm.hpp"
#include "fasam/config.hpp"
#include "fasam/data.hpp"
#include "fasam/prompt.hpp"
#include "fasam/segmenter.hpp"

namespace fasam {

struct PromptRecord {
  std::string image_id;
  BoundingBoxPrompt box;  // native image coordinates
  bool fallback = false;  // full-image box substituted for an empty prediction
  std::optional<double> quality;
};

struct PromptTable {
  std::vector<PromptRecord> records;

  long fallback_count() const;
  const PromptRecord* find(const std::string& image_id) const;
  /// Comma-separated table; the quality column appears only when every
  /// record carries one. A leading comment line reports fallback usage.
  void save(const std::string& path) const;
  static PromptTable load(const std::string& path);
};

enum class PromptMode { kAgm, kGroundTruth };

struct PromptOptions {
  PromptMode mode = PromptMode::kAgm;
  double jitter_scale = 1.0;
  double jitter_shift_frac = 0.0;
  std::uint64_t jitter_seed = 0;
};

/// Boxes for the given samples: AGM predictions post-processed to the
/// largest component (full-image fallback when empty), or tight GT boxes;
/// optional jitter degrades the result. Quality is filled from GT masks.
PromptTable make_prompts(const Dataset& dataset,
                         const std::vector<std::size_t>& indices,
                         AgmModel* agm, const PipelineConfig& cfg,
                         const PromptOptions& opts);

struct DomainMetrics {
  std::string domain;
  std::string role;
  int n_images = 0;
  double preliminary_dice = 0.0;  // AGM mask vs GT
  double final_dice = 0.0;        // segmenter mask vs GT
  double prompt_quality = 0.0;
  long fallbacks = 0;
};

struct EvalReport {
  std::vector<DomainMetrics> rows;
  double avg_all_final = 0.0;
  double avg_target_final = 0.0;
  double source_test_final = 0.0;

  void save_csv(const std::string& path) const;
};

// ------------------------------------------------------------ subcommands

/// Writes the synthetic multi-domain dataset and its manifest under
/// cfg.data.root; byte-identical on rerun with the same config.
void cmd_synth_data(const PipelineConfig& cfg);

struct TrainAgmOutput {
  std::string checkpoint_path;
  std::string log_path;
  double source_test_dice = 0.0;  // preliminary-mask dice on the held-out split
};
TrainAgmOutput cmd_train_agm(const PipelineConfig& cfg, bool sufm_on,
                             const std::string& out_dir);

/// Prompt table for every sample of the requested domains ("all" = every
/// domain). Quality is included since ground-truth masks are loaded.
std::string cmd_gen_prompts(const PipelineConfig& cfg,
                            const std::string& agm_checkpoint,
                            const std::string& domain_filter,
                            const PromptOptions& opts,
                            const std::string& out_dir);

struct FinetuneOutput {
  std::string checkpoint_path;
  std::string log_path;
};
/// Stage-2 fine-tuning on the source train split; boxes come from the
/// prompt table (or tight GT boxes when cfg.prompts.use_gt_boxes).
FinetuneOutput cmd_finetune(const PipelineConfig& cfg,
                            const std::string& prompts_csv, bool ipef_on,
                            const std::string& out_dir);

/// Evaluates source test split plus every target domain (all images).
EvalReport cmd_eval(const PipelineConfig& cfg, const std::string& agm_checkpoint,
                    const std::string& segmenter_checkpoint,
                    const PromptOptions& opts, const std::string& out_dir);

enum class AblationAxis { kModule, kPosition, kDistribution, kPromptJitter };
AblationAxis ablation_axis_from_string(const std::string& s);

/// Runs the configured grid with shared seeds and writes one table per axis.
std::string cmd_ablate(const PipelineConfig& cfg, AblationAxis axis,
                       const std::vector<std::uint64_t>& seeds,
                       const std::string& out_dir);

/// synth-data -> train-agm -> gen-prompts -> finetune -> eval; returns the
/// metrics CSV path. One seed fully determines every artifact.
std::string run_full_pipeline(const PipelineConfig& cfg,
                              const std::string& out_dir);

// ------------------------------------------------------------- utilities

/// Source split of the dataset per the manifest parameters.
Split source_split(const Dataset& dataset, const DatasetManifest& manifest);

double mean_of(const std::vector<double>& xs);

}  // namespace fasam
