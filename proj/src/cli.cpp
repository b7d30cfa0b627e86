#include "fasam/cli.hpp"

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fasam/error.hpp"
#include "fasam/pipeline.hpp"

namespace fasam {

namespace {

PipelineConfig load_config_or_default(const std::string& path,
                                      std::uint64_t* seed_override) {
  PipelineConfig cfg =
      path.empty() ? default_pipeline_config() : load_pipeline_config(path);
  if (seed_override) cfg.seed = *seed_override;
  cfg.sufm.rng_seed = cfg.seed;
  return cfg;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"fasam: auto-prompted domain-generalized segmentation pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "runs/out";
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "pipeline config JSON")
      ->configurable(false);
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "output directory");

  auto* synth = app.add_subcommand("synth-data", "write the synthetic dataset");

  auto* train = app.add_subcommand("train-agm", "stage 1: train the prompt generator");
  std::string sufm_flag = "on";
  train->add_option("--sufm", sufm_flag, "on|off")->check(CLI::IsMember({"on", "off"}));

  auto* gen = app.add_subcommand("gen-prompts", "emit a bounding-box prompt table");
  std::string agm_ckpt, domain = "all";
  bool use_gt_boxes = false;
  std::vector<double> jitter;
  gen->add_option("--checkpoint", agm_ckpt, "AGM checkpoint");
  gen->add_option("--domain", domain, "domain name or 'all'");
  gen->add_flag("--use-gt-boxes", use_gt_boxes, "tight ground-truth boxes");
  gen->add_option("--jitter", jitter, "scale shift_frac")->expected(2);

  auto* ft = app.add_subcommand("finetune", "stage 2: fine-tune the segmenter decoder");
  std::string prompts_csv;
  std::string ipef_flag = "on";
  ft->add_option("--prompts", prompts_csv, "prompt table CSV");
  ft->add_option("--ipef", ipef_flag, "on|off")->check(CLI::IsMember({"on", "off"}));
  ft->add_flag("--use-gt-boxes", use_gt_boxes, "tight ground-truth boxes");

  auto* ev = app.add_subcommand("eval", "per-domain dice metrics");
  std::string seg_ckpt;
  ev->add_option("--agm", agm_ckpt, "AGM checkpoint");
  ev->add_option("--segmenter", seg_ckpt, "segmenter checkpoint")->required();
  ev->add_flag("--use-gt-boxes", use_gt_boxes, "tight ground-truth boxes");
  ev->add_option("--jitter", jitter, "scale shift_frac")->expected(2);

  auto* ab = app.add_subcommand("ablate", "run one ablation axis");
  std::string axis = "module";
  std::string seeds_csv;
  ab->add_option("--axis", axis, "module|position|distribution|prompt_jitter")
      ->check(CLI::IsMember({"module", "position", "distribution", "prompt_jitter"}));
  ab->add_option("--seeds", seeds_csv, "comma-separated seed list");

  auto* full = app.add_subcommand("run", "full pipeline: synth-data through eval");
  (void)synth;
  (void)full;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    std::uint64_t seed_val = 0;
    std::uint64_t* seed_ptr = nullptr;
    if (seed) {
      seed_val = *seed;
      seed_ptr = &seed_val;
    }
    PipelineConfig cfg = load_config_or_default(config_path, seed_ptr);

    if (app.got_subcommand("synth-data")) {
      cmd_synth_data(cfg);
      std::cout << "synth-data: wrote dataset under " << cfg.data.root << "\n";
    } else if (app.got_subcommand("train-agm")) {
      cmd_train_agm(cfg, sufm_flag == "on", out_dir);
    } else if (app.got_subcommand("gen-prompts")) {
      PromptOptions opts;
      opts.mode = use_gt_boxes ? PromptMode::kGroundTruth : PromptMode::kAgm;
      if (!use_gt_boxes && agm_ckpt.empty())
        throw ConfigError("gen-prompts: --checkpoint required unless --use-gt-boxes");
      if (jitter.size() == 2) {
        opts.jitter_scale = jitter[0];
        opts.jitter_shift_frac = jitter[1];
        opts.jitter_seed = mix_seed(cfg.seed, 0xD4);
      }
      cmd_gen_prompts(cfg, agm_ckpt, domain, opts, out_dir);
    } else if (app.got_subcommand("finetune")) {
      if (use_gt_boxes) cfg.prompts.use_gt_boxes = true;
      cmd_finetune(cfg, prompts_csv, ipef_flag == "on", out_dir);
      std::cout << "finetune: wrote checkpoint under " << out_dir << "\n";
    } else if (app.got_subcommand("eval")) {
      PromptOptions opts;
      opts.mode = use_gt_boxes ? PromptMode::kGroundTruth : PromptMode::kAgm;
      if (!use_gt_boxes && agm_ckpt.empty())
        throw ConfigError("eval: --agm required unless --use-gt-boxes");
      if (jitter.size() == 2) {
        opts.jitter_scale = jitter[0];
        opts.jitter_shift_frac = jitter[1];
        opts.jitter_seed = mix_seed(cfg.seed, 0xE5);
      }
      const EvalReport report = cmd_eval(cfg, agm_ckpt, seg_ckpt, opts, out_dir);
      std::cout << "eval: avg target dice " << report.avg_target_final << "\n";
    } else if (app.got_subcommand("ablate")) {
      std::vector<std::uint64_t> seed_list;
      if (!seeds_csv.empty()) {
        std::size_t pos = 0;
        while (pos < seeds_csv.size()) {
          const std::size_t comma = seeds_csv.find(',', pos);
          const std::string tok =
              seeds_csv.substr(pos, comma == std::string::npos ? std::string::npos
                                                               : comma - pos);
          seed_list.push_back(std::stoull(tok));
          if (comma == std::string::npos) break;
          pos = comma + 1;
        }
      }
      const std::string path =
          cmd_ablate(cfg, ablation_axis_from_string(axis), seed_list, out_dir);
      std::cout << "ablate: wrote " << path << "\n";
    } else if (app.got_subcommand("run")) {
      const std::string metrics = run_full_pipeline(cfg, out_dir);
      std::cout << "run: wrote " << metrics << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IngestionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace fasam
