#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fasam/cli.hpp"
#include "fasam/config.hpp"
#include "fasam/error.hpp"
#include "fasam/pipeline.hpp"

using namespace fasam;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("fasam_pipe_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Small but trainable configuration for pipeline smoke tests.
PipelineConfig smoke_config(const fs::path& dir) {
  PipelineConfig cfg = default_pipeline_config();
  cfg.seed = 0;
  cfg.data.root = (dir / "data").string();
  SyntheticSpec synth;
  synth.image_size = 32;
  synth.train_per_domain = 10;
  synth.test_per_domain = 2;
  synth.shape_family = ShapeFamily::kDisk;
  synth.domains = {{"siteA", DomainRole::kSource, {0.0, 1.0, 0.02, 0.0, 0.05}},
                   {"siteB", DomainRole::kTarget, {0.0, 1.6, 0.05, 0.0, 0.12}}};
  cfg.data.synthetic = synth;

  cfg.agm.encoder_channels = {4, 8, 12};
  cfg.agm.sufm_positions = {0, 1};
  cfg.agm.input_h = cfg.agm.input_w = 32;
  cfg.agm_train.batch_size = 5;
  cfg.agm_train.iterations = 30;

  cfg.segmenter.input_size = 32;
  cfg.segmenter.base_channels = 2;
  cfg.segmenter.tap_channels = {16, 8, 4};
  cfg.segmenter.prompt_dim = 8;
  cfg.segmenter.ipef.se_reduction = 2;
  cfg.segmenter.ipef.fused_channels = {8, 8, 8};
  cfg.finetune.batch_size = 4;
  cfg.finetune.iterations = 30;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"fasam"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("synthetic dataset generation is idempotent on disk") {
  const fs::path dir = fresh_dir("synth");
  PipelineConfig cfg = smoke_config(dir);
  cmd_synth_data(cfg);
  const std::string img0 =
      (fs::path(cfg.data.root) / "siteA/images/siteA_0000.png").string();
  REQUIRE(fs::exists(img0));
  const std::string before = slurp(img0);
  cmd_synth_data(cfg);
  CHECK(slurp(img0) == before);

  const DatasetManifest m =
      DatasetManifest::load((fs::path(cfg.data.root) / "manifest.txt").string());
  CHECK(m.source_domain().name == "siteA");
  const Dataset ds = load_dataset(m);
  CHECK(ds.samples.size() == 24);  // 12 per domain
}

TEST_CASE("prompt tables carry the quality column only when present") {
  const fs::path dir = fresh_dir("ptable");
  PromptTable t;
  t.records.push_back({"img0", {1, 2, 3, 4}, false, 0.75});
  t.records.push_back({"img1", {0, 0, 9, 9}, true, 0.5});
  const std::string with_q = (dir / "q.csv").string();
  t.save(with_q);
  {
    const std::string text = slurp(with_q);
    CHECK(text.find("quality") != std::string::npos);
    CHECK(text.find("# fallback_full_image_boxes 1") != std::string::npos);
  }
  const PromptTable back = PromptTable::load(with_q);
  REQUIRE(back.records.size() == 2);
  CHECK(back.records[0].box == BoundingBoxPrompt{1, 2, 3, 4});
  CHECK(back.records[1].quality == doctest::Approx(0.5));
  CHECK(back.find("img1") != nullptr);
  CHECK(back.find("missing") == nullptr);

  PromptTable no_q = t;
  no_q.records[0].quality.reset();
  const std::string without_q = (dir / "nq.csv").string();
  no_q.save(without_q);
  CHECK(slurp(without_q).find("quality") == std::string::npos);
}

TEST_CASE("the full pipeline runs end to end and writes sane metrics") {
  const fs::path dir = fresh_dir("full");
  PipelineConfig cfg = smoke_config(dir);
  const std::string metrics = run_full_pipeline(cfg, (dir / "run").string());
  REQUIRE(fs::exists(metrics));
  const std::string text = slurp(metrics);
  CHECK(text.find("siteA,source_test") != std::string::npos);
  CHECK(text.find("siteB,target") != std::string::npos);
  CHECK(text.find("avg_target") != std::string::npos);
  REQUIRE(fs::exists(dir / "run/agm.ckpt"));
  REQUIRE(fs::exists(dir / "run/segmenter.ckpt"));
  REQUIRE(fs::exists(dir / "run/prompts.csv"));
  REQUIRE(fs::exists(dir / "run/agm_train_log.csv"));
  REQUIRE(fs::exists(dir / "run/finetune_log.csv"));

  // Training logs have the documented columns.
  const std::string log = slurp((dir / "run/agm_train_log.csv").string());
  CHECK(log.rfind("iteration,loss,dice", 0) == 0);
}

TEST_CASE("gt-box prompts and jittered prompts flow through gen-prompts") {
  const fs::path dir = fresh_dir("gt");
  PipelineConfig cfg = smoke_config(dir);
  cmd_synth_data(cfg);

  PromptOptions gt;
  gt.mode = PromptMode::kGroundTruth;
  const std::string path =
      cmd_gen_prompts(cfg, "", "siteB", gt, (dir / "p").string());
  const PromptTable table = PromptTable::load(path);
  REQUIRE(table.records.size() == 12);
  for (const PromptRecord& r : table.records) {
    REQUIRE(r.quality.has_value());
    CHECK(*r.quality == doctest::Approx(1.0));  // tight boxes score perfectly
  }

  PromptOptions jit = gt;
  jit.jitter_scale = 1.5;
  jit.jitter_shift_frac = 0.1;
  jit.jitter_seed = 9;
  const std::string jpath =
      cmd_gen_prompts(cfg, "", "siteB", jit, (dir / "pj").string());
  const PromptTable jtable = PromptTable::load(jpath);
  double mean_q = 0.0;
  for (const PromptRecord& r : jtable.records) mean_q += *r.quality;
  mean_q /= static_cast<double>(jtable.records.size());
  CHECK(mean_q < 0.95);  // degraded prompts score below tight ones
}

TEST_CASE("eval rejects empty domains instead of writing empty tables") {
  const fs::path dir = fresh_dir("empty");
  PipelineConfig cfg = smoke_config(dir);
  cmd_synth_data(cfg);
  fs::remove_all(fs::path(cfg.data.root) / "siteB/images");
  fs::create_directories(fs::path(cfg.data.root) / "siteB/images");
  CHECK_THROWS_AS(
      cmd_eval(cfg, "missing.ckpt", "missing.ckpt", PromptOptions{},
               (dir / "e").string()),
      Error);
}

TEST_CASE("cli maps config errors to exit code 2") {
  CHECK(run_cli({"train-agm", "--config", "/nonexistent/config.json"}) == 2);
  const fs::path dir = fresh_dir("cli");
  PipelineConfig cfg = smoke_config(dir);
  const std::string cfg_path = (dir / "cfg.json").string();
  save_pipeline_config(cfg, cfg_path);
  // Dataset has not been generated yet: a user error, not a crash.
  CHECK(run_cli({"train-agm", "--config", cfg_path,
                 "--out", (dir / "out").string()}) == 2);
  CHECK(run_cli({"gen-prompts", "--config", cfg_path}) == 2);
  CHECK(run_cli({"nonsense-subcommand"}) == 2);
}

TEST_CASE("cli synth-data then train-agm succeeds end to end") {
  const fs::path dir = fresh_dir("cli2");
  PipelineConfig cfg = smoke_config(dir);
  cfg.agm_train.iterations = 8;
  const std::string cfg_path = (dir / "cfg.json").string();
  save_pipeline_config(cfg, cfg_path);
  CHECK(run_cli({"synth-data", "--config", cfg_path}) == 0);
  CHECK(run_cli({"train-agm", "--config", cfg_path, "--out",
                 (dir / "out").string()}) == 0);
  CHECK(fs::exists(dir / "out/agm.ckpt"));
  CHECK(run_cli({"gen-prompts", "--config", cfg_path, "--checkpoint",
                 (dir / "out/agm.ckpt").string(), "--out",
                 (dir / "out").string()}) == 0);
  CHECK(fs::exists(dir / "out/prompts.csv"));
}

TEST_CASE("config files round-trip through json") {
  const fs::path dir = fresh_dir("cfg");
  PipelineConfig cfg = smoke_config(dir);
  cfg.sufm.noise_mode = sufm::NoiseMode::kPoisson;
  cfg.sufm.apply_probability = 0.75;
  cfg.prompts.connectivity = 8;
  cfg.segmenter.ipef.upsample_mode = UpsampleMode::kTransposed;
  const std::string path = (dir / "cfg.json").string();
  save_pipeline_config(cfg, path);
  const PipelineConfig back = load_pipeline_config(path);
  CHECK(back.sufm.noise_mode == sufm::NoiseMode::kPoisson);
  CHECK(back.sufm.apply_probability == doctest::Approx(0.75));
  CHECK(back.prompts.connectivity == 8);
  CHECK(back.segmenter.ipef.upsample_mode == UpsampleMode::kTransposed);
  CHECK(back.agm.encoder_channels == cfg.agm.encoder_channels);
  CHECK(back.data.synthetic.has_value());
  CHECK(back.data.synthetic->domains.size() == 2);
}

TEST_CASE("invalid configs are rejected with config errors") {
  const fs::path dir = fresh_dir("badcfg");
  PipelineConfig cfg = smoke_config(dir);
  cfg.prompts.connectivity = 5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(pipeline_config_from_json("{ not json"), ConfigError);

  PipelineConfig zero = smoke_config(dir);
  zero.data.synthetic->train_per_domain = 0;
  CHECK_THROWS_AS(zero.validate(), ConfigError);
}
