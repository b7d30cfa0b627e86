#include "fasam/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "fasam/error.hpp"
#include "fasam/image.hpp"
#include "fasam/losses.hpp"

namespace fs = std::filesystem;

namespace fasam {

namespace {

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::ostream& csv_number(std::ostream& os, double x) {
  os << std::setprecision(6) << std::fixed << x;
  return os;
}

}  // namespace

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// ------------------------------------------------------------ PromptTable

long PromptTable::fallback_count() const {
  long n = 0;
  for (const PromptRecord& r : records) n += r.fallback;
  return n;
}

const PromptRecord* PromptTable::find(const std::string& image_id) const {
  for (const PromptRecord& r : records)
    if (r.image_id == image_id) return &r;
  return nullptr;
}

void PromptTable::save(const std::string& path) const {
  bool with_quality = !records.empty();
  for (const PromptRecord& r : records)
    if (!r.quality.has_value()) with_quality = false;

  std::ofstream out(path);
  if (!out) throw IoError("cannot write prompt table: " + path);
  out << "# fallback_full_image_boxes " << fallback_count() << "\n";
  out << "image_id,row_min,col_min,row_max,col_max";
  if (with_quality) out << ",quality";
  out << "\n";
  for (const PromptRecord& r : records) {
    out << r.image_id << "," << r.box.row_min << "," << r.box.col_min << ","
        << r.box.row_max << "," << r.box.col_max;
    if (with_quality) {
      out << ",";
      csv_number(out, *r.quality);
    }
    out << "\n";
  }
}

PromptTable PromptTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read prompt table: " + path);
  PromptTable table;
  std::string line;
  bool header_seen = false;
  bool has_quality = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      has_quality = line.find(",quality") != std::string::npos;
      continue;
    }
    std::istringstream ls(line);
    PromptRecord r;
    std::string field;
    std::getline(ls, r.image_id, ',');
    std::getline(ls, field, ',');
    r.box.row_min = std::stoi(field);
    std::getline(ls, field, ',');
    r.box.col_min = std::stoi(field);
    std::getline(ls, field, ',');
    r.box.row_max = std::stoi(field);
    std::getline(ls, field, ',');
    r.box.col_max = std::stoi(field);
    if (has_quality && std::getline(ls, field, ','))
      r.quality = std::stod(field);
    table.records.push_back(std::move(r));
  }
  return table;
}

PromptTable make_prompts(const Dataset& dataset,
                         const std::vector<std::size_t>& indices,
                         AgmModel* agm, const PipelineConfig& cfg,
                         const PromptOptions& opts) {
  if (opts.mode == PromptMode::kAgm && agm == nullptr)
    throw InvalidInputError("make_prompts: AGM mode needs a model");
  PromptTable table;
  RngStream jitter_rng(opts.jitter_seed);
  for (std::size_t idx : indices) {
    const DomainSample& s = dataset.samples[idx];
    PromptRecord rec;
    rec.image_id = s.id;

    std::optional<BoundingBoxPrompt> box;
    if (opts.mode == PromptMode::kGroundTruth) {
      box = bbox_from_mask(s.mask, cfg.prompts.padding);
    } else {
      const Mask pred = predict_mask_native(s.image, *agm, cfg.agm.threshold);
      box = generate_prompt(pred, cfg.prompts.connectivity, cfg.prompts.padding);
    }
    if (!box) {
      rec.box = {0, 0, s.image.h - 1, s.image.w - 1};
      rec.fallback = true;
    } else {
      rec.box = *box;
    }

    const bool jitter_active =
        opts.jitter_scale != 1.0 || opts.jitter_shift_frac > 0.0;
    if (jitter_active) {
      const int shift_px = static_cast<int>(
          std::lround(opts.jitter_shift_frac * std::min(s.image.h, s.image.w)));
      rec.box = jitter_prompt(rec.box, opts.jitter_scale, shift_px, jitter_rng,
                              s.image.h, s.image.w);
    }
    if (!s.mask.empty_foreground())
      rec.quality = prompt_quality(rec.box, s.mask);
    table.records.push_back(std::move(rec));
  }
  return table;
}

// ------------------------------------------------------------- synth-data

void cmd_synth_data(const PipelineConfig& cfg) {
  if (!cfg.data.synthetic)
    throw ConfigError("synth-data: config has no data.synthetic section");
  cfg.validate();
  const SyntheticSpec& spec = *cfg.data.synthetic;
  ensure_dir(cfg.data.root);

  DatasetManifest manifest;
  manifest.root = ".";
  manifest.train_fraction = cfg.data.train_fraction;
  manifest.split_seed = cfg.seed;

  for (std::size_t d = 0; d < spec.domains.size(); ++d) {
    const SyntheticDomainSpec& dom = spec.domains[d];
    manifest.domains.push_back({dom.name, dom.role});
    const int n = spec.train_per_domain + spec.test_per_domain;
    const std::uint64_t domain_seed = mix_seed(cfg.seed, 0x5d0 + d);
    const std::vector<DomainSample> samples = generate_synthetic_domain(
        n, dom.style, spec.shape_family, spec.image_size, spec.image_size,
        domain_seed, dom.name);
    const std::string img_dir = join(cfg.data.root, dom.name + "/images");
    const std::string mask_dir = join(cfg.data.root, dom.name + "/masks");
    ensure_dir(img_dir);
    ensure_dir(mask_dir);
    for (const DomainSample& s : samples) {
      save_image_png(s.image, join(img_dir, s.id + ".png"));
      save_mask_png(s.mask, join(mask_dir, s.id + ".png"));
    }
  }
  manifest.root = ".";
  manifest.save(join(cfg.data.root, "manifest.txt"));
}

// -------------------------------------------------------------- train-agm

Split source_split(const Dataset& dataset, const DatasetManifest& manifest) {
  const std::vector<std::size_t> src =
      dataset.by_domain(manifest.source_domain().name);
  return split_source(src, manifest.train_fraction, manifest.split_seed);
}

namespace {

DatasetManifest manifest_for(const PipelineConfig& cfg) {
  return DatasetManifest::load(join(cfg.data.root, "manifest.txt"));
}

double preliminary_dice_over(const Dataset& dataset,
                             const std::vector<std::size_t>& indices,
                             AgmModel& model, double threshold) {
  std::vector<double> scores;
  for (std::size_t idx : indices) {
    const DomainSample& s = dataset.samples[idx];
    scores.push_back(dice_score(predict_mask_native(s.image, model, threshold),
                                s.mask));
  }
  return mean_of(scores);
}

}  // namespace

TrainAgmOutput cmd_train_agm(const PipelineConfig& cfg, bool sufm_on,
                             const std::string& out_dir) {
  cfg.validate();
  ensure_dir(out_dir);
  const DatasetManifest manifest = manifest_for(cfg);
  const Dataset dataset = load_dataset(manifest);
  const Split split = source_split(dataset, manifest);

  AgmConfig agm_cfg = cfg.agm;
  if (!sufm_on) agm_cfg.sufm_positions.clear();
  sufm::SufmConfig sufm_cfg = cfg.sufm;
  sufm_cfg.rng_seed = cfg.seed;

  AgmTrainOptions opts;
  opts.optim = cfg.agm_train.optim;
  opts.batch_size = cfg.agm_train.batch_size;
  opts.iterations = cfg.agm_train.iterations;
  opts.unit = cfg.agm_train.unit;
  opts.seed = mix_seed(cfg.seed, 0xA1);

  AgmTrainResult result = train_agm(dataset, split.train, agm_cfg, sufm_cfg, opts);

  TrainAgmOutput out;
  out.checkpoint_path = join(out_dir, "agm.ckpt");
  out.log_path = join(out_dir, "agm_train_log.csv");
  result.checkpoint.save(out.checkpoint_path);
  write_train_log_csv(result.log, out.log_path);

  AgmModel model = agm_from_checkpoint(result.checkpoint);
  out.source_test_dice = preliminary_dice_over(
      dataset, split.test.empty() ? split.train : split.test, model,
      cfg.agm.threshold);
  std::cout << "train-agm: final source-test dice "
            << std::setprecision(4) << out.source_test_dice << "\n";
  return out;
}

// ------------------------------------------------------------ gen-prompts

std::string cmd_gen_prompts(const PipelineConfig& cfg,
                            const std::string& agm_checkpoint,
                            const std::string& domain_filter,
                            const PromptOptions& opts,
                            const std::string& out_dir) {
  cfg.validate();
  ensure_dir(out_dir);
  const DatasetManifest manifest = manifest_for(cfg);
  const Dataset dataset = load_dataset(manifest);

  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i)
    if (domain_filter == "all" || dataset.samples[i].domain == domain_filter)
      indices.push_back(i);
  if (indices.empty())
    throw ConfigError("gen-prompts: no samples match domain '" + domain_filter +
                      "'");

  std::optional<AgmModel> agm;
  if (opts.mode == PromptMode::kAgm)
    agm.emplace(agm_from_checkpoint(Checkpoint::load(agm_checkpoint)));

  const PromptTable table = make_prompts(dataset, indices,
                                         agm ? &*agm : nullptr, cfg, opts);
  const std::string path = join(out_dir, "prompts.csv");
  table.save(path);
  std::cout << "gen-prompts: " << table.records.size() << " records, "
            << table.fallback_count() << " full-image fallbacks\n";
  return path;
}

// --------------------------------------------------------------- finetune

FinetuneOutput cmd_finetune(const PipelineConfig& cfg,
                            const std::string& prompts_csv, bool ipef_on,
                            const std::string& out_dir) {
  cfg.validate();
  ensure_dir(out_dir);
  const DatasetManifest manifest = manifest_for(cfg);
  const Dataset dataset = load_dataset(manifest);
  const Split split = source_split(dataset, manifest);

  std::optional<PromptTable> table;
  if (!cfg.prompts.use_gt_boxes) {
    if (prompts_csv.empty())
      throw ConfigError("finetune: needs a prompt table or use_gt_boxes");
    table = PromptTable::load(prompts_csv);
  }

  std::vector<FinetuneSample> samples;
  std::vector<std::string> missing;
  for (std::size_t idx : split.train) {
    const DomainSample& s = dataset.samples[idx];
    FinetuneSample fs;
    fs.dataset_index = idx;
    if (cfg.prompts.use_gt_boxes) {
      const auto box = bbox_from_mask(s.mask, cfg.prompts.padding);
      fs.box = box ? *box
                   : BoundingBoxPrompt{0, 0, s.image.h - 1, s.image.w - 1};
    } else {
      const PromptRecord* rec = table->find(s.id);
      if (!rec) {
        missing.push_back(s.id);
        continue;
      }
      fs.box = rec->box;
    }
    samples.push_back(fs);
  }
  if (!missing.empty()) {
    std::string msg = "finetune: prompt table lacks records for:";
    for (const std::string& id : missing) msg += " " + id;
    throw ConfigError(msg);
  }

  SegmenterConfig seg_cfg = cfg.segmenter;
  seg_cfg.ipef.enabled = ipef_on;
  SegmenterModel model(seg_cfg, mix_seed(cfg.seed, 0xB2));

  FinetuneOptions opts;
  opts.optim = cfg.finetune.optim;
  opts.batch_size = cfg.finetune.batch_size;
  opts.iterations = cfg.finetune.iterations;
  opts.unit = cfg.finetune.unit;
  opts.seed = mix_seed(cfg.seed, 0xC3);

  FinetuneResult result = finetune_decoder(dataset, samples, model, opts);

  FinetuneOutput out;
  out.checkpoint_path = join(out_dir, "segmenter.ckpt");
  out.log_path = join(out_dir, "finetune_log.csv");
  result.checkpoint.save(out.checkpoint_path);
  write_train_log_csv(result.log, out.log_path);
  return out;
}

// ------------------------------------------------------------------- eval

EvalReport cmd_eval(const PipelineConfig& cfg, const std::string& agm_checkpoint,
                    const std::string& segmenter_checkpoint,
                    const PromptOptions& opts, const std::string& out_dir) {
  cfg.validate();
  ensure_dir(out_dir);
  const DatasetManifest manifest = manifest_for(cfg);
  const Dataset dataset = load_dataset(manifest);
  const Split split = source_split(dataset, manifest);

  std::optional<AgmModel> agm;
  if (opts.mode == PromptMode::kAgm || agm_checkpoint.size())
    agm.emplace(agm_from_checkpoint(Checkpoint::load(agm_checkpoint)));
  SegmenterModel seg =
      segmenter_from_checkpoint(Checkpoint::load(segmenter_checkpoint));

  struct DomainPlan {
    std::string name;
    std::string role;
    std::vector<std::size_t> indices;
  };
  std::vector<DomainPlan> plans;
  plans.push_back({manifest.source_domain().name, "source_test", split.test});
  for (const std::string& t : manifest.target_names())
    plans.push_back({t, "target", dataset.by_domain(t)});

  if (cfg.eval.write_overlays) ensure_dir(join(out_dir, "overlays"));

  EvalReport report;
  std::vector<double> all_final, target_final;
  for (const DomainPlan& plan : plans) {
    if (plan.indices.empty())
      throw ConfigError("eval: domain '" + plan.name + "' has zero images");
    DomainMetrics m;
    m.domain = plan.name;
    m.role = plan.role;
    m.n_images = static_cast<int>(plan.indices.size());

    // Per-domain jitter stream, deterministic in (seed, domain).
    PromptOptions domain_opts = opts;
    domain_opts.jitter_seed =
        mix_seed(opts.jitter_seed, std::hash<std::string>{}(plan.name));
    const PromptTable prompts = make_prompts(dataset, plan.indices,
                                             agm ? &*agm : nullptr, cfg,
                                             domain_opts);

    std::vector<double> prelim, fin, quality;
    for (std::size_t k = 0; k < plan.indices.size(); ++k) {
      const DomainSample& s = dataset.samples[plan.indices[k]];
      const PromptRecord& rec = prompts.records[k];
      if (agm)
        prelim.push_back(dice_score(
            predict_mask_native(s.image, *agm, cfg.agm.threshold), s.mask));
      const Mask pred = segment(s.image, rec.box, seg, cfg.eval.threshold);
      fin.push_back(dice_score(pred, s.mask));
      if (rec.quality) quality.push_back(*rec.quality);
      if (cfg.eval.write_overlays)
        save_overlay_png(s.image, pred, &s.mask,
                         join(out_dir, "overlays/" + s.id + ".png"));
    }
    m.preliminary_dice = mean_of(prelim);
    m.final_dice = mean_of(fin);
    m.prompt_quality = mean_of(quality);
    m.fallbacks = prompts.fallback_count();
    report.rows.push_back(m);

    all_final.push_back(m.final_dice);
    if (plan.role == "target") target_final.push_back(m.final_dice);
    if (plan.role == "source_test") report.source_test_final = m.final_dice;
  }
  report.avg_all_final = mean_of(all_final);
  report.avg_target_final = mean_of(target_final);
  report.save_csv(join(out_dir, "metrics.csv"));
  return report;
}

void EvalReport::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics: " + path);
  out << "domain,role,n_images,preliminary_dice,final_dice,prompt_quality,"
         "fallbacks\n";
  for (const DomainMetrics& m : rows) {
    out << m.domain << "," << m.role << "," << m.n_images << ",";
    csv_number(out, m.preliminary_dice) << ",";
    csv_number(out, m.final_dice) << ",";
    csv_number(out, m.prompt_quality) << "," << m.fallbacks << "\n";
  }
  out << "avg_all,,,,";
  csv_number(out, avg_all_final) << ",,\n";
  out << "avg_target,,,,";
  csv_number(out, avg_target_final) << ",,\n";
}

// ----------------------------------------------------------------- ablate

AblationAxis ablation_axis_from_string(const std::string& s) {
  if (s == "module") return AblationAxis::kModule;
  if (s == "position") return AblationAxis::kPosition;
  if (s == "distribution") return AblationAxis::kDistribution;
  if (s == "prompt_jitter") return AblationAxis::kPromptJitter;
  throw ConfigError("unknown ablation axis '" + s + "'");
}

namespace {

struct PipelineRunResult {
  double source_test_prelim = 0.0;
  double avg_target_prelim = 0.0;
  double avg_target_final = 0.0;
  double source_test_final = 0.0;
  std::string metrics_path;
};

/// One complete run (train AGM, prompts, finetune, eval) in work_dir.
PipelineRunResult run_pipeline_variant(PipelineConfig cfg, bool sufm_on,
                                       bool ipef_on,
                                       const std::string& work_dir) {
  PipelineRunResult out;
  const TrainAgmOutput agm_out = cmd_train_agm(cfg, sufm_on, work_dir);
  out.source_test_prelim = agm_out.source_test_dice;

  PromptOptions train_prompts;
  train_prompts.mode = cfg.prompts.use_gt_boxes ? PromptMode::kGroundTruth
                                                : PromptMode::kAgm;
  train_prompts.jitter_scale = cfg.prompts.jitter_scale;
  train_prompts.jitter_shift_frac = cfg.prompts.jitter_shift_frac;
  train_prompts.jitter_seed = mix_seed(cfg.seed, 0xD4);
  const std::string prompts_csv = cmd_gen_prompts(
      cfg, agm_out.checkpoint_path, "all", train_prompts, work_dir);

  const FinetuneOutput ft =
      cmd_finetune(cfg, prompts_csv, ipef_on, work_dir);

  const EvalReport report = cmd_eval(cfg, agm_out.checkpoint_path,
                                     ft.checkpoint_path, train_prompts,
                                     work_dir);
  out.avg_target_final = report.avg_target_final;
  out.source_test_final = report.source_test_final;
  std::vector<double> tp;
  for (const DomainMetrics& m : report.rows)
    if (m.role == "target") tp.push_back(m.preliminary_dice);
  out.avg_target_prelim = mean_of(tp);
  out.metrics_path = join(work_dir, "metrics.csv");
  return out;
}

}  // namespace

std::string cmd_ablate(const PipelineConfig& cfg, AblationAxis axis,
                       const std::vector<std::uint64_t>& seeds,
                       const std::string& out_dir) {
  cfg.validate();
  ensure_dir(out_dir);
  const std::vector<std::uint64_t> seed_list =
      seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : seeds;

  auto averaged = [&](PipelineConfig variant, bool sufm_on, bool ipef_on,
                      const std::string& tag) {
    std::vector<double> prelim, fin;
    for (std::uint64_t s : seed_list) {
      variant.seed = s;
      const PipelineRunResult r = run_pipeline_variant(
          variant, sufm_on, ipef_on,
          join(out_dir, tag + "_seed" + std::to_string(s)));
      prelim.push_back(r.avg_target_prelim);
      fin.push_back(r.avg_target_final);
    }
    return std::pair<double, double>{mean_of(prelim), mean_of(fin)};
  };

  std::string path;
  if (axis == AblationAxis::kModule) {
    path = join(out_dir, "ablation_module.csv");
    std::ofstream out(path);
    out << "variant,sufm,ipef,avg_target_preliminary,avg_target_final\n";
    const struct {
      const char* tag;
      bool sufm, ipef;
    } grid[] = {{"neither", false, false},
                {"sufm_only", true, false},
                {"ipef_only", false, true},
                {"sufm_ipef", true, true}};
    for (const auto& g : grid) {
      const auto [p, f] = averaged(cfg, g.sufm, g.ipef, g.tag);
      out << g.tag << "," << (g.sufm ? 1 : 0) << "," << (g.ipef ? 1 : 0) << ",";
      csv_number(out, p) << ",";
      csv_number(out, f) << "\n";
    }
  } else if (axis == AblationAxis::kPosition) {
    path = join(out_dir, "ablation_position.csv");
    const std::vector<std::pair<std::string, std::set<int>>> slots = {
        {"0-1", {0, 1}}, {"2", {2}}, {"3", {3}}};
    std::vector<double> prelim_row, final_row;
    for (const auto& [tag, positions] : slots) {
      PipelineConfig variant = cfg;
      variant.agm.sufm_positions = positions;
      const auto [p, f] = averaged(variant, true, true, "pos" + tag);
      prelim_row.push_back(p);
      final_row.push_back(f);
    }
    std::ofstream out(path);
    out << "row";
    for (const auto& [tag, _] : slots) out << "," << tag;
    out << "\npreliminary_prediction";
    for (double p : prelim_row) {
      out << ",";
      csv_number(out, p);
    }
    out << "\nfinal_prediction";
    for (double f : final_row) {
      out << ",";
      csv_number(out, f);
    }
    out << "\n";
  } else if (axis == AblationAxis::kDistribution) {
    path = join(out_dir, "ablation_distribution.csv");
    const std::vector<std::pair<std::string, sufm::NoiseMode>> modes = {
        {"gaussian", sufm::NoiseMode::kGaussian},
        {"poisson", sufm::NoiseMode::kPoisson},
        {"united", sufm::NoiseMode::kUnited}};
    std::vector<double> prelim_row, final_row;
    for (const auto& [tag, mode] : modes) {
      PipelineConfig variant = cfg;
      variant.sufm.noise_mode = mode;
      const auto [p, f] = averaged(variant, true, true, tag);
      prelim_row.push_back(p);
      final_row.push_back(f);
    }
    std::ofstream out(path);
    out << "row";
    for (const auto& [tag, _] : modes) out << "," << tag;
    out << "\npreliminary_prediction";
    for (double p : prelim_row) {
      out << ",";
      csv_number(out, p);
    }
    out << "\nfinal_prediction";
    for (double f : final_row) {
      out << ",";
      csv_number(out, f);
    }
    out << "\n";
  } else {  // kPromptJitter
    path = join(out_dir, "ablation_prompt_jitter.csv");
    // Shared trained pipeline per seed, evaluated under three prompt modes.
    std::ofstream out(path);
    out << "prompt_mode,avg_target_final,avg_prompt_quality\n";
    struct ModeRow {
      std::vector<double> dice, quality;
    } rows[3];
    for (std::uint64_t s : seed_list) {
      PipelineConfig variant = cfg;
      variant.seed = s;
      const std::string work = join(out_dir, "jitter_seed" + std::to_string(s));
      const TrainAgmOutput agm_out = cmd_train_agm(variant, true, work);
      PromptOptions agm_mode;
      agm_mode.mode = PromptMode::kAgm;
      const std::string prompts_csv = cmd_gen_prompts(
          variant, agm_out.checkpoint_path, "all", agm_mode, work);
      const FinetuneOutput ft = cmd_finetune(variant, prompts_csv, true, work);

      const PromptOptions modes[3] = {
          {PromptMode::kGroundTruth, 1.0, 0.0, 0},
          {PromptMode::kGroundTruth, cfg.prompts.jitter_scale == 1.0
                                         ? 1.5
                                         : cfg.prompts.jitter_scale,
           cfg.prompts.jitter_shift_frac == 0.0 ? 0.1
                                                : cfg.prompts.jitter_shift_frac,
           mix_seed(s, 0xE5)},
          {PromptMode::kAgm, 1.0, 0.0, 0}};
      for (int i = 0; i < 3; ++i) {
        const EvalReport rep =
            cmd_eval(variant, agm_out.checkpoint_path, ft.checkpoint_path,
                     modes[i], join(work, "eval" + std::to_string(i)));
        rows[i].dice.push_back(rep.avg_target_final);
        std::vector<double> q;
        for (const DomainMetrics& m : rep.rows)
          if (m.role == "target") q.push_back(m.prompt_quality);
        rows[i].quality.push_back(mean_of(q));
      }
    }
    const char* names[3] = {"gt", "jittered", "agm"};
    for (int i = 0; i < 3; ++i) {
      out << names[i] << ",";
      csv_number(out, mean_of(rows[i].dice)) << ",";
      csv_number(out, mean_of(rows[i].quality)) << "\n";
    }
  }
  return path;
}

// ---------------------------------------------------------- full pipeline

std::string run_full_pipeline(const PipelineConfig& cfg,
                              const std::string& out_dir) {
  cfg.validate();
  ensure_dir(out_dir);
  if (cfg.data.synthetic) cmd_synth_data(cfg);

  const TrainAgmOutput agm_out = cmd_train_agm(cfg, cfg.sufm_enabled, out_dir);

  PromptOptions opts;
  opts.mode = cfg.prompts.use_gt_boxes ? PromptMode::kGroundTruth
                                       : PromptMode::kAgm;
  opts.jitter_scale = cfg.prompts.jitter_scale;
  opts.jitter_shift_frac = cfg.prompts.jitter_shift_frac;
  opts.jitter_seed = mix_seed(cfg.seed, 0xD4);

  const std::string prompts_csv = cmd_gen_prompts(cfg, agm_out.checkpoint_path,
                                                  "all", opts, out_dir);
  const FinetuneOutput ft =
      cmd_finetune(cfg, prompts_csv, cfg.segmenter.ipef.enabled, out_dir);
  cmd_eval(cfg, agm_out.checkpoint_path, ft.checkpoint_path, opts, out_dir);
  return join(out_dir, "metrics.csv");
}

}  // namespace fasam
