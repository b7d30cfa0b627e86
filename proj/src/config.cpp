#include "fasam/config.hpp"

#include <fstream>

#include "fasam/error.hpp"
#include "json.hpp"

using nlohmann::json;

namespace fasam {

namespace {

std::string noise_mode_str(sufm::NoiseMode m) {
  switch (m) {
    case sufm::NoiseMode::kGaussian: return "gaussian";
    case sufm::NoiseMode::kPoisson: return "poisson";
    case sufm::NoiseMode::kUnited: return "united";
  }
  return "united";
}

sufm::NoiseMode noise_mode_parse(const std::string& s) {
  if (s == "gaussian") return sufm::NoiseMode::kGaussian;
  if (s == "poisson") return sufm::NoiseMode::kPoisson;
  if (s == "united") return sufm::NoiseMode::kUnited;
  throw ConfigError("unknown noise_mode '" + s + "'");
}

std::string sampling_mode_str(sufm::SamplingMode m) {
  return m == sufm::SamplingMode::kLiteral ? "literal" : "reparameterized";
}

sufm::SamplingMode sampling_mode_parse(const std::string& s) {
  if (s == "literal") return sufm::SamplingMode::kLiteral;
  if (s == "reparameterized") return sufm::SamplingMode::kReparameterized;
  throw ConfigError("unknown sampling_mode '" + s + "'");
}

json sufm_to_json(const sufm::SufmConfig& c) {
  return {{"noise_mode", noise_mode_str(c.noise_mode)},
          {"sampling_mode", sampling_mode_str(c.sampling_mode)},
          {"apply_probability", c.apply_probability},
          {"gamma_floor", c.gamma_floor},
          {"epsilon_std", c.epsilon_std},
          {"poisson_scale", c.poisson_scale},
          {"rng_seed", c.rng_seed}};
}

sufm::SufmConfig sufm_from_json(const json& j) {
  sufm::SufmConfig c;
  if (j.contains("noise_mode")) c.noise_mode = noise_mode_parse(j["noise_mode"]);
  if (j.contains("sampling_mode"))
    c.sampling_mode = sampling_mode_parse(j["sampling_mode"]);
  if (j.contains("apply_probability"))
    c.apply_probability = j["apply_probability"];
  if (j.contains("gamma_floor")) c.gamma_floor = j["gamma_floor"];
  if (j.contains("epsilon_std")) c.epsilon_std = j["epsilon_std"];
  if (j.contains("poisson_scale")) c.poisson_scale = j["poisson_scale"];
  if (j.contains("rng_seed")) c.rng_seed = j["rng_seed"];
  return c;
}

json agm_to_json_obj(const AgmConfig& c) {
  return {{"encoder_channels", c.encoder_channels},
          {"sufm_positions", std::vector<int>(c.sufm_positions.begin(),
                                              c.sufm_positions.end())},
          {"input_size", std::vector<int>{c.input_h, c.input_w}},
          {"threshold", c.threshold}};
}

AgmConfig agm_from_json_obj(const json& j) {
  AgmConfig c;
  if (j.contains("encoder_channels"))
    c.encoder_channels = j["encoder_channels"].get<std::vector<int>>();
  if (j.contains("sufm_positions")) {
    const auto v = j["sufm_positions"].get<std::vector<int>>();
    c.sufm_positions = std::set<int>(v.begin(), v.end());
  }
  if (j.contains("input_size")) {
    if (j["input_size"].is_array()) {
      const auto v = j["input_size"].get<std::vector<int>>();
      if (v.size() != 2) throw ConfigError("agm.input_size must be [h, w]");
      c.input_h = v[0];
      c.input_w = v[1];
    } else {
      c.input_h = c.input_w = j["input_size"].get<int>();
    }
  }
  if (j.contains("threshold")) c.threshold = j["threshold"];
  return c;
}

json segmenter_to_json_obj(const SegmenterConfig& c) {
  return {{"input_size", c.input_size},
          {"base_channels", c.base_channels},
          {"tap_channels", c.tap_channels},
          {"prompt_dim", c.prompt_dim},
          {"threshold", c.threshold},
          {"ipef",
           {{"enabled", c.ipef.enabled},
            {"se_reduction", c.ipef.se_reduction},
            {"upsample_mode", c.ipef.upsample_mode == UpsampleMode::kTransposed
                                  ? "transposed"
                                  : "bilinear"},
            {"fused_channels", c.ipef.fused_channels},
            {"skip_connections", c.ipef.skip_connections}}}};
}

SegmenterConfig segmenter_from_json_obj(const json& j) {
  SegmenterConfig c;
  if (j.contains("input_size")) c.input_size = j["input_size"];
  if (j.contains("base_channels")) c.base_channels = j["base_channels"];
  if (j.contains("tap_channels"))
    c.tap_channels = j["tap_channels"].get<std::vector<int>>();
  if (j.contains("prompt_dim")) c.prompt_dim = j["prompt_dim"];
  if (j.contains("threshold")) c.threshold = j["threshold"];
  if (j.contains("ipef")) {
    const json& ji = j["ipef"];
    if (ji.contains("enabled")) c.ipef.enabled = ji["enabled"];
    if (ji.contains("se_reduction")) c.ipef.se_reduction = ji["se_reduction"];
    if (ji.contains("upsample_mode")) {
      const std::string m = ji["upsample_mode"];
      if (m == "bilinear")
        c.ipef.upsample_mode = UpsampleMode::kBilinear;
      else if (m == "transposed")
        c.ipef.upsample_mode = UpsampleMode::kTransposed;
      else
        throw ConfigError("unknown upsample_mode '" + m + "'");
    }
    if (ji.contains("fused_channels"))
      c.ipef.fused_channels = ji["fused_channels"].get<std::vector<int>>();
    if (ji.contains("skip_connections"))
      c.ipef.skip_connections = ji["skip_connections"];
  }
  return c;
}

json style_to_json(const DomainStyle& s) {
  return {{"intensity_offset", s.intensity_offset},
          {"gamma", s.gamma},
          {"noise_std", s.noise_std},
          {"blur_sigma", s.blur_sigma},
          {"texture_amp", s.texture_amp}};
}

DomainStyle style_from_json(const json& j) {
  DomainStyle s;
  if (j.contains("intensity_offset")) s.intensity_offset = j["intensity_offset"];
  if (j.contains("gamma")) s.gamma = j["gamma"];
  if (j.contains("noise_std")) s.noise_std = j["noise_std"];
  if (j.contains("blur_sigma")) s.blur_sigma = j["blur_sigma"];
  if (j.contains("texture_amp")) s.texture_amp = j["texture_amp"];
  return s;
}

json stage_to_json(const StageConfig& s) {
  return {{"learning_rate", s.optim.learning_rate},
          {"batch_size", s.batch_size},
          {"iterations", s.iterations},
          {"iteration_unit", s.unit == IterationUnit::kEpoch ? "epoch" : "step"}};
}

StageConfig stage_from_json(const json& j, const StageConfig& defaults) {
  StageConfig s = defaults;
  if (j.contains("learning_rate")) s.optim.learning_rate = j["learning_rate"];
  if (j.contains("batch_size")) s.batch_size = j["batch_size"];
  if (j.contains("iterations")) s.iterations = j["iterations"];
  if (j.contains("iteration_unit")) {
    const std::string u = j["iteration_unit"];
    if (u == "step")
      s.unit = IterationUnit::kStep;
    else if (u == "epoch")
      s.unit = IterationUnit::kEpoch;
    else
      throw ConfigError("unknown iteration_unit '" + u + "'");
  }
  return s;
}

}  // namespace

void PipelineConfig::validate() const {
  agm.validate();
  sufm.validate();
  segmenter.validate();
  if (agm_train.batch_size < 1 || finetune.batch_size < 1)
    throw ConfigError("batch sizes must be >= 1");
  if (agm_train.iterations < 1 || finetune.iterations < 1)
    throw ConfigError("iteration budgets must be >= 1");
  if (prompts.connectivity != 4 && prompts.connectivity != 8)
    throw ConfigError("prompts.connectivity must be 4 or 8");
  if (prompts.padding < 0) throw ConfigError("prompts.padding must be >= 0");
  if (!(prompts.jitter_scale > 0.0))
    throw ConfigError("prompts.jitter_scale must be > 0");
  if (prompts.jitter_shift_frac < 0.0 || prompts.jitter_shift_frac > 1.0)
    throw ConfigError("prompts.jitter_shift_frac must be in [0,1]");
  if (!(data.train_fraction > 0.0 && data.train_fraction <= 1.0))
    throw ConfigError("data.train_fraction must be in (0,1]");
  if (data.synthetic) {
    const SyntheticSpec& s = *data.synthetic;
    if (s.train_per_domain < 1 || s.test_per_domain < 0)
      throw ConfigError("synthetic sample counts invalid");
    if (s.image_size < 16) throw ConfigError("synthetic image_size too small");
    int sources = 0;
    for (const auto& d : s.domains) {
      d.style.validate();
      sources += d.role == DomainRole::kSource;
    }
    if (sources != 1)
      throw ConfigError("synthetic spec needs exactly one source domain");
  }
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  json jd;
  jd["root"] = cfg.data.root;
  jd["train_fraction"] = cfg.data.train_fraction;
  if (cfg.data.synthetic) {
    const SyntheticSpec& s = *cfg.data.synthetic;
    json js;
    js["image_size"] = s.image_size;
    js["train_per_domain"] = s.train_per_domain;
    js["test_per_domain"] = s.test_per_domain;
    js["shape_family"] = to_string(s.shape_family);
    js["domains"] = json::array();
    for (const auto& d : s.domains)
      js["domains"].push_back(
          {{"name", d.name},
           {"role", d.role == DomainRole::kSource ? "source" : "target"},
           {"style", style_to_json(d.style)}});
    jd["synthetic"] = js;
  }
  j["data"] = jd;
  j["agm"] = agm_to_json_obj(cfg.agm);
  j["agm_train"] = stage_to_json(cfg.agm_train);
  j["sufm"] = sufm_to_json(cfg.sufm);
  j["sufm_enabled"] = cfg.sufm_enabled;
  j["segmenter"] = segmenter_to_json_obj(cfg.segmenter);
  j["finetune"] = stage_to_json(cfg.finetune);
  j["freeze_encoders"] = cfg.freeze_encoders;
  j["prompts"] = {{"connectivity", cfg.prompts.connectivity},
                  {"padding", cfg.prompts.padding},
                  {"use_gt_boxes", cfg.prompts.use_gt_boxes},
                  {"jitter_scale", cfg.prompts.jitter_scale},
                  {"jitter_shift_frac", cfg.prompts.jitter_shift_frac}};
  j["eval"] = {{"threshold", cfg.eval.threshold},
               {"output_dir", cfg.eval.output_dir},
               {"write_overlays", cfg.eval.write_overlays}};
  return j.dump(2);
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  PipelineConfig cfg = default_pipeline_config();
  try {
    if (j.contains("seed")) cfg.seed = j["seed"];
    if (j.contains("data")) {
      const json& jd = j["data"];
      if (jd.contains("root")) cfg.data.root = jd["root"];
      if (jd.contains("train_fraction"))
        cfg.data.train_fraction = jd["train_fraction"];
      if (jd.contains("synthetic")) {
        const json& js = jd["synthetic"];
        SyntheticSpec s;
        if (js.contains("image_size")) s.image_size = js["image_size"];
        if (js.contains("train_per_domain"))
          s.train_per_domain = js["train_per_domain"];
        if (js.contains("test_per_domain"))
          s.test_per_domain = js["test_per_domain"];
        if (js.contains("shape_family"))
          s.shape_family = shape_family_from_string(js["shape_family"]);
        if (js.contains("domains")) {
          for (const json& dj : js["domains"]) {
            SyntheticDomainSpec d;
            d.name = dj.at("name");
            const std::string role = dj.value("role", "target");
            if (role == "source")
              d.role = DomainRole::kSource;
            else if (role == "target")
              d.role = DomainRole::kTarget;
            else
              throw ConfigError("unknown domain role '" + role + "'");
            if (dj.contains("style")) d.style = style_from_json(dj["style"]);
            s.domains.push_back(d);
          }
        }
        cfg.data.synthetic = s;
      }
    }
    if (j.contains("agm")) cfg.agm = agm_from_json_obj(j["agm"]);
    if (j.contains("agm_train"))
      cfg.agm_train = stage_from_json(j["agm_train"], cfg.agm_train);
    if (j.contains("sufm")) cfg.sufm = sufm_from_json(j["sufm"]);
    if (j.contains("sufm_enabled")) cfg.sufm_enabled = j["sufm_enabled"];
    if (j.contains("segmenter"))
      cfg.segmenter = segmenter_from_json_obj(j["segmenter"]);
    if (j.contains("finetune"))
      cfg.finetune = stage_from_json(j["finetune"], cfg.finetune);
    if (j.contains("freeze_encoders")) cfg.freeze_encoders = j["freeze_encoders"];
    if (j.contains("prompts")) {
      const json& jp = j["prompts"];
      if (jp.contains("connectivity")) cfg.prompts.connectivity = jp["connectivity"];
      if (jp.contains("padding")) cfg.prompts.padding = jp["padding"];
      if (jp.contains("use_gt_boxes")) cfg.prompts.use_gt_boxes = jp["use_gt_boxes"];
      if (jp.contains("jitter_scale")) cfg.prompts.jitter_scale = jp["jitter_scale"];
      if (jp.contains("jitter_shift_frac"))
        cfg.prompts.jitter_shift_frac = jp["jitter_shift_frac"];
    }
    if (j.contains("eval")) {
      const json& je = j["eval"];
      if (je.contains("threshold")) cfg.eval.threshold = je["threshold"];
      if (je.contains("output_dir")) cfg.eval.output_dir = je["output_dir"];
      if (je.contains("write_overlays"))
        cfg.eval.write_overlays = je["write_overlays"];
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return pipeline_config_from_json(text);
}

void save_pipeline_config(const PipelineConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("config: cannot write " + path);
  out << pipeline_config_to_json(cfg) << "\n";
}

PipelineConfig default_pipeline_config() {
  PipelineConfig cfg;
  cfg.seed = 0;

  SyntheticSpec synth;
  synth.image_size = 128;
  synth.train_per_domain = 64;
  synth.test_per_domain = 16;
  synth.shape_family = ShapeFamily::kBlob;
  SyntheticDomainSpec a{"siteA", DomainRole::kSource,
                        {0.0, 1.0, 0.02, 0.6, 0.06}};
  SyntheticDomainSpec b{"siteB", DomainRole::kTarget,
                        {0.10, 0.55, 0.05, 1.2, 0.14}};
  SyntheticDomainSpec c{"siteC", DomainRole::kTarget,
                        {-0.08, 2.0, 0.08, 0.3, 0.20}};
  synth.domains = {a, b, c};
  cfg.data.root = "data/synth";
  cfg.data.synthetic = synth;
  cfg.data.train_fraction = 0.9;

  cfg.agm.encoder_channels = {16, 32, 64, 128};
  cfg.agm.sufm_positions = {0, 1};
  cfg.agm.input_h = cfg.agm.input_w = 64;
  cfg.agm_train.optim.learning_rate = 0.001;
  cfg.agm_train.batch_size = 8;
  cfg.agm_train.iterations = 300;
  cfg.agm_train.unit = IterationUnit::kStep;

  cfg.sufm = sufm::SufmConfig{};

  cfg.segmenter.input_size = 128;
  cfg.segmenter.base_channels = 16;
  cfg.segmenter.tap_channels = {256, 128, 64};
  cfg.segmenter.prompt_dim = 16;
  cfg.finetune.optim.learning_rate = 0.001;
  cfg.finetune.batch_size = 4;
  cfg.finetune.iterations = 200;
  cfg.finetune.unit = IterationUnit::kStep;

  return cfg;
}

std::string agm_config_to_json(const AgmConfig& cfg,
                               const sufm::SufmConfig& sufm_cfg) {
  json j;
  j["agm"] = agm_to_json_obj(cfg);
  j["sufm"] = sufm_to_json(sufm_cfg);
  return j.dump();
}

void agm_config_from_json(const std::string& text, AgmConfig& cfg,
                          sufm::SufmConfig& sufm_cfg) {
  const json j = json::parse(text);
  cfg = agm_from_json_obj(j.at("agm"));
  sufm_cfg = sufm_from_json(j.at("sufm"));
}

std::string segmenter_config_to_json(const SegmenterConfig& cfg) {
  return segmenter_to_json_obj(cfg).dump();
}

SegmenterConfig segmenter_config_from_json(const std::string& text) {
  return segmenter_from_json_obj(json::parse(text));
}

}  // namespace fasam
