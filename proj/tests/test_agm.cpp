#include <filesystem>

#include "doctest.h"
#include "fasam/agm.hpp"
#include "fasam/config.hpp"
#include "fasam/data.hpp"
#include "fasam/error.hpp"
#include "fasam/losses.hpp"
#include "test_util.hpp"

using namespace fasam;
namespace fs = std::filesystem;

namespace {

AgmConfig tiny_config() {
  AgmConfig cfg;
  cfg.encoder_channels = {4, 8, 12};
  cfg.sufm_positions = {0, 1};
  cfg.input_h = cfg.input_w = 32;
  return cfg;
}

Dataset tiny_dataset(int n, std::uint64_t seed) {
  Dataset ds;
  ds.samples = generate_synthetic_domain(n, DomainStyle{0.0, 1.0, 0.02, 0.0, 0.05},
                                         ShapeFamily::kDisk, 32, 32, seed, "src");
  return ds;
}

std::vector<std::size_t> all_indices(const Dataset& ds) {
  std::vector<std::size_t> out(ds.samples.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

Tensor sample_to_tensor(const Image& img) {
  Tensor t({1, 1, img.h, img.w});
  std::copy(img.v.begin(), img.v.end(), t.v.begin());
  return t;
}

}  // namespace

TEST_CASE("forward shape is preserved through the encoder-decoder") {
  AgmConfig cfg;
  cfg.encoder_channels = {8, 16, 32, 64};
  cfg.sufm_positions = {0, 1};
  cfg.input_h = cfg.input_w = 64;
  AgmModel model(cfg, sufm::SufmConfig{}, 1);
  RngStream rng(3);
  const Tensor x = testutil::random_tensor({2, 1, 64, 64}, rng, 0.0, 1.0);
  const Tensor logits = model.forward(x, false, nullptr);
  CHECK(logits.shape == std::vector<int>{2, 1, 64, 64});
}

TEST_CASE("eval forward is deterministic and ignores the perturbation slots") {
  AgmModel model(tiny_config(), sufm::SufmConfig{}, 7);
  RngStream rng(5);
  const Tensor x = testutil::random_tensor({1, 1, 32, 32}, rng, 0.0, 1.0);
  const Tensor a = model.forward(x, false, nullptr);
  const Tensor b = model.forward(x, false, nullptr);
  REQUIRE(a.v == b.v);
}

TEST_CASE("train-mode forward without slots equals eval forward") {
  AgmConfig cfg = tiny_config();
  cfg.sufm_positions.clear();
  AgmModel model(cfg, sufm::SufmConfig{}, 7);
  RngStream rng(6), noise(1);
  const Tensor x = testutil::random_tensor({2, 1, 32, 32}, rng, 0.0, 1.0);
  const Tensor train = model.forward(x, true, &noise);
  const Tensor eval = model.forward(x, false, nullptr);
  REQUIRE(train.v == eval.v);
}

TEST_CASE("zero apply probability makes train mode match eval mode") {
  sufm::SufmConfig sufm_cfg;
  sufm_cfg.apply_probability = 0.0;
  AgmModel model(tiny_config(), sufm_cfg, 7);
  RngStream rng(8), noise(2);
  const Tensor x = testutil::random_tensor({2, 1, 32, 32}, rng, 0.0, 1.0);
  const Tensor train = model.forward(x, true, &noise);
  const Tensor eval = model.forward(x, false, nullptr);
  REQUIRE(train.v == eval.v);
}

TEST_CASE("model gradients match finite differences") {
  AgmConfig cfg;
  cfg.encoder_channels = {3, 5};
  cfg.sufm_positions = {};
  cfg.input_h = cfg.input_w = 8;
  AgmModel model(cfg, sufm::SufmConfig{}, 11);
  RngStream rng(12);
  Tensor x = testutil::random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);

  const Tensor y0 = model.forward(x, false, nullptr);
  testutil::LossProbe probe(y0.shape);
  model.zero_grad();
  model.forward(x, false, nullptr);
  model.backward(probe.grad());
  nn::ParamList params = model.params();

  auto eval = [&] { return probe(model.forward(x, false, nullptr)); };
  RngStream pick(77);
  for (int c = 0; c < 8; ++c) {
    auto& p = params[static_cast<std::size_t>(pick.uniform_int(
        static_cast<int>(params.size())))];
    const auto i = static_cast<std::size_t>(pick.uniform_int(
        static_cast<int>(p.value->size())));
    const double fd = testutil::central_diff(eval, &p.value->v[i]);
    REQUIRE(testutil::grad_close(fd, p.grad->v[i], 1e-4));
  }
}

TEST_CASE("a short smoke run lowers the training loss") {
  const Dataset ds = tiny_dataset(8, 21);
  AgmTrainOptions opts;
  opts.batch_size = 8;
  opts.iterations = 50;
  opts.seed = 0;
  const AgmTrainResult result =
      train_agm(ds, all_indices(ds), tiny_config(), sufm::SufmConfig{}, opts);
  REQUIRE(result.log.size() == 50);
  CHECK(result.log.back().loss < result.log.front().loss);
}

TEST_CASE("zero learning rate leaves the weights at initialization") {
  const Dataset ds = tiny_dataset(4, 22);
  AgmConfig cfg = tiny_config();
  AgmTrainOptions opts;
  opts.batch_size = 4;
  opts.iterations = 5;
  opts.optim.learning_rate = 0.0;
  opts.seed = 3;

  AgmModel reference(cfg, sufm::SufmConfig{}, mix_seed(3, 0x11));
  Checkpoint init = agm_to_checkpoint(reference, 0, 3);

  const AgmTrainResult result =
      train_agm(ds, all_indices(ds), cfg, sufm::SufmConfig{}, opts);
  for (const std::string& name : init.param_names)
    REQUIRE(init.blob_bytes(name) == result.checkpoint.blob_bytes(name));
}

TEST_CASE("identical seed and data give bit-identical checkpoints") {
  const Dataset ds = tiny_dataset(6, 23);
  AgmTrainOptions opts;
  opts.batch_size = 4;
  opts.iterations = 12;
  opts.seed = 5;
  const AgmTrainResult a =
      train_agm(ds, all_indices(ds), tiny_config(), sufm::SufmConfig{}, opts);
  const AgmTrainResult b =
      train_agm(ds, all_indices(ds), tiny_config(), sufm::SufmConfig{}, opts);
  REQUIRE(a.checkpoint.param_names == b.checkpoint.param_names);
  for (const std::string& name : a.checkpoint.param_names)
    REQUIRE(a.checkpoint.blob_bytes(name) == b.checkpoint.blob_bytes(name));
}

TEST_CASE("checkpoints round-trip through disk with identical predictions") {
  const Dataset ds = tiny_dataset(6, 24);
  AgmTrainOptions opts;
  opts.batch_size = 4;
  opts.iterations = 10;
  opts.seed = 6;
  AgmTrainResult result =
      train_agm(ds, all_indices(ds), tiny_config(), sufm::SufmConfig{}, opts);

  const fs::path path = fs::temp_directory_path() / "fasam_test_agm.ckpt";
  result.checkpoint.save(path.string());
  const Checkpoint loaded = Checkpoint::load(path.string());
  CHECK(loaded.iteration == result.checkpoint.iteration);

  AgmModel m1 = agm_from_checkpoint(result.checkpoint);
  AgmModel m2 = agm_from_checkpoint(loaded);
  const Tensor x = sample_to_tensor(ds.samples[0].image);
  const Tensor y1 = m1.forward(x, false, nullptr);
  const Tensor y2 = m2.forward(x, false, nullptr);
  REQUIRE(y1.v == y2.v);
}

TEST_CASE("prediction thresholding saturates and breaks ties to background") {
  AgmModel model(tiny_config(), sufm::SufmConfig{}, 31);
  nn::ParamList params = model.params();
  for (auto& p : params) {
    if (p.name == "head.w") p.value->fill(0.0);
    if (p.name == "head.b") p.value->fill(10.0);
  }
  Image img(32, 32, 0.5);
  CHECK(predict_mask(img, model).foreground_count() == 32 * 32);

  for (auto& p : params)
    if (p.name == "head.b") p.value->fill(-10.0);
  CHECK(predict_mask(img, model).foreground_count() == 0);

  // Logit exactly zero: probability 0.5 is not strictly above the threshold.
  for (auto& p : params)
    if (p.name == "head.b") p.value->fill(0.0);
  CHECK(predict_mask(img, model).foreground_count() == 0);
}

TEST_CASE("loss on a perfect prediction beats an all-background prediction") {
  const Dataset ds = tiny_dataset(1, 29);
  const Mask& gt = ds.samples[0].mask;
  Tensor y({1, 1, gt.h, gt.w});
  for (std::size_t i = 0; i < gt.v.size(); ++i) y.v[i] = gt.v[i] ? 1.0 : 0.0;
  Tensor perfect = y;
  for (double& v : perfect.v) v = v > 0.5 ? 0.999 : 0.001;
  const Tensor background(y.shape, 0.001);
  CHECK(combined_loss(perfect, y).total < combined_loss(background, y).total);
}

TEST_CASE("training rejects empty datasets and non-binary masks") {
  const Dataset empty;
  AgmTrainOptions opts;
  CHECK_THROWS_AS(
      train_agm(empty, {}, tiny_config(), sufm::SufmConfig{}, opts),
      ConfigError);

  Dataset bad = tiny_dataset(2, 25);
  bad.samples[0].mask.v[5] = 7;
  CHECK_THROWS_AS(train_agm(bad, all_indices(bad), tiny_config(),
                            sufm::SufmConfig{}, opts),
                  InvalidInputError);
}

TEST_CASE("divergence reporting carries the iteration index") {
  const DivergenceError err("x: non-finite loss", 17);
  CHECK(err.iteration() == 17);
  CHECK(std::string(err.what()).find("17") != std::string::npos);
}

TEST_CASE("config validation rejects bad slots, sizes, and inputs") {
  AgmConfig cfg = tiny_config();
  cfg.sufm_positions = {9};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.input_h = 30;  // not divisible by the downsampling factor
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  AgmModel model(cfg, sufm::SufmConfig{}, 1);
  RngStream rng(1);
  const Tensor wrong = testutil::random_tensor({1, 1, 16, 16}, rng);
  CHECK_THROWS_AS(model.forward(wrong, false, nullptr), InvalidInputError);
}

TEST_CASE("checkpoint snapshot restores the configuration") {
  AgmConfig cfg = tiny_config();
  sufm::SufmConfig sc;
  sc.noise_mode = sufm::NoiseMode::kPoisson;
  sc.apply_probability = 0.25;
  AgmModel model(cfg, sc, 3);
  Checkpoint ckpt = agm_to_checkpoint(model, 42, 9);
  AgmModel back = agm_from_checkpoint(ckpt);
  CHECK(back.config().encoder_channels == cfg.encoder_channels);
  CHECK(back.config().sufm_positions == cfg.sufm_positions);
  CHECK(back.sufm_config().noise_mode == sufm::NoiseMode::kPoisson);
  CHECK(back.sufm_config().apply_probability == doctest::Approx(0.25));
}
