#include <filesystem>

#include "doctest.h"
#include "fasam/config.hpp"
#include "fasam/data.hpp"
#include "fasam/error.hpp"
#include "fasam/losses.hpp"
#include "fasam/segmenter.hpp"
#include "test_util.hpp"

using namespace fasam;
namespace fs = std::filesystem;

namespace {

SegmenterConfig tiny_config(int input = 32) {
  SegmenterConfig cfg;
  cfg.input_size = input;
  cfg.base_channels = 2;
  cfg.tap_channels = {8, 4, 2};
  cfg.prompt_dim = 4;
  cfg.ipef.se_reduction = 2;
  cfg.ipef.fused_channels = {4, 4, 4};
  return cfg;
}

Tensor image_batch(int b, int size, RngStream& rng) {
  return testutil::random_tensor({b, 1, size, size}, rng, 0.0, 1.0);
}

Tensor prompt_rows(SegmenterModel& model, const BoundingBoxPrompt& box, int b) {
  const SegmenterConfig& cfg = model.config();
  const Tensor e = model.encode_prompt(box, cfg.input_size, cfg.input_size);
  Tensor rows({b, cfg.prompt_dim});
  for (int i = 0; i < b; ++i)
    std::copy(e.v.begin(), e.v.end(),
              rows.v.begin() + static_cast<long>(i) * cfg.prompt_dim);
  return rows;
}

}  // namespace

TEST_CASE("image embeddings honor the channel and spatial contracts") {
  for (const int size : {32, 64, 128}) {
    SegmenterConfig cfg = tiny_config(size);
    SegmenterModel model(cfg, 1);
    RngStream rng(2);
    const Tensor x = image_batch(1, size, rng);
    const MultiScaleEmbeddings e = model.encode_image(x);
    const int s = size / 16;
    CHECK(e.coarse.shape == std::vector<int>{1, 8, s, s});
    CHECK(e.mid.shape == std::vector<int>{1, 4, 2 * s, 2 * s});
    CHECK(e.fine.shape == std::vector<int>{1, 2, 4 * s, 4 * s});
  }
}

TEST_CASE("identical images give identical embeddings; different images differ") {
  SegmenterModel model(tiny_config(), 3);
  const Tensor zeros({1, 1, 32, 32}, 0.0);
  const Tensor ones({1, 1, 32, 32}, 1.0);
  const MultiScaleEmbeddings a = model.encode_image(zeros);
  const MultiScaleEmbeddings b = model.encode_image(zeros);
  REQUIRE(a.coarse.v == b.coarse.v);
  REQUIRE(a.fine.v == b.fine.v);
  const MultiScaleEmbeddings c = model.encode_image(ones);
  CHECK(a.coarse.v != c.coarse.v);
}

TEST_CASE("resolution mismatches are rejected") {
  SegmenterModel model(tiny_config(), 4);
  RngStream rng(5);
  const Tensor wrong = image_batch(1, 64, rng);
  CHECK_THROWS_AS(model.encode_image(wrong), InvalidInputError);
}

TEST_CASE("prompt encoding is deterministic and separates boxes") {
  SegmenterModel model(tiny_config(), 6);
  const BoundingBoxPrompt a{2, 2, 10, 10};
  const BoundingBoxPrompt b{20, 20, 30, 30};
  const Tensor ea = model.encode_prompt(a, 32, 32);
  const Tensor ea2 = model.encode_prompt(a, 32, 32);
  REQUIRE(ea.v == ea2.v);
  const Tensor eb = model.encode_prompt(b, 32, 32);
  CHECK(ea.v != eb.v);

  const Tensor anchor = model.no_localization_embedding();
  const Tensor full = model.encode_prompt({0, 0, 31, 31}, 32, 32);
  REQUIRE(anchor.v == full.v);

  CHECK_THROWS_AS(model.encode_prompt({0, 0, 40, 10}, 32, 32),
                  InvalidInputError);
}

TEST_CASE("fusion output shape matches the configuration") {
  SegmenterConfig cfg = tiny_config();
  SegmenterModel model(cfg, 7);
  RngStream rng(8);
  const Tensor x = image_batch(2, 32, rng);
  const MultiScaleEmbeddings e = model.encode_image(x);
  const Tensor prompts = prompt_rows(model, {1, 1, 20, 20}, 2);
  const Tensor fused = model.ipef_fuse(e, prompts);
  CHECK(fused.shape == std::vector<int>{2, 4, 8, 8});
  const Tensor logits = model.decode_mask(fused, 32);
  CHECK(logits.shape == std::vector<int>{2, 1, 32, 32});
}

TEST_CASE("without skip connections the finer taps are ignored") {
  SegmenterConfig cfg = tiny_config();
  cfg.ipef.skip_connections = false;
  SegmenterModel model(cfg, 9);
  RngStream rng(10);
  const Tensor x = image_batch(1, 32, rng);
  MultiScaleEmbeddings e = model.encode_image(x);
  const Tensor prompts = prompt_rows(model, {0, 0, 15, 15}, 1);
  const Tensor base = model.ipef_fuse(e, prompts);
  e.mid.fill(7.0);
  e.fine.fill(-3.0);
  const Tensor poked = model.ipef_fuse(e, prompts);
  REQUIRE(base.v == poked.v);
}

TEST_CASE("with skip connections the finer taps change the output") {
  SegmenterModel model(tiny_config(), 9);
  RngStream rng(11);
  const Tensor x = image_batch(1, 32, rng);
  MultiScaleEmbeddings e = model.encode_image(x);
  const Tensor prompts = prompt_rows(model, {0, 0, 15, 15}, 1);
  const Tensor base = model.ipef_fuse(e, prompts);
  e.fine.fill(-3.0);
  const Tensor poked = model.ipef_fuse(e, prompts);
  CHECK(base.v != poked.v);
}

TEST_CASE("decoding is deterministic and a zero map yields a constant response") {
  SegmenterModel model(tiny_config(), 12);
  const Tensor zeros({1, 4, 8, 8}, 0.0);
  const Tensor a = model.decode_mask(zeros, 32);
  const Tensor b = model.decode_mask(zeros, 32);
  REQUIRE(a.v == b.v);
  for (std::size_t i = 1; i < a.size(); ++i)
    CHECK(a.v[i] == doctest::Approx(a.v[0]).epsilon(1e-12));
  CHECK_THROWS_AS(model.decode_mask(zeros, 64), InvalidInputError);
}

TEST_CASE("segment is total and deterministic") {
  SegmenterModel model(tiny_config(), 13);
  Image img(32, 32, 0.0);
  const Mask m1 = segment(img, {0, 0, 31, 31}, model);
  const Mask m2 = segment(img, {0, 0, 31, 31}, model);
  REQUIRE(m1.v == m2.v);
  CHECK(m1.h == 32);
  CHECK(m1.w == 32);
}

TEST_CASE("decoder and fusion gradients match central finite differences") {
  SegmenterConfig cfg = tiny_config();  // tap channels (8, 4, 2)
  SegmenterModel model(cfg, 14);
  RngStream rng(15);
  const Tensor x = image_batch(2, 32, rng);
  const MultiScaleEmbeddings e = model.encode_image(x);
  const Tensor prompts = prompt_rows(model, {3, 3, 25, 25}, 2);

  auto forward = [&] { return model.decode_mask(model.ipef_fuse(e, prompts), 32); };
  const Tensor y0 = forward();
  testutil::LossProbe probe(y0.shape);
  model.zero_grad();
  forward();
  model.backward(probe.grad());

  nn::ParamList params = model.decoder_params();
  auto eval = [&] { return probe(forward()); };
  RngStream pick(16);
  int checked = 0;
  while (checked < 24) {
    auto& p = params[static_cast<std::size_t>(pick.uniform_int(
        static_cast<int>(params.size())))];
    const auto i = static_cast<std::size_t>(pick.uniform_int(
        static_cast<int>(p.value->size())));
    const double fd = testutil::central_diff(eval, &p.value->v[i]);
    REQUIRE(testutil::grad_close(fd, p.grad->v[i], 1e-3));
    ++checked;
  }
}

TEST_CASE("finetuning updates only the decoder side") {
  Dataset ds;
  ds.samples = generate_synthetic_domain(
      6, DomainStyle{0.0, 1.0, 0.02, 0.0, 0.05}, ShapeFamily::kDisk, 32, 32, 44,
      "src");
  SegmenterModel model(tiny_config(), 17);

  Checkpoint before = segmenter_to_checkpoint(model, 0, 0);

  std::vector<FinetuneSample> samples;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto box = bbox_from_mask(ds.samples[i].mask, 0);
    REQUIRE(box.has_value());
    samples.push_back({i, *box});
  }
  FinetuneOptions opts;
  opts.batch_size = 3;
  opts.iterations = 8;
  opts.seed = 2;
  const FinetuneResult result = finetune_decoder(ds, samples, model, opts);

  // Frozen side: bit-identical. Trainable side: actually moved.
  nn::ParamList frozen = model.encoder_params();
  for (auto& p : frozen)
    REQUIRE(before.blob_bytes(p.name) == result.checkpoint.blob_bytes(p.name));
  bool moved = false;
  for (auto& p : model.decoder_params())
    if (before.blob_bytes(p.name) != result.checkpoint.blob_bytes(p.name))
      moved = true;
  CHECK(moved);
  CHECK(result.log.size() == 8);
}

TEST_CASE("a zero learning rate changes nothing at all") {
  Dataset ds;
  ds.samples = generate_synthetic_domain(
      4, DomainStyle{0.0, 1.0, 0.02, 0.0, 0.05}, ShapeFamily::kDisk, 32, 32, 45,
      "src");
  SegmenterModel model(tiny_config(), 18);
  Checkpoint before = segmenter_to_checkpoint(model, 0, 0);

  std::vector<FinetuneSample> samples;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    samples.push_back({i, *bbox_from_mask(ds.samples[i].mask, 0)});
  FinetuneOptions opts;
  opts.batch_size = 2;
  opts.iterations = 4;
  opts.optim.learning_rate = 0.0;
  const FinetuneResult result = finetune_decoder(ds, samples, model, opts);
  for (const std::string& name : before.param_names)
    REQUIRE(before.blob_bytes(name) == result.checkpoint.blob_bytes(name));
}

TEST_CASE("a short finetune lowers the stage-2 loss") {
  Dataset ds;
  ds.samples = generate_synthetic_domain(
      16, DomainStyle{0.0, 1.0, 0.02, 0.0, 0.05}, ShapeFamily::kDisk, 32, 32,
      46, "src");
  SegmenterModel model(tiny_config(), 19);
  std::vector<FinetuneSample> samples;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    samples.push_back({i, *bbox_from_mask(ds.samples[i].mask, 0)});
  FinetuneOptions opts;
  opts.batch_size = 4;
  opts.iterations = 100;
  opts.seed = 3;
  const FinetuneResult result = finetune_decoder(ds, samples, model, opts);
  CHECK(result.log.back().loss < result.log.front().loss);
}

TEST_CASE("segmenter checkpoints round-trip with identical masks") {
  SegmenterConfig cfg = tiny_config();
  SegmenterModel model(cfg, 20);
  const fs::path path = fs::temp_directory_path() / "fasam_test_seg.ckpt";
  segmenter_to_checkpoint(model, 5, 6).save(path.string());
  SegmenterModel back = segmenter_from_checkpoint(Checkpoint::load(path.string()));

  Image img(32, 32);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c) img.at(r, c) = (r + c) / 64.0;
  const BoundingBoxPrompt box{4, 4, 20, 20};
  REQUIRE(segment(img, box, model).v == segment(img, box, back).v);
}

TEST_CASE("upsample mode transposed is accepted and shape-stable") {
  SegmenterConfig cfg = tiny_config();
  cfg.ipef.upsample_mode = UpsampleMode::kTransposed;
  SegmenterModel model(cfg, 21);
  RngStream rng(22);
  const Tensor x = image_batch(1, 32, rng);
  const Tensor prompts = prompt_rows(model, {2, 2, 20, 20}, 1);
  const Tensor logits = model.forward(x, prompts);
  CHECK(logits.shape == std::vector<int>{1, 1, 32, 32});
}

TEST_CASE("ipef config validation enforces the reduction divisibility") {
  SegmenterConfig cfg = tiny_config();
  cfg.ipef.se_reduction = 3;  // does not divide 4
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.tap_channels = {8, 9, 2};  // not strictly decreasing
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.input_size = 40;  // not a multiple of 16
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("box rescaling maps between native and model grids") {
  const BoundingBoxPrompt box{10, 20, 29, 39};
  const BoundingBoxPrompt half = rescale_box(box, 64, 64, 32, 32);
  CHECK(half == BoundingBoxPrompt{5, 10, 14, 19});
  const BoundingBoxPrompt same = rescale_box(box, 64, 64, 64, 64);
  CHECK(same == box);
}
