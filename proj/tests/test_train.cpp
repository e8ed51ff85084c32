#include "fixtures.hpp"

#include "nanet/error.hpp"
#include "nanet/train.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

using namespace nanet;
using namespace nanet::testing;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path &p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

fs::path scratch(const std::string &name) {
  auto p = fs::temp_directory_path() / ("nanet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const DatasetManifest &manifest() {
  static const auto m = load_manifest(small_dataset());
  return m;
}

} // namespace

TEST(Train, LossDropsWithinOneEpochOnSubset) {
  auto cfg = tiny_config(4);
  cfg.max_train_items = 16;
  cfg.batch_size = 4;
  const auto result = train(manifest(), small_dataset(), cfg);
  ASSERT_EQ(result.history.size(), 1u);
  EXPECT_LT(result.history[0].total, result.history[0].first_batch_total);
  EXPECT_GT(result.history[0].mse, 0.0);
}

TEST(Train, SameSeedIsBitIdentical) {
  auto cfg = tiny_config(5);
  cfg.epochs = 2;
  const auto dir = scratch("train_det");
  const auto a = train(manifest(), small_dataset(), cfg);
  const auto b = train(manifest(), small_dataset(), cfg);
  save_checkpoint(a.checkpoint, dir / "a.ckpt");
  save_checkpoint(b.checkpoint, dir / "b.ckpt");
  EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
  ASSERT_EQ(a.history.size(), 2u);
  EXPECT_EQ(a.history[1].total, b.history[1].total);
  fs::remove_all(dir);
}

TEST(Train, ClassifierOnlyHasNoMse) {
  auto cfg = tiny_config(6);
  cfg.mode = Mode::ClassifierOnly;
  const auto r = train(manifest(), small_dataset(), cfg);
  EXPECT_FALSE(r.checkpoint.params.has_autoencoder);
  for (const auto &s : r.history) {
    EXPECT_EQ(s.mse, 0.0);
    EXPECT_EQ(s.total, s.ce);
  }
}

TEST(Train, EpochCallbackFires) {
  auto cfg = tiny_config(7);
  cfg.epochs = 2;
  cfg.max_train_items = 8;
  std::vector<int> epochs;
  train(manifest(), small_dataset(), cfg, [&](int e, const EpochStats &) { epochs.push_back(e); });
  EXPECT_EQ(epochs, (std::vector<int>{0, 1}));
}

TEST(Train, RejectsNoisyTrainingItems) {
  auto m = manifest();
  m.items.push_back({'A', 0, Split::Train, Condition::Gaussian, "gaussian/A/0.png"});
  EXPECT_THROW(train(m, small_dataset(), tiny_config()), InvalidSpec);
}

TEST(Train, NonFiniteLossIsReported) {
  auto cfg = tiny_config(8);
  cfg.lr = 1e30;
  cfg.epochs = 3;
  EXPECT_THROW(train(manifest(), small_dataset(), cfg), NonFiniteValue);
}

TEST(Evaluate, ReportStructureAndDeterminism) {
  const auto ckpt = train(manifest(), small_dataset(), tiny_config(9)).checkpoint;
  const auto a = evaluate(ckpt, manifest(), small_dataset(), kAllConditions);
  const auto b = evaluate(ckpt, manifest(), small_dataset(), kAllConditions);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  ASSERT_EQ(a.conditions.size(), 4u);
  EXPECT_EQ(a.get(Condition::Clean).confusion.total(), 26);
  EXPECT_FALSE(a.get(Condition::Clean).psnr_noisy.has_value());
  for (auto c : kNoisyConditions) {
    const auto &r = a.get(c);
    EXPECT_EQ(r.confusion.total(), 26);
    ASSERT_TRUE(r.psnr_noisy.has_value());
    ASSERT_TRUE(r.psnr_denoised.has_value());
    EXPECT_GT(*r.psnr_noisy, 0.0);
  }
  const auto j = to_json(a);
  EXPECT_EQ(j.begin().key(), "clean");
  for (const char *key : {"confusion", "accuracy", "precision", "recall", "f1", "psnr_denoised", "psnr_noisy"})
    EXPECT_TRUE(j["gaussian"].contains(key)) << key;
}

TEST(Evaluate, ReloadedCheckpointGivesSameReport) {
  const auto ckpt = train(manifest(), small_dataset(), tiny_config(10)).checkpoint;
  const auto dir = scratch("eval_reload");
  save_checkpoint(ckpt, dir / "m.ckpt");
  const auto back = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(to_json(evaluate(ckpt, manifest(), small_dataset(), kAllConditions)).dump(),
            to_json(evaluate(back, manifest(), small_dataset(), kAllConditions)).dump());
  fs::remove_all(dir);
}

TEST(Evaluate, MissingConditionIsMissingSplit) {
  auto m = manifest();
  std::erase_if(m.items, [](const ManifestItem &it) { return it.condition == Condition::Uniform; });
  const auto ckpt = train(manifest(), small_dataset(), tiny_config(11)).checkpoint;
  const std::array<Condition, 1> uniform{Condition::Uniform};
  EXPECT_THROW(evaluate(ckpt, m, small_dataset(), uniform), MissingSplit);
}

TEST(Evaluate, ClassifierOnlyHasNoDenoisedPsnr) {
  auto cfg = tiny_config(12);
  cfg.mode = Mode::ClassifierOnly;
  const auto ckpt = train(manifest(), small_dataset(), cfg).checkpoint;
  const auto r = evaluate(ckpt, manifest(), small_dataset(), kNoisyConditions);
  for (const auto &c : r.conditions) {
    EXPECT_TRUE(c.psnr_noisy.has_value());
    EXPECT_FALSE(c.psnr_denoised.has_value());
  }
  EXPECT_TRUE(to_json(r)["uniform"]["psnr_denoised"].is_null());
}

TEST(GradCam, ContractOnTrainedModel) {
  const auto ckpt = train(manifest(), small_dataset(), tiny_config(13)).checkpoint;
  const auto image = read_png(small_dataset() / manifest().items.front().path);
  for (std::optional<int> target : {std::optional<int>{}, std::optional<int>{0}, std::optional<int>{25}}) {
    const auto heat = grad_cam(ckpt, image, target);
    EXPECT_EQ(heat.height(), image.height());
    EXPECT_EQ(heat.width(), image.width());
    for (float v : heat.values()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
  EXPECT_THROW(grad_cam(ckpt, image, 26), InvalidLabel);
  // Parameters come back without gradient slots.
  for (const auto &e : ckpt.params.entries)
    EXPECT_FALSE(e.tensor.has_grad()) << e.name;
}

TEST(GradCam, ZeroGradientGivesZeroMap) {
  auto ckpt = train(manifest(), small_dataset(), tiny_config(14)).checkpoint;
  auto fc3 = ckpt.params.get("cls.fc3.weight");
  std::fill(fc3.mutable_values().begin(), fc3.mutable_values().end(), 0.0f);
  const auto image = read_png(small_dataset() / manifest().items.front().path);
  const auto heat = grad_cam(ckpt, image, 3);
  EXPECT_EQ(heat.height(), image.height());
  for (float v : heat.values())
    ASSERT_EQ(v, 0.0f);
}

TEST(ExportDenoised, WritesEveryTestItem) {
  const auto ckpt = train(manifest(), small_dataset(), tiny_config(15)).checkpoint;
  const auto out = scratch("export");
  const std::array<Condition, 2> conds{Condition::Gaussian, Condition::Clean};
  const auto n = export_denoised(ckpt, manifest(), small_dataset(), conds, out);
  EXPECT_EQ(n, 52u);
  for (auto c : conds)
    for (const auto &it : manifest().select(Split::Test, c)) {
      const auto p = out / it.path;
      ASSERT_TRUE(fs::exists(p)) << p;
      const auto img = read_png(p);
      EXPECT_EQ(img.height(), 32);
    }
  EXPECT_EQ(load_manifest(out).items.size(), 52u);
  fs::remove_all(out);

  auto cfg = tiny_config(16);
  cfg.mode = Mode::ClassifierOnly;
  const auto plain = train(manifest(), small_dataset(), cfg).checkpoint;
  EXPECT_THROW(export_denoised(plain, manifest(), small_dataset(), conds, scratch("export2")), InvalidCheckpoint);
}

TEST(Batching, RoundTrip) {
  ImageBuffer a(4, 4, 0.25f), b(4, 4, 0.75f);
  const std::array<ImageBuffer, 2> imgs{a, b};
  const auto t = to_batch(imgs);
  EXPECT_EQ(t.shape(), (tensor::Shape{2, 1, 4, 4}));
  EXPECT_EQ(image_from_batch(t, 1), b);
  const std::array<ImageBuffer, 2> mixed{a, ImageBuffer(4, 5)};
  EXPECT_THROW(to_batch(mixed), ShapeMismatch);
}
