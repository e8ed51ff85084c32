#include "gradcheck.hpp"

#include "nanet/error.hpp"
#include "nanet/model.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

using namespace nanet;
using namespace nanet::tensor;
using nanet::testing::random_tensor;

namespace {

// Parameter count walked directly from the layer list, independent of
// parameter_layout().
std::size_t conv_params(std::size_t cin, std::size_t cout, std::size_t k) { return cout * cin * k * k + cout; }

std::size_t oracle_autoencoder_params(const AutoencoderConfig &ae) {
  std::size_t total = 0, c = static_cast<std::size_t>(ae.in_channels);
  for (int s : ae.stage_channels) {
    total += conv_params(c, s, 3) + conv_params(s, s, 3);
    c = s;
  }
  const std::size_t b = static_cast<std::size_t>(ae.bottleneck_channels);
  total += conv_params(c, b, 3) + conv_params(b, b, 3);
  c = b;
  for (auto it = ae.stage_channels.rbegin(); it != ae.stage_channels.rend(); ++it) {
    const std::size_t s = static_cast<std::size_t>(*it);
    total += c * s * 2 * 2 + s; // transposed conv
    total += conv_params(2 * s, s, 3) + conv_params(s, s, 3);
    c = s;
  }
  return total + conv_params(c, ae.in_channels, 1);
}

std::size_t oracle_classifier_params(const ClassifierConfig &cls) {
  std::size_t total = 0, c = static_cast<std::size_t>(cls.in_channels);
  for (int i = 0; i < 6; ++i) {
    total += conv_params(c, cls.channels[i], cls.kernels[i]);
    c = cls.channels[i];
  }
  std::size_t f = c * cls.adaptive_size * cls.adaptive_size;
  for (int d : cls.fc_dims) {
    total += f * d + d;
    f = d;
  }
  return total;
}

// Regression values computed once with the oracle above.
constexpr std::size_t kDefaultAutoencoderParams = 1925025;
constexpr std::size_t kDefaultClassifierParams = 25654106;

AutoencoderConfig toy_autoencoder() {
  AutoencoderConfig ae;
  ae.stage_channels = {2, 3};
  ae.bottleneck_channels = 4;
  return ae;
}

ClassifierConfig toy_classifier() {
  ClassifierConfig cls;
  cls.channels = {3, 4, 4, 4, 4, 4};
  cls.pool_after = {true, true, false, false, false, false};
  cls.adaptive_size = 2;
  cls.fc_dims = {8, 8, 26};
  return cls;
}

} // namespace

TEST(Model, ParameterCountMatchesOracle) {
  const AutoencoderConfig ae;
  const ClassifierConfig cls;
  EXPECT_EQ(oracle_autoencoder_params(ae), kDefaultAutoencoderParams);
  EXPECT_EQ(oracle_classifier_params(cls), kDefaultClassifierParams);
  const auto p = init_params(ae, cls, 1);
  EXPECT_EQ(p.scalar_count(), kDefaultAutoencoderParams + kDefaultClassifierParams);
  const auto c = init_params(ae, cls, 1, false);
  EXPECT_EQ(c.scalar_count(), kDefaultClassifierParams);
  const auto t = init_params(toy_autoencoder(), toy_classifier(), 1);
  EXPECT_EQ(t.scalar_count(),
            oracle_autoencoder_params(toy_autoencoder()) + oracle_classifier_params(toy_classifier()));
}

TEST(Model, InitIsDeterministic) {
  const auto a = init_params(toy_autoencoder(), toy_classifier(), 42);
  const auto b = init_params(toy_autoencoder(), toy_classifier(), 42);
  const auto c = init_params(toy_autoencoder(), toy_classifier(), 43);
  ASSERT_EQ(a.entries.size(), b.entries.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].name, b.entries[i].name);
    const auto va = a.entries[i].tensor.values(), vb = b.entries[i].tensor.values();
    EXPECT_TRUE(std::equal(va.begin(), va.end(), vb.begin()));
    const auto vc = c.entries[i].tensor.values();
    differs |= !std::equal(va.begin(), va.end(), vc.begin());
  }
  EXPECT_TRUE(differs);
}

TEST(Model, BiasesZeroAndWeightScale) {
  const auto p = init_params(AutoencoderConfig{}, ClassifierConfig{}, 7);
  for (const auto &e : p.entries) {
    const auto v = e.tensor.values();
    if (e.name.ends_with(".bias")) {
      EXPECT_TRUE(std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; })) << e.name;
      continue;
    }
    const auto &s = e.tensor.shape();
    std::size_t fan_in = s[1];
    for (std::size_t d = 2; d < s.size(); ++d)
      fan_in *= s[d];
    if (fan_in < 1000)
      continue;
    double sum = 0, sq = 0;
    for (float x : v) {
      sum += x;
      sq += static_cast<double>(x) * x;
    }
    const double n = static_cast<double>(v.size());
    const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
    const double expected = std::sqrt(2.0 / static_cast<double>(fan_in));
    EXPECT_NEAR(sd, expected, 0.15 * expected) << e.name;
  }
}

TEST(Model, NineWeightLayersWithKernelMultiset) {
  const auto p = init_params(AutoencoderConfig{}, ClassifierConfig{}, 1, false);
  std::map<std::size_t, int> kernels;
  int convs = 0, fcs = 0;
  for (const auto &e : p.entries) {
    if (!e.name.starts_with("cls.") || !e.name.ends_with(".weight"))
      continue;
    const auto &s = e.tensor.shape();
    if (s.size() == 4) {
      ++convs;
      EXPECT_EQ(s[2], s[3]);
      ++kernels[s[2]];
    } else {
      ++fcs;
    }
  }
  EXPECT_EQ(convs + fcs, 9);
  EXPECT_EQ(fcs, 3);
  EXPECT_EQ(kernels, (std::map<std::size_t, int>{{3, 4}, {5, 1}, {11, 1}}));
  EXPECT_EQ(p.get("cls.fc1.weight").shape(), (Shape{2048, 256 * 6 * 6}));
  EXPECT_EQ(p.get("cls.fc2.weight").shape(), (Shape{2048, 2048}));
  EXPECT_EQ(p.get("cls.fc3.weight").shape(), (Shape{26, 2048}));
  EXPECT_FALSE(p.contains("ae.head.weight"));
}

TEST(Model, ConfigValidation) {
  ClassifierConfig bad;
  bad.kernels = {11, 5, 3, 3, 3, 5};
  EXPECT_THROW(bad.validate(), InvalidSpec);
  ClassifierConfig bad_fc;
  bad_fc.fc_dims = {2048, 2048, 2048};
  EXPECT_THROW(bad_fc.validate(), InvalidSpec);
  AutoencoderConfig ae;
  ae.stage_channels.clear();
  EXPECT_THROW(ae.validate(), InvalidSpec);
}

class AutoencoderShape : public ::testing::TestWithParam<int> {};

TEST_P(AutoencoderShape, PreservesInputShape) {
  static const auto params = init_params(AutoencoderConfig{}, ClassifierConfig{}, 3);
  const std::size_t n = static_cast<std::size_t>(GetParam());
  Rng rng(n);
  NoGradGuard<float> guard;
  const auto x = random_tensor<float>({1, 1, n, n}, rng, 0, 1);
  const auto y = forward_autoencoder(params, x);
  EXPECT_EQ(y.shape(), x.shape());
  for (float v : y.values()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

INSTANTIATE_TEST_SUITE_P(Sizes, AutoencoderShape, ::testing::Values(32, 64, 96, 224));

TEST(Model, AutoencoderNonSquareAndBatch) {
  const auto params = init_params(toy_autoencoder(), toy_classifier(), 3);
  NoGradGuard<float> guard;
  const auto y = forward_autoencoder(params, Tensorf({3, 1, 16, 40}, 0.5f));
  EXPECT_EQ(y.shape(), (Shape{3, 1, 16, 40}));
  EXPECT_THROW(forward_autoencoder(params, Tensorf({1, 1, 18, 16})), ShapeMismatch);
}

TEST(Model, BottleneckIsEightByEightAt64) {
  const AutoencoderConfig ae;
  const auto p = init_params(ae, ClassifierConfig{}, 1);
  NoGradGuard<float> guard;
  // Replay the encoder path with the raw ops.
  Tensorf h({2, 1, 64, 64}, 0.5f);
  auto block = [&](const std::string &name, const Tensorf &x) {
    return relu(conv2d(x, p.get(name + ".weight"), p.get(name + ".bias"), 1, 1));
  };
  for (std::size_t i = 0; i < ae.stage_channels.size(); ++i) {
    const std::string stage = "ae.enc" + std::to_string(i);
    h = max_pool2d(block(stage + ".conv2", block(stage + ".conv1", h)), 2, 2);
  }
  h = block("ae.bottleneck.conv2", block("ae.bottleneck.conv1", h));
  EXPECT_EQ(h.shape(), (Shape{2, 256, 8, 8}));
  EXPECT_EQ(p.get("ae.dec0.up.weight").shape(), (Shape{256, 128, 2, 2}));
  EXPECT_EQ(forward_autoencoder(p, Tensorf({2, 1, 64, 64}, 0.5f)).shape(), (Shape{2, 1, 64, 64}));
}

TEST(Model, ClassifierEmits26Logits) {
  const auto p = init_params(AutoencoderConfig{}, ClassifierConfig{}, 4, false);
  Rng rng(1);
  NoGradGuard<float> guard;
  for (std::size_t n : {64u, 224u}) {
    const auto out = forward_classifier(p, Tensorf({2, 1, n, n}, 0.5f), false, rng);
    EXPECT_EQ(out.logits.shape(), (Shape{2, 26}));
    EXPECT_EQ(out.last_conv.dim(1), 256u);
  }
  const auto single = forward_classifier(p, Tensorf({1, 1, 64, 64}, 0.5f), false, rng);
  EXPECT_EQ(single.logits.shape(), (Shape{1, 26}));
}

TEST(Model, EvalModeIsDeterministic) {
  const auto p = init_params(toy_autoencoder(), toy_classifier(), 5);
  Rng data(9);
  const auto x = random_tensor<float>({2, 1, 32, 32}, data, 0, 1);
  Rng r1(1), r2(2);
  NoGradGuard<float> guard;
  const auto a = forward_nanet(p, x, false, r1);
  const auto b = forward_nanet(p, x, false, r2);
  EXPECT_TRUE(std::equal(a.logits.values().begin(), a.logits.values().end(), b.logits.values().begin()));
}

TEST(Model, TrainingModeUsesDropout) {
  auto cls = toy_classifier();
  cls.dropout = 0.5;
  const auto p = init_params(toy_autoencoder(), cls, 5);
  Rng data(9);
  const auto x = random_tensor<float>({2, 1, 32, 32}, data, 0, 1);
  Rng r1(1), r2(2);
  NoGradGuard<float> guard;
  const auto a = forward_nanet(p, x, true, r1);
  const auto b = forward_nanet(p, x, true, r2);
  EXPECT_FALSE(std::equal(a.logits.values().begin(), a.logits.values().end(), b.logits.values().begin()));
}

TEST(Model, NanetShapesAndModes) {
  const auto p = init_params(toy_autoencoder(), toy_classifier(), 6);
  Rng rng(1);
  NoGradGuard<float> guard;
  const auto out = forward_nanet(p, Tensorf({2, 1, 32, 32}, 0.5f), false, rng);
  EXPECT_EQ(out.reconstruction.shape(), (Shape{2, 1, 32, 32}));
  EXPECT_EQ(out.logits.shape(), (Shape{2, 26}));
  const auto plain = forward_nanet(p, Tensorf({2, 1, 32, 32}, 0.5f), false, rng, Mode::ClassifierOnly);
  EXPECT_FALSE(plain.reconstruction.defined());
  EXPECT_EQ(plain.logits.shape(), (Shape{2, 26}));

  const auto c_only = init_params(toy_autoencoder(), toy_classifier(), 6, false);
  EXPECT_THROW(forward_nanet(c_only, Tensorf({1, 1, 32, 32}), false, rng), InvalidCheckpoint);
}

// Classifier-only mode must match the classifier applied to the raw batch,
// NANet mode the classifier applied to the reconstruction.
TEST(Model, NanetComposesStages) {
  const auto p = init_params(toy_autoencoder(), toy_classifier(), 8);
  Rng data(2);
  const auto x = random_tensor<float>({1, 1, 32, 32}, data, 0, 1);
  Rng rng(1);
  NoGradGuard<float> guard;
  const auto out = forward_nanet(p, x, false, rng);
  const auto recon = forward_autoencoder(p, x);
  const auto direct = forward_classifier(p, recon, false, rng);
  EXPECT_TRUE(std::equal(out.logits.values().begin(), out.logits.values().end(), direct.logits.values().begin()));
}

TEST(Model, EndToEndFiniteDifferences) {
  auto cls = toy_classifier();
  cls.dropout = 0.0;
  const auto p = init_params(toy_autoencoder(), cls, 11);
  // Nonzero biases move pre-activations off the ReLU kink at exactly 0.
  Rng bias_rng(3);
  for (auto &e : p.entries)
    if (e.name.ends_with(".bias"))
      for (auto &v : e.tensor.storage()->values)
        v = static_cast<float>(bias_rng.uniform(-0.1, 0.1));
  Rng data(5);
  const auto x = random_tensor<float>({2, 1, 32, 32}, data, 0, 1);
  const std::vector<int> labels{3, 17};
  auto loss_of = [&] {
    Rng rng(0);
    const auto out = forward_nanet(p, x, true, rng);
    return total_loss(mse_loss(out.reconstruction, x), cross_entropy(out.logits, labels));
  };

  Tape<float>::current().clear();
  for (auto t : p.tensors())
    t.clear_grad();
  backward(loss_of());

  // Ten random scalars, drawn among components large enough for a float
  // central difference to resolve.
  {
    std::vector<std::pair<Tensorf, std::size_t>> candidates;
    for (auto t : p.tensors())
      if (t.has_grad())
        for (std::size_t i = 0; i < t.numel(); ++i)
          if (std::abs(t.grad()[i]) >= 1e-3f)
            candidates.emplace_back(t, i);
    ASSERT_GE(candidates.size(), 10u);
    Rng pick_rng(17);
    double diff2 = 0, ref2 = 0;
    for (int k = 0; k < 10; ++k) {
      auto [t, i] = candidates[pick_rng.below(candidates.size())];
      const double analytic = t.grad()[i];
      NoGradGuard<float> guard;
      auto v = t.mutable_values();
      const float orig = v[i];
      const float up = orig + 1e-3f, down = orig - 1e-3f;
      v[i] = up;
      const double fp = loss_of().item();
      v[i] = down;
      const double fm = loss_of().item();
      v[i] = orig;
      const double numeric = (fp - fm) / (static_cast<double>(up) - down);
      diff2 += (analytic - numeric) * (analytic - numeric);
      ref2 += std::max(analytic * analytic, numeric * numeric);
    }
    EXPECT_LE(std::sqrt(diff2 / ref2), 1e-2);
  }

  // Most autoencoder components sit near 1e-5, below what a float loss
  // difference resolves, so the scalars above come mostly from the classifier. Stepping each stage along its own
  // analytic gradient turns the check into d/de L(p + e g) = |g|^2, whose
  // signal scales with the whole stage.
  for (const std::string prefix : {"ae.", "cls."}) {
    std::vector<Tensorf> ts;
    std::vector<std::vector<float>> grads, orig;
    double g2 = 0;
    for (const auto &e : p.entries) {
      if (!e.name.starts_with(prefix) || !e.tensor.has_grad())
        continue;
      ts.push_back(e.tensor);
      grads.emplace_back(e.tensor.grad().begin(), e.tensor.grad().end());
      orig.emplace_back(e.tensor.values().begin(), e.tensor.values().end());
      for (float g : grads.back())
        g2 += static_cast<double>(g) * g;
    }
    ASSERT_GT(g2, 0.0) << prefix;
    NoGradGuard<float> guard;
    const double step = 1e-3 / std::sqrt(g2);
    auto shift = [&](double s) {
      for (std::size_t k = 0; k < ts.size(); ++k) {
        auto v = ts[k].mutable_values();
        for (std::size_t i = 0; i < v.size(); ++i)
          v[i] = static_cast<float>(orig[k][i] + s * grads[k][i]);
      }
    };
    shift(step);
    const double fp = loss_of().item();
    shift(-step);
    const double fm = loss_of().item();
    shift(0);
    const double numeric = (fp - fm) / (2 * step);
    EXPECT_LE(std::abs(numeric - g2) / g2, 1e-2) << prefix << " analytic " << g2 << " numeric " << numeric;
  }
}

TEST(Model, GradientsReachBothStages) {
  const auto p = init_params(toy_autoencoder(), toy_classifier(), 12);
  Rng data(5), rng(1);
  const auto x = random_tensor<float>({2, 1, 32, 32}, data, 0, 1);
  const std::vector<int> labels{0, 1};
  Tape<float>::current().clear();
  const auto out = forward_nanet(p, x, true, rng);
  backward(total_loss(mse_loss(out.reconstruction, x), cross_entropy(out.logits, labels)));
  auto nonzero = [](const Tensorf &t) {
    return t.has_grad() && std::any_of(t.grad().begin(), t.grad().end(), [](float g) { return g != 0.0f; });
  };
  EXPECT_TRUE(nonzero(p.get("ae.enc0.conv1.weight")));
  EXPECT_TRUE(nonzero(p.get("cls.conv1.weight")));
  EXPECT_TRUE(nonzero(p.get("cls.fc3.bias")));
}

TEST(Model, ConfigJsonRoundTrip) {
  const auto ae = toy_autoencoder();
  const auto cls = toy_classifier();
  EXPECT_EQ(autoencoder_config_from_json(nlohmann::json::parse(to_json(ae).dump())), ae);
  EXPECT_EQ(classifier_config_from_json(nlohmann::json::parse(to_json(cls).dump())), cls);
}
