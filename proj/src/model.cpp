#include "nanet/model.hpp"

#include "nanet/error.hpp"
#include "nanet/tensor/ops.hpp"

#include <algorithm>
#include <cmath>

namespace nanet {

using tensor::Shape;
namespace T = nanet::tensor;

void AutoencoderConfig::validate() const {
  if (in_channels < 1 || bottleneck_channels < 1 || stage_channels.empty())
    throw InvalidSpec("autoencoder needs at least one stage and positive channel counts");
  if (std::any_of(stage_channels.begin(), stage_channels.end(), [](int c) { return c < 1; }))
    throw InvalidSpec("autoencoder stage channels must be positive");
  if (stage_channels.size() > 8)
    throw InvalidSpec("autoencoder depth limited to 8 stages");
}

void ClassifierConfig::validate() const {
  if (in_channels < 1)
    throw InvalidSpec("classifier input channels must be positive");
  auto sorted = kernels;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != std::array<int, 6>{3, 3, 3, 3, 5, 11})
    throw InvalidSpec("classifier kernels must be one 11x11, one 5x5 and four 3x3");
  for (int i = 0; i < 6; ++i)
    if (channels[i] < 1 || strides[i] < 1 || pads[i] < 0)
      throw InvalidSpec("classifier conv layer " + std::to_string(i + 1) + " is malformed");
  if (pool_kernel < 1 || pool_stride < 1 || adaptive_size < 1)
    throw InvalidSpec("classifier pooling parameters must be positive");
  if (fc_dims[0] < 1 || fc_dims[1] < 1 || fc_dims[2] != 26)
    throw InvalidSpec("classifier must end in exactly 26 scores");
  if (dropout < 0.0 || dropout >= 1.0)
    throw InvalidSpec("dropout probability must lie in [0,1)");
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const AutoencoderConfig &ae,
                                                            const ClassifierConfig &cls,
                                                            bool with_autoencoder) {
  ae.validate();
  cls.validate();
  std::vector<std::pair<std::string, Shape>> out;
  auto conv = [&](const std::string &name, int cin, int cout, int k) {
    out.push_back({name + ".weight", {std::size_t(cout), std::size_t(cin), std::size_t(k), std::size_t(k)}});
    out.push_back({name + ".bias", {std::size_t(cout)}});
  };

  if (with_autoencoder) {
    int c = ae.in_channels;
    for (std::size_t i = 0; i < ae.stage_channels.size(); ++i) {
      const std::string stage = "ae.enc" + std::to_string(i);
      conv(stage + ".conv1", c, ae.stage_channels[i], 3);
      conv(stage + ".conv2", ae.stage_channels[i], ae.stage_channels[i], 3);
      c = ae.stage_channels[i];
    }
    conv("ae.bottleneck.conv1", c, ae.bottleneck_channels, 3);
    conv("ae.bottleneck.conv2", ae.bottleneck_channels, ae.bottleneck_channels, 3);
    c = ae.bottleneck_channels;
    for (std::size_t i = 0; i < ae.stage_channels.size(); ++i) {
      const int skip = ae.stage_channels[ae.stage_channels.size() - 1 - i];
      const std::string stage = "ae.dec" + std::to_string(i);
      // transposed conv weight is (in, out, k, k)
      out.push_back({stage + ".up.weight", {std::size_t(c), std::size_t(skip), 2, 2}});
      out.push_back({stage + ".up.bias", {std::size_t(skip)}});
      conv(stage + ".conv1", 2 * skip, skip, 3);
      conv(stage + ".conv2", skip, skip, 3);
      c = skip;
    }
    conv("ae.head", c, ae.in_channels, 1);
  }

  int c = cls.in_channels;
  for (int i = 0; i < 6; ++i) {
    conv("cls.conv" + std::to_string(i + 1), c, cls.channels[i], cls.kernels[i]);
    c = cls.channels[i];
  }
  int features = c * cls.adaptive_size * cls.adaptive_size;
  for (int i = 0; i < 3; ++i) {
    const std::string name = "cls.fc" + std::to_string(i + 1);
    out.push_back({name + ".weight", {std::size_t(cls.fc_dims[i]), std::size_t(features)}});
    out.push_back({name + ".bias", {std::size_t(cls.fc_dims[i])}});
    features = cls.fc_dims[i];
  }
  return out;
}

NanetParams init_params(const AutoencoderConfig &ae, const ClassifierConfig &cls,
                        std::uint64_t seed, bool with_autoencoder) {
  NanetParams p;
  p.ae = ae;
  p.cls = cls;
  p.has_autoencoder = with_autoencoder;
  Rng rng(hash_key({seed, 0x1417ULL}));
  for (auto &[name, shape] : parameter_layout(ae, cls, with_autoencoder)) {
    Tensorf t(shape, 0.0f);
    if (shape.size() > 1) {
      // (out, in, k, k) for conv and linear; transposed conv uses the same
      // dim-1 convention, as in common frameworks
      std::size_t fan_in = shape[1];
      for (std::size_t d = 2; d < shape.size(); ++d)
        fan_in *= shape[d];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (auto &v : t.mutable_values())
        v = static_cast<float>(rng.uniform(-bound, bound));
    }
    t.set_requires_grad(true);
    p.entries.push_back({name, std::move(t)});
  }
  return p;
}

const Tensorf &NanetParams::get(const std::string &name) const {
  for (const auto &e : entries)
    if (e.name == name)
      return e.tensor;
  throw InvalidCheckpoint("missing parameter " + name);
}

bool NanetParams::contains(const std::string &name) const {
  return std::any_of(entries.begin(), entries.end(), [&](const auto &e) { return e.name == name; });
}

std::vector<Tensorf> NanetParams::tensors() const { return tensors_with_prefix(""); }

std::vector<Tensorf> NanetParams::tensors_with_prefix(const std::string &prefix) const {
  std::vector<Tensorf> out;
  for (const auto &e : entries)
    if (e.name.starts_with(prefix))
      out.push_back(e.tensor);
  return out;
}

std::size_t NanetParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto &e : entries)
    n += e.tensor.numel();
  return n;
}

NanetParams NanetParams::clone() const {
  NanetParams p;
  p.ae = ae;
  p.cls = cls;
  p.has_autoencoder = has_autoencoder;
  for (const auto &e : entries) {
    Tensorf t = e.tensor.detach();
    t.set_requires_grad(e.tensor.requires_grad());
    p.entries.push_back({e.name, std::move(t)});
  }
  return p;
}

namespace {

Tensorf conv_relu(const NanetParams &p, const std::string &name, const Tensorf &x,
                  std::size_t stride, std::size_t pad) {
  return T::relu(T::conv2d(x, p.get(name + ".weight"), p.get(name + ".bias"), stride, pad));
}

} // namespace

Tensorf forward_autoencoder(const NanetParams &params, const Tensorf &batch) {
  if (!params.has_autoencoder)
    throw InvalidCheckpoint("parameters carry no autoencoder");
  const auto &cfg = params.ae;
  if (batch.rank() != 4 || batch.dim(1) != static_cast<std::size_t>(cfg.in_channels))
    throw ShapeMismatch("autoencoder expects (N," + std::to_string(cfg.in_channels) +
                        ",H,W), got " + tensor::shape_str(batch.shape()));
  const auto div = static_cast<std::size_t>(cfg.divisor());
  if (batch.dim(2) == 0 || batch.dim(3) == 0 || batch.dim(2) % div || batch.dim(3) % div)
    throw ShapeMismatch("autoencoder input spatial dims must be multiples of " +
                        std::to_string(div) + ", got " + tensor::shape_str(batch.shape()));

  const std::size_t stages = cfg.stage_channels.size();
  std::vector<Tensorf> skips;
  Tensorf x = batch;
  for (std::size_t i = 0; i < stages; ++i) {
    const std::string stage = "ae.enc" + std::to_string(i);
    x = conv_relu(params, stage + ".conv1", x, 1, 1);
    x = conv_relu(params, stage + ".conv2", x, 1, 1);
    skips.push_back(x);
    x = T::max_pool2d(x, 2, 2);
  }
  x = conv_relu(params, "ae.bottleneck.conv1", x, 1, 1);
  x = conv_relu(params, "ae.bottleneck.conv2", x, 1, 1);
  for (std::size_t i = 0; i < stages; ++i) {
    const std::string stage = "ae.dec" + std::to_string(i);
    x = T::conv_transpose2d(x, params.get(stage + ".up.weight"), params.get(stage + ".up.bias"), 2);
    x = T::concat_channels(skips[stages - 1 - i], x);
    x = conv_relu(params, stage + ".conv1", x, 1, 1);
    x = conv_relu(params, stage + ".conv2", x, 1, 1);
  }
  return T::sigmoid(T::conv2d(x, params.get("ae.head.weight"), params.get("ae.head.bias"), 1, 0));
}

ClassifierOutput forward_classifier(const NanetParams &params, const Tensorf &batch, bool training,
                                    Rng &rng) {
  const auto &cfg = params.cls;
  if (batch.rank() != 4 || batch.dim(1) != static_cast<std::size_t>(cfg.in_channels))
    throw ShapeMismatch("classifier expects (N," + std::to_string(cfg.in_channels) +
                        ",H,W), got " + tensor::shape_str(batch.shape()));
  ClassifierOutput out;
  Tensorf x = batch;
  for (int i = 0; i < 6; ++i) {
    x = conv_relu(params, "cls.conv" + std::to_string(i + 1), x,
                  static_cast<std::size_t>(cfg.strides[i]), static_cast<std::size_t>(cfg.pads[i]));
    if (i == 5)
      out.last_conv = x;
    if (cfg.pool_after[i])
      x = T::max_pool2d(x, static_cast<std::size_t>(cfg.pool_kernel),
                        static_cast<std::size_t>(cfg.pool_stride));
  }
  const auto a = static_cast<std::size_t>(cfg.adaptive_size);
  x = T::adaptive_avg_pool2d(x, a, a);
  x = T::reshape(x, {x.dim(0), x.dim(1) * a * a});
  x = T::dropout(x, cfg.dropout, training, rng);
  x = T::relu(T::linear(x, params.get("cls.fc1.weight"), params.get("cls.fc1.bias")));
  x = T::dropout(x, cfg.dropout, training, rng);
  x = T::relu(T::linear(x, params.get("cls.fc2.weight"), params.get("cls.fc2.bias")));
  out.logits = T::linear(x, params.get("cls.fc3.weight"), params.get("cls.fc3.bias"));
  return out;
}

std::string_view mode_name(Mode m) { return m == Mode::Nanet ? "nanet" : "classifier-only"; }

Mode parse_mode(std::string_view name) {
  if (name == "nanet")
    return Mode::Nanet;
  if (name == "classifier-only" || name == "classifier_only")
    return Mode::ClassifierOnly;
  throw InvalidSpec("unknown mode \"" + std::string(name) + "\"");
}

NanetOutput forward_nanet(const NanetParams &params, const Tensorf &batch, bool training, Rng &rng,
                          Mode mode) {
  NanetOutput out;
  if (mode == Mode::Nanet) {
    out.reconstruction = forward_autoencoder(params, batch);
    auto cls = forward_classifier(params, out.reconstruction, training, rng);
    out.logits = std::move(cls.logits);
    out.last_conv = std::move(cls.last_conv);
  } else {
    auto cls = forward_classifier(params, batch, training, rng);
    out.logits = std::move(cls.logits);
    out.last_conv = std::move(cls.last_conv);
  }
  return out;
}

nlohmann::ordered_json to_json(const AutoencoderConfig &c) {
  return {{"in_channels", c.in_channels},
          {"stage_channels", c.stage_channels},
          {"bottleneck_channels", c.bottleneck_channels}};
}

nlohmann::ordered_json to_json(const ClassifierConfig &c) {
  return {{"in_channels", c.in_channels}, {"channels", c.channels},
          {"kernels", c.kernels},         {"strides", c.strides},
          {"pads", c.pads},               {"pool_after", c.pool_after},
          {"pool_kernel", c.pool_kernel}, {"pool_stride", c.pool_stride},
          {"adaptive_size", c.adaptive_size}, {"fc_dims", c.fc_dims},
          {"dropout", c.dropout}};
}

AutoencoderConfig autoencoder_config_from_json(const nlohmann::json &j) {
  AutoencoderConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.stage_channels = j.at("stage_channels").get<std::vector<int>>();
  c.bottleneck_channels = j.at("bottleneck_channels").get<int>();
  c.validate();
  return c;
}

ClassifierConfig classifier_config_from_json(const nlohmann::json &j) {
  ClassifierConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.channels = j.at("channels").get<std::array<int, 6>>();
  c.kernels = j.at("kernels").get<std::array<int, 6>>();
  c.strides = j.at("strides").get<std::array<int, 6>>();
  c.pads = j.at("pads").get<std::array<int, 6>>();
  c.pool_after = j.at("pool_after").get<std::array<bool, 6>>();
  c.pool_kernel = j.at("pool_kernel").get<int>();
  c.pool_stride = j.at("pool_stride").get<int>();
  c.adaptive_size = j.at("adaptive_size").get<int>();
  c.fc_dims = j.at("fc_dims").get<std::array<int, 3>>();
  c.dropout = j.at("dropout").get<double>();
  c.validate();
  return c;
}

} // namespace nanet
