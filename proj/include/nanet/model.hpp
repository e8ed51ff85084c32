#pragma once

#include "nanet/random.hpp"
#include "nanet/tensor/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace nanet {

using Tensorf = tensor::Tensor<float>;

/// U-shaped denoiser: per stage two 3x3 conv+ReLU then 2x2 max-pool; a
/// two-conv bottleneck; per decoder stage a 2x2 stride-2 transposed conv,
/// skip concatenation and two 3x3 conv+ReLU; 1x1 conv + sigmoid head.
struct AutoencoderConfig {
  int in_channels = 1;
  std::vector<int> stage_channels{32, 64, 128};
  int bottleneck_channels = 256;

  void validate() const;
  /// Spatial dims must be multiples of this (2^stages).
  int divisor() const { return 1 << stage_channels.size(); }
  bool operator==(const AutoencoderConfig &) const = default;
};

/// Six conv layers (kernel sizes 11, 5, 3, 3, 3, 3) with ReLU and optional
/// 3x3/2 max-pools, adaptive average pooling, then three fully connected
/// layers with dropout in front of the first two.
struct ClassifierConfig {
  int in_channels = 1;
  std::array<int, 6> channels{64, 192, 256, 256, 256, 256};
  std::array<int, 6> kernels{11, 5, 3, 3, 3, 3};
  std::array<int, 6> strides{4, 1, 1, 1, 1, 1};
  std::array<int, 6> pads{2, 2, 1, 1, 1, 1};
  std::array<bool, 6> pool_after{true, true, false, false, false, true};
  int pool_kernel = 3;
  int pool_stride = 2;
  int adaptive_size = 6;
  std::array<int, 3> fc_dims{2048, 2048, 26};
  double dropout = 0.5;

  void validate() const;
  bool operator==(const ClassifierConfig &) const = default;
};

struct NamedTensor {
  std::string name;
  Tensorf tensor;
};

/// Every learnable tensor of the autoencoder ("ae.*", optional) and the
/// classifier ("cls.*"), in a fixed order.
class NanetParams {
public:
  AutoencoderConfig ae;
  ClassifierConfig cls;
  bool has_autoencoder = true;
  std::vector<NamedTensor> entries;

  const Tensorf &get(const std::string &name) const;
  bool contains(const std::string &name) const;
  std::vector<Tensorf> tensors() const;
  std::vector<Tensorf> tensors_with_prefix(const std::string &prefix) const;
  std::size_t scalar_count() const;
  /// Deep copy, detached from any graph.
  NanetParams clone() const;
};

/// He-uniform weights (bound sqrt(6 / fan_in), std sqrt(2 / fan_in)) and zero biases,
/// deterministic per seed.
NanetParams init_params(const AutoencoderConfig &ae, const ClassifierConfig &cls,
                        std::uint64_t seed, bool with_autoencoder = true);

/// (name, shape) of every parameter the configs imply, in init order.
std::vector<std::pair<std::string, tensor::Shape>> parameter_layout(const AutoencoderConfig &ae,
                                                                    const ClassifierConfig &cls,
                                                                    bool with_autoencoder = true);

Tensorf forward_autoencoder(const NanetParams &params, const Tensorf &batch);

struct ClassifierOutput {
  Tensorf logits;
  Tensorf last_conv; ///< ReLU output of the final conv layer (Grad-CAM target).
};
ClassifierOutput forward_classifier(const NanetParams &params, const Tensorf &batch, bool training,
                                    Rng &rng);

enum class Mode { Nanet, ClassifierOnly };
std::string_view mode_name(Mode m);
Mode parse_mode(std::string_view name);

struct NanetOutput {
  Tensorf reconstruction; ///< Undefined in classifier-only mode.
  Tensorf logits;
  Tensorf last_conv;
};
/// Denoise then classify the reconstruction. In classifier-only mode the
/// raw batch goes straight to the classifier.
NanetOutput forward_nanet(const NanetParams &params, const Tensorf &batch, bool training, Rng &rng,
                          Mode mode = Mode::Nanet);

nlohmann::ordered_json to_json(const AutoencoderConfig &c);
nlohmann::ordered_json to_json(const ClassifierConfig &c);
AutoencoderConfig autoencoder_config_from_json(const nlohmann::json &j);
ClassifierConfig classifier_config_from_json(const nlohmann::json &j);

} // namespace nanet
