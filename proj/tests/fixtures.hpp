#pragma once

#include "nanet/checkpoint.hpp"
#include "nanet/dataset.hpp"

#include <filesystem>

namespace nanet::testing {

inline AutoencoderConfig tiny_autoencoder() {
  AutoencoderConfig ae;
  ae.stage_channels = {4, 8};
  ae.bottleneck_channels = 8;
  return ae;
}

inline ClassifierConfig tiny_classifier() {
  ClassifierConfig cls;
  cls.channels = {8, 8, 8, 8, 8, 8};
  cls.pool_after = {true, true, false, false, false, false};
  cls.adaptive_size = 2;
  cls.fc_dims = {32, 32, 26};
  return cls;
}

/// 32x32 training on tiny networks; seconds per epoch.
inline TrainConfig tiny_config(std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.lr = 1e-3;
  cfg.image_size = 32;
  cfg.seed = seed;
  cfg.ae = tiny_autoencoder();
  cfg.cls = tiny_classifier();
  return cfg;
}

/// 3 clean images per letter (2 train, 1 test) on a 64-pixel canvas,
/// generated once per process.
inline const std::filesystem::path &small_dataset() {
  static const std::filesystem::path root = [] {
    auto dir = std::filesystem::temp_directory_path() / "nanet_test_small_dataset";
    std::filesystem::remove_all(dir);
    build_dataset(RenderSpec::for_canvas(64), NoiseSet{}, 99, dir, {3, 1});
    return dir;
  }();
  return root;
}

} // namespace nanet::testing
