#pragma once

#include "nanet/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace nanet {

struct TrainConfig {
  int epochs = 40;
  int batch_size = 8;
  double lr = 1e-4;
  int image_size = 64;
  double augment_rotation_deg = 15.0;
  std::uint64_t seed = 0;
  Mode mode = Mode::Nanet;
  /// 0 = every clean training item; otherwise a seeded subset of this size.
  int max_train_items = 0;
  AutoencoderConfig ae;
  ClassifierConfig cls;

  void validate() const;
};

/// 64x64 inputs, 40 epochs, batch 8, lr 1e-4.
TrainConfig preset_desk();
/// 224x224 inputs, 300 epochs, batch 8, lr 1e-4.
TrainConfig preset_paper();
TrainConfig preset(std::string_view name);

nlohmann::ordered_json to_json(const TrainConfig &c);
TrainConfig train_config_from_json(const nlohmann::json &j);

struct Checkpoint {
  NanetParams params;
  TrainConfig config;
};

inline constexpr int kCheckpointFormatVersion = 1;

/// Layout: 8-byte magic "NANETCKP", u64 little-endian header length, JSON
/// header {format_version, mode, train_config, architecture, tensors[],
/// payload_bytes, checksum}, then the raw little-endian f32 payload in
/// tensor-table order. `checksum` is the CRC-32 of the payload.
void save_checkpoint(const Checkpoint &ckpt, const std::filesystem::path &path);
Checkpoint load_checkpoint(const std::filesystem::path &path);

} // namespace nanet
