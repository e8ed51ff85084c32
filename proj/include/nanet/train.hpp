#pragma once

#include "nanet/checkpoint.hpp"
#include "nanet/dataset.hpp"
#include "nanet/image.hpp"
#include "nanet/metrics.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace nanet {

struct EpochStats {
  double mse = 0;   ///< 0 in classifier-only mode
  double ce = 0;
  double total = 0;
  double first_batch_total = 0; ///< loss of the epoch's first batch, before its update
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochStats> history;
};

using EpochCallback = std::function<void(int epoch, const EpochStats &)>;

/// Joint training on clean training images only: per batch, rotate each
/// image by U(-deg, deg), resize, run denoiser + classifier and minimise
/// MSE(reconstruction, input) + CE (CE alone in classifier-only mode) with
/// Adam. Throws NonFiniteValue on a non-finite loss.
TrainResult train(const DatasetManifest &manifest, const std::filesystem::path &data_root,
                  const TrainConfig &cfg, const EpochCallback &on_epoch = {});

/// Pixels of a single item, resized to `size` x `size`.
ImageBuffer load_item(const std::filesystem::path &data_root, const ManifestItem &item, int size);

/// Packs equally sized images into an (N,1,H,W) tensor.
Tensorf to_batch(std::span<const ImageBuffer> images);
ImageBuffer image_from_batch(const Tensorf &batch, std::size_t index);

struct ConditionReport {
  Condition condition = Condition::Clean;
  ConfusionMatrix confusion;
  Metrics metrics;
  std::optional<double> psnr_denoised; ///< mean PSNR(reconstruction, clean)
  std::optional<double> psnr_noisy;    ///< mean PSNR(noisy input, clean)
};

struct EvalReport {
  std::vector<ConditionReport> conditions;

  const ConditionReport &get(Condition c) const;
};

/// Eval-mode inference on the held-out test items of each condition.
/// Throws MissingSplit when a condition has no test items.
EvalReport evaluate(const Checkpoint &ckpt, const DatasetManifest &manifest,
                    const std::filesystem::path &data_root, std::span<const Condition> conditions);

/// {"clean": {confusion, accuracy, precision, recall, f1, psnr_denoised,
/// psnr_noisy}, ...}; percentages rounded to two decimals.
nlohmann::ordered_json to_json(const EvalReport &report);

/// Grad-CAM on the final classifier conv layer, upsampled to the input's
/// dimensions and min-max normalised. `target_class` defaults to the argmax.
ImageBuffer grad_cam(const Checkpoint &ckpt, const ImageBuffer &image,
                     std::optional<int> target_class = std::nullopt);

/// Writes the denoiser output for every test item of `conditions` to
/// out_dir/<condition>/<letter>/<instance>.png plus a manifest.json listing
/// them. Returns the number of images written.
std::size_t export_denoised(const Checkpoint &ckpt, const DatasetManifest &manifest,
                            const std::filesystem::path &data_root,
                            std::span<const Condition> conditions,
                            const std::filesystem::path &out_dir);

} // namespace nanet
