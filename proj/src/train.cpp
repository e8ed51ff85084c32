#include "nanet/train.hpp"

#include "nanet/error.hpp"
#include "nanet/tensor/adam.hpp"
#include "nanet/tensor/losses.hpp"
#include "nanet/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

namespace nanet {

namespace fs = std::filesystem;

namespace {

int argmax_row(std::span<const float> logits, std::size_t row, std::size_t classes) {
  const float *p = logits.data() + row * classes;
  return static_cast<int>(std::max_element(p, p + classes) - p);
}

void check_finite(float v, const char *what) {
  if (!std::isfinite(v))
    throw NonFiniteValue(std::string("non-finite ") + what + " loss; aborting training");
}

} // namespace

Tensorf to_batch(std::span<const ImageBuffer> images) {
  if (images.empty())
    throw ShapeMismatch("empty batch");
  const auto h = static_cast<std::size_t>(images[0].height());
  const auto w = static_cast<std::size_t>(images[0].width());
  std::vector<float> values;
  values.reserve(images.size() * h * w);
  for (const auto &img : images) {
    if (static_cast<std::size_t>(img.height()) != h || static_cast<std::size_t>(img.width()) != w)
      throw ShapeMismatch("batch images differ in size");
    values.insert(values.end(), img.values().begin(), img.values().end());
  }
  return Tensorf({images.size(), 1, h, w}, std::move(values));
}

ImageBuffer image_from_batch(const Tensorf &batch, std::size_t index) {
  const std::size_t h = batch.dim(2), w = batch.dim(3);
  const auto first = batch.values().begin() + static_cast<std::ptrdiff_t>(index * h * w);
  std::vector<float> values(first, first + static_cast<std::ptrdiff_t>(h * w));
  for (auto &v : values)
    v = std::clamp(v, 0.0f, 1.0f);
  return ImageBuffer(static_cast<int>(h), static_cast<int>(w), std::move(values));
}

ImageBuffer load_item(const fs::path &data_root, const ManifestItem &item, int size) {
  return resize(read_png(data_root / item.path), size, size);
}

TrainResult train(const DatasetManifest &manifest, const fs::path &data_root,
                  const TrainConfig &cfg, const EpochCallback &on_epoch) {
  cfg.validate();
  std::vector<ManifestItem> items;
  for (const auto &it : manifest.items) {
    if (it.split != Split::Train)
      continue;
    if (it.condition != Condition::Clean)
      throw InvalidSpec("training split must contain clean images only; found " + it.path);
    items.push_back(it);
  }
  if (items.empty())
    throw MissingSplit("manifest has no training items");

  if (cfg.max_train_items > 0 && static_cast<std::size_t>(cfg.max_train_items) < items.size()) {
    std::vector<std::size_t> idx(items.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng subset_rng(hash_key({cfg.seed, 0x5b5e7ULL}));
    subset_rng.shuffle(idx.begin(), idx.end());
    idx.resize(static_cast<std::size_t>(cfg.max_train_items));
    std::sort(idx.begin(), idx.end());
    std::vector<ManifestItem> subset;
    for (auto i : idx)
      subset.push_back(items[i]);
    items = std::move(subset);
  }

  // Decoded once; rotation and resizing happen per draw.
  std::vector<Gray8> cache;
  std::vector<int> labels;
  cache.reserve(items.size());
  for (const auto &it : items) {
    cache.push_back(read_png_gray8(data_root / it.path));
    labels.push_back(morse::letter_index(it.letter));
  }

  const bool joint = cfg.mode == Mode::Nanet;
  TrainResult result;
  result.checkpoint.config = cfg;
  result.checkpoint.params = init_params(cfg.ae, cfg.cls, cfg.seed, joint);
  auto &params = result.checkpoint.params;
  tensor::Adam<float> adam(params.tensors(), {.lr = cfg.lr});
  Rng rng(hash_key({cfg.seed, 0x7a1eULL}));
  const float background = manifest.render_spec.background;

  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    EpochStats sums;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<ImageBuffer> images;
      std::vector<int> batch_labels;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const double angle = rng.uniform(-cfg.augment_rotation_deg, cfg.augment_rotation_deg);
        images.push_back(resize(augment_rotate(to_image(cache[i]), angle, background),
                                cfg.image_size, cfg.image_size));
        batch_labels.push_back(labels[i]);
      }
      const Tensorf batch = to_batch(images);
      const auto out = forward_nanet(params, batch, /*training=*/true, rng, cfg.mode);
      const Tensorf ce = tensor::cross_entropy(out.logits, std::span<const int>(batch_labels));
      Tensorf loss = ce;
      float mse_value = 0.0f;
      if (joint) {
        // The reconstruction target is the clean input itself.
        const Tensorf mse = tensor::mse_loss(out.reconstruction, batch);
        mse_value = mse.item();
        loss = tensor::total_loss(mse, ce);
      }
      check_finite(loss.item(), joint ? "total" : "cross-entropy");

      adam.zero_grad();
      tensor::backward(loss);
      adam.step();

      if (seen == 0)
        sums.first_batch_total = loss.item();
      const auto n = static_cast<double>(end - start);
      sums.mse += n * mse_value;
      sums.ce += n * ce.item();
      sums.total += n * loss.item();
      seen += end - start;
    }
    const auto denom = static_cast<double>(seen);
    EpochStats stats{sums.mse / denom, sums.ce / denom, sums.total / denom, sums.first_batch_total};
    result.history.push_back(stats);
    if (on_epoch)
      on_epoch(epoch, stats);
  }

  for (auto &e : params.entries)
    e.tensor.clear_grad();
  return result;
}

const ConditionReport &EvalReport::get(Condition c) const {
  for (const auto &r : conditions)
    if (r.condition == c)
      return r;
  throw MissingSplit("report has no block for condition " + std::string(condition_name(c)));
}

EvalReport evaluate(const Checkpoint &ckpt, const DatasetManifest &manifest,
                    const fs::path &data_root, std::span<const Condition> conditions) {
  const auto &cfg = ckpt.config;
  const int size = cfg.image_size;
  const bool joint = cfg.mode == Mode::Nanet;
  if (joint && !ckpt.params.has_autoencoder)
    throw InvalidCheckpoint("nanet-mode checkpoint without autoencoder weights");

  std::map<std::pair<char, int>, const ManifestItem *> clean_test;
  for (const auto &it : manifest.items)
    if (it.split == Split::Test && it.condition == Condition::Clean)
      clean_test[{it.letter, it.instance}] = &it;

  tensor::NoGradGuard<float> no_grad;
  Rng unused(0);
  EvalReport report;
  for (auto cond : conditions) {
    const auto items = manifest.select(Split::Test, cond);
    if (items.empty())
      throw MissingSplit("manifest has no test items for condition " +
                         std::string(condition_name(cond)));
    ConditionReport cr;
    cr.condition = cond;
    const bool noisy = cond != Condition::Clean;
    double psnr_noisy_sum = 0, psnr_denoised_sum = 0;

    for (std::size_t start = 0; start < items.size(); start += 8) {
      const std::size_t end = std::min(items.size(), start + 8);
      std::vector<ImageBuffer> inputs, cleans;
      for (std::size_t k = start; k < end; ++k) {
        inputs.push_back(load_item(data_root, items[k], size));
        if (noisy) {
          const auto found = clean_test.find({items[k].letter, items[k].instance});
          if (found == clean_test.end())
            throw MissingSplit("no clean counterpart for " + items[k].path);
          cleans.push_back(load_item(data_root, *found->second, size));
        }
      }
      const auto out = forward_nanet(ckpt.params, to_batch(inputs), false, unused, cfg.mode);
      const std::size_t classes = out.logits.dim(1);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t b = k - start;
        cr.confusion.add(morse::letter_index(items[k].letter),
                         argmax_row(out.logits.values(), b, classes));
        if (noisy) {
          psnr_noisy_sum += psnr(inputs[b], cleans[b]);
          if (joint)
            psnr_denoised_sum += psnr(image_from_batch(out.reconstruction, b), cleans[b]);
        }
      }
    }
    cr.metrics = compute_metrics(cr.confusion);
    if (noisy) {
      const auto n = static_cast<double>(items.size());
      cr.psnr_noisy = psnr_noisy_sum / n;
      if (joint)
        cr.psnr_denoised = psnr_denoised_sum / n;
    }
    report.conditions.push_back(std::move(cr));
  }
  return report;
}

nlohmann::ordered_json to_json(const EvalReport &report) {
  auto round4 = [](double v) { return std::round(v * 1e4) / 1e4; };
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto &cr : report.conditions) {
    auto confusion = nlohmann::ordered_json::array();
    for (int t = 0; t < cr.confusion.classes(); ++t) {
      auto row = nlohmann::ordered_json::array();
      for (int p = 0; p < cr.confusion.classes(); ++p)
        row.push_back(cr.confusion.at(t, p));
      confusion.push_back(std::move(row));
    }
    nlohmann::ordered_json block;
    block["confusion"] = std::move(confusion);
    block["accuracy"] = round_percent(cr.metrics.accuracy);
    block["precision"] = round_percent(cr.metrics.precision);
    block["recall"] = round_percent(cr.metrics.recall);
    block["f1"] = round_percent(cr.metrics.f1);
    block["psnr_denoised"] =
        cr.psnr_denoised ? nlohmann::ordered_json(round4(*cr.psnr_denoised)) : nullptr;
    block["psnr_noisy"] = cr.psnr_noisy ? nlohmann::ordered_json(round4(*cr.psnr_noisy)) : nullptr;
    j[std::string(condition_name(cr.condition))] = std::move(block);
  }
  return j;
}

ImageBuffer grad_cam(const Checkpoint &ckpt, const ImageBuffer &image,
                     std::optional<int> target_class) {
  const int size = ckpt.config.image_size;
  const std::array<ImageBuffer, 1> one{resize(image, size, size)};
  Tensorf batch = to_batch(one);
  // Gradients are only needed with respect to activations; tracking the
  // input is enough to record the whole graph.
  batch.set_requires_grad(true);
  auto &tape = tensor::Tape<float>::current();
  tape.clear();
  Rng unused(0);
  const auto out = forward_nanet(ckpt.params, batch, false, unused, ckpt.config.mode);

  const std::size_t classes = out.logits.dim(1);
  const int target = target_class ? *target_class : argmax_row(out.logits.values(), 0, classes);
  if (target < 0 || static_cast<std::size_t>(target) >= classes)
    throw InvalidLabel("Grad-CAM target class " + std::to_string(target) + " out of range");
  tensor::backward(tensor::pick(out.logits, static_cast<std::size_t>(target)));
  // Handles share storage with the checkpoint; drop the parameter grads.
  NanetParams handles = ckpt.params;
  for (auto &e : handles.entries)
    e.tensor.clear_grad();

  const Tensorf &fmap = out.last_conv;
  const std::size_t K = fmap.dim(1), h = fmap.dim(2), w = fmap.dim(3);
  std::vector<float> cam(h * w, 0.0f);
  if (fmap.has_grad()) {
    const auto act = fmap.values();
    const auto grad = fmap.grad();
    for (std::size_t k = 0; k < K; ++k) {
      double weight = 0;
      for (std::size_t i = 0; i < h * w; ++i)
        weight += grad[k * h * w + i];
      weight /= static_cast<double>(h * w);
      for (std::size_t i = 0; i < h * w; ++i)
        cam[i] += static_cast<float>(weight * act[k * h * w + i]);
    }
  }
  for (auto &v : cam)
    v = std::max(v, 0.0f);

  auto normalise = [](std::span<float> v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const float mn = *lo, mx = *hi;
    if (!(mx > mn)) {
      std::fill(v.begin(), v.end(), 0.0f);
      return;
    }
    for (auto &x : v)
      x = (x - mn) / (mx - mn);
  };
  normalise(cam);
  ImageBuffer heat = resize(ImageBuffer(static_cast<int>(h), static_cast<int>(w), std::move(cam)),
                            image.height(), image.width());
  normalise(heat.values());
  return heat;
}

std::size_t export_denoised(const Checkpoint &ckpt, const DatasetManifest &manifest,
                            const fs::path &data_root, std::span<const Condition> conditions,
                            const fs::path &out_dir) {
  if (!ckpt.params.has_autoencoder)
    throw InvalidCheckpoint("checkpoint has no autoencoder (classifier-only mode)");
  const int size = ckpt.config.image_size;
  tensor::NoGradGuard<float> no_grad;

  DatasetManifest written = manifest;
  written.items.clear();
  std::error_code ec;
  for (auto cond : conditions) {
    const auto items = manifest.select(Split::Test, cond);
    if (items.empty())
      throw MissingSplit("manifest has no test items for condition " +
                         std::string(condition_name(cond)));
    for (std::size_t start = 0; start < items.size(); start += 8) {
      const std::size_t end = std::min(items.size(), start + 8);
      std::vector<ImageBuffer> inputs;
      for (std::size_t k = start; k < end; ++k)
        inputs.push_back(load_item(data_root, items[k], size));
      const Tensorf recon = forward_autoencoder(ckpt.params, to_batch(inputs));
      for (std::size_t k = start; k < end; ++k) {
        const fs::path target = out_dir / items[k].path;
        fs::create_directories(target.parent_path(), ec);
        if (ec)
          throw IoFailure("cannot create " + target.parent_path().string() + ": " + ec.message());
        write_png(target, image_from_batch(recon, k - start));
        written.items.push_back(items[k]);
      }
    }
  }
  std::ofstream os(out_dir / kManifestFile, std::ios::binary);
  os << to_json(written).dump(1) << '\n';
  if (!os)
    throw IoFailure("cannot write manifest in " + out_dir.string());
  return written.items.size();
}

} // namespace nanet
