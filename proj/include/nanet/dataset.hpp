#pragma once

#include "nanet/image.hpp"
#include "nanet/morse.hpp"
#include "nanet/random.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace nanet {

struct Jitter {
  double max_rotation_deg = 15.0;
  double max_translation_px = 20.0;
  double min_scale = 0.8;
  double max_scale = 1.2;
};

/// Glyph geometry for one Morse row. Dots are filled circles, dashes filled
/// axis-aligned rectangles, laid out left to right and centred.
struct RenderSpec {
  int canvas = 512;
  double dot_radius = 24.0;
  double dash_width = 88.0;
  double dash_height = 48.0;
  double symbol_gap = 24.0;
  float foreground = 0.0f;
  float background = 1.0f;
  Jitter jitter;

  /// Checks the invariants: positive geometry, distinct intensities, and a
  /// worst-case 4-symbol row fitting the canvas at maximum scale.
  void validate() const;
  /// Default geometry and jitter translation scaled to a canvas size.
  static RenderSpec for_canvas(int canvas);
  /// Unscaled row width of a symbol sequence.
  double row_width(std::span<const morse::Symbol> symbols) const;
};

enum class Condition { Clean, Uniform, Gaussian, SaltPepper };
inline constexpr std::array<Condition, 4> kAllConditions = {
    Condition::Clean, Condition::Uniform, Condition::Gaussian, Condition::SaltPepper};
inline constexpr std::array<Condition, 3> kNoisyConditions = {
    Condition::Uniform, Condition::Gaussian, Condition::SaltPepper};

std::string_view condition_name(Condition c);
Condition parse_condition(std::string_view name);

struct NoiseSpec {
  Condition kind = Condition::Clean;
  double amplitude = 0.3; ///< Uniform half-range.
  double sigma = 0.2;     ///< Gaussian standard deviation.
  double p = 0.1;         ///< Salt-and-pepper corruption probability.

  void validate() const;
};

/// Noise parameters for the three corrupted test conditions.
struct NoiseSet {
  NoiseSpec uniform{Condition::Uniform};
  NoiseSpec gaussian{Condition::Gaussian};
  NoiseSpec saltpepper{Condition::SaltPepper};

  const NoiseSpec &get(Condition c) const;
};

/// Draws `seq` on a fresh canvas. Jitter is sampled from `rng`; pass a
/// zero Jitter in `spec` for an exact centred layout. Throws SpecOverflow
/// when any glyph would leave the canvas.
ImageBuffer render(const morse::Sequence &seq, const RenderSpec &spec, Rng &rng);

/// Returns a corrupted copy; `img` is untouched. `pre_clamp`, when given,
/// receives the additive noise sample per pixel (Uniform/Gaussian) before
/// clamping, for statistical checks.
ImageBuffer apply_noise(const ImageBuffer &img, const NoiseSpec &spec, Rng &rng,
                        std::vector<float> *pre_clamp_delta = nullptr);

enum class Split { Train, Test };
std::string_view split_name(Split s);

struct ManifestItem {
  char letter = 'A';
  int instance = 0;
  Split split = Split::Train;
  Condition condition = Condition::Clean;
  std::string path; ///< Relative to the dataset root.

  bool operator==(const ManifestItem &) const = default;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  int per_letter = 40;
  int test_per_letter = 10;
  RenderSpec render_spec;
  NoiseSet noise;
  std::vector<ManifestItem> items;

  std::vector<ManifestItem> select(Split split, Condition cond) const;
};

struct DatasetOptions {
  int per_letter = 40;
  int test_per_letter = 10;
};

/// Stream seed for one image draw; independent of generation order.
std::uint64_t image_seed(std::uint64_t seed, char letter, int instance, std::string_view tag);

/// Writes <root>/<condition>/<letter>/<instance>.png for every clean
/// instance and every noisy variant of the held-out instances, then
/// manifest.json. Instances [0, per_letter - test_per_letter) train, the
/// rest test.
DatasetManifest build_dataset(const RenderSpec &spec, const NoiseSet &noise, std::uint64_t seed,
                              const std::filesystem::path &out_dir,
                              const DatasetOptions &options = {});

std::string item_relative_path(Condition c, char letter, int instance);

nlohmann::ordered_json to_json(const DatasetManifest &m);
DatasetManifest manifest_from_json(const nlohmann::json &j);
DatasetManifest load_manifest(const std::filesystem::path &root);
inline constexpr std::string_view kManifestFile = "manifest.json";

} // namespace nanet
