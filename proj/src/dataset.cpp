#include "nanet/dataset.hpp"

#include "nanet/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace nanet {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view condition_name(Condition c) {
  switch (c) {
  case Condition::Clean:
    return "clean";
  case Condition::Uniform:
    return "uniform";
  case Condition::Gaussian:
    return "gaussian";
  case Condition::SaltPepper:
    return "saltpepper";
  }
  return "clean";
}

Condition parse_condition(std::string_view name) {
  for (auto c : kAllConditions)
    if (condition_name(c) == name)
      return c;
  throw InvalidSpec("unknown condition \"" + std::string(name) + "\"");
}

std::string_view split_name(Split s) { return s == Split::Train ? "train" : "test"; }

namespace {

Split parse_split(std::string_view name) {
  if (name == "train")
    return Split::Train;
  if (name == "test")
    return Split::Test;
  throw InvalidSpec("unknown split \"" + std::string(name) + "\"");
}

double symbol_width(const RenderSpec &spec, morse::Symbol s) {
  return s == morse::Symbol::Dot ? 2.0 * spec.dot_radius : spec.dash_width;
}

struct Glyph {
  morse::Symbol kind;
  double cx; // local centre, before scale/rotation
};

std::vector<Glyph> layout(const RenderSpec &spec, std::span<const morse::Symbol> symbols) {
  std::vector<Glyph> glyphs;
  double x = -spec.row_width(symbols) / 2.0;
  for (auto s : symbols) {
    const double w = symbol_width(spec, s);
    glyphs.push_back({s, x + w / 2.0});
    x += w + spec.symbol_gap;
  }
  return glyphs;
}

} // namespace

double RenderSpec::row_width(std::span<const morse::Symbol> symbols) const {
  if (symbols.empty())
    return 0.0;
  double w = symbol_gap * static_cast<double>(symbols.size() - 1);
  for (auto s : symbols)
    w += symbol_width(*this, s);
  return w;
}

RenderSpec RenderSpec::for_canvas(int canvas) {
  RenderSpec spec;
  const double k = static_cast<double>(canvas) / spec.canvas;
  spec.canvas = canvas;
  spec.dot_radius *= k;
  spec.dash_width *= k;
  spec.dash_height *= k;
  spec.symbol_gap *= k;
  spec.jitter.max_translation_px *= k;
  return spec;
}

void RenderSpec::validate() const {
  if (canvas < 1)
    throw InvalidSpec("canvas must be positive");
  if (dot_radius <= 0 || dash_width <= 0 || dash_height <= 0 || symbol_gap < 0)
    throw InvalidSpec("glyph dimensions must be positive");
  if (foreground == background)
    throw InvalidSpec("foreground and background intensities must differ");
  if (foreground < 0 || foreground > 1 || background < 0 || background > 1)
    throw InvalidSpec("intensities must lie in [0,1]");
  if (jitter.max_rotation_deg < 0 || jitter.max_translation_px < 0 || jitter.min_scale <= 0 ||
      jitter.max_scale < jitter.min_scale)
    throw InvalidSpec("invalid jitter ranges");
  // Widest 4-symbol letter code is three dashes and a dot (J, Q, Y).
  const std::array<morse::Symbol, 4> widest = {morse::Symbol::Dash, morse::Symbol::Dash,
                                               morse::Symbol::Dash, morse::Symbol::Dot};
  if (row_width(widest) * jitter.max_scale > canvas)
    throw InvalidSpec("canvas too small for a 4-symbol code at maximum scale");
}

void NoiseSpec::validate() const {
  if (amplitude < 0 || sigma < 0 || p < 0 || p > 1)
    throw InvalidSpec("noise parameters out of range");
}

const NoiseSpec &NoiseSet::get(Condition c) const {
  switch (c) {
  case Condition::Uniform:
    return uniform;
  case Condition::Gaussian:
    return gaussian;
  case Condition::SaltPepper:
    return saltpepper;
  case Condition::Clean:
    break;
  }
  static const NoiseSpec clean{Condition::Clean};
  return clean;
}

ImageBuffer render(const morse::Sequence &seq, const RenderSpec &spec, Rng &rng) {
  spec.validate();
  if (seq.symbols.empty())
    throw InvalidSpec("cannot render an empty Morse sequence");

  const auto &j = spec.jitter;
  const double angle = rng.uniform(-j.max_rotation_deg, j.max_rotation_deg);
  const double tx = rng.uniform(-j.max_translation_px, j.max_translation_px);
  const double ty = rng.uniform(-j.max_translation_px, j.max_translation_px);
  const double scale = rng.uniform(j.min_scale, j.max_scale);

  const double theta = angle * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double ox = spec.canvas / 2.0 + tx;
  const double oy = spec.canvas / 2.0 + ty;

  const auto glyphs = layout(spec, seq.symbols);

  // local (scaled) -> canvas, counter-clockwise as displayed
  auto to_canvas = [&](double lx, double ly) {
    return std::pair{ox + lx * c + ly * s, oy - lx * s + ly * c};
  };
  auto inside_canvas = [&](std::pair<double, double> p) {
    return p.first >= 0 && p.first <= spec.canvas && p.second >= 0 && p.second <= spec.canvas;
  };
  double x_lo = spec.canvas, x_hi = 0, y_lo = spec.canvas, y_hi = 0;
  auto cover = [&](std::pair<double, double> p) {
    x_lo = std::min(x_lo, p.first);
    x_hi = std::max(x_hi, p.first);
    y_lo = std::min(y_lo, p.second);
    y_hi = std::max(y_hi, p.second);
  };
  for (const auto &g : glyphs) {
    const double gx = g.cx * scale;
    if (g.kind == morse::Symbol::Dot) {
      const auto centre = to_canvas(gx, 0.0);
      const double r = spec.dot_radius * scale;
      if (!inside_canvas({centre.first - r, centre.second - r}) ||
          !inside_canvas({centre.first + r, centre.second + r}))
        throw SpecOverflow("jittered dot leaves the canvas for letter " +
                           std::string(1, seq.letter));
      cover({centre.first - r, centre.second - r});
      cover({centre.first + r, centre.second + r});
    } else {
      const double hw = spec.dash_width * scale / 2.0;
      const double hh = spec.dash_height * scale / 2.0;
      for (double sx : {-1.0, 1.0})
        for (double sy : {-1.0, 1.0}) {
          const auto corner = to_canvas(gx + sx * hw, sy * hh);
          if (!inside_canvas(corner))
            throw SpecOverflow("jittered dash leaves the canvas for letter " +
                               std::string(1, seq.letter));
          cover(corner);
        }
    }
  }

  ImageBuffer img(spec.canvas, spec.canvas, spec.background);
  const double r2 = spec.dot_radius * spec.dot_radius;
  const double hw = spec.dash_width / 2.0;
  const double hh = spec.dash_height / 2.0;
  // Pixels outside the glyphs' bounding box stay background.
  const int row0 = std::max(0, static_cast<int>(std::floor(y_lo)) - 1);
  const int row1 = std::min(spec.canvas, static_cast<int>(std::ceil(y_hi)) + 1);
  const int col0 = std::max(0, static_cast<int>(std::floor(x_lo)) - 1);
  const int col1 = std::min(spec.canvas, static_cast<int>(std::ceil(x_hi)) + 1);
  for (int y = row0; y < row1; ++y) {
    const double dy = y + 0.5 - oy;
    for (int x = col0; x < col1; ++x) {
      const double dx = x + 0.5 - ox;
      // canvas -> unscaled local frame
      const double lx = (dx * c - dy * s) / scale;
      const double ly = (dx * s + dy * c) / scale;
      for (const auto &g : glyphs) {
        const double ux = lx - g.cx;
        const bool hit = g.kind == morse::Symbol::Dot ? ux * ux + ly * ly <= r2
                                                      : std::abs(ux) <= hw && std::abs(ly) <= hh;
        if (hit) {
          img.at(y, x) = spec.foreground;
          break;
        }
      }
    }
  }
  return img;
}

ImageBuffer apply_noise(const ImageBuffer &img, const NoiseSpec &spec, Rng &rng,
                        std::vector<float> *pre_clamp_delta) {
  spec.validate();
  ImageBuffer out = img;
  auto values = out.values();
  if (pre_clamp_delta)
    pre_clamp_delta->assign(values.size(), 0.0f);

  switch (spec.kind) {
  case Condition::Clean:
    break;
  case Condition::Uniform:
  case Condition::Gaussian:
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double delta = spec.kind == Condition::Uniform
                               ? rng.uniform(-spec.amplitude, spec.amplitude)
                               : spec.sigma * rng.normal();
      if (pre_clamp_delta)
        (*pre_clamp_delta)[i] = static_cast<float>(delta);
      values[i] = static_cast<float>(std::clamp(values[i] + delta, 0.0, 1.0));
    }
    break;
  case Condition::SaltPepper:
    for (auto &v : values)
      if (rng.uniform() < spec.p)
        v = rng.uniform() < 0.5 ? 0.0f : 1.0f;
    break;
  }
  return out;
}

std::uint64_t image_seed(std::uint64_t seed, char letter, int instance, std::string_view tag) {
  std::uint64_t tag_hash = 0xcbf29ce484222325ULL; // FNV-1a
  for (char ch : tag) {
    tag_hash ^= static_cast<unsigned char>(ch);
    tag_hash *= 0x100000001b3ULL;
  }
  return hash_key({seed, static_cast<std::uint64_t>(static_cast<unsigned char>(letter)),
                   static_cast<std::uint64_t>(instance), tag_hash});
}

std::string item_relative_path(Condition c, char letter, int instance) {
  return std::string(condition_name(c)) + "/" + std::string(1, letter) + "/" +
         std::to_string(instance) + ".png";
}

std::vector<ManifestItem> DatasetManifest::select(Split split, Condition cond) const {
  std::vector<ManifestItem> out;
  for (const auto &item : items)
    if (item.split == split && item.condition == cond)
      out.push_back(item);
  return out;
}

DatasetManifest build_dataset(const RenderSpec &spec, const NoiseSet &noise, std::uint64_t seed,
                              const std::filesystem::path &out_dir,
                              const DatasetOptions &options) {
  spec.validate();
  for (auto c : kNoisyConditions)
    noise.get(c).validate();
  if (options.per_letter < 1 || options.test_per_letter < 0 ||
      options.test_per_letter > options.per_letter)
    throw InvalidSpec("per-letter counts out of range");

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    throw IoFailure("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest m;
  m.seed = seed;
  m.per_letter = options.per_letter;
  m.test_per_letter = options.test_per_letter;
  m.render_spec = spec;
  m.noise = noise;
  const int train_count = options.per_letter - options.test_per_letter;

  auto write_item = [&](Condition cond, char letter, int instance, const ImageBuffer &img) {
    ManifestItem item{letter, instance, instance < train_count ? Split::Train : Split::Test, cond,
                      item_relative_path(cond, letter, instance)};
    const fs::path full = out_dir / item.path;
    fs::create_directories(full.parent_path(), ec);
    if (ec)
      throw IoFailure("cannot create " + full.parent_path().string() + ": " + ec.message());
    write_png(full, img);
    m.items.push_back(std::move(item));
  };

  std::vector<std::pair<std::pair<char, int>, ImageBuffer>> held_out;
  for (int li = 0; li < morse::kNumLetters; ++li) {
    const auto seq = morse::encode_letter(morse::index_letter(li));
    for (int inst = 0; inst < options.per_letter; ++inst) {
      Rng rng(image_seed(seed, seq.letter, inst, "render"));
      ImageBuffer img = render(seq, spec, rng);
      write_item(Condition::Clean, seq.letter, inst, img);
      if (inst >= train_count)
        held_out.push_back({{seq.letter, inst}, std::move(img)});
    }
  }
  for (auto cond : kNoisyConditions) {
    for (const auto &[key, clean] : held_out) {
      Rng rng(image_seed(seed, key.first, key.second, condition_name(cond)));
      write_item(cond, key.first, key.second, apply_noise(clean, noise.get(cond), rng));
    }
  }

  std::ofstream os(out_dir / kManifestFile, std::ios::binary);
  os << to_json(m).dump(1) << '\n';
  if (!os)
    throw IoFailure("cannot write manifest in " + out_dir.string());
  return m;
}

ordered_json to_json(const DatasetManifest &m) {
  const auto &r = m.render_spec;
  ordered_json j;
  j["seed"] = m.seed;
  j["per_letter"] = m.per_letter;
  j["test_per_letter"] = m.test_per_letter;
  j["train_per_letter"] = m.per_letter - m.test_per_letter;
  j["render_spec"] = {{"canvas", r.canvas},
                      {"dot_radius", r.dot_radius},
                      {"dash_width", r.dash_width},
                      {"dash_height", r.dash_height},
                      {"symbol_gap", r.symbol_gap},
                      {"foreground", r.foreground},
                      {"background", r.background},
                      {"jitter",
                       {{"max_rotation_deg", r.jitter.max_rotation_deg},
                        {"max_translation_px", r.jitter.max_translation_px},
                        {"min_scale", r.jitter.min_scale},
                        {"max_scale", r.jitter.max_scale}}}};
  j["noise_specs"] = {{"uniform", {{"amplitude", m.noise.uniform.amplitude}}},
                      {"gaussian", {{"sigma", m.noise.gaussian.sigma}}},
                      {"saltpepper", {{"p", m.noise.saltpepper.p}}}};
  auto items = ordered_json::array();
  for (const auto &it : m.items)
    items.push_back({{"letter", std::string(1, it.letter)},
                     {"instance", it.instance},
                     {"split", split_name(it.split)},
                     {"condition", condition_name(it.condition)},
                     {"path", it.path}});
  j["items"] = std::move(items);
  return j;
}

DatasetManifest manifest_from_json(const json &j) {
  try {
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.per_letter = j.at("per_letter").get<int>();
    m.test_per_letter = j.at("test_per_letter").get<int>();
    const auto &r = j.at("render_spec");
    auto &spec = m.render_spec;
    spec.canvas = r.at("canvas").get<int>();
    spec.dot_radius = r.at("dot_radius").get<double>();
    spec.dash_width = r.at("dash_width").get<double>();
    spec.dash_height = r.at("dash_height").get<double>();
    spec.symbol_gap = r.at("symbol_gap").get<double>();
    spec.foreground = r.at("foreground").get<float>();
    spec.background = r.at("background").get<float>();
    const auto &jit = r.at("jitter");
    spec.jitter.max_rotation_deg = jit.at("max_rotation_deg").get<double>();
    spec.jitter.max_translation_px = jit.at("max_translation_px").get<double>();
    spec.jitter.min_scale = jit.at("min_scale").get<double>();
    spec.jitter.max_scale = jit.at("max_scale").get<double>();
    const auto &n = j.at("noise_specs");
    m.noise.uniform.amplitude = n.at("uniform").at("amplitude").get<double>();
    m.noise.gaussian.sigma = n.at("gaussian").at("sigma").get<double>();
    m.noise.saltpepper.p = n.at("saltpepper").at("p").get<double>();
    for (const auto &it : j.at("items")) {
      const auto letter = it.at("letter").get<std::string>();
      if (letter.size() != 1)
        throw InvalidSpec("manifest letter must be a single character");
      m.items.push_back({static_cast<char>(morse::index_letter(morse::letter_index(letter[0]))),
                         it.at("instance").get<int>(),
                         parse_split(it.at("split").get<std::string>()),
                         parse_condition(it.at("condition").get<std::string>()),
                         it.at("path").get<std::string>()});
    }
    return m;
  } catch (const json::exception &e) {
    throw InvalidSpec(std::string("malformed manifest: ") + e.what());
  }
}

DatasetManifest load_manifest(const std::filesystem::path &root) {
  const auto path = root / kManifestFile;
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw IoFailure("cannot open " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception &e) {
    throw IoFailure("cannot parse " + path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

} // namespace nanet
