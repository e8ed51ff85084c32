#include "nanet/checkpoint.hpp"

#include "nanet/error.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace nanet {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::array<char, 8> kMagic = {'N', 'A', 'N', 'E', 'T', 'C', 'K', 'P'};

void put_u64(std::string &out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char *p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

std::uint32_t crc32_of(const std::string &bytes, std::size_t offset, std::size_t len) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto *p = reinterpret_cast<const Bytef *>(bytes.data() + offset);
  while (len > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(len, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    len -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

} // namespace

void TrainConfig::validate() const {
  if (epochs < 0)
    throw InvalidSpec("epochs must be non-negative");
  if (batch_size < 1)
    throw InvalidSpec("batch size must be at least 1");
  if (!(lr > 0.0))
    throw InvalidSpec("learning rate must be positive");
  if (image_size < ae.divisor() || image_size % ae.divisor() != 0)
    throw InvalidSpec("image size must be a positive multiple of " + std::to_string(ae.divisor()));
  if (augment_rotation_deg < 0 || augment_rotation_deg > 180)
    throw InvalidSpec("rotation augmentation must lie in [0,180] degrees");
  if (max_train_items < 0)
    throw InvalidSpec("max_train_items must be non-negative");
  ae.validate();
  cls.validate();
}

TrainConfig preset_desk() {
  TrainConfig c;
  c.image_size = 64;
  c.epochs = 40;
  c.batch_size = 8;
  c.lr = 1e-4;
  return c;
}

TrainConfig preset_paper() {
  TrainConfig c;
  c.image_size = 224;
  c.epochs = 300;
  c.batch_size = 8;
  c.lr = 1e-4;
  return c;
}

TrainConfig preset(std::string_view name) {
  if (name == "desk")
    return preset_desk();
  if (name == "paper")
    return preset_paper();
  throw InvalidSpec("unknown preset \"" + std::string(name) + "\"");
}

ordered_json to_json(const TrainConfig &c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"image_size", c.image_size},
          {"augment_rotation_deg", c.augment_rotation_deg},
          {"seed", c.seed},
          {"mode", mode_name(c.mode)},
          {"max_train_items", c.max_train_items},
          {"autoencoder", to_json(c.ae)},
          {"classifier", to_json(c.cls)}};
}

TrainConfig train_config_from_json(const json &j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr = j.at("lr").get<double>();
  c.image_size = j.at("image_size").get<int>();
  c.augment_rotation_deg = j.at("augment_rotation_deg").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.mode = parse_mode(j.at("mode").get<std::string>());
  c.max_train_items = j.at("max_train_items").get<int>();
  c.ae = autoencoder_config_from_json(j.at("autoencoder"));
  c.cls = classifier_config_from_json(j.at("classifier"));
  c.validate();
  return c;
}

void save_checkpoint(const Checkpoint &ckpt, const std::filesystem::path &path) {
  std::string payload;
  payload.reserve(ckpt.params.scalar_count() * 4);
  auto tensors = ordered_json::array();
  for (const auto &e : ckpt.params.entries) {
    const std::size_t offset = payload.size();
    for (float v : e.tensor.values()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i)
        payload.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    tensors.push_back({{"name", e.name},
                       {"shape", e.tensor.shape()},
                       {"dtype", "f32"},
                       {"byte_offset", offset},
                       {"byte_len", payload.size() - offset}});
  }

  ordered_json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["mode"] = mode_name(ckpt.config.mode);
  header["has_autoencoder"] = ckpt.params.has_autoencoder;
  header["train_config"] = to_json(ckpt.config);
  header["architecture"] = {{"autoencoder", to_json(ckpt.params.ae)},
                            {"classifier", to_json(ckpt.params.cls)}};
  header["tensors"] = std::move(tensors);
  header["payload_bytes"] = payload.size();
  header["checksum"] = crc32_of(payload, 0, payload.size());
  const std::string header_text = header.dump();

  std::string out(kMagic.begin(), kMagic.end());
  put_u64(out, header_text.size());
  out += header_text;
  out += payload;

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw IoFailure("cannot open " + path.string() + " for writing");
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os)
    throw IoFailure("write error on " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw IoFailure("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (is.bad())
    throw IoFailure("read error on " + path.string());

  if (bytes.size() >= kMagic.size() && !std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw InvalidCheckpoint(path.string() + " is not a NANet checkpoint");
  if (bytes.size() < 16)
    throw ChecksumMismatch(path.string() + " is truncated");
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16)
    throw ChecksumMismatch(path.string() + " is truncated inside the header");

  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception &e) {
    throw InvalidCheckpoint("unreadable checkpoint header: " + std::string(e.what()));
  }

  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw VersionMismatch("checkpoint format " + std::to_string(version) + ", expected " +
                            std::to_string(kCheckpointFormatVersion));

    const std::size_t payload_offset = 16 + header_len;
    const auto payload_bytes = header.at("payload_bytes").get<std::size_t>();
    if (bytes.size() - payload_offset != payload_bytes)
      throw ChecksumMismatch("checkpoint payload is " + std::to_string(bytes.size() - payload_offset) +
                             " bytes, header declares " + std::to_string(payload_bytes));
    if (crc32_of(bytes, payload_offset, payload_bytes) != header.at("checksum").get<std::uint32_t>())
      throw ChecksumMismatch("checkpoint payload CRC-32 mismatch");

    Checkpoint ckpt;
    ckpt.config = train_config_from_json(header.at("train_config"));
    ckpt.params.ae = autoencoder_config_from_json(header.at("architecture").at("autoencoder"));
    ckpt.params.cls = classifier_config_from_json(header.at("architecture").at("classifier"));
    ckpt.params.has_autoencoder = header.at("has_autoencoder").get<bool>();

    const auto layout =
        parameter_layout(ckpt.params.ae, ckpt.params.cls, ckpt.params.has_autoencoder);
    const auto &table = header.at("tensors");
    if (table.size() != layout.size())
      throw InvalidCheckpoint("tensor table does not match the architecture");
    for (std::size_t k = 0; k < layout.size(); ++k) {
      const auto &entry = table[k];
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<tensor::Shape>();
      if (name != layout[k].first || shape != layout[k].second ||
          entry.at("dtype").get<std::string>() != "f32")
        throw InvalidCheckpoint("tensor " + name + " does not match the architecture");
      const auto offset = entry.at("byte_offset").get<std::size_t>();
      const auto len = entry.at("byte_len").get<std::size_t>();
      if (len != tensor::numel(shape) * 4 || offset + len > payload_bytes)
        throw InvalidCheckpoint("tensor " + name + " has an invalid byte range");
      std::vector<float> values(tensor::numel(shape));
      const char *p = bytes.data() + payload_offset + offset;
      for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
          bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[4 * i + b])) << (8 * b);
        values[i] = std::bit_cast<float>(bits);
      }
      Tensorf t(shape, std::move(values));
      t.set_requires_grad(true);
      ckpt.params.entries.push_back({name, std::move(t)});
    }
    return ckpt;
  } catch (const json::exception &e) {
    throw InvalidCheckpoint("malformed checkpoint header: " + std::string(e.what()));
  }
}

} // namespace nanet
