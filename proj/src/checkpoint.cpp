#include "shppo/checkpoint.hpp"

#include <bit>
#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace shppo {
namespace {

namespace bai = boost::archive::iterators;

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

}  // namespace

std::string encode_f64(std::span<const double> values) {
  using Encoder = bai::base64_from_binary<bai::transform_width<const char*, 6, 8>>;
  const auto* bytes = reinterpret_cast<const char*>(values.data());
  const std::size_t n = values.size_bytes();
  std::string out(Encoder(bytes), Encoder(bytes + n));
  out.append((3 - n % 3) % 3, '=');
  return out;
}

std::vector<double> decode_f64(const std::string& base64) {
  using Decoder = bai::transform_width<bai::binary_from_base64<std::string::const_iterator>, 8, 6>;
  if (base64.size() % 4 != 0) throw std::runtime_error("base64 payload has invalid length");
  std::size_t pad = 0;
  while (pad < base64.size() && base64[base64.size() - 1 - pad] == '=') ++pad;
  std::string body = base64;
  for (std::size_t i = 0; i < pad; ++i) body[body.size() - 1 - i] = 'A';
  std::string bytes(Decoder(body.cbegin()), Decoder(body.cend()));
  bytes.resize(bytes.size() - pad);
  if (bytes.size() % sizeof(double) != 0) {
    throw std::runtime_error("base64 payload is not a whole number of f64 values");
  }
  std::vector<double> out(bytes.size() / sizeof(double));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::json doc;
  doc["format_version"] = Checkpoint::kFormatVersion;
  doc["tag"] = ckpt.tag;
  doc["meta"] = ckpt.meta;
  auto& entries = doc["entries"] = nlohmann::json::array();
  for (const auto& [name, e] : ckpt.params) {
    entries.push_back({{"name", name},
                       {"shape", e.value.shape()},
                       {"dtype", "f64"},
                       {"data", encode_f64(e.value.span())}});
  }
  return doc;
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
  if (doc.value("format_version", 0) != Checkpoint::kFormatVersion) {
    throw std::runtime_error("unsupported checkpoint format_version");
  }
  Checkpoint ckpt;
  ckpt.tag = doc.at("tag").get<std::string>();
  ckpt.meta = doc.value("meta", nlohmann::json::object());
  for (const auto& entry : doc.at("entries")) {
    if (entry.at("dtype").get<std::string>() != "f64") {
      throw std::runtime_error("unsupported dtype in checkpoint entry " +
                               entry.at("name").get<std::string>());
    }
    Shape shape = entry.at("shape").get<Shape>();
    ckpt.params.add(entry.at("name").get<std::string>(),
                    Tensor(std::move(shape), decode_f64(entry.at("data").get<std::string>())));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(ckpt).dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint not found: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace shppo
