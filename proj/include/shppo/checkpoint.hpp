#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "shppo/param_store.hpp"

namespace shppo {

/// JSON manifest:
///   {"format_version": 1, "tag": "...", "meta": {...},
///    "entries": [{"name", "shape", "dtype": "f64", "data": base64(LE bytes)}]}
/// Values round-trip bit-exactly.
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  std::string tag;
  nlohmann::json meta = nlohmann::json::object();
  ParamStore params;
};

std::string encode_f64(std::span<const double> values);
std::vector<double> decode_f64(const std::string& base64);

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws std::runtime_error when the file is missing or malformed.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace shppo
