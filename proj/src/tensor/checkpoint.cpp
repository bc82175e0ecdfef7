#include "afsd/tensor/checkpoint.hpp"

#include <fstream>

namespace afsd {

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::json arrays = nlohmann::json::object();
  for (const auto& [name, t] : ckpt.arrays) {
    require_finite(t, "checkpoint array '" + name + "'");
    arrays[name] = {{"shape", t.shape()}, {"data", t.vec()}};
  }
  return {{"format_version", kCheckpointFormatVersion}, {"arrays", arrays}, {"meta", ckpt.meta}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("format_version")) {
    throw CheckpointError("checkpoint: missing format_version");
  }
  const int version = doc.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion) {
    throw CheckpointError("checkpoint: unsupported format_version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointFormatVersion) + ")");
  }
  Checkpoint ckpt;
  for (const auto& [name, entry] : doc.at("arrays").items()) {
    try {
      ckpt.arrays.emplace(name, Tensor(entry.at("shape").get<Shape>(),
                                       entry.at("data").get<std::vector<double>>()));
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError("checkpoint: malformed array '" + name + "': " + e.what());
    }
  }
  if (doc.contains("meta")) ckpt.meta = doc.at("meta");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(ckpt).dump() << '\n';
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint not found: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace afsd
