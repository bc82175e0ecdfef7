#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "afsd/tensor/optim.hpp"

namespace afsd {

inline constexpr int kCheckpointFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ParamMap arrays;
  nlohmann::json meta = nlohmann::json::object();
};

/// {"format_version":1,"arrays":{name:{"shape":[..],"data":[..]}},"meta":{..}}
/// Doubles are written in shortest round-trip form, so load(save(x)) == x.
nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace afsd
