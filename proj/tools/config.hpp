#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "afsd/detector/eval.hpp"
#include "afsd/detector/model.hpp"
#include "afsd/fewshot/training.hpp"
#include "afsd/synthdata/benchmark.hpp"

namespace afsd::cli {

/// Bad keys, bad types, bad flags: maps to exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat dotted-key settings. Every key has a default; files and --set
/// overrides may only touch known keys, with a compatible JSON type.
class RunConfig {
 public:
  RunConfig();

  static const nlohmann::json& defaults();

  /// Reads a JSON object; nested objects are flattened to dotted keys.
  void merge_file(const std::filesystem::path& path);
  void merge(const nlohmann::json& flat_or_nested);
  /// "key=value"; value parsed as JSON, falling back to a plain string.
  void set(const std::string& assignment);

  const nlohmann::json& values() const { return values_; }
  const nlohmann::json& at(const std::string& key) const;

  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

 private:
  void assign(const std::string& key, const nlohmann::json& value);
  nlohmann::json values_;
};

synth::SplitSpec split_of(const RunConfig& rc);
synth::BenchmarkSizes benchmark_sizes(const RunConfig& rc);
detector::DetectorConfig detector_config(const RunConfig& rc);
fewshot::SaliencySettings saliency_settings(const RunConfig& rc);
fewshot::Hyperparams hyperparams(const RunConfig& rc);
/// `stage` is "base" or "novel".
fewshot::TrainConfig train_config(const RunConfig& rc, const std::string& stage);
detector::PostprocessConfig postprocess_config(const RunConfig& rc);

/// output.dir resolved against $AFSD_OUTPUT_ROOT (or the working directory).
std::filesystem::path output_dir(const RunConfig& rc);

}  // namespace afsd::cli
