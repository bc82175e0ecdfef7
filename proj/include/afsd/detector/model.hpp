#pragma once

#include <array>
#include <map>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "afsd/attention/attention.hpp"
#include "afsd/detector/anchors.hpp"
#include "afsd/saliency/saliency.hpp"
#include "afsd/tensor/optim.hpp"

namespace afsd::detector {

// Subtracted from every pixel before the first convolution.
inline constexpr double kInputMean = 0.5;

/// Four stride-2 conv+ReLU stages; GC block (and optionally saliency fusion)
/// after stage 2; prediction heads on stages 3 and 4.
struct DetectorConfig {
  std::size_t image_size = 64;
  std::array<std::size_t, 4> widths{8, 16, 24, 32};
  std::size_t feature_dim = 16;
  AnchorConfig anchors;
  double temperature = 10.0;
  bool use_topdown = true;
  bool use_bottom_up = false;
  double epsilon = 2.718281828459045;
  std::size_t num_classes = 0;  // foreground; classifier rows = num_classes + 1

  std::size_t anchors_per_position() const { return anchors.aspects.size(); }
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;

  nlohmann::json to_json() const;
  static DetectorConfig from_json(const nlohmann::json& j);
};

struct DetectorParams {
  DetectorConfig config;
  ParamMap tensors;

  const Tensor& classifier() const { return tensors.at("cls.w"); }
  Tensor& classifier() { return tensors.at("cls.w"); }
};

DetectorParams init_detector(const DetectorConfig& cfg, std::uint64_t seed);

using VarMap = std::map<std::string, Var>;

VarMap record_params(Tape& tape, const ParamMap& params, bool requires_grad = true);

struct ForwardResult {
  Var logits;    // [N, num_classes + 1], temperature * cosine
  Var offsets;   // [N, 4]
  Var features;  // [N, D], unnormalized f_i
  Var topdown;   // [H2, W2] attention map, invalid when use_topdown is off
};

/// `saliency` is required when cfg.use_bottom_up is set and ignored otherwise.
ForwardResult forward(const VarMap& params, const Tensor& image, const saliency::SaliencyMap* saliency,
                      const DetectorConfig& cfg);

/// temperature * normalize(features) normalize(rows)^T.
Var cosine_logits(Var features, Var rows, double temperature);

}  // namespace afsd::detector
