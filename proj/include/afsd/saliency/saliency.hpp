#pragma once

#include <cstdint>
#include <vector>

#include "afsd/synthdata/scene.hpp"
#include "afsd/tensor/tensor.hpp"

// Bottom-up attention maps. Nothing here touches a Tape: the saliency model
// is frozen and enters the detector as a constant.
namespace afsd::saliency {

/// Values in [0,1], same extent as the source image.
struct SaliencyMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  SaliencyMap() = default;
  SaliencyMap(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<std::size_t>(h * w), fill) {}

  double at(int y, int x) const { return values[static_cast<std::size_t>(y * width + x)]; }
  double& at(int y, int x) { return values[static_cast<std::size_t>(y * width + x)]; }
};

struct BinaryMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  BinaryMap() = default;
  BinaryMap(int h, int w, bool fill = false)
      : height(h), width(w), bits(static_cast<std::size_t>(h * w), fill ? 1 : 0) {}

  bool at(int y, int x) const { return bits[static_cast<std::size_t>(y * width + x)] != 0; }
  void set(int y, int x, bool v) { bits[static_cast<std::size_t>(y * width + x)] = v ? 1 : 0; }
  bool operator==(const BinaryMap&) const = default;
};

struct BmsConfig {
  int thresholds_per_channel = 8;
  int opening_radius = 1;
};

/// For each channel and t_k = k/(T+1), k = 1..T: the map (channel > t_k)
/// followed by its complement. 3*T*2 maps, channel-major.
std::vector<BinaryMap> boolean_maps(const Tensor& image, const BmsConfig& cfg);

/// Clears every 4-connected true component touching the border, then
/// applies a morphological opening with a (2r+1)^2 square when r > 0.
BinaryMap surroundedness(const BinaryMap& map, int opening_radius = 0);

/// Erosion then dilation with a (2r+1)^2 square; out-of-image cells are
/// ignored by both.
BinaryMap opening(const BinaryMap& map, int radius);

/// Mean of all surroundedness maps, min-max normalized; a constant mean map
/// yields all zeros.
SaliencyMap bms_saliency(const Tensor& image, const BmsConfig& cfg);

/// Union of all object masks (annotated or not), blurred `blur_radius`
/// times with a 3x3 box filter, min-max normalized. A constant map is
/// returned unscaled (empty scene -> zeros, full-frame object -> ones).
SaliencyMap oracle_saliency(const synth::Scene& scene, int blur_radius);

}  // namespace afsd::saliency
