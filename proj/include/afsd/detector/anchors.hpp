#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "afsd/detector/box.hpp"

namespace afsd::detector {

struct AnchorConfig {
  std::vector<std::size_t> map_sizes{8, 4};  // square feature maps, one per scale
  std::vector<double> scales{0.22, 0.4};
  std::vector<double> aspects{1.0, 2.0, 0.5};  // w/h
};

struct AnchorSet {
  std::vector<Box> boxes;               // scale-major, row-major, aspect-minor
  std::vector<std::size_t> scale_index;

  std::size_t size() const { return boxes.size(); }
};

AnchorSet generate_anchors(const AnchorConfig& cfg);

double iou(const Box& a, const Box& b);

constexpr double kCenterVariance = 0.1;
constexpr double kSizeVariance = 0.2;

std::array<double, 4> encode_box(const Box& gt, const Box& anchor);
Box decode_box(const std::array<double, 4>& t, const Box& anchor);

}  // namespace afsd::detector
