#include "afsd/detector/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace afsd::detector {

AnchorSet generate_anchors(const AnchorConfig& cfg) {
  if (cfg.map_sizes.empty()) throw std::invalid_argument("anchor config has no scales");
  if (cfg.map_sizes.size() != cfg.scales.size()) {
    throw std::invalid_argument("anchor config: map_sizes and scales differ in length");
  }
  if (cfg.aspects.empty()) throw std::invalid_argument("anchor config has no aspect ratios");
  AnchorSet out;
  for (std::size_t s = 0; s < cfg.map_sizes.size(); ++s) {
    const std::size_t n = cfg.map_sizes[s];
    if (n == 0 || !(cfg.scales[s] > 0.0)) throw std::invalid_argument("anchor config: degenerate scale");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (double a : cfg.aspects) {
          if (!(a > 0.0)) throw std::invalid_argument("anchor config: aspect must be positive");
          const double r = std::sqrt(a);
          out.boxes.push_back({(j + 0.5) / n, (i + 0.5) / n, cfg.scales[s] * r, cfg.scales[s] / r});
          out.scale_index.push_back(s);
        }
      }
    }
  }
  return out;
}

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::array<double, 4> encode_box(const Box& gt, const Box& anchor) {
  if (!(gt.w > 0 && gt.h > 0 && anchor.w > 0 && anchor.h > 0)) {
    throw std::invalid_argument("encode_box: widths and heights must be positive");
  }
  return {(gt.cx - anchor.cx) / (kCenterVariance * anchor.w),
          (gt.cy - anchor.cy) / (kCenterVariance * anchor.h),
          std::log(gt.w / anchor.w) / kSizeVariance, std::log(gt.h / anchor.h) / kSizeVariance};
}

Box decode_box(const std::array<double, 4>& t, const Box& anchor) {
  if (!(anchor.w > 0 && anchor.h > 0)) throw std::invalid_argument("decode_box: degenerate anchor");
  return {anchor.cx + t[0] * kCenterVariance * anchor.w, anchor.cy + t[1] * kCenterVariance * anchor.h,
          anchor.w * std::exp(t[2] * kSizeVariance), anchor.h * std::exp(t[3] * kSizeVariance)};
}

}  // namespace afsd::detector
