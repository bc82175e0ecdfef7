#include "afsd/saliency/saliency.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>

namespace afsd::saliency {

namespace {

BinaryMap morph(const BinaryMap& in, int r, bool erode) {
  BinaryMap out(in.height, in.width);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      bool v = erode;
      for (int dy = -r; dy <= r && v == erode; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= in.height || xx >= in.width) continue;
          if (in.at(yy, xx) != erode) {
            v = !erode;
            break;
          }
        }
      }
      out.set(y, x, v);
    }
  }
  return out;
}

void minmax_in_place(std::vector<double>& v, bool constant_to_zero) {
  if (v.empty()) return;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double mn = *lo, mx = *hi;
  if (mx > mn) {
    for (auto& x : v) x = (x - mn) / (mx - mn);
  } else if (constant_to_zero) {
    std::fill(v.begin(), v.end(), 0.0);
  }
}

}  // namespace

std::vector<BinaryMap> boolean_maps(const Tensor& image, const BmsConfig& cfg) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("boolean_maps expects a [3,H,W] image, got " + shape_str(image.shape()));
  }
  if (cfg.thresholds_per_channel < 1) throw std::invalid_argument("thresholds_per_channel must be >= 1");
  const int h = static_cast<int>(image.dim(1)), w = static_cast<int>(image.dim(2));
  const int t_count = cfg.thresholds_per_channel;
  std::vector<BinaryMap> maps;
  maps.reserve(static_cast<std::size_t>(3 * t_count * 2));
  for (int c = 0; c < 3; ++c) {
    for (int k = 1; k <= t_count; ++k) {
      const double t = static_cast<double>(k) / (t_count + 1);
      BinaryMap above(h, w), below(h, w);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const bool v = image.at(static_cast<std::size_t>(c), static_cast<std::size_t>(y),
                                  static_cast<std::size_t>(x)) > t;
          above.set(y, x, v);
          below.set(y, x, !v);
        }
      }
      maps.push_back(std::move(above));
      maps.push_back(std::move(below));
    }
  }
  return maps;
}

BinaryMap opening(const BinaryMap& map, int radius) {
  if (radius <= 0) return map;
  return morph(morph(map, radius, true), radius, false);
}

BinaryMap surroundedness(const BinaryMap& map, int opening_radius) {
  BinaryMap out = map;
  std::deque<std::pair<int, int>> queue;
  auto seed = [&](int y, int x) {
    if (out.at(y, x)) {
      out.set(y, x, false);
      queue.emplace_back(y, x);
    }
  };
  for (int x = 0; x < out.width; ++x) {
    seed(0, x);
    seed(out.height - 1, x);
  }
  for (int y = 0; y < out.height; ++y) {
    seed(y, 0);
    seed(y, out.width - 1);
  }
  constexpr int kDy[] = {-1, 1, 0, 0};
  constexpr int kDx[] = {0, 0, -1, 1};
  while (!queue.empty()) {
    const auto [y, x] = queue.front();
    queue.pop_front();
    for (int d = 0; d < 4; ++d) {
      const int yy = y + kDy[d], xx = x + kDx[d];
      if (yy < 0 || xx < 0 || yy >= out.height || xx >= out.width) continue;
      seed(yy, xx);
    }
  }
  return opening(out, opening_radius);
}

SaliencyMap bms_saliency(const Tensor& image, const BmsConfig& cfg) {
  const auto maps = boolean_maps(image, cfg);
  const int h = static_cast<int>(image.dim(1)), w = static_cast<int>(image.dim(2));
  SaliencyMap out(h, w);
  for (const auto& m : maps) {
    const BinaryMap s = surroundedness(m, cfg.opening_radius);
    for (std::size_t i = 0; i < s.bits.size(); ++i) out.values[i] += s.bits[i];
  }
  for (auto& v : out.values) v /= static_cast<double>(maps.size());
  minmax_in_place(out.values, true);
  return out;
}

SaliencyMap oracle_saliency(const synth::Scene& scene, int blur_radius) {
  if (blur_radius < 0) throw std::invalid_argument("blur_radius must be >= 0");
  const int s = scene.size();
  SaliencyMap out(s, s);
  for (const auto& o : scene.objects) {
    if (o.mask.bits.empty()) throw std::invalid_argument("oracle_saliency: object without a mask");
    for (int y = 0; y < o.mask.height; ++y) {
      for (int x = 0; x < o.mask.width; ++x) {
        if (o.mask.bits[static_cast<std::size_t>(y * o.mask.width + x)]) {
          out.at(o.mask.y0 + y, o.mask.x0 + x) = 1.0;
        }
      }
    }
  }
  for (int pass = 0; pass < blur_radius; ++pass) {
    SaliencyMap next(s, s);
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        double acc = 0.0;
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || xx < 0 || yy >= s || xx >= s) continue;
            acc += out.at(yy, xx);
            ++n;
          }
        }
        next.at(y, x) = acc / n;
      }
    }
    out = std::move(next);
  }
  minmax_in_place(out.values, false);
  return out;
}

}  // namespace afsd::saliency
