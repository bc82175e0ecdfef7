#include "afsd/synthdata/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace afsd::synth {

namespace {

constexpr std::array<CategoryInfo, kNumCategories> kCategories{{
    {1, ShapeKind::kCircle, 0, "red_circle"},
    {2, ShapeKind::kSquare, 0, "red_square"},
    {3, ShapeKind::kTriangle, 0, "red_triangle"},
    {4, ShapeKind::kBar, 0, "red_bar"},
    {5, ShapeKind::kCircle, 1, "blue_circle"},
    {6, ShapeKind::kSquare, 1, "blue_square"},
    {7, ShapeKind::kTriangle, 1, "blue_triangle"},
    {8, ShapeKind::kBar, 1, "blue_bar"},
}};

struct PixelRect {
  int x0, y0, w, h;
  int area() const { return w * h; }
};

int intersection(const PixelRect& a, const PixelRect& b) {
  const int iw = std::min(a.x0 + a.w, b.x0 + b.w) - std::max(a.x0, b.x0);
  const int ih = std::min(a.y0 + a.h, b.y0 + b.h) - std::max(a.y0, b.y0);
  return iw > 0 && ih > 0 ? iw * ih : 0;
}

struct Placement {
  int category;
  PixelRect rect;
  bool flip;  // triangle apex down
};

bool inside_shape(const Placement& p, double px, double py) {
  const auto& r = p.rect;
  const double u = (px - r.x0) / r.w;  // [0,1] across the rect
  const double v = (py - r.y0) / r.h;
  if (u < 0.0 || v < 0.0 || u > 1.0 || v > 1.0) return false;
  switch (category(p.category).shape) {
    case ShapeKind::kCircle: {
      const double du = u - 0.5, dv = v - 0.5;
      return du * du + dv * dv <= 0.25;
    }
    case ShapeKind::kSquare:
    case ShapeKind::kBar:
      return true;
    case ShapeKind::kTriangle: {
      const double depth = p.flip ? 1.0 - v : v;  // 0 at apex
      return std::abs(u - 0.5) <= 0.5 * depth;
    }
  }
  return false;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

const std::array<CategoryInfo, kNumCategories>& categories() { return kCategories; }

const CategoryInfo& category(int id) {
  if (id < 1 || id > kNumCategories) {
    throw std::out_of_range("category id " + std::to_string(id) + " outside 1.." +
                            std::to_string(kNumCategories));
  }
  return kCategories[static_cast<std::size_t>(id - 1)];
}

std::size_t Mask::area() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  if (cfg.image_size < 8) throw InfeasibleSceneError("image_size must be at least 8");
  if (cfg.max_objects < cfg.min_objects || cfg.min_objects < 0) {
    throw InfeasibleSceneError("object count range is empty");
  }
  if (cfg.max_objects == 0 || cfg.min_objects == 0) {
    if (!cfg.allow_empty) throw InfeasibleSceneError("empty scenes require allow_empty");
  }
  if (cfg.min_object_px < 4 || cfg.max_object_px < cfg.min_object_px ||
      cfg.max_object_px > cfg.image_size) {
    throw InfeasibleSceneError("object size range does not fit the image");
  }
  std::vector<int> allowed = cfg.allowed_categories;
  if (allowed.empty()) {
    for (const auto& c : kCategories) allowed.push_back(c.id);
  }
  for (int id : allowed) (void)category(id);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  const int s = cfg.image_size;
  const int count = uniform_int(cfg.min_objects, cfg.max_objects);

  std::vector<Placement> placed;
  int retries = 0;
  while (static_cast<int>(placed.size()) < count) {
    Placement p{};
    p.category = allowed[static_cast<std::size_t>(uniform_int(0, static_cast<int>(allowed.size()) - 1))];
    const int size = uniform_int(cfg.min_object_px, cfg.max_object_px);
    int w = size, h = size;
    if (category(p.category).shape == ShapeKind::kBar) {
      const int thin = std::max(4, static_cast<int>(std::lround(size * 0.35)));
      if (unit(rng) < 0.5) {
        h = thin;
      } else {
        w = thin;
      }
    }
    p.flip = unit(rng) < 0.5;
    p.rect = {uniform_int(0, s - w), uniform_int(0, s - h), w, h};

    bool ok = true;
    for (const auto& q : placed) {
      const int inter = intersection(p.rect, q.rect);
      const double iou = static_cast<double>(inter) / (p.rect.area() + q.rect.area() - inter);
      const double cover = static_cast<double>(inter) / std::min(p.rect.area(), q.rect.area());
      if (iou > cfg.max_pair_iou || cover > 0.5) {
        ok = false;
        break;
      }
    }
    if (ok) {
      placed.push_back(p);
    } else if (++retries > cfg.max_retries) {
      throw InfeasibleSceneError("could not place " + std::to_string(count) +
                                 " objects under the overlap cap");
    }
  }

  // Background: tinted gray, linear gradient, pixel noise.
  Scene scene;
  scene.seed = seed;
  scene.image = Tensor({3, static_cast<std::size_t>(s), static_cast<std::size_t>(s)});
  const double gray = uniform(0.35, 0.6);
  std::array<double, 3> base{}, gx{}, gy{};
  for (int c = 0; c < 3; ++c) {
    base[c] = gray + uniform(-0.05, 0.05);
    gx[c] = uniform(-0.15, 0.15);
    gy[c] = uniform(-0.15, 0.15);
  }
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = base[c] + gx[c] * (x / double(s) - 0.5) + gy[c] * (y / double(s) - 0.5) +
                         uniform(-0.05, 0.05);
        scene.image.at(c, y, x) = clamp01(v);
      }
    }
  }

  // Later objects occlude earlier ones; masks are the visible pixels.
  std::vector<int> owner(static_cast<std::size_t>(s * s), -1);
  std::vector<std::array<double, 3>> colors;
  for (std::size_t k = 0; k < placed.size(); ++k) {
    const auto& p = placed[k];
    std::array<double, 3> col{};
    if (category(p.category).color_family == 0) {
      col = {uniform(0.7, 0.95), uniform(0.15, 0.35), uniform(0.1, 0.3)};
    } else {
      col = {uniform(0.1, 0.3), uniform(0.25, 0.45), uniform(0.7, 0.95)};
    }
    colors.push_back(col);
    for (int y = p.rect.y0; y < p.rect.y0 + p.rect.h; ++y) {
      for (int x = p.rect.x0; x < p.rect.x0 + p.rect.w; ++x) {
        if (inside_shape(p, x + 0.5, y + 0.5)) owner[static_cast<std::size_t>(y * s + x)] = static_cast<int>(k);
      }
    }
  }
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const int k = owner[static_cast<std::size_t>(y * s + x)];
      if (k < 0) continue;
      for (int c = 0; c < 3; ++c) {
        scene.image.at(c, y, x) = clamp01(colors[static_cast<std::size_t>(k)][c] + uniform(-0.04, 0.04));
      }
    }
  }

  for (std::size_t k = 0; k < placed.size(); ++k) {
    int x0 = s, y0 = s, x1 = -1, y1 = -1;
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        if (owner[static_cast<std::size_t>(y * s + x)] != static_cast<int>(k)) continue;
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
    if (x1 < 0) continue;  // fully hidden
    SceneObject obj;
    obj.category = placed[k].category;
    obj.mask.x0 = x0;
    obj.mask.y0 = y0;
    obj.mask.width = x1 - x0 + 1;
    obj.mask.height = y1 - y0 + 1;
    obj.mask.bits.assign(static_cast<std::size_t>(obj.mask.width * obj.mask.height), 0);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (owner[static_cast<std::size_t>(y * s + x)] == static_cast<int>(k)) {
          obj.mask.bits[static_cast<std::size_t>((y - y0) * obj.mask.width + (x - x0))] = 1;
        }
      }
    }
    obj.box = Box::from_corners(x0 / double(s), y0 / double(s), (x1 + 1) / double(s),
                                (y1 + 1) / double(s));
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

}  // namespace afsd::synth
