#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "afsd/detector/box.hpp"
#include "afsd/tensor/tensor.hpp"

namespace afsd::synth {

inline constexpr int kNumCategories = 8;

enum class ShapeKind { kCircle, kSquare, kTriangle, kBar };

struct CategoryInfo {
  int id;  // 1-based; 0 is background
  ShapeKind shape;
  int color_family;  // 0 = red family, 1 = blue family
  const char* name;
};

/// Categories 1..8: {circle, square, triangle, bar} x {red, blue}.
const std::array<CategoryInfo, kNumCategories>& categories();
const CategoryInfo& category(int id);

/// Binary mask stored over its tight bounding rectangle in pixel units.
struct Mask {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // row-major, width * height

  bool contains(int x, int y) const {
    return x >= x0 && y >= y0 && x < x0 + width && y < y0 + height &&
           bits[static_cast<std::size_t>((y - y0) * width + (x - x0))] != 0;
  }
  std::size_t area() const;
};

struct SceneObject {
  int category = 0;
  Box box;  // tight bound of `mask`, normalized
  Mask mask;
  bool annotated = true;
};

struct Scene {
  std::uint64_t seed = 0;
  Tensor image;  // [3,S,S] in [0,1]
  std::vector<SceneObject> objects;

  int size() const { return static_cast<int>(image.dim(1)); }
};

struct SceneConfig {
  int image_size = 64;
  int min_objects = 1;
  int max_objects = 4;
  int min_object_px = 12;
  int max_object_px = 28;
  double max_pair_iou = 0.3;
  bool allow_empty = false;
  int max_retries = 200;
  std::vector<int> allowed_categories;  // empty = all eight
};

class InfeasibleSceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Textured background plus shape instances; a pure function of (seed, cfg).
Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg);

/// Stateless 64-bit mixing used to derive per-scene seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace afsd::synth
