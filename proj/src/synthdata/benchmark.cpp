#include "afsd/synthdata/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace afsd::synth {

SplitSpec SplitSpec::preset(int split_id) {
  SplitSpec s;
  s.split_id = split_id;
  for (const auto& c : synth::categories()) s.categories.push_back(c.id);
  switch (split_id) {
    case 1: s.novel = {3, 6}; break;  // red triangle, blue square
    case 2: s.novel = {1, 8}; break;  // red circle, blue bar
    case 3: s.novel = {4, 5}; break;  // red bar, blue circle
    default: throw std::invalid_argument("split id must be 1, 2 or 3, got " + std::to_string(split_id));
  }
  return s;
}

std::vector<int> SplitSpec::base() const {
  std::vector<int> out;
  for (int c : categories) {
    if (!is_novel(c)) out.push_back(c);
  }
  return out;
}

bool SplitSpec::is_novel(int category) const {
  return std::find(novel.begin(), novel.end(), category) != novel.end();
}

Benchmark build_benchmark(std::uint64_t seed, const SplitSpec& split, const BenchmarkSizes& sizes,
                          const SceneConfig& cfg) {
  if (sizes.base_train <= 0 || sizes.novel_pool <= 0 || sizes.test <= 0) {
    throw std::invalid_argument("benchmark sizes must be positive");
  }
  Benchmark b;
  b.split = split;
  auto make = [&](std::uint64_t set_tag, int n) {
    std::vector<Scene> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      out.push_back(generate_scene(mix_seed(mix_seed(seed, set_tag), static_cast<std::uint64_t>(i)), cfg));
    }
    return out;
  };
  // The scene distribution does not depend on the split; only annotation does.
  b.base_train = make(1, sizes.base_train);
  b.novel_pool = make(2, sizes.novel_pool);
  b.test = make(3, sizes.test);
  for (auto& scene : b.base_train) {
    for (auto& o : scene.objects) o.annotated = !split.is_novel(o.category);
  }
  return b;
}

namespace {

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

void write_p6(const std::filesystem::path& path, int height, int width,
              const std::vector<unsigned char>& rgb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

void write_ppm_rgb(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("write_ppm_rgb expects [3,H,W], got " + shape_str(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::vector<unsigned char> rgb;
  rgb.reserve(3 * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) rgb.push_back(to_byte(image.at(c, y, x)));
    }
  }
  write_p6(path, static_cast<int>(h), static_cast<int>(w), rgb);
}

void write_ppm_gray(const std::filesystem::path& path, std::span<const double> values, int height,
                    int width) {
  if (values.size() != static_cast<std::size_t>(height * width)) {
    throw ShapeError("write_ppm_gray: value count does not match dimensions");
  }
  std::vector<unsigned char> rgb;
  rgb.reserve(3 * values.size());
  for (double v : values) {
    const unsigned char b = to_byte(v);
    rgb.insert(rgb.end(), {b, b, b});
  }
  write_p6(path, height, width, rgb);
}

nlohmann::json scene_sidecar(const Scene& scene) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : scene.objects) {
    objs.push_back({{"class", o.category},
                    {"box", {o.box.cx, o.box.cy, o.box.w, o.box.h}},
                    {"annotated", o.annotated}});
  }
  return {{"seed", scene.seed}, {"objects", objs}};
}

void dump_scenes(const std::filesystem::path& dir, const std::string& prefix,
                 const std::vector<Scene>& scenes) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    char stem[64];
    std::snprintf(stem, sizeof stem, "%s_%04zu", prefix.c_str(), i);
    write_ppm_rgb(dir / (std::string(stem) + ".ppm"), scenes[i].image);
    std::ofstream side(dir / (std::string(stem) + ".json"));
    side << scene_sidecar(scenes[i]).dump() << '\n';
  }
}

}  // namespace afsd::synth
