#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "afsd/synthdata/scene.hpp"

namespace afsd::synth {

/// Base/novel partition of the eight categories. Splits 1..3 have
/// pairwise-disjoint novel sets.
struct SplitSpec {
  int split_id = 1;
  std::vector<int> categories;  // all ids, ascending
  std::vector<int> novel;       // ascending

  static SplitSpec preset(int split_id);
  std::vector<int> base() const;
  bool is_novel(int category) const;
};

struct BenchmarkSizes {
  int base_train = 400;
  int novel_pool = 200;
  int test = 200;
};

struct Benchmark {
  SplitSpec split;
  std::vector<Scene> base_train;  // novel instances present but unannotated
  std::vector<Scene> novel_pool;  // fully annotated; restricted by support sampling
  std::vector<Scene> test;        // fully annotated
};

Benchmark build_benchmark(std::uint64_t seed, const SplitSpec& split, const BenchmarkSizes& sizes,
                          const SceneConfig& cfg = {});

/// Binary P6 with 8-bit channels, value = round(255 * v).
void write_ppm_rgb(const std::filesystem::path& path, const Tensor& image);
/// Single-channel map written as gray P6 triples.
void write_ppm_gray(const std::filesystem::path& path, std::span<const double> values, int height,
                    int width);

/// {"seed":..,"objects":[{"class":..,"box":[cx,cy,w,h],"annotated":..}]}
nlohmann::json scene_sidecar(const Scene& scene);

/// One PPM plus JSON sidecar per scene under `dir`, named <prefix>_<index>.
void dump_scenes(const std::filesystem::path& dir, const std::string& prefix,
                 const std::vector<Scene>& scenes);

}  // namespace afsd::synth
