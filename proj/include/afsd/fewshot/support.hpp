#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "afsd/detector/matching.hpp"
#include "afsd/synthdata/benchmark.hpp"

namespace afsd::fewshot {

/// Category id <-> model label. Label 0 is background, 1..B the base
/// categories in split order, B+1.. the novel ones.
struct LabelMap {
  std::vector<int> base;
  std::vector<int> novel;  // empty for a base-stage detector

  static LabelMap base_only(const synth::SplitSpec& split);
  static LabelMap full(const synth::SplitSpec& split);

  std::size_t num_classes() const { return base.size() + novel.size(); }
  /// 0 when the category has no row.
  int label_of(int category) const;
  int category_of(int label) const;
};

/// Annotated objects whose category has a label.
std::vector<detector::GtBox> annotated_gt(const synth::Scene& scene, const LabelMap& labels);

struct SupportSet {
  std::vector<synth::Scene> images;  // only sampled instances remain annotated
  int K = 0;
  int base_multiplier = 3;

  /// Annotated instances per category.
  std::map<int, int> counts() const;
};

/// K instances per novel category and base_multiplier*K per base category,
/// drawn without replacement from `pool` under `seed`. Throws
/// std::invalid_argument when a category has too few instances.
SupportSet sample_support_set(const std::vector<synth::Scene>& pool, const synth::SplitSpec& split, int K,
                              std::uint64_t seed, int base_multiplier = 3);

}  // namespace afsd::fewshot
