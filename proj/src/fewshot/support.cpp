#include "afsd/fewshot/support.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

namespace afsd::fewshot {

LabelMap LabelMap::base_only(const synth::SplitSpec& split) { return {split.base(), {}}; }

LabelMap LabelMap::full(const synth::SplitSpec& split) { return {split.base(), split.novel}; }

int LabelMap::label_of(int category) const {
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (base[i] == category) return static_cast<int>(i + 1);
  }
  for (std::size_t i = 0; i < novel.size(); ++i) {
    if (novel[i] == category) return static_cast<int>(base.size() + i + 1);
  }
  return 0;
}

int LabelMap::category_of(int label) const {
  if (label >= 1 && static_cast<std::size_t>(label) <= base.size()) return base[static_cast<std::size_t>(label - 1)];
  const auto k = static_cast<std::size_t>(label) - base.size() - 1;
  if (label >= 1 && k < novel.size()) return novel[k];
  throw std::out_of_range("no category for label " + std::to_string(label));
}

std::vector<detector::GtBox> annotated_gt(const synth::Scene& scene, const LabelMap& labels) {
  std::vector<detector::GtBox> out;
  for (const auto& o : scene.objects) {
    if (!o.annotated) continue;
    const int l = labels.label_of(o.category);
    if (l > 0) out.push_back({o.box, l});
  }
  return out;
}

std::map<int, int> SupportSet::counts() const {
  std::map<int, int> out;
  for (const auto& s : images) {
    for (const auto& o : s.objects) {
      if (o.annotated) ++out[o.category];
    }
  }
  return out;
}

SupportSet sample_support_set(const std::vector<synth::Scene>& pool, const synth::SplitSpec& split, int K,
                              std::uint64_t seed, int base_multiplier) {
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  std::map<int, std::vector<std::pair<std::size_t, std::size_t>>> instances;
  for (std::size_t s = 0; s < pool.size(); ++s) {
    for (std::size_t o = 0; o < pool[s].objects.size(); ++o) instances[pool[s].objects[o].category].push_back({s, o});
  }
  std::set<std::pair<std::size_t, std::size_t>> chosen;
  for (int c : split.categories) {
    const int want = split.is_novel(c) ? K : base_multiplier * K;
    auto& list = instances[c];
    if (static_cast<int>(list.size()) < want) {
      throw std::invalid_argument("category " + std::to_string(c) + " has " + std::to_string(list.size()) +
                                  " instances, support needs " + std::to_string(want));
    }
    std::mt19937_64 rng(synth::mix_seed(seed, static_cast<std::uint64_t>(c)));
    std::shuffle(list.begin(), list.end(), rng);
    chosen.insert(list.begin(), list.begin() + want);
  }
  SupportSet out;
  out.K = K;
  out.base_multiplier = base_multiplier;
  std::set<std::size_t> scenes;
  for (const auto& [s, o] : chosen) scenes.insert(s);
  for (std::size_t s : scenes) {
    synth::Scene scene = pool[s];
    for (std::size_t o = 0; o < scene.objects.size(); ++o) scene.objects[o].annotated = chosen.count({s, o}) > 0;
    out.images.push_back(std::move(scene));
  }
  return out;
}

}  // namespace afsd::fewshot
