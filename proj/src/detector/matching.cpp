#include "afsd/detector/matching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace afsd::detector {

std::vector<std::size_t> MatchResult::positive_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < positive.size(); ++i) {
    if (positive[i] != kNoMatch) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> MatchResult::negative_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < hard_negative.size(); ++i) {
    if (hard_negative[i]) out.push_back(i);
  }
  return out;
}

MatchResult match_anchors(const AnchorSet& anchors, std::span<const GtBox> gt, double pos_thr) {
  const std::size_t n = anchors.size();
  MatchResult m;
  m.positive.assign(n, kNoMatch);
  m.matched_gt.assign(n, kNoMatch);
  m.hard_negative.assign(n, false);
  if (gt.empty() || n == 0) return m;

  for (const auto& g : gt) {
    if (g.label < 1) throw std::invalid_argument("match_anchors: gt labels start at 1");
  }
  // Threshold matches first, then forced matches overwrite.
  for (std::size_t i = 0; i < n; ++i) {
    double best = 0.0;
    int arg = kNoMatch;
    for (std::size_t k = 0; k < gt.size(); ++k) {
      const double v = iou(anchors.boxes[i], gt[k].box);
      if (v > best) {
        best = v;
        arg = static_cast<int>(k);
      }
    }
    if (arg != kNoMatch && best >= pos_thr) {
      m.matched_gt[i] = arg;
      m.positive[i] = gt[static_cast<std::size_t>(arg)].label;
    }
  }
  for (std::size_t k = 0; k < gt.size(); ++k) {
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = iou(anchors.boxes[i], gt[k].box);
      if (v > best) {
        best = v;
        arg = i;
      }
    }
    m.matched_gt[arg] = static_cast<int>(k);
    m.positive[arg] = gt[k].label;
  }
  m.num_positive = static_cast<std::size_t>(std::count_if(m.positive.begin(), m.positive.end(),
                                                          [](int p) { return p != kNoMatch; }));
  return m;
}

MatchResult hard_negative_mining(std::span<const double> cls_loss, MatchResult m, double neg_pos_ratio) {
  if (cls_loss.size() != m.size()) throw ShapeError("hard_negative_mining: loss count differs from anchor count");
  if (!(neg_pos_ratio >= 0.0)) throw std::invalid_argument("hard_negative_mining: ratio must be >= 0");
  std::vector<std::size_t> cand;
  for (std::size_t i = 0; i < m.size(); ++i) {
    m.hard_negative[i] = false;
    if (m.positive[i] == kNoMatch) cand.push_back(i);
  }
  std::size_t want = static_cast<std::size_t>(std::floor(neg_pos_ratio * static_cast<double>(m.num_positive)));
  if (m.num_positive == 0) want = 1;
  want = std::min(want, cand.size());
  std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) { return cls_loss[a] > cls_loss[b]; });
  for (std::size_t k = 0; k < want; ++k) m.hard_negative[cand[k]] = true;
  return m;
}

std::vector<double> background_losses(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) == 0) throw ShapeError("background_losses expects [N,K] logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(logits.at(i, j) - mx);
    out[i] = std::log(z) + mx - logits.at(i, 0);
  }
  return out;
}

}  // namespace afsd::detector
