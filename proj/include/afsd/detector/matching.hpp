#pragma once

#include <span>
#include <vector>

#include "afsd/detector/anchors.hpp"
#include "afsd/tensor/tensor.hpp"

namespace afsd::detector {

/// Annotated ground truth in model label space (1..N_cls; 0 is background).
struct GtBox {
  Box box;
  int label = 1;
};

constexpr int kNoMatch = -1;

struct MatchResult {
  std::vector<int> positive;     // class label or kNoMatch
  std::vector<int> matched_gt;   // gt index or kNoMatch
  std::vector<bool> hard_negative;
  std::size_t num_positive = 0;  // N

  std::size_t size() const { return positive.size(); }
  std::vector<std::size_t> positive_indices() const;
  std::vector<std::size_t> negative_indices() const;
};

/// Forced best anchor per gt (ties to the lower anchor index; later gts win
/// a contested anchor), then every anchor with IoU >= pos_thr to its argmax
/// gt. hard_negative is left all false.
MatchResult match_anchors(const AnchorSet& anchors, std::span<const GtBox> gt, double pos_thr = 0.5);

/// Flags the ratio*N non-positive anchors with the largest loss (ties to the
/// lower index); at least one when N == 0.
MatchResult hard_negative_mining(std::span<const double> cls_loss, MatchResult m, double neg_pos_ratio = 3.0);

/// -log softmax(logits[i])[0] for every row of a [N,K] logit tensor.
std::vector<double> background_losses(const Tensor& logits);

}  // namespace afsd::detector
