#pragma once

#include <span>

#include "afsd/detector/matching.hpp"
#include "afsd/tensor/ops.hpp"

namespace afsd::detector {

struct BaseLoss {
  Var total;  // cls + bbox
  Var cls;    // cross-entropy over positives and hard negatives, / max(N,1)
  Var bbox;   // alpha * smooth-L1 over positives, / max(N,1)
};

/// Mining must already be done on `m`. Targets for positives are the
/// encoded offsets of their matched gt box.
BaseLoss base_loss(Var logits, Var offsets, const MatchResult& m, const AnchorSet& anchors,
                   std::span<const GtBox> gt, double alpha = 1.0);

/// Encoded targets for the positive anchors, in positive_indices() order.
Tensor regression_targets(const MatchResult& m, const AnchorSet& anchors, std::span<const GtBox> gt);

}  // namespace afsd::detector
