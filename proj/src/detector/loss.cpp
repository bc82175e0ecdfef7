#include "afsd/detector/loss.hpp"

#include <algorithm>

namespace afsd::detector {

Tensor regression_targets(const MatchResult& m, const AnchorSet& anchors, std::span<const GtBox> gt) {
  const auto pos = m.positive_indices();
  Tensor t({pos.size(), 4});
  for (std::size_t r = 0; r < pos.size(); ++r) {
    const auto g = static_cast<std::size_t>(m.matched_gt[pos[r]]);
    const auto e = encode_box(gt[g].box, anchors.boxes[pos[r]]);
    for (std::size_t c = 0; c < 4; ++c) t.at(r, c) = e[c];
  }
  return t;
}

BaseLoss base_loss(Var logits, Var offsets, const MatchResult& m, const AnchorSet& anchors,
                   std::span<const GtBox> gt, double alpha) {
  if (logits.shape().size() != 2 || logits.shape()[0] != m.size() || offsets.shape() != Shape{m.size(), 4} ||
      anchors.size() != m.size()) {
    throw ShapeError("base_loss: logits/offsets/anchors/match sizes disagree");
  }
  Tape& tape = logits.tape();
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(m.num_positive, 1));

  std::vector<int> targets(m.size(), -1);
  bool any = false;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.positive[i] != kNoMatch) targets[i] = m.positive[i];
    else if (m.hard_negative[i]) targets[i] = 0;
    any = any || targets[i] >= 0;
  }
  BaseLoss out;
  out.cls = any ? scale(cross_entropy(logits, targets), norm) : tape.constant(Tensor::scalar(0.0));
  const auto pos = m.positive_indices();
  if (pos.empty()) {
    out.bbox = tape.constant(Tensor::scalar(0.0));
  } else {
    Var diff = gather_rows(offsets, pos) - tape.constant(regression_targets(m, anchors, gt));
    out.bbox = scale(sum(smooth_l1(diff)), alpha * norm);
  }
  out.total = out.cls + out.bbox;
  return out;
}

}  // namespace afsd::detector
