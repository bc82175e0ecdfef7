#include "afsd/fewshot/losses.hpp"

#include <stdexcept>

namespace afsd::fewshot {

void Hyperparams::validate() const {
  if (alpha < 0 || beta < 0 || eta < 0 || gamma < 0) throw std::invalid_argument("loss weights must be >= 0");
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be > 0");
  if (K < 1 || base_multiplier < 0) throw std::invalid_argument("K must be >= 1 and base_multiplier >= 0");
}

Var object_concentration_loss(Var features, Var rows, const detector::MatchResult& m) {
  Tape& tape = features.tape();
  const auto pos = m.positive_indices();
  if (pos.empty()) return tape.constant(Tensor::scalar(0.0));
  const std::size_t k = rows.shape().at(0);
  Var cos = matmul_nt(l2_normalize_rows(gather_rows(features, pos)), l2_normalize_rows(rows));
  Tensor pick({pos.size(), k});
  for (std::size_t r = 0; r < pos.size(); ++r) {
    const auto label = static_cast<std::size_t>(m.positive[pos[r]]);
    if (label >= k) throw std::invalid_argument("object_concentration_loss: label without a classifier row");
    pick.at(r, label) = 1.0;
  }
  return scale(sum(cos * tape.constant(std::move(pick))), -1.0 / static_cast<double>(pos.size()));
}

Var background_concentration_loss(Var features, Var rows, const detector::MatchResult& m) {
  Tape& tape = features.tape();
  const auto neg = m.negative_indices();
  if (neg.empty()) return tape.constant(Tensor::scalar(0.0));
  const std::vector<std::size_t> bg{0};
  Var cos = matmul_nt(l2_normalize_rows(gather_rows(features, neg)), l2_normalize_rows(gather_rows(rows, bg)));
  return scale(sum(cos), 1.0 / static_cast<double>(neg.size()));
}

Var distillation_loss(Var logits, Var offsets, const Tensor& teacher_logits, const Tensor& teacher_offsets,
                      std::size_t base_columns) {
  const std::size_t n = logits.shape().at(0);
  if (teacher_logits.rank() != 2 || teacher_logits.dim(0) != n || offsets.shape() != teacher_offsets.shape() ||
      offsets.shape().at(0) != n) {
    throw ShapeError("distillation_loss: anchor counts differ between student and teacher");
  }
  if (teacher_logits.dim(1) != base_columns || base_columns > logits.shape().at(1)) {
    throw ShapeError("distillation_loss: teacher has " + std::to_string(teacher_logits.dim(1)) +
                     " logit columns, expected " + std::to_string(base_columns));
  }
  Tape& tape = logits.tape();
  Var dl = slice_cols(logits, 0, base_columns) - tape.constant(teacher_logits);
  Var dr = offsets - tape.constant(teacher_offsets);
  return mean(square(dl)) + mean(square(dr));
}

Var combine_novel_loss(Var base_total, Var conc_pos, Var conc_neg, Var dist, const Hyperparams& hp) {
  return base_total + scale(conc_pos, hp.beta) + scale(conc_neg, hp.eta) + scale(dist, hp.gamma);
}

NovelLoss novel_loss(Var logits, Var offsets, Var features, Var rows, const detector::MatchResult& m,
                     const detector::AnchorSet& anchors, std::span<const detector::GtBox> gt,
                     const TeacherOutputs* teacher, const Hyperparams& hp) {
  NovelLoss out;
  out.base = detector::base_loss(logits, offsets, m, anchors, gt, hp.alpha);
  out.conc_pos = object_concentration_loss(features, rows, m);
  out.conc_neg = background_concentration_loss(features, rows, m);
  out.dist = teacher ? distillation_loss(logits, offsets, teacher->logits, teacher->offsets, teacher->logits.dim(1))
                     : logits.tape().constant(Tensor::scalar(0.0));
  out.total = combine_novel_loss(out.base.total, out.conc_pos, out.conc_neg, out.dist, hp);
  return out;
}

}  // namespace afsd::fewshot
