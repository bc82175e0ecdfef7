#pragma once

#include "afsd/detector/loss.hpp"

namespace afsd::fewshot {

struct Hyperparams {
  double alpha = 1.0;
  double beta = 2.0;   // object concentration
  double eta = 0.4;    // background concentration
  double gamma = 0.5;  // distillation
  double epsilon = 2.718281828459045;
  int K = 2;
  int base_multiplier = 3;

  void validate() const;
};

/// -mean over positives of cos(f_i, w_label(i)); 0 with no positives.
Var object_concentration_loss(Var features, Var rows, const detector::MatchResult& m);

/// mean over hard negatives of cos(f_i, w_0); 0 with no hard negatives.
Var background_concentration_loss(Var features, Var rows, const detector::MatchResult& m);

/// MSE over the first `base_columns` logit columns (background + base
/// classes) plus MSE over all regression outputs. The teacher outputs are
/// plain tensors, so nothing flows back into the base detector.
Var distillation_loss(Var logits, Var offsets, const Tensor& teacher_logits, const Tensor& teacher_offsets,
                      std::size_t base_columns);

struct NovelLoss {
  detector::BaseLoss base;
  Var conc_pos;
  Var conc_neg;
  Var dist;
  Var total;
};

/// base.total + beta * conc_pos + eta * conc_neg + gamma * dist.
Var combine_novel_loss(Var base_total, Var conc_pos, Var conc_neg, Var dist, const Hyperparams& hp);

struct TeacherOutputs {
  Tensor logits;
  Tensor offsets;
};

/// Full novel-stage objective for one image. Without a teacher the
/// distillation term is zero.
NovelLoss novel_loss(Var logits, Var offsets, Var features, Var rows, const detector::MatchResult& m,
                     const detector::AnchorSet& anchors, std::span<const detector::GtBox> gt,
                     const TeacherOutputs* teacher, const Hyperparams& hp);

}  // namespace afsd::fewshot
