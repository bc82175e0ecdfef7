#pragma once

#include <map>
#include <span>
#include <vector>

#include "afsd/detector/anchors.hpp"
#include "afsd/tensor/tensor.hpp"

namespace afsd::detector {

/// Greedy suppression for one class: repeatedly keep the highest score
/// (ties to the lower index) and drop boxes with IoU > iou_thr to it.
/// Boxes scoring below score_thr are never kept; top_k <= 0 means no cap.
/// Returns kept indices in keep order.
std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores, double iou_thr,
                             double score_thr, int top_k);

struct Detection {
  int image_id = 0;
  int label = 0;  // model label space, >= 1
  double score = 0.0;
  Box box;
};

struct PostprocessConfig {
  double score_thr = 0.01;
  double nms_iou = 0.45;
  int top_k = 50;  // per class
  int max_detections = 100;  // per image, after merging classes
};

/// Softmax over cosine logits, decode, per-class NMS.
std::vector<Detection> detect(const Tensor& logits, const Tensor& offsets, const AnchorSet& anchors,
                              int image_id, const PostprocessConfig& cfg = {});

struct GtRecord {
  int image_id = 0;
  int label = 0;
  Box box;
};

struct MapReport {
  std::map<int, double> ap;  // classes present in gt
  double map = 0.0;

  /// Mean AP over the listed classes that have gt; 0 when none do.
  double mean_over(std::span<const int> labels) const;
};

/// Single-class VOC2007 11-point AP from a ranked hit list: hits[r] is
/// whether the r-th detection (descending score) was a true positive.
double voc11_ap(const std::vector<bool>& hits, std::size_t num_gt);

MapReport evaluate_map(std::span<const Detection> detections, std::span<const GtRecord> gt, double iou_thr = 0.5);

}  // namespace afsd::detector
