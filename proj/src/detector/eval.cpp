#include "afsd/detector/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace afsd::detector {

std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores, double iou_thr,
                             double score_thr, int top_k) {
  if (boxes.size() != scores.size()) throw ShapeError("nms: box and score counts differ");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (scores[i] >= score_thr) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> keep;
  std::vector<bool> dead(boxes.size(), false);
  for (std::size_t i : order) {
    if (dead[i]) continue;
    keep.push_back(i);
    if (top_k > 0 && static_cast<int>(keep.size()) >= top_k) break;
    for (std::size_t j : order) {
      if (!dead[j] && j != i && iou(boxes[i], boxes[j]) > iou_thr) dead[j] = true;
    }
  }
  return keep;
}

std::vector<Detection> detect(const Tensor& logits, const Tensor& offsets, const AnchorSet& anchors,
                              int image_id, const PostprocessConfig& cfg) {
  const std::size_t n = anchors.size();
  if (logits.rank() != 2 || logits.dim(0) != n || offsets.shape() != Shape{n, 4}) {
    throw ShapeError("detect: outputs do not match the anchor set");
  }
  const std::size_t k = logits.dim(1);
  Tensor prob({n, k});
  std::vector<Box> decoded(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(logits.at(i, j) - mx);
    for (std::size_t j = 0; j < k; ++j) prob.at(i, j) = std::exp(logits.at(i, j) - mx) / z;
    decoded[i] = decode_box({offsets.at(i, 0), offsets.at(i, 1), offsets.at(i, 2), offsets.at(i, 3)},
                            anchors.boxes[i]);
  }
  std::vector<Detection> out;
  std::vector<double> scores(n);
  for (std::size_t j = 1; j < k; ++j) {
    for (std::size_t i = 0; i < n; ++i) scores[i] = prob.at(i, j);
    for (std::size_t i : nms(decoded, scores, cfg.nms_iou, cfg.score_thr, cfg.top_k)) {
      out.push_back({image_id, static_cast<int>(j), scores[i], decoded[i]});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (cfg.max_detections > 0 && out.size() > static_cast<std::size_t>(cfg.max_detections)) {
    out.resize(static_cast<std::size_t>(cfg.max_detections));
  }
  return out;
}

double MapReport::mean_over(std::span<const int> labels) const {
  double acc = 0.0;
  int n = 0;
  for (int l : labels) {
    auto it = ap.find(l);
    if (it == ap.end()) continue;
    acc += it->second;
    ++n;
  }
  return n ? acc / n : 0.0;
}

double voc11_ap(const std::vector<bool>& hits, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  std::vector<double> prec(hits.size()), rec(hits.size());
  std::size_t tp = 0;
  for (std::size_t r = 0; r < hits.size(); ++r) {
    tp += hits[r] ? 1 : 0;
    prec[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
    rec[r] = static_cast<double>(tp) / static_cast<double>(num_gt);
  }
  double ap = 0.0;
  for (int t = 0; t <= 10; ++t) {
    const double thr = t / 10.0;
    double p = 0.0;
    for (std::size_t r = 0; r < hits.size(); ++r) {
      if (rec[r] >= thr) p = std::max(p, prec[r]);
    }
    ap += p;
  }
  return ap / 11.0;
}

MapReport evaluate_map(std::span<const Detection> detections, std::span<const GtRecord> gt, double iou_thr) {
  std::set<int> classes;
  for (const auto& g : gt) classes.insert(g.label);
  MapReport rep;
  for (int c : classes) {
    std::map<int, std::vector<std::size_t>> gt_by_image;
    std::size_t num_gt = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i].label != c) continue;
      gt_by_image[gt[i].image_id].push_back(i);
      ++num_gt;
    }
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < detections.size(); ++i) {
      if (detections[i].label == c) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });
    std::vector<bool> used(gt.size(), false);
    std::vector<bool> hits;
    hits.reserve(order.size());
    for (std::size_t d : order) {
      double best = 0.0;
      std::size_t arg = gt.size();
      auto it = gt_by_image.find(detections[d].image_id);
      if (it != gt_by_image.end()) {
        for (std::size_t g : it->second) {
          const double v = iou(detections[d].box, gt[g].box);
          if (v > best) {
            best = v;
            arg = g;
          }
        }
      }
      const bool hit = arg < gt.size() && best >= iou_thr && !used[arg];
      if (hit) used[arg] = true;
      hits.push_back(hit);
    }
    rep.ap[c] = voc11_ap(hits, num_gt);
  }
  double acc = 0.0;
  for (const auto& [c, v] : rep.ap) acc += v;
  rep.map = rep.ap.empty() ? 0.0 : acc / static_cast<double>(rep.ap.size());
  return rep;
}

}  // namespace afsd::detector
