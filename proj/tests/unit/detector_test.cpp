#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "afsd/detector/eval.hpp"
#include "afsd/detector/loss.hpp"
#include "afsd/detector/model.hpp"
#include "afsd/synthdata/scene.hpp"
#include "afsd/tensor/grad_check.hpp"
#include "oracles.hpp"

using namespace afsd;
using namespace afsd::detector;
using afsd::testing::nms_oracle;
using afsd::testing::random_box;
using afsd::testing::random_tensor;

namespace {

double smooth_l1_scalar(double x) { return std::abs(x) < 1 ? 0.5 * x * x : std::abs(x) - 0.5; }

double log_softmax_at(std::span<const double> row, std::size_t k) {
  double mx = *std::max_element(row.begin(), row.end());
  double z = 0;
  for (double v : row) z += std::exp(v - mx);
  return row[k] - mx - std::log(z);
}

}  // namespace

TEST(Anchors, Examples) {
  AnchorConfig one{{1}, {0.5}, {1.0}};
  const auto a = generate_anchors(one);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a.boxes[0], (Box{0.5, 0.5, 0.5, 0.5}));

  const auto g = generate_anchors({{2}, {0.3}, {1.0}});
  ASSERT_EQ(g.size(), 4u);
  EXPECT_EQ(g.boxes[0].cx, 0.25);
  EXPECT_EQ(g.boxes[1].cx, 0.75);
  EXPECT_EQ(g.boxes[2].cy, 0.75);

  EXPECT_THROW(generate_anchors({{}, {}, {1.0}}), std::invalid_argument);
}

TEST(Anchors, EnumerationOrder) {
  const AnchorConfig cfg{{2, 2}, {0.2, 0.4}, {1.0, 2.0, 0.5}};
  const auto a = generate_anchors(cfg);
  ASSERT_EQ(a.size(), 24u);
  std::size_t idx = 0;
  for (std::size_t s = 0; s < 2; ++s)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (double asp : cfg.aspects) {
          const Box& b = a.boxes[idx];
          EXPECT_DOUBLE_EQ(b.cx, 0.25 + 0.5 * j);
          EXPECT_DOUBLE_EQ(b.cy, 0.25 + 0.5 * i);
          EXPECT_NEAR(b.w / b.h, asp, 1e-12);
          EXPECT_NEAR(b.w * b.h, cfg.scales[s] * cfg.scales[s], 1e-12);
          EXPECT_EQ(a.scale_index[idx], s);
          ++idx;
        }
  const auto again = generate_anchors(cfg);
  EXPECT_EQ(again.boxes, a.boxes);
}

TEST(Iou, ExamplesAndProperties) {
  const Box b{0.5, 0.5, 0.2, 0.3};
  EXPECT_EQ(iou(b, b), 1.0);
  EXPECT_EQ(iou(b, Box{0.9, 0.9, 0.1, 0.1}), 0.0);
  EXPECT_NEAR(iou(Box::from_corners(0, 0, 2, 2), Box::from_corners(1, 1, 3, 3)), 1.0 / 7.0, 1e-15);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 500; ++t) {
    const Box x = random_box(rng), y = random_box(rng);
    const double v = iou(x, y);
    EXPECT_EQ(v, iou(y, x));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(EncodeDecode, ExamplesAndInverse) {
  const Box a{0.5, 0.5, 0.2, 0.2};
  for (double v : encode_box(a, a)) EXPECT_EQ(v, 0.0);
  const auto t = encode_box({0.52, 0.5, 0.4, 0.2}, a);
  EXPECT_NEAR(t[0], 1.0, 1e-12);
  EXPECT_EQ(t[1], 0.0);
  EXPECT_NEAR(t[2], std::log(2.0) / 0.2, 1e-12);
  EXPECT_EQ(t[3], 0.0);
  EXPECT_THROW(encode_box({0.5, 0.5, 0.0, 0.1}, a), std::invalid_argument);
  std::mt19937_64 rng(2);
  for (int k = 0; k < 1000; ++k) {
    const Box g = random_box(rng), an = random_box(rng);
    const Box r = decode_box(encode_box(g, an), an);
    EXPECT_NEAR(r.cx, g.cx, 1e-12);
    EXPECT_NEAR(r.cy, g.cy, 1e-12);
    EXPECT_NEAR(r.w, g.w, 1e-12);
    EXPECT_NEAR(r.h, g.h, 1e-12);
  }
}

TEST(MatchAnchors, Examples) {
  AnchorSet anchors;
  anchors.boxes = {{0.2, 0.2, 0.2, 0.2}, {0.5, 0.5, 0.3, 0.3}, {0.8, 0.8, 0.2, 0.2}};
  anchors.scale_index = {0, 0, 0};

  auto m = match_anchors(anchors, {});
  EXPECT_EQ(m.num_positive, 0u);

  std::vector<GtBox> gt{{anchors.boxes[1], 4}};
  m = match_anchors(anchors, gt);
  EXPECT_EQ(m.num_positive, 1u);
  EXPECT_EQ(m.positive, (std::vector<int>{kNoMatch, 4, kNoMatch}));
  EXPECT_EQ(m.matched_gt[1], 0);
}

TEST(MatchAnchors, TwoAnchorsAboveThreshold) {
  // gt (0,0)-(1,1); anchor A (0,0)-(1,0.6): IoU 0.6; anchor B (0,0)-(1,0.7): IoU 0.7.
  AnchorSet anchors;
  anchors.boxes = {Box::from_corners(0, 0, 1, 0.6), Box::from_corners(0, 0, 1, 0.7), Box::from_corners(0, 0.9, 0.1, 1)};
  anchors.scale_index = {0, 0, 0};
  const std::vector<GtBox> gt{{Box::from_corners(0, 0, 1, 1), 2}};
  EXPECT_NEAR(iou(anchors.boxes[0], gt[0].box), 0.6, 1e-12);
  EXPECT_NEAR(iou(anchors.boxes[1], gt[0].box), 0.7, 1e-12);
  const auto m = match_anchors(anchors, gt, 0.5);
  EXPECT_EQ(m.positive, (std::vector<int>{2, 2, kNoMatch}));
  EXPECT_EQ(m.matched_gt, (std::vector<int>{0, 0, kNoMatch}));
  EXPECT_EQ(m.num_positive, 2u);
}

TEST(MatchAnchors, BruteForceOracleAndForcedMatch) {
  const auto anchors = generate_anchors(AnchorConfig{});
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<GtBox> gt;
    const int n = 1 + trial % 4;
    for (int k = 0; k < n; ++k) gt.push_back({random_box(rng), 1 + k});
    const auto m = match_anchors(anchors, gt);
    // Oracle: threshold pass from scratch, then forced matches in gt order.
    std::vector<int> want(anchors.size(), kNoMatch);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      std::vector<double> v;
      for (const auto& g : gt) v.push_back(iou(anchors.boxes[i], g.box));
      const auto it = std::max_element(v.begin(), v.end());
      if (*it >= 0.5 && *it > 0) want[i] = gt[static_cast<std::size_t>(it - v.begin())].label;
    }
    for (const auto& g : gt) {
      std::vector<double> v;
      for (const auto& a : anchors.boxes) v.push_back(iou(a, g.box));
      want[static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin())] = g.label;
    }
    EXPECT_EQ(m.positive, want);
    EXPECT_GE(m.num_positive, 1u);
    std::set<int> labels(m.positive.begin(), m.positive.end());
    labels.erase(kNoMatch);
    // Forced matching: distinct gts here rarely share a best anchor; at least one per surviving label.
    EXPECT_LE(labels.size(), gt.size());
  }
}

TEST(HardNegativeMining, CountTiesAndOracle) {
  MatchResult m;
  m.positive.assign(10, kNoMatch);
  m.matched_gt.assign(10, kNoMatch);
  m.hard_negative.assign(10, false);
  m.positive[2] = 1;
  m.positive[5] = 1;
  m.num_positive = 2;
  std::vector<double> equal(10, 1.0);
  auto r = hard_negative_mining(equal, m, 3);
  EXPECT_EQ(r.negative_indices(), (std::vector<std::size_t>{0, 1, 3, 4, 6, 7}));

  MatchResult few = m;
  few.positive = {1, 1, kNoMatch, 1, 1, 1, 1, 1, 1, kNoMatch};
  few.num_positive = 8;
  r = hard_negative_mining(equal, few, 3);
  EXPECT_EQ(r.negative_indices(), (std::vector<std::size_t>{2, 9}));

  MatchResult none = m;
  none.positive.assign(10, kNoMatch);
  none.num_positive = 0;
  std::vector<double> l{0.1, 0.5, 0.5, 0.2, 0, 0, 0, 0, 0, 0};
  r = hard_negative_mining(l, none, 3);
  EXPECT_EQ(r.negative_indices(), (std::vector<std::size_t>{1}));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> loss(50);
    for (auto& v : loss) v = std::round(u(rng) * 4) / 4;  // plenty of ties
    MatchResult mm;
    mm.positive.assign(50, kNoMatch);
    mm.matched_gt.assign(50, kNoMatch);
    mm.hard_negative.assign(50, false);
    for (int k = 0; k < trial % 7; ++k) mm.positive[static_cast<std::size_t>((k * 13 + trial) % 50)] = 1;
    mm.num_positive = static_cast<std::size_t>(std::count(mm.positive.begin(), mm.positive.end(), 1));
    std::vector<std::pair<double, std::size_t>> keyed;
    for (std::size_t i = 0; i < 50; ++i)
      if (mm.positive[i] == kNoMatch) keyed.push_back({-loss[i], i});
    std::sort(keyed.begin(), keyed.end());
    std::size_t want = mm.num_positive == 0 ? 1 : 3 * mm.num_positive;
    std::vector<std::size_t> oracle;
    for (std::size_t k = 0; k < std::min(want, keyed.size()); ++k) oracle.push_back(keyed[k].second);
    std::sort(oracle.begin(), oracle.end());
    EXPECT_EQ(hard_negative_mining(loss, mm, 3).negative_indices(), oracle);
  }
}

TEST(BaseLoss, Examples) {
  Tape t;
  AnchorSet anchors;
  anchors.boxes = {{0.3, 0.3, 0.2, 0.2}, {0.7, 0.7, 0.2, 0.2}};
  anchors.scale_index = {0, 0};
  MatchResult m;
  m.positive = {kNoMatch, kNoMatch};
  m.matched_gt = {kNoMatch, kNoMatch};
  m.hard_negative = {false, false};
  Var logits = t.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  Var offsets = t.leaf(Tensor({2, 4}, 0.3));
  EXPECT_EQ(base_loss(logits, offsets, m, anchors, {}).total.value().item(), 0.0);

  // Perfect offsets: bbox term exactly zero.
  const std::vector<GtBox> gt{{{0.32, 0.29, 0.25, 0.18}, 2}};
  m = match_anchors(anchors, gt);
  m.hard_negative = {false, true};
  const auto enc = encode_box(gt[0].box, anchors.boxes[0]);
  Tensor off({2, 4});
  for (std::size_t c = 0; c < 4; ++c) off.at(0, c) = enc[c];
  const std::vector<double> lg{-1.0, 0.5, 2.0, 3.0, 0.1, -0.4};
  const auto l = base_loss(t.leaf(Tensor({2, 3}, lg)), t.leaf(off), m, anchors, gt);
  EXPECT_EQ(l.bbox.value().item(), 0.0);

  // 1 positive (class 2) + 1 negative, hand-summed.
  Tensor off2({2, 4}, {0.5, -1.5, 0.2, 2.0, 9, 9, 9, 9});
  const auto l2 = base_loss(t.leaf(Tensor({2, 3}, lg)), t.leaf(off2), m, anchors, gt, 1.0);
  const double cls = -log_softmax_at(std::span(lg).subspan(0, 3), 2) - log_softmax_at(std::span(lg).subspan(3, 3), 0);
  double bbox = 0;
  for (std::size_t c = 0; c < 4; ++c) bbox += smooth_l1_scalar(off2.at(0, c) - enc[c]);
  EXPECT_NEAR(l2.total.value().item(), cls + bbox, 1e-12);
  EXPECT_NEAR(l2.cls.value().item(), cls, 1e-12);
}

TEST(BaseLoss, GradCheckAndNonNegative) {
  const auto anchors = generate_anchors(AnchorConfig{{3}, {0.3}, {1.0, 2.0}});
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<GtBox> gt{{random_box(rng), 1}, {random_box(rng), 2}};
    const Tensor lg = random_tensor(rng, {anchors.size(), 3}, -3, 3);
    auto m = match_anchors(anchors, gt);
    m = hard_negative_mining(background_losses(lg), m, 3);
    std::vector<NamedTensor> point{{"logits", lg}, {"offsets", afsd::testing::random_away_from(rng, {anchors.size(), 4}, {-1, 1})}};
    auto f = [&](Tape&, std::span<const Var> v) { return base_loss(v[0], v[1], m, anchors, gt).total; };
    const auto rep = grad_check(f, point);
    EXPECT_LT(rep.max_rel_error(), 1e-4);
    Tape t;
    EXPECT_GE(base_loss(t.leaf(lg), t.leaf(point[1].value), m, anchors, gt).total.value().item(), 0.0);
  }
}

TEST(Nms, Examples) {
  const std::vector<Box> same{{0.5, 0.5, 0.2, 0.2}, {0.5, 0.5, 0.2, 0.2}};
  const std::vector<double> s{0.7, 0.7};
  EXPECT_EQ(nms(same, s, 0.45, 0.0, 0), (std::vector<std::size_t>{0}));
  const std::vector<Box> apart{{0.2, 0.2, 0.1, 0.1}, {0.5, 0.5, 0.1, 0.1}, {0.8, 0.8, 0.1, 0.1}};
  const std::vector<double> s3{0.1, 0.9, 0.5};
  EXPECT_EQ(nms(apart, s3, 0.45, 0.0, 0), (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(nms(apart, s3, 0.45, 0.2, 0), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(nms(apart, s3, 0.45, 0.0, 1), (std::vector<std::size_t>{1}));
}

TEST(Nms, MatchesBruteForceOracle) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial) % 20;
    std::vector<Box> b;
    std::vector<double> s;
    for (std::size_t i = 0; i < n; ++i) {
      b.push_back(random_box(rng));
      s.push_back(std::round(u(rng) * 10) / 10);
    }
    const double thr = 0.2 + 0.1 * (trial % 5);
    EXPECT_EQ(nms(b, s, thr, 0.0, 0), nms_oracle(b, s, thr)) << "trial " << trial;
  }
}

TEST(EvaluateMap, Examples) {
  std::vector<GtRecord> gt{{0, 1, {0.3, 0.3, 0.2, 0.2}}, {1, 1, {0.6, 0.6, 0.2, 0.2}}, {1, 2, {0.2, 0.7, 0.1, 0.2}}};
  std::vector<Detection> perfect;
  for (const auto& g : gt) perfect.push_back({g.image_id, g.label, 0.9, g.box});
  const auto rep = evaluate_map(perfect, gt);
  EXPECT_EQ(rep.ap.at(1), 1.0);
  EXPECT_EQ(rep.ap.at(2), 1.0);
  EXPECT_EQ(rep.map, 1.0);
  const auto none = evaluate_map({}, gt);
  EXPECT_EQ(none.map, 0.0);
  EXPECT_EQ(none.ap.size(), 2u);
}

TEST(EvaluateMap, FiveDetectionHandCase) {
  // 3 gt, ranked detections H M H H M.
  std::vector<GtRecord> gt{{0, 1, {0.2, 0.2, 0.1, 0.1}}, {0, 1, {0.5, 0.5, 0.1, 0.1}}, {0, 1, {0.8, 0.8, 0.1, 0.1}}};
  std::vector<Detection> d{{0, 1, 0.9, gt[0].box},
                           {0, 1, 0.8, {0.2, 0.8, 0.1, 0.1}},
                           {0, 1, 0.7, gt[1].box},
                           {0, 1, 0.6, gt[2].box},
                           {0, 1, 0.5, gt[0].box}};  // duplicate of an already matched gt
  // precision 1, 1/2, 2/3, 3/4, 3/5 at recall 1/3, 1/3, 2/3, 1, 1:
  // t in {0,.1,.2,.3} -> 1; t in {.4,...,1} -> 3/4.
  const double want = (4 * 1.0 + 7 * 0.75) / 11.0;
  EXPECT_NEAR(evaluate_map(d, gt).ap.at(1), want, 1e-12);
}

TEST(Forward, CosineLogitProperties) {
  DetectorConfig cfg;
  cfg.num_classes = 3;
  auto p = init_detector(cfg, 7);
  const auto scene = synth::generate_scene(7, {});
  Tape t;
  auto vars = record_params(t, p.tensors, false);
  auto r = forward(vars, scene.image, nullptr, cfg);
  const std::size_t n = generate_anchors(cfg.anchors).size();
  EXPECT_EQ(r.logits.shape(), (Shape{n, 4}));
  EXPECT_EQ(r.offsets.shape(), (Shape{n, 4}));
  EXPECT_EQ(r.features.shape(), (Shape{n, cfg.feature_dim}));
  for (double v : r.logits.value().vec()) EXPECT_LE(std::abs(v), cfg.temperature + 1e-12);

  // Row 2 set to anchor 17's feature direction -> maximal logit.
  Tensor rows = p.classifier();
  for (std::size_t j = 0; j < cfg.feature_dim; ++j) rows.at(2, j) = 3.0 * r.features.value().at(17, j);
  Var lg = cosine_logits(t.constant(r.features.value()), t.constant(rows), cfg.temperature);
  EXPECT_NEAR(lg.value().at(17, 2), cfg.temperature, 1e-12);

  // Positive row rescaling leaves logits unchanged.
  Tensor scaled = rows;
  for (std::size_t j = 0; j < cfg.feature_dim; ++j) scaled.at(1, j) *= 7.5;
  Var lg2 = cosine_logits(t.constant(r.features.value()), t.constant(scaled), cfg.temperature);
  for (std::size_t i = 0; i < lg.value().size(); ++i) EXPECT_NEAR(lg.value()[i], lg2.value()[i], 1e-12);

  Tensor zero_row = rows;
  for (std::size_t j = 0; j < cfg.feature_dim; ++j) zero_row.at(0, j) = 0.0;
  EXPECT_THROW(cosine_logits(t.constant(r.features.value()), t.constant(zero_row), 10.0), NumericError);

  EXPECT_THROW(forward(vars, Tensor({3, 32, 32}), nullptr, cfg), ShapeError);
  cfg.use_bottom_up = true;
  EXPECT_THROW(forward(vars, scene.image, nullptr, cfg), std::invalid_argument);
}

TEST(Forward, ConfigJsonRoundTrip) {
  DetectorConfig cfg;
  cfg.num_classes = 5;
  cfg.use_bottom_up = true;
  const auto back = DetectorConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  DetectorConfig bad = cfg;
  bad.anchors.map_sizes = {4, 2};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Forward, EndToEndGradCheck) {
  DetectorConfig cfg;
  cfg.image_size = 16;
  cfg.widths = {2, 4, 4, 4};
  cfg.feature_dim = 3;
  cfg.anchors = {{2, 1}, {0.3, 0.6}, {1.0}};
  cfg.num_classes = 2;
  cfg.use_bottom_up = true;
  const auto p = init_detector(cfg, 11);
  const auto anchors = generate_anchors(cfg.anchors);
  std::mt19937_64 rng(12);
  const Tensor image = random_tensor(rng, {3, 16, 16}, 0, 1);
  saliency::SaliencyMap sal(16, 16);
  for (int y = 4; y < 10; ++y)
    for (int x = 3; x < 12; ++x) sal.at(y, x) = 0.5 + 0.05 * (x - y);
  const std::vector<GtBox> gt{{{0.4, 0.45, 0.4, 0.3}, 1}};

  ParamMap perturbed = p.tensors;
  perturbed["gc.w_v2"] = random_tensor(rng, perturbed["gc.w_v2"].shape(), -0.5, 0.5);
  // Positive biases keep ReLUs off their kinks and the features away from zero.
  for (auto& [k, v] : perturbed) {
    if (k.ends_with(".b") || k == "gc.ln_bias") v = random_tensor(rng, v.shape(), 0.2, 0.6);
  }
  std::vector<NamedTensor> point;
  for (const auto& [k, v] : perturbed) point.push_back({k, v});
  MatchResult m;
  {
    Tape t;
    auto r = forward(record_params(t, perturbed, false), image, &sal, cfg);
    m = hard_negative_mining(background_losses(r.logits.value()), match_anchors(anchors, gt), 3);
  }
  auto f = [&](Tape&, std::span<const Var> v) {
    VarMap vars;
    for (std::size_t i = 0; i < point.size(); ++i) vars.emplace(point[i].name, v[i]);
    auto r = forward(vars, image, &sal, cfg);
    return base_loss(r.logits, r.offsets, m, anchors, gt).total;
  };
    // Tiny feature norms make the normalization sharply curved; h=1e-3 truncation
  // error alone reaches ~1e-3 here.
  const auto rep = grad_check(f, point, 1e-4);
  for (const auto& l : rep.leaves) EXPECT_LT(l.max_rel_error, 1e-4) << l.name;
}
