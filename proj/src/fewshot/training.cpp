#include "afsd/fewshot/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

namespace afsd::fewshot {

using detector::DetectorParams;

saliency::SaliencyMap SaliencySettings::compute(const synth::Scene& scene) const {
  if (kind == "oracle") return saliency::oracle_saliency(scene, blur_radius);
  if (kind == "bms") return saliency::bms_saliency(scene.image, bms);
  throw std::invalid_argument("unknown saliency kind '" + kind + "' (oracle or bms)");
}

double TrainConfig::lr_at(int epoch) const {
  double v = lr;
  for (int s : lr_steps) {
    if (epoch >= s) v *= lr_decay;
  }
  return v;
}

double TrainConfig::lr_at(int epoch, long iteration) const {
  const double v = lr_at(epoch);
  if (warmup_iters <= 0 || iteration + 1 >= warmup_iters) return v;
  return v * static_cast<double>(iteration + 1) / warmup_iters;
}

nlohmann::json EpochMetrics::to_json() const {
  return {{"stage", stage},           {"epoch", epoch},         {"loss_total", loss_total},
          {"loss_cls", loss_cls},     {"loss_bbox", loss_bbox}, {"loss_conc_pos", loss_conc_pos},
          {"loss_conc_neg", loss_conc_neg}, {"loss_dist", loss_dist}, {"lr", lr}};
}

namespace {

struct Outputs {
  detector::ForwardResult fwd;
  detector::VarMap vars;
};

const saliency::SaliencyMap* pick(const std::vector<saliency::SaliencyMap>& cache, std::size_t i) {
  return cache.empty() ? nullptr : &cache[i];
}

std::vector<saliency::SaliencyMap> saliency_cache(const std::vector<synth::Scene>& scenes,
                                                  const detector::DetectorConfig& det, const SaliencySettings& sal) {
  std::vector<saliency::SaliencyMap> out;
  if (!det.use_bottom_up) return out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(sal.compute(s));
  return out;
}

}  // namespace

std::vector<EpochMetrics> fit(DetectorParams& params, const LabelMap& labels, const std::vector<synth::Scene>& scenes,
                              const DetectorParams* teacher, const TrainConfig& cfg, const std::string& stage,
                              const MetricsSink& sink) {
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (cfg.warmup_iters < 0) throw std::invalid_argument("warmup_iters must be >= 0");
  if (cfg.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  cfg.hp.validate();
  if (scenes.empty() && cfg.epochs > 0) throw std::invalid_argument(stage + " training set is empty");
  const auto& det = params.config;
  const auto anchors = detector::generate_anchors(det.anchors);
  const auto sal = saliency_cache(scenes, det, cfg.saliency);
  const auto teacher_sal = teacher ? saliency_cache(scenes, teacher->config, cfg.saliency) : sal;

  std::vector<std::vector<detector::GtBox>> gts;
  for (const auto& s : scenes) gts.push_back(annotated_gt(s, labels));

  // Teacher outputs are fixed for the whole stage.
  std::vector<TeacherOutputs> teach;
  if (teacher) {
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      Tape tape;
      auto r = detector::forward(detector::record_params(tape, teacher->tensors, false), scenes[i].image,
                                 pick(teacher_sal, i), teacher->config);
      teach.push_back({r.logits.value(), r.offsets.value()});
    }
  }

  ParamMap velocity;
  std::vector<EpochMetrics> log;
  std::vector<std::size_t> order(scenes.size());
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(synth::mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cfg.lr_at(epoch);
    EpochMetrics m;
    m.stage = stage;
    m.epoch = epoch;
    m.lr = lr;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      const double w = 1.0 / static_cast<double>(b1 - b0);
      ParamMap grads;
      for (std::size_t k = b0; k < b1; ++k) {
        const std::size_t i = order[k];
        Tape tape;
        auto vars = detector::record_params(tape, params.tensors, true);
        Var total;
        try {
          auto r = detector::forward(vars, scenes[i].image, pick(sal, i), det);
          auto match = detector::match_anchors(anchors, gts[i], cfg.pos_thr);
          match = detector::hard_negative_mining(detector::background_losses(r.logits.value()), match,
                                                 cfg.neg_pos_ratio);
          if (teacher) {
            auto l = novel_loss(r.logits, r.offsets, r.features, vars.at("cls.w"), match, anchors, gts[i], &teach[i],
                                cfg.hp);
            m.loss_cls += w * l.base.cls.value().item();
            m.loss_bbox += w * l.base.bbox.value().item();
            m.loss_conc_pos += w * l.conc_pos.value().item();
            m.loss_conc_neg += w * l.conc_neg.value().item();
            m.loss_dist += w * l.dist.value().item();
            total = l.total;
          } else {
            auto l = detector::base_loss(r.logits, r.offsets, match, anchors, gts[i], cfg.hp.alpha);
            m.loss_cls += w * l.cls.value().item();
            m.loss_bbox += w * l.bbox.value().item();
            total = l.total;
          }
        } catch (const NumericError& e) {
          throw NumericError(stage + " training diverged at epoch " + std::to_string(epoch) + ", scene " +
                             std::to_string(scenes[i].seed) + ": " + e.what());
        }
        m.loss_total += w * total.value().item();
        tape.backward(total);
        ParamMap g;
        for (const auto& [name, v] : vars) g.emplace(name, v.grad());
        accumulate(grads, g, w);
      }
      if (cfg.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& [name, g] : grads) {
          for (double v : g.data()) sq += v * v;
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) {
          for (auto& [name, g] : grads) {
            for (auto& v : g.data()) v *= cfg.grad_clip / norm;
          }
        }
      }
      sgd_momentum_step(params.tensors, grads, velocity, {cfg.lr_at(epoch, step++), cfg.momentum, cfg.weight_decay});
    }
    // Per-batch means summed over batches -> per-epoch mean over batches.
    const double nb = std::ceil(static_cast<double>(order.size()) / cfg.batch_size);
    for (double* v : {&m.loss_total, &m.loss_cls, &m.loss_bbox, &m.loss_conc_pos, &m.loss_conc_neg, &m.loss_dist}) {
      *v /= nb;
    }
    if (!std::isfinite(m.loss_total)) throw NumericError(stage + " loss became non-finite at epoch " + std::to_string(epoch));
    for (const auto& [name, t] : params.tensors) {
      if (!t.all_finite()) throw NumericError(stage + " parameter " + name + " became non-finite at epoch " + std::to_string(epoch));
    }
    if (sink) sink(m);
    log.push_back(m);
  }
  return log;
}

TrainResult train_base(const std::vector<synth::Scene>& scenes, const synth::SplitSpec& split,
                       detector::DetectorConfig det, const TrainConfig& cfg, const MetricsSink& sink) {
  TrainResult out;
  out.labels = LabelMap::base_only(split);
  det.num_classes = out.labels.num_classes();
  det.epsilon = cfg.hp.epsilon;
  out.params = detector::init_detector(det, synth::mix_seed(cfg.seed, 0xBA5E));
  out.metrics = fit(out.params, out.labels, scenes, nullptr, cfg, "base", sink);
  return out;
}

Inference infer(const DetectorParams& params, const synth::Scene& scene, const SaliencySettings& sal) {
  Tape tape;
  saliency::SaliencyMap s;
  if (params.config.use_bottom_up) s = sal.compute(scene);
  auto r = detector::forward(detector::record_params(tape, params.tensors, false), scene.image,
                             params.config.use_bottom_up ? &s : nullptr, params.config);
  Inference out{r.logits.value(), r.offsets.value(), r.features.value(), {}};
  if (r.topdown.valid()) out.topdown = r.topdown.value();
  return out;
}

std::vector<double> imprint(const std::vector<std::vector<double>>& features) {
  if (features.empty()) throw std::invalid_argument("imprint needs at least one feature");
  const std::size_t d = features[0].size();
  std::vector<double> acc(d, 0.0);
  auto norm_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  for (const auto& f : features) {
    if (f.size() != d) throw ShapeError("imprint: feature widths differ");
    const double n = norm_of(f);
    if (n == 0.0) throw NumericError("support feature has zero norm; cannot imprint");
    for (std::size_t j = 0; j < d; ++j) acc[j] += f[j] / n;
  }
  for (auto& v : acc) v /= static_cast<double>(features.size());
  const double n = norm_of(acc);
  if (n == 0.0) throw NumericError("imprinted mean feature has zero norm");
  for (auto& v : acc) v /= n;
  return acc;
}

DetectorParams init_novel_detector(const DetectorParams& base, const SupportSet& support, const LabelMap& full,
                                   const SaliencySettings& sal) {
  const std::size_t nb = full.base.size();
  const Tensor& old = base.classifier();
  if (old.dim(0) != nb + 1) {
    throw std::invalid_argument("base detector has " + std::to_string(old.dim(0) - 1) + " classes, label map has " +
                                std::to_string(nb) + " base classes");
  }
  DetectorParams out = base;
  out.config.num_classes = full.num_classes();
  const std::size_t d = old.dim(1);
  Tensor rows({full.num_classes() + 1, d});
  std::copy(old.data().begin(), old.data().end(), rows.data().begin());

  const auto anchors = detector::generate_anchors(base.config.anchors);
  std::map<int, std::vector<std::vector<double>>> feats;
  for (const auto& scene : support.images) {
    std::optional<Inference> inf;
    for (const auto& o : scene.objects) {
      if (!o.annotated || std::find(full.novel.begin(), full.novel.end(), o.category) == full.novel.end()) continue;
      if (!inf) inf = infer(base, scene, sal);
      double best = 0.0;
      std::size_t arg = 0;
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        const double v = detector::iou(anchors.boxes[i], o.box);
        if (v > best) {
          best = v;
          arg = i;
        }
      }
      if (best <= 0.0) throw std::invalid_argument("support instance overlaps no anchor; cannot imprint");
      const auto row = inf->features.data().subspan(arg * d, d);
      feats[o.category].emplace_back(row.begin(), row.end());
    }
  }
  for (std::size_t k = 0; k < full.novel.size(); ++k) {
    const int c = full.novel[k];
    if (!feats.count(c)) throw std::invalid_argument("support set has no instance of novel category " + std::to_string(c));
    const auto w = imprint(feats[c]);
    for (std::size_t j = 0; j < d; ++j) rows.at(nb + 1 + k, j) = w[j];
  }
  out.classifier() = std::move(rows);
  return out;
}

TrainResult train_novel(const DetectorParams& base, const SupportSet& support, const synth::SplitSpec& split,
                        const TrainConfig& cfg, const MetricsSink& sink) {
  TrainResult out;
  out.labels = LabelMap::full(split);
  out.params = init_novel_detector(base, support, out.labels, cfg.saliency);
  out.metrics = fit(out.params, out.labels, support.images, &base, cfg, "novel", sink);
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [c, ap] : ap_by_category) per[std::to_string(c)] = ap;
  return {{"base_map", base_map}, {"novel_map", novel_map}, {"all_map", all_map}, {"ap", per}};
}

nlohmann::json DetectionRecord::to_json() const {
  return {{"image_id", image_id}, {"class", category}, {"score", score}, {"box", {box.cx, box.cy, box.w, box.h}}};
}

EvalReport evaluate(const DetectorParams& params, const LabelMap& labels, const synth::SplitSpec& split,
                    const std::vector<synth::Scene>& scenes, const SaliencySettings& sal,
                    const detector::PostprocessConfig& post, std::vector<DetectionRecord>* detections) {
  const auto anchors = detector::generate_anchors(params.config.anchors);
  std::vector<detector::Detection> dets;
  std::vector<detector::GtRecord> gt;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const int id = static_cast<int>(i);
    for (const auto& o : scenes[i].objects) gt.push_back({id, o.category, o.box});
    const auto inf = infer(params, scenes[i], sal);
    for (auto d : detector::detect(inf.logits, inf.offsets, anchors, id, post)) {
      d.label = labels.category_of(d.label);
      dets.push_back(d);
      if (detections) detections->push_back({d.image_id, d.label, d.score, d.box});
    }
  }
  const auto rep = detector::evaluate_map(dets, gt);
  EvalReport out;
  out.ap_by_category = rep.ap;
  out.base_map = rep.mean_over(split.base());
  out.novel_map = rep.mean_over(split.novel);
  out.all_map = rep.map;
  return out;
}

double mean_positive_cosine(const DetectorParams& params, const LabelMap& labels,
                            const std::vector<synth::Scene>& scenes, const SaliencySettings& sal, double pos_thr) {
  const auto anchors = detector::generate_anchors(params.config.anchors);
  const Tensor& w = params.classifier();
  const std::size_t d = w.dim(1);
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& scene : scenes) {
    std::vector<detector::GtBox> gt;
    for (const auto& o : scene.objects) {
      if (const int l = labels.label_of(o.category); l > 0) gt.push_back({o.box, l});
    }
    if (gt.empty()) continue;
    const auto inf = infer(params, scene, sal);
    const auto m = detector::match_anchors(anchors, gt, pos_thr);
    for (std::size_t i : m.positive_indices()) {
      const auto l = static_cast<std::size_t>(m.positive[i]);
      double dot = 0, nf = 0, nw = 0;
      for (std::size_t j = 0; j < d; ++j) {
        dot += inf.features.at(i, j) * w.at(l, j);
        nf += inf.features.at(i, j) * inf.features.at(i, j);
        nw += w.at(l, j) * w.at(l, j);
      }
      acc += dot / std::sqrt(nf * nw);
      ++n;
    }
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

Checkpoint to_checkpoint(const DetectorParams& params, const LabelMap& labels, int split_id, const std::string& stage) {
  Checkpoint c;
  c.arrays = params.tensors;
  c.meta = {{"stage", stage},
            {"split", split_id},
            {"base_categories", labels.base},
            {"novel_categories", labels.novel},
            {"detector", params.config.to_json()}};
  return c;
}

LoadedModel from_checkpoint(const Checkpoint& ckpt) {
  LoadedModel m;
  try {
    m.stage = ckpt.meta.at("stage").get<std::string>();
    m.split_id = ckpt.meta.at("split").get<int>();
    m.labels.base = ckpt.meta.at("base_categories").get<std::vector<int>>();
    m.labels.novel = ckpt.meta.at("novel_categories").get<std::vector<int>>();
    m.params.config = detector::DetectorConfig::from_json(ckpt.meta.at("detector"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata incomplete: ") + e.what());
  }
  m.params.tensors = ckpt.arrays;
  if (!m.params.tensors.count("cls.w") || m.params.classifier().dim(0) != m.labels.num_classes() + 1) {
    throw CheckpointError("checkpoint classifier does not match its label map");
  }
  return m;
}

}  // namespace afsd::fewshot
