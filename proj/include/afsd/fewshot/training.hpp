#pragma once

#include <functional>
#include <string>

#include <nlohmann/json.hpp>

#include "afsd/detector/eval.hpp"
#include "afsd/detector/model.hpp"
#include "afsd/fewshot/losses.hpp"
#include "afsd/fewshot/support.hpp"
#include "afsd/tensor/checkpoint.hpp"

namespace afsd::fewshot {

struct SaliencySettings {
  std::string kind = "oracle";  // "oracle" or "bms"
  int blur_radius = 2;
  saliency::BmsConfig bms;

  saliency::SaliencyMap compute(const synth::Scene& scene) const;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<int> lr_steps{20, 26};  // epochs at which lr is multiplied by lr_decay
  double lr_decay = 0.1;
  int warmup_iters = 0;  // linear ramp of the step size over the first updates
  double grad_clip = 0.0;  // global L2 norm cap on the batch gradient; 0 disables
  double pos_thr = 0.5;
  double neg_pos_ratio = 3.0;
  std::uint64_t seed = 0;
  Hyperparams hp;
  SaliencySettings saliency;

  double lr_at(int epoch) const;
  /// lr_at(epoch) scaled by min(1, (iteration + 1) / warmup_iters);
  /// iteration counts optimizer steps from the start of the run.
  double lr_at(int epoch, long iteration) const;
};

struct EpochMetrics {
  std::string stage;
  int epoch = 0;
  double loss_total = 0, loss_cls = 0, loss_bbox = 0, loss_conc_pos = 0, loss_conc_neg = 0, loss_dist = 0;
  double lr = 0;

  nlohmann::json to_json() const;
};

using MetricsSink = std::function<void(const EpochMetrics&)>;

struct TrainResult {
  detector::DetectorParams params;
  LabelMap labels;
  std::vector<EpochMetrics> metrics;
};

/// Base stage on the base_train scenes (novel objects unannotated).
TrainResult train_base(const std::vector<synth::Scene>& scenes, const synth::SplitSpec& split,
                       detector::DetectorConfig det, const TrainConfig& cfg, const MetricsSink& sink = {});

/// normalize(mean_k normalize(f_k)).
std::vector<double> imprint(const std::vector<std::vector<double>>& features);

/// Imprinting initialization: copies every base tensor, keeps rows 0..B and
/// installs one unit row per novel category from the base detector's f_i at
/// the best-IoU anchor of each support instance.
detector::DetectorParams init_novel_detector(const detector::DetectorParams& base, const SupportSet& support,
                                             const LabelMap& full, const SaliencySettings& sal);

/// Novel stage: imprint, then fine-tune every parameter on the support set
/// under the combined objective with the frozen base detector as teacher.
TrainResult train_novel(const detector::DetectorParams& base, const SupportSet& support,
                        const synth::SplitSpec& split, const TrainConfig& cfg, const MetricsSink& sink = {});

/// Fine-tuning loop shared by both stages; `teacher` enables the novel
/// objective (nullptr = plain base loss).
std::vector<EpochMetrics> fit(detector::DetectorParams& params, const LabelMap& labels,
                              const std::vector<synth::Scene>& scenes, const detector::DetectorParams* teacher,
                              const TrainConfig& cfg, const std::string& stage, const MetricsSink& sink = {});

struct Inference {
  Tensor logits;
  Tensor offsets;
  Tensor features;
  Tensor topdown;  // empty without the GC block
};

Inference infer(const detector::DetectorParams& params, const synth::Scene& scene, const SaliencySettings& sal);

struct EvalReport {
  std::map<int, double> ap_by_category;
  double base_map = 0.0;
  double novel_map = 0.0;
  double all_map = 0.0;

  nlohmann::json to_json() const;
};

struct DetectionRecord {
  int image_id = 0;
  int category = 0;
  double score = 0.0;
  Box box;

  nlohmann::json to_json() const;
};

/// Scores every scene against its complete annotations; categories without
/// a classifier row get AP 0.
EvalReport evaluate(const detector::DetectorParams& params, const LabelMap& labels, const synth::SplitSpec& split,
                    const std::vector<synth::Scene>& scenes, const SaliencySettings& sal,
                    const detector::PostprocessConfig& post = {}, std::vector<DetectionRecord>* detections = nullptr);

/// Mean cos(f_i, w_label) over anchors matched to any labelled object.
double mean_positive_cosine(const detector::DetectorParams& params, const LabelMap& labels,
                            const std::vector<synth::Scene>& scenes, const SaliencySettings& sal,
                            double pos_thr = 0.5);

Checkpoint to_checkpoint(const detector::DetectorParams& params, const LabelMap& labels, int split_id,
                         const std::string& stage);

struct LoadedModel {
  detector::DetectorParams params;
  LabelMap labels;
  int split_id = 0;
  std::string stage;
};

LoadedModel from_checkpoint(const Checkpoint& ckpt);

}  // namespace afsd::fewshot
