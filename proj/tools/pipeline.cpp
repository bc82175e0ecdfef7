#include "pipeline.hpp"

namespace afsd::cli {

const std::vector<std::string> kSweepColumns{"beta", "eta", "epsilon", "gamma", "split", "K", "seed",
                                             "base_map", "novel_map", "all_map"};

synth::Benchmark make_benchmark(const RunConfig& rc) {
  try {
    return synth::build_benchmark(static_cast<std::uint64_t>(rc.get_int("data.seed")), split_of(rc),
                                  benchmark_sizes(rc));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

fewshot::TrainResult run_base(const RunConfig& rc, const synth::Benchmark& bench, const fewshot::MetricsSink& sink) {
  return fewshot::train_base(bench.base_train, bench.split, detector_config(rc), train_config(rc, "base"), sink);
}

fewshot::TrainResult run_novel(const RunConfig& rc, const detector::DetectorParams& base,
                               const synth::Benchmark& bench, const fewshot::MetricsSink& sink) {
  const auto cfg = train_config(rc, "novel");
  fewshot::SupportSet support;
  try {
    support = fewshot::sample_support_set(bench.novel_pool, bench.split, cfg.hp.K, cfg.seed, cfg.hp.base_multiplier);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return fewshot::train_novel(base, support, bench.split, cfg, sink);
}

fewshot::EvalReport run_eval(const RunConfig& rc, const detector::DetectorParams& params,
                             const fewshot::LabelMap& labels, const synth::Benchmark& bench,
                             std::vector<fewshot::DetectionRecord>* detections) {
  return fewshot::evaluate(params, labels, bench.split, bench.test, saliency_settings(rc), postprocess_config(rc),
                           detections);
}

CellResult run_cell(const RunConfig& rc, const synth::Benchmark& bench, const detector::DetectorParams& base) {
  const auto novel = run_novel(rc, base, bench);
  CellResult out;
  out.report = run_eval(rc, novel.params, novel.labels, bench);
  out.positive_cosine = fewshot::mean_positive_cosine(novel.params, novel.labels, bench.test, saliency_settings(rc),
                                                      rc.get_double("match.pos_threshold"));
  return out;
}

}  // namespace afsd::cli
