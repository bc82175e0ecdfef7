#pragma once

#include <string>
#include <vector>

#include "config.hpp"

// Stage runners shared by the commands, the sweep and the acceptance tests.
namespace afsd::cli {

synth::Benchmark make_benchmark(const RunConfig& rc);

fewshot::TrainResult run_base(const RunConfig& rc, const synth::Benchmark& bench,
                              const fewshot::MetricsSink& sink = {});

/// Samples the K-shot support set under `seed` and runs the novel stage.
fewshot::TrainResult run_novel(const RunConfig& rc, const detector::DetectorParams& base,
                               const synth::Benchmark& bench, const fewshot::MetricsSink& sink = {});

fewshot::EvalReport run_eval(const RunConfig& rc, const detector::DetectorParams& params,
                             const fewshot::LabelMap& labels, const synth::Benchmark& bench,
                             std::vector<fewshot::DetectionRecord>* detections = nullptr);

/// One sweep / ablation cell: base stage (or a cached base), novel stage, eval.
struct CellResult {
  fewshot::EvalReport report;
  double positive_cosine = 0.0;  // on the test scenes, novel model
};

CellResult run_cell(const RunConfig& rc, const synth::Benchmark& bench, const detector::DetectorParams& base);

/// Fixed CSV column order used by `sweep`.
extern const std::vector<std::string> kSweepColumns;

}  // namespace afsd::cli
