#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "afsd/verify/gradcheck_suite.hpp"
#include "pipeline.hpp"

namespace afsd::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::string out;
  std::string checkpoint;
};

RunConfig resolve(const Common& c) {
  RunConfig rc;
  if (!c.config_file.empty()) rc.merge_file(c.config_file);
  for (const auto& s : c.sets) rc.set(s);
  if (!c.out.empty()) rc.merge(json{{"output.dir", c.out}});
  if (!c.checkpoint.empty()) rc.merge(json{{"checkpoint", c.checkpoint}});
  return rc;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// Creates the output directory and drops the resolved-config snapshot there.
fs::path prepare_output(const RunConfig& rc) {
  const fs::path dir = output_dir(rc);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
  write_text(dir / "config.resolved.json", rc.values().dump(2) + "\n");
  return dir;
}

class JsonLines {
 public:
  explicit JsonLines(const fs::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }
  void write(const json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

fewshot::LoadedModel load_model(const RunConfig& rc, const std::string& want_stage = "") {
  const std::string path = rc.get_string("checkpoint");
  if (path.empty()) throw UsageError("a checkpoint is required (--checkpoint or checkpoint=...)");
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
  auto m = fewshot::from_checkpoint(load_checkpoint(path));
  if (!want_stage.empty() && m.stage != want_stage) {
    throw UsageError("checkpoint " + path + " is a '" + m.stage + "' model, expected '" + want_stage + "'");
  }
  if (m.split_id != rc.get_int("split")) {
    throw UsageError("checkpoint was trained on split " + std::to_string(m.split_id) + " but split=" +
                     std::to_string(rc.get_int("split")));
  }
  return m;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

void print_report(const fewshot::EvalReport& r, const synth::SplitSpec& split) {
  std::cout << "category            kind    AP\n";
  for (const auto& [c, ap] : r.ap_by_category) {
    std::cout << std::left << std::setw(20) << synth::category(c).name << std::setw(8)
              << (split.is_novel(c) ? "novel" : "base") << fmt(ap) << "\n";
  }
  std::cout << "base mAP " << fmt(r.base_map) << "  novel mAP " << fmt(r.novel_map) << "  all mAP "
            << fmt(r.all_map) << "\n";
}

int cmd_gen_data(const RunConfig& rc) {
  const fs::path dir = prepare_output(rc);
  const auto bench = make_benchmark(rc);
  synth::dump_scenes(dir / "base_train", "base", bench.base_train);
  synth::dump_scenes(dir / "novel_pool", "pool", bench.novel_pool);
  synth::dump_scenes(dir / "test", "test", bench.test);
  std::cout << "wrote " << bench.base_train.size() + bench.novel_pool.size() + bench.test.size() << " scenes to "
            << dir.string() << "\n";
  return kExitOk;
}

int cmd_train_base(const RunConfig& rc) {
  const fs::path dir = prepare_output(rc);
  const auto bench = make_benchmark(rc);
  JsonLines log(dir / "metrics.jsonl");
  const auto res = run_base(rc, bench, [&](const fewshot::EpochMetrics& m) {
    log.write(m.to_json());
    std::cerr << "base epoch " << m.epoch << " loss " << fmt(m.loss_total) << "\n";
  });
  save_checkpoint(dir / "checkpoint.json", fewshot::to_checkpoint(res.params, res.labels, bench.split.split_id, "base"));
  const auto report = run_eval(rc, res.params, res.labels, bench);
  write_text(dir / "report.json", report.to_json().dump(2) + "\n");
  print_report(report, bench.split);
  return kExitOk;
}

int cmd_train_novel(const RunConfig& rc) {
  const auto base = load_model(rc, "base");
  const fs::path dir = prepare_output(rc);
  const auto bench = make_benchmark(rc);
  JsonLines log(dir / "metrics.jsonl");
  const auto res = run_novel(rc, base.params, bench, [&](const fewshot::EpochMetrics& m) {
    log.write(m.to_json());
    std::cerr << "novel epoch " << m.epoch << " loss " << fmt(m.loss_total) << "\n";
  });
  save_checkpoint(dir / "checkpoint.json",
                  fewshot::to_checkpoint(res.params, res.labels, bench.split.split_id, "novel"));
  const auto report = run_eval(rc, res.params, res.labels, bench);
  write_text(dir / "report.json", report.to_json().dump(2) + "\n");
  print_report(report, bench.split);
  return kExitOk;
}

int cmd_eval(const RunConfig& rc) {
  const auto model = load_model(rc);
  const fs::path dir = prepare_output(rc);
  const auto bench = make_benchmark(rc);
  std::vector<fewshot::DetectionRecord> dets;
  const auto report = run_eval(rc, model.params, model.labels, bench, &dets);
  write_text(dir / "report.json", report.to_json().dump(2) + "\n");
  std::string lines;
  for (const auto& d : dets) lines += d.to_json().dump() + "\n";
  write_text(dir / "detections.jsonl", lines);
  print_report(report, bench.split);
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& rc) {
  const fs::path dir = prepare_output(rc);
  verify::SuiteOptions opt;
  opt.points = rc.get_int("gradcheck.points");
  opt.seed = static_cast<std::uint64_t>(rc.get_int("gradcheck.seed"));
  if (opt.points < 1) throw UsageError("gradcheck.points must be >= 1");
  const auto rep = verify::run_suite(verify::default_suite(), opt);
  write_text(dir / "gradcheck.json", rep.to_json().dump(2) + "\n");
  for (const auto& c : rep.cases) {
    std::ostringstream err;
    err << std::scientific << std::setprecision(2) << c.max_rel_error;
    std::cout << (c.passed ? "ok    " : "FAIL  ") << std::left << std::setw(32) << c.name << std::setw(10) << c.kind
              << err.str() << (c.error.empty() ? "" : "  " + c.error) << "\n";
  }
  std::cout << (rep.passed() ? "all " : "some ") << "checks " << (rep.passed() ? "passed" : "FAILED") << " in "
            << fmt(rep.seconds, 2) << " s (tolerance " << opt.tolerance << ", h " << opt.step << ")\n";
  return rep.passed() ? kExitOk : kExitNumeric;
}

// Top-down map upsampled (nearest) to the image size, scaled by its maximum.
std::vector<double> topdown_pixels(const Tensor& h, int size) {
  std::vector<double> out(static_cast<std::size_t>(size * size), 0.0);
  if (h.size() == 0) return out;
  const std::size_t H = h.dim(0), W = h.dim(1);
  const double mx = *std::max_element(h.data().begin(), h.data().end());
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double v = h.at(static_cast<std::size_t>(y) * H / size, static_cast<std::size_t>(x) * W / size);
      out[static_cast<std::size_t>(y * size + x)] = mx > 0 ? v / mx : 0.0;
    }
  }
  return out;
}

int cmd_render_attention(const RunConfig& rc) {
  const auto model = load_model(rc);
  const fs::path dir = prepare_output(rc);
  synth::SceneConfig sc;
  if (rc.get_bool("render.blank")) {
    sc.min_objects = sc.max_objects = 0;
    sc.allow_empty = true;
  }
  const auto scene = synth::generate_scene(static_cast<std::uint64_t>(rc.get_int("render.scene_seed")), sc);
  const auto sal = saliency_settings(rc);
  const auto s = sal.compute(scene);
  const auto inf = fewshot::infer(model.params, scene, sal);
  const int size = scene.size();

  synth::write_ppm_rgb(dir / "image.ppm", scene.image);
  synth::write_ppm_gray(dir / "saliency.ppm", s.values, s.height, s.width);
  synth::write_ppm_gray(dir / "topdown.ppm", topdown_pixels(inf.topdown, size), size, size);
  if (inf.topdown.size() == 0) std::cerr << "note: model has no top-down block; topdown.ppm is blank\n";

  json dets = json::array();
  const auto anchors = detector::generate_anchors(model.params.config.anchors);
  for (auto d : detector::detect(inf.logits, inf.offsets, anchors, 0, postprocess_config(rc))) {
    dets.push_back(fewshot::DetectionRecord{0, model.labels.category_of(d.label), d.score, d.box}.to_json());
  }
  write_text(dir / "detections.json", dets.dump(2) + "\n");
  std::cout << "wrote image.ppm, saliency.ppm, topdown.ppm, detections.json to " << dir.string() << "\n";
  return kExitOk;
}

// Grid axis: the configured list, or the single current value when empty.
std::vector<double> axis(const RunConfig& rc, const std::string& sweep_key, const std::string& key) {
  auto v = rc.get_doubles(sweep_key);
  if (v.empty()) v.push_back(rc.get_double(key));
  return v;
}

std::vector<int> int_axis(const RunConfig& rc, const std::string& sweep_key, const std::string& key) {
  auto v = rc.get_ints(sweep_key);
  if (v.empty()) v.push_back(rc.get_int(key));
  return v;
}

std::string csv_num(double v) { return json(v).dump(); }

std::set<std::string> completed_cells(const fs::path& csv) {
  std::set<std::string> done;
  std::ifstream in(csv);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    // Key = the first 7 columns (the grid coordinates).
    std::size_t pos = 0;
    for (int i = 0; i < 7 && pos != std::string::npos; ++i) pos = line.find(',', pos + 1);
    if (pos != std::string::npos) done.insert(line.substr(0, pos));
  }
  return done;
}

int cmd_sweep(const RunConfig& rc) {
  const fs::path dir = prepare_output(rc);
  const fs::path csv = dir / "sweep.csv";
  auto done = completed_cells(csv);
  if (!fs::exists(csv)) {
    std::string header;
    for (std::size_t i = 0; i < kSweepColumns.size(); ++i) header += (i ? "," : "") + kSweepColumns[i];
    write_text(csv, header + "\n");
  }
  std::ofstream out(csv, std::ios::app | std::ios::binary);

  const auto betas = axis(rc, "sweep.beta", "loss.beta");
  const auto etas = axis(rc, "sweep.eta", "loss.eta");
  const auto epsilons = axis(rc, "sweep.epsilon", "loss.epsilon");
  const auto gammas = axis(rc, "sweep.gamma", "loss.gamma");
  const auto splits = int_axis(rc, "sweep.split", "split");
  const auto ks = int_axis(rc, "sweep.K", "novel.K");
  const auto seeds = int_axis(rc, "sweep.seed", "seed");

  for (int split : splits) {
    for (int seed : seeds) {
      RunConfig cell = rc;
      cell.merge(json{{"split", split}, {"seed", seed}, {"data.seed", seed}});
      std::optional<synth::Benchmark> bench;
      for (double eps : epsilons) {
        cell.merge(json{{"loss.epsilon", eps}});
        // The base stage only sees epsilon through bottom-up fusion.
        const bool bu = cell.get_bool("model.use_bottom_up");
        const std::string base_tag = "split" + std::to_string(split) + "_seed" + std::to_string(seed) +
                                     (bu ? "_eps" + csv_num(eps) : "");
        std::optional<detector::DetectorParams> base;
        for (int K : ks) {
          for (double beta : betas) {
            for (double eta : etas) {
              for (double gamma : gammas) {
                const std::string key = csv_num(beta) + "," + csv_num(eta) + "," + csv_num(eps) + "," +
                                        csv_num(gamma) + "," + std::to_string(split) + "," + std::to_string(K) +
                                        "," + std::to_string(seed);
                if (done.count(key)) continue;
                if (!bench) bench = make_benchmark(cell);
                if (!base) {
                  const fs::path ckpt = dir / "base" / base_tag / "checkpoint.json";
                  if (fs::exists(ckpt)) {
                    base = fewshot::from_checkpoint(load_checkpoint(ckpt)).params;
                  } else {
                    std::cerr << "sweep: base stage " << base_tag << "\n";
                    const auto res = run_base(cell, *bench);
                    fs::create_directories(ckpt.parent_path());
                    save_checkpoint(ckpt, fewshot::to_checkpoint(res.params, res.labels, split, "base"));
                    base = res.params;
                  }
                }
                cell.merge(json{{"novel.K", K}, {"loss.beta", beta}, {"loss.eta", eta}, {"loss.gamma", gamma}});
                std::cerr << "sweep: cell " << key << "\n";
                const auto r = run_cell(cell, *bench, *base);
                out << key << "," << csv_num(r.report.base_map) << "," << csv_num(r.report.novel_map) << ","
                    << csv_num(r.report.all_map) << "\n";
                out.flush();
                done.insert(key);
              }
            }
          }
        }
      }
    }
  }
  std::cout << "sweep results in " << csv.string() << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"afsd: attention-guided few-shot detection on synthetic scenes"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&);
    bool needs_checkpoint;
  };
  const std::vector<Sub> subs{
      {"gen-data", "generate the benchmark and dump PPM + JSON sidecars", cmd_gen_data, false},
      {"train-base", "base-stage training", cmd_train_base, false},
      {"train-novel", "imprint + novel-stage fine-tuning from a base checkpoint", cmd_train_novel, true},
      {"eval", "evaluate a checkpoint on the test scenes", cmd_eval, true},
      {"gradcheck", "finite-difference check of every differentiable op and loss", cmd_gradcheck, false},
      {"render-attention", "write image, saliency and top-down maps for one scene", cmd_render_attention, true},
      {"sweep", "grid over beta, eta, epsilon, gamma, split, K, seed", cmd_sweep, false},
  };

  Common common;
  std::map<CLI::App*, const Sub*> handlers;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("-c,--config", common.config_file, "JSON config, nested or flat dotted keys");
    sub->add_option("-s,--set", common.sets, "override, key=value (repeatable)");
    sub->add_option("-o,--out", common.out, "output directory (same as output.dir)");
    if (s.needs_checkpoint) sub->add_option("--checkpoint", common.checkpoint, "checkpoint JSON");
    handlers[sub] = &s;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (const auto& [sub, s] : handlers) {
      if (sub->parsed()) return s->fn(resolve(common));
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace afsd::cli
