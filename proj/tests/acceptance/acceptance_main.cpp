// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// fails. Also writes acceptance_report.json to the working directory.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "afsd/attention/attention.hpp"
#include "afsd/detector/eval.hpp"
#include "afsd/fewshot/training.hpp"
#include "afsd/verify/gradcheck_suite.hpp"
#include "commands.hpp"
#include "config.hpp"
#include "oracles.hpp"
#include "pipeline.hpp"

using namespace afsd;
using afsd::testing::random_tensor;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  std::string id;
  std::string title;
  std::function<Outcome()> check;
};

std::string num(double v, int prec = 4) {
  std::ostringstream s;
  s << std::setprecision(prec) << v;
  return s.str();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

// ---- gradients -------------------------------------------------------------

Outcome gradients() {
  const auto rep = verify::run_suite(verify::default_suite(), {});
  double worst = 0;
  std::string worst_name, failed;
  for (const auto& c : rep.cases) {
    if (c.max_rel_error >= worst) {
      worst = c.max_rel_error;
      worst_name = c.name;
    }
    if (!c.passed) failed += " " + c.name + (c.error.empty() ? "" : "(" + c.error + ")");
  }
  const bool ok = rep.passed() && rep.seconds < 60.0;
  return {ok, std::to_string(rep.cases.size()) + " cases x 10 points, worst " + num(worst, 3) + " (" + worst_name +
                  "), " + num(rep.seconds, 3) + " s" + (failed.empty() ? "" : "; failed:" + failed)};
}

// ---- attention ---------------------------------------------------------------

Outcome topdown_normalization() {
  std::mt19937_64 rng(101);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t C = 1 + trial % 16, H = 1 + trial % 9, W = 1 + (trial * 7) % 11;
    Tape t;
    Var h = attention::topdown_map(t.leaf(random_tensor(rng, {C, H, W}, -6, 6)),
                                   t.leaf(random_tensor(rng, {1, C, 1, 1}, -3, 3)));
    double s = 0;
    for (double v : h.value().vec()) s += v;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return {worst <= 1e-12, "100 inputs, max |sum - 1| = " + num(worst, 3)};
}

Outcome residual_identity() {
  std::mt19937_64 rng(102);
  int exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t C = 1 + trial % 32;
    auto p = afsd::testing::random_gc_params(rng, C, attention::bottleneck_width(C));
    p.w_v2 = Tensor(p.w_v2.shape());
    const Tensor y = random_tensor(rng, {C, static_cast<std::size_t>(1 + trial % 8), static_cast<std::size_t>(1 + trial % 5)}, -4, 4);
    Tape t;
    exact += attention::gc_block(t.leaf(y), attention::record(t, p)).value() == y;
  }
  return {exact == 100, std::to_string(exact) + "/100 inputs bit-identical with w_v2 = 0"};
}

Outcome fusion_neutrality() {
  std::mt19937_64 rng(103);
  int neutral = 0, zeroed = 0;
  const int trials = 50;
  for (int trial = 0; trial < trials; ++trial) {
    const std::size_t C = 1 + trial % 8;
    const int H = 2 + trial % 7;
    const Tensor z = random_tensor(rng, {C, static_cast<std::size_t>(H), static_cast<std::size_t>(H)}, -5, 5);
    Tape t;
    Var zv = t.leaf(z);
    neutral += attention::fuse_bottom_up(zv, saliency::SaliencyMap(H, H, 0.0), {std::exp(1.0)}).value() == z;

    // Same grid, so pooling leaves the zero pixel at zero.
    saliency::SaliencyMap s(H, H);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (auto& v : s.values) v = u(rng);
    const int y0 = trial % H, x0 = (trial / 2) % H;
    s.at(y0, x0) = 0.0;
    const Tensor out = attention::fuse_bottom_up(zv, s, {1.0}).value();
    bool ok = true;
    for (std::size_t c = 0; c < C; ++c) ok = ok && out.at(c, y0, x0) == 0.0;
    zeroed += ok;
  }

  // Whole detector: bottom-up fusion with zero saliency and eps = e matches
  // the top-down-only network bit for bit.
  detector::DetectorConfig cfg;
  cfg.num_classes = 6;
  const auto params = detector::init_detector(cfg, 11);
  auto bu_cfg = cfg;
  bu_cfg.use_bottom_up = true;
  const auto scene = synth::generate_scene(12, {});
  const saliency::SaliencyMap blank(64, 64, 0.0);
  Tape t1, t2;
  const auto a = detector::forward(detector::record_params(t1, params.tensors, false), scene.image, nullptr, cfg);
  const auto b = detector::forward(detector::record_params(t2, params.tensors, false), scene.image, &blank, bu_cfg);
  const bool model_same = a.logits.value() == b.logits.value() && a.offsets.value() == b.offsets.value();

  return {neutral == trials && zeroed == trials && model_same,
          "eps=e, s=0: " + std::to_string(neutral) + "/" + std::to_string(trials) +
              " identical; eps=1: " + std::to_string(zeroed) + "/" + std::to_string(trials) +
              " exact zeros at the zero pixel; detector forward " + (model_same ? "identical" : "differs")};
}

// ---- losses ------------------------------------------------------------------

Outcome reduction_identities() {
  std::mt19937_64 rng(104);
  fewshot::Hyperparams hp;
  hp.beta = hp.eta = hp.gamma = 0.0;
  const auto anchors = detector::generate_anchors({{4, 2}, {0.25, 0.45}, {1.0, 2.0, 0.5}});
  const std::size_t n = anchors.size();
  std::uniform_real_distribution<double> c(0.2, 0.8), s(0.1, 0.45), unit(0, 1);
  int equal = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<detector::GtBox> gt;
    const int objects = 1 + trial % 4;
    for (int k = 0; k < objects; ++k) gt.push_back({{c(rng), c(rng), s(rng), s(rng)}, 1 + static_cast<int>(rng() % 5)});
    auto m = detector::match_anchors(anchors, gt);
    std::vector<double> bg(n);
    for (auto& v : bg) v = unit(rng);
    m = detector::hard_negative_mining(bg, m, 3.0);
    Tape t;
    Var lg = t.leaf(random_tensor(rng, {n, 8}, -8, 8)), off = t.leaf(random_tensor(rng, {n, 4}, -2, 2));
    Var feat = t.leaf(random_tensor(rng, {n, 16})), rows = t.leaf(random_tensor(rng, {8, 16}));
    const fewshot::TeacherOutputs teacher{random_tensor(rng, {n, 6}), random_tensor(rng, {n, 4})};
    const double nl = fewshot::novel_loss(lg, off, feat, rows, m, anchors, gt, &teacher, hp).total.value().item();
    const double bl = detector::base_loss(lg, off, m, anchors, gt, hp.alpha).total.value().item();
    equal += nl == bl;
  }

  // Distillation of a detector against itself: the teacher's outputs are the
  // student's own, restricted to the background + base columns.
  double worst = 0;
  for (int trial = 0; trial < 5; ++trial) {
    detector::DetectorConfig cfg;
    cfg.num_classes = 8;
    const auto params = detector::init_detector(cfg, 200 + static_cast<std::uint64_t>(trial));
    const auto scene = synth::generate_scene(300 + static_cast<std::uint64_t>(trial), {});
    const auto inf = fewshot::infer(params, scene, {});
    Tensor tl({inf.logits.dim(0), 7});
    for (std::size_t i = 0; i < tl.dim(0); ++i)
      for (std::size_t j = 0; j < 7; ++j) tl.at(i, j) = inf.logits.at(i, j);
    Tape t;
    const double d = fewshot::distillation_loss(t.leaf(inf.logits), t.leaf(inf.offsets), tl, inf.offsets, 7)
                         .value()
                         .item();
    worst = std::max(worst, std::abs(d));
  }
  return {equal == 50 && worst == 0.0, std::to_string(equal) + "/50 instances equal to base_loss exactly; " +
                                          "max |distillation(theta, theta)| = " + num(worst, 3)};
}

// ---- oracles -------------------------------------------------------------------

Outcome oracle_equivalence() {
  std::mt19937_64 rng(105);
  std::uniform_real_distribution<double> u(0, 1);
  int nms_same = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 20;
    std::vector<Box> b;
    std::vector<double> s;
    for (std::size_t i = 0; i < n; ++i) {
      b.push_back(afsd::testing::random_box(rng));
      s.push_back(std::round(u(rng) * 10) / 10);  // coarse, to force ties
    }
    const double thr = 0.1 + 0.8 * u(rng);
    nms_same += detector::nms(b, s, thr, 0.0, 0) == afsd::testing::nms_oracle(b, s, thr);
  }

  // 3 gt, ranked detections hit, miss, hit, hit, duplicate.
  // precision 1, 1/2, 2/3, 3/4, 3/5 at recall 1/3, 1/3, 2/3, 1, 1 ->
  // interpolated 1 at t <= 0.3 (4 points), 3/4 at t >= 0.4 (7 points).
  const std::vector<detector::GtRecord> gt{
      {0, 1, {0.2, 0.2, 0.1, 0.1}}, {0, 1, {0.5, 0.5, 0.1, 0.1}}, {0, 1, {0.8, 0.8, 0.1, 0.1}}};
  const std::vector<detector::Detection> d{{0, 1, 0.9, gt[0].box},
                                           {0, 1, 0.8, {0.2, 0.8, 0.1, 0.1}},
                                           {0, 1, 0.7, gt[1].box},
                                           {0, 1, 0.6, gt[2].box},
                                           {0, 1, 0.5, gt[0].box}};
  const double hand = (4 * 1.0 + 7 * 0.75) / 11.0;
  const double ap_err = std::abs(detector::evaluate_map(d, gt).ap.at(1) - hand);

  double gc_err = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t C = 2 + trial % 15, H = 1 + trial % 6;
    const auto p = afsd::testing::random_gc_params(rng, C, attention::bottleneck_width(C));
    const Tensor y = random_tensor(rng, {C, H, H + 1}, -2, 2);
    Tape t;
    const Tensor got = attention::gc_block(t.leaf(y), attention::record(t, p)).value();
    const Tensor want = afsd::testing::gc_loop_oracle(y, p);
    for (std::size_t i = 0; i < got.size(); ++i) gc_err = std::max(gc_err, std::abs(got[i] - want[i]));
  }
  return {nms_same == 200 && ap_err <= 1e-12 && gc_err <= 1e-12,
          "NMS " + std::to_string(nms_same) + "/200; AP |err| " + num(ap_err, 3) + "; gc_block max |err| " +
              num(gc_err, 3)};
}

// ---- imprinting ----------------------------------------------------------------

// Single-object scenes for every novel category of a split where seven of
// the eight categories are novel. With `copies` > 1 a class's instances are
// re-renders of the same scene, so every class has one feature.
fewshot::SupportSet constructed_support(const synth::SplitSpec& split, int distinct, int copies) {
  fewshot::SupportSet sup;
  sup.K = distinct * copies;
  for (int c : split.novel) {
    for (int k = 0; k < distinct; ++k) {
      synth::SceneConfig sc;
      sc.min_objects = sc.max_objects = 1;
      sc.allowed_categories = {c};
      const auto scene = synth::generate_scene(synth::mix_seed(4000 + static_cast<std::uint64_t>(c), k), sc);
      for (int r = 0; r < copies; ++r) sup.images.push_back(scene);
    }
  }
  return sup;
}

Outcome imprinting() {
  synth::SplitSpec split = synth::SplitSpec::preset(1);
  split.novel = {2, 3, 4, 5, 6, 7, 8};
  const auto full = fewshot::LabelMap::full(split);
  const fewshot::SaliencySettings sal;
  int ranked = 0, total = 0;
  bool distinct = true;
  double margin = 1e9;
  for (std::uint64_t init : {1u, 2u, 3u}) {
    for (auto [k, copies] : {std::pair{1, 1}, std::pair{1, 3}}) {
      detector::DetectorConfig cfg;
      cfg.num_classes = split.base().size();
      const auto base = detector::init_detector(cfg, init);
      const auto sup = constructed_support(split, k, copies);
      const auto p = fewshot::init_novel_detector(base, sup, full, sal);
      const Tensor& w = p.classifier();
      const auto anchors = detector::generate_anchors(p.config.anchors);

      // Precondition: class rows pairwise distinct.
      for (int a : split.novel)
        for (int b : split.novel) {
          if (a >= b) continue;
          double dot = 0;
          for (std::size_t j = 0; j < w.dim(1); ++j) dot += w.at(full.label_of(a), j) * w.at(full.label_of(b), j);
          distinct = distinct && dot < 1.0 - 1e-9;
        }

      for (const auto& scene : sup.images) {
        const auto inf = fewshot::infer(base, scene, sal);
        const auto& o = scene.objects.front();
        std::size_t arg = 0;
        double best = -1;
        for (std::size_t i = 0; i < anchors.size(); ++i) {
          if (const double v = detector::iou(anchors.boxes[i], o.box); v > best) {
            best = v;
            arg = i;
          }
        }
        double own = -2, other = -2;
        for (int c : split.novel) {
          const auto r = static_cast<std::size_t>(full.label_of(c));
          double dot = 0, nf = 0;
          for (std::size_t j = 0; j < w.dim(1); ++j) {
            dot += w.at(r, j) * inf.features.at(arg, j);
            nf += inf.features.at(arg, j) * inf.features.at(arg, j);
          }
          const double cos = dot / std::sqrt(nf);
          if (c == o.category) {
            own = cos;
          } else {
            other = std::max(other, cos);
          }
        }
        ++total;
        ranked += own > other;
        margin = std::min(margin, own - other);
      }
    }
  }
  return {distinct && ranked == total, std::to_string(ranked) + "/" + std::to_string(total) +
                                           " support instances rank their own class first among 7 novel classes" +
                                           " (min cosine margin " + num(margin, 3) + "); rows pairwise distinct: " +
                                           (distinct ? "yes" : "no")};
}

// ---- desk-scale experiments -------------------------------------------------------

struct SeedRun {
  int seed = 0;
  double td_base = 0, td_novel = 0, g0_base = 0, b0_cos = 0, b2_cos = 0, bu_novel = 0;
  double cpu_td_base = 0, cpu_bu_base = 0, cpu_full = 0, cpu_g0 = 0, cpu_b0 = 0, cpu_bu_cell = 0;
};

constexpr int kSeeds = 5;

const std::vector<SeedRun>& experiment_runs() {
  static const std::vector<SeedRun> runs = [] {
    std::vector<SeedRun> out;
    for (int s = 1; s <= kSeeds; ++s) {
      SeedRun r;
      r.seed = s;
      cli::RunConfig rc;
      rc.merge(json{{"seed", s}, {"data.seed", s}});
      const auto bench = cli::make_benchmark(rc);

      double t0 = cpu_seconds();
      const auto td = cli::run_base(rc, bench);
      r.cpu_td_base = cpu_seconds() - t0;

      t0 = cpu_seconds();
      const auto full = cli::run_cell(rc, bench, td.params);
      r.cpu_full = cpu_seconds() - t0;
      r.td_base = full.report.base_map;
      r.td_novel = full.report.novel_map;
      r.b2_cos = full.positive_cosine;

      cli::RunConfig g0 = rc;
      g0.set("loss.gamma=0");
      t0 = cpu_seconds();
      r.g0_base = cli::run_cell(g0, bench, td.params).report.base_map;
      r.cpu_g0 = cpu_seconds() - t0;

      cli::RunConfig b0 = rc;
      b0.set("loss.beta=0");
      t0 = cpu_seconds();
      r.b0_cos = cli::run_cell(b0, bench, td.params).positive_cosine;
      r.cpu_b0 = cpu_seconds() - t0;

      cli::RunConfig bu = rc;
      bu.set("model.use_bottom_up=true");
      t0 = cpu_seconds();
      const auto bu_base = cli::run_base(bu, bench);
      r.cpu_bu_base = cpu_seconds() - t0;
      t0 = cpu_seconds();
      r.bu_novel = cli::run_cell(bu, bench, bu_base.params).report.novel_map;
      r.cpu_bu_cell = cpu_seconds() - t0;

      std::cout << "  seed " << s << ": TD base " << num(r.td_base) << " novel " << num(r.td_novel) << " | gamma=0 base "
                << num(r.g0_base) << " | BU+TD novel " << num(r.bu_novel) << " | cos beta=2 " << num(r.b2_cos)
                << " beta=0 " << num(r.b0_cos) << " | cpu " << num(r.cpu_td_base + r.cpu_full + r.cpu_g0 + r.cpu_b0 +
                                                                   r.cpu_bu_base + r.cpu_bu_cell, 4)
                << " s" << std::endl;
      out.push_back(r);
    }
    return out;
  }();
  return runs;
}

double mean_of(const std::vector<SeedRun>& runs, double SeedRun::*field) {
  double s = 0;
  for (const auto& r : runs) s += r.*field;
  return s / static_cast<double>(runs.size());
}

double sum_of(const std::vector<SeedRun>& runs, std::initializer_list<double SeedRun::*> fields) {
  double s = 0;
  for (const auto& r : runs)
    for (auto f : fields) s += r.*f;
  return s;
}

Outcome concentration_effect() {
  const auto& runs = experiment_runs();
  const double b2 = mean_of(runs, &SeedRun::b2_cos), b0 = mean_of(runs, &SeedRun::b0_cos);
  return {b2 > b0, "5-seed mean positive cosine beta=2 " + num(b2, 6) + " vs beta=0 " + num(b0, 6)};
}

Outcome directional_ablation() {
  const auto& runs = experiment_runs();
  const double td = mean_of(runs, &SeedRun::td_novel), bu = mean_of(runs, &SeedRun::bu_novel);
  const double g5 = mean_of(runs, &SeedRun::td_base), g0 = mean_of(runs, &SeedRun::g0_base);
  const double cpu_bu = sum_of(runs, {&SeedRun::cpu_td_base, &SeedRun::cpu_full, &SeedRun::cpu_bu_base,
                                      &SeedRun::cpu_bu_cell});
  const double cpu_g = sum_of(runs, {&SeedRun::cpu_td_base, &SeedRun::cpu_full, &SeedRun::cpu_g0});
  const bool ok = bu >= td && g5 > g0 && cpu_bu <= 1800.0 && cpu_g <= 1800.0;
  return {ok, "novel mAP BU+TD " + num(bu) + " vs TD " + num(td) + " (" + num(cpu_bu / 60, 3) +
                  " CPU min); base mAP gamma=0.5 " + num(g5) + " vs gamma=0 " + num(g0) + " (" + num(cpu_g / 60, 3) +
                  " CPU min)"};
}

// ---- determinism ---------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "afsd");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream sink;
  auto* old = std::cout.rdbuf(sink.rdbuf());
  const int code = cli::run(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old);
  return code;
}

// Every file under `a` has a byte-identical twin under `b`, apart from the
// config snapshot (output.dir differs) and the wall-clock field of
// gradcheck.json.
bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    if (rel == "config.resolved.json") continue;
    ++files;
    std::string x = slurp(e.path()), y = slurp(b / rel);
    if (rel == "gradcheck.json") {
      auto jx = json::parse(x), jy = json::parse(y);
      jx.erase("seconds");
      jy.erase("seconds");
      x = jx.dump();
      y = jy.dump();
    }
    if (x != y) {
      why = rel.string() + " differs";
      return false;
    }
  }
  if (files == 0) {
    why = "no outputs under " + a.string();
    return false;
  }
  return true;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "afsd_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  setenv("AFSD_OUTPUT_ROOT", root.c_str(), 1);

  const std::vector<std::string> small{"-s", "data.base_train=60", "-s", "data.novel_pool=80", "-s", "data.test=20",
                                       "-s", "base.epochs=3",        "-s", "novel.epochs=3",     "-s", "base.lr_steps=[2]",
                                       "-s", "novel.lr_steps=[2]",   "-s", "model.use_bottom_up=true"};
  auto with = [&](std::vector<std::string> head, std::vector<std::string> tail = {}) {
    head.insert(head.begin() + 1, small.begin(), small.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  };
  const std::string base_ckpt = (root / "train-base/checkpoint.json").string();
  const std::string novel_ckpt = (root / "train-novel/checkpoint.json").string();
  const std::vector<std::pair<std::string, std::vector<std::string>>> runs{
      {"gen-data", with({"gen-data", "-o", "gen-data"})},
      {"train-base", with({"train-base", "-o", "train-base"})},
      {"train-novel", with({"train-novel", "--checkpoint", base_ckpt, "-o", "train-novel"})},
      {"eval", with({"eval", "--checkpoint", novel_ckpt, "-o", "eval"})},
      {"gradcheck", {"gradcheck", "-o", "gradcheck", "-s", "gradcheck.points=2"}},
      {"render-attention", with({"render-attention", "--checkpoint", novel_ckpt, "-o", "render-attention"})},
      {"sweep", with({"sweep", "-o", "sweep"}, {"-s", "sweep.beta=[0,2]"})},
  };

  int same = 0;
  std::string failures;
  for (const auto& [name, args] : runs) {
    if (cli_run(args) != cli::kExitOk) {
      failures += " " + name + "(first run failed)";
      continue;
    }
    const std::string snap = (root / name / "config.resolved.json").string();
    if (cli_run({name, "--config", snap, "-o", name + "-replay"}) != cli::kExitOk) {
      failures += " " + name + "(replay failed)";
      continue;
    }
    std::string why;
    if (same_tree(root / name, root / (name + "-replay"), why)) {
      ++same;
    } else {
      failures += " " + name + "(" + why + ")";
    }
  }
  fs::remove_all(root);
  return {same == static_cast<int>(runs.size()),
          std::to_string(same) + "/" + std::to_string(runs.size()) + " commands replay byte-identically from " +
              "config.resolved.json" + (failures.empty() ? "" : ";" + failures)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"gradients", "finite-difference checks of every op and loss, < 1e-4, < 60 s", gradients},
      {"topdown-normalization", "top-down maps sum to 1 +- 1e-12", topdown_normalization},
      {"residual-identity", "gc_block with w_v2 = 0 is the identity", residual_identity},
      {"fusion-neutrality", "eps = e with zero saliency is neutral; eps = 1 zeroes unsalient pixels", fusion_neutrality},
      {"reduction-identities", "novel loss at beta=eta=gamma=0 is the base loss; self-distillation is 0",
       reduction_identities},
      {"oracle-equivalence", "NMS, 11-point AP and gc_block against independent oracles", oracle_equivalence},
      {"imprinting", "support instances rank their own class first after imprinting", imprinting},
      {"concentration-effect", "beta = 2 raises the mean positive cosine over beta = 0", concentration_effect},
      {"directional-ablation", "BU+TD novel mAP >= TD; gamma = 0.5 base mAP > gamma = 0", directional_ablation},
      {"determinism", "command reruns from their config snapshot are byte-identical", determinism},
  };

  json report = json::array();
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.passed;
    std::cout << (o.passed ? "PASS" : "FAIL") << " [" << i + 1 << "] " << c.id << ": " << c.title << " -- " << o.detail
              << " (" << num(secs, 3) << " s)" << std::endl;
    report.push_back({{"id", c.id}, {"passed", o.passed}, {"detail", o.detail}, {"seconds", secs}});
  }
  std::ofstream("acceptance_report.json") << report.dump(2) << "\n";
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
  return failed ? 1 : 0;
}
