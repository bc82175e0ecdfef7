#include "config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

namespace afsd::cli {

namespace {

using json = nlohmann::json;

json make_defaults() {
  const double e = std::exp(1.0);
  return json{
      {"seed", 1},
      {"split", 1},
      {"output.dir", "runs/default"},
      {"checkpoint", ""},

      {"data.seed", 1},
      {"data.base_train", 800},
      {"data.novel_pool", 200},
      {"data.test", 200},

      {"model.widths", {8, 16, 24, 32}},
      {"model.feature_dim", 16},
      {"model.temperature", 10.0},
      {"model.use_topdown", true},
      {"model.use_bottom_up", false},
      {"anchors.map_sizes", {8, 4}},
      {"anchors.scales", {0.22, 0.4}},
      {"anchors.aspects", {1.0, 2.0, 0.5}},

      {"saliency.kind", "oracle"},
      {"saliency.blur_radius", 2},
      {"saliency.bms_thresholds", 8},
      {"saliency.opening_radius", 1},

      {"loss.alpha", 1.0},
      {"loss.beta", 2.0},
      {"loss.eta", 0.4},
      {"loss.gamma", 0.5},
      {"loss.epsilon", e},

      {"base.epochs", 30},
      {"base.batch_size", 8},
      {"base.lr", 0.02},
      {"base.momentum", 0.9},
      {"base.weight_decay", 5e-4},
      {"base.lr_steps", {20}},
      {"base.lr_decay", 0.1},
      {"base.warmup_iters", 0},
      {"base.grad_clip", 5.0},

      {"novel.K", 2},
      {"novel.base_multiplier", 3},
      {"novel.epochs", 40},
      {"novel.batch_size", 4},
      {"novel.lr", 0.01},
      {"novel.momentum", 0.9},
      {"novel.weight_decay", 5e-4},
      {"novel.lr_steps", {30}},
      {"novel.lr_decay", 0.1},
      {"novel.warmup_iters", 0},
      {"novel.grad_clip", 5.0},

      {"match.pos_threshold", 0.5},
      {"match.neg_pos_ratio", 3.0},

      {"eval.score_threshold", 0.01},
      {"eval.nms_iou", 0.45},
      {"eval.top_k", 50},
      {"eval.max_detections", 100},

      {"render.scene_seed", 7},
      {"render.blank", false},

      {"gradcheck.points", 10},
      {"gradcheck.seed", 20240},

      {"sweep.beta", json::array()},
      {"sweep.eta", json::array()},
      {"sweep.epsilon", json::array()},
      {"sweep.gamma", json::array()},
      {"sweep.split", json::array()},
      {"sweep.K", json::array()},
      {"sweep.seed", json::array()},
  };
}

void flatten_into(const json& in, const std::string& prefix, json& out) {
  for (const auto& [k, v] : in.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      flatten_into(v, key, out);
    } else {
      out[key] = v;
    }
  }
}

bool is_int(const json& v) { return v.is_number_integer() || v.is_number_unsigned(); }

// Integers are accepted where floats are expected, not the reverse.
bool compatible(const json& def, const json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (is_int(def)) return is_int(v);
  if (def.is_number_float()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); });
  return false;
}

}  // namespace

const json& RunConfig::defaults() {
  static const json d = make_defaults();
  return d;
}

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::assign(const std::string& key, const json& value) {
  const auto& d = defaults();
  if (!d.contains(key)) throw UsageError("unknown config key '" + key + "'");
  if (!compatible(d.at(key), value)) {
    throw UsageError("config key '" + key + "' expects " + std::string(d.at(key).type_name()) + ", got " +
                     value.dump());
  }
  values_[key] = d.at(key).is_number_float() ? json(value.get<double>()) : value;
}

void RunConfig::merge(const json& doc) {
  if (!doc.is_object()) throw UsageError("config must be a JSON object");
  json flat = json::object();
  flatten_into(doc, "", flat);
  for (const auto& [k, v] : flat.items()) assign(k, v);
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config file " + path.string() + ": " + e.what());
  }
  merge(doc);
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json v = json::parse(raw, nullptr, false);
  if (v.is_discarded()) v = raw;
  assign(key, v);
}

const json& RunConfig::at(const std::string& key) const {
  if (!values_.contains(key)) throw UsageError("unknown config key '" + key + "'");
  return values_.at(key);
}

int RunConfig::get_int(const std::string& key) const { return at(key).get<int>(); }
double RunConfig::get_double(const std::string& key) const { return at(key).get<double>(); }
bool RunConfig::get_bool(const std::string& key) const { return at(key).get<bool>(); }
std::string RunConfig::get_string(const std::string& key) const { return at(key).get<std::string>(); }

std::vector<int> RunConfig::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& v : at(key)) {
    if (!is_int(v)) throw UsageError("config key '" + key + "' expects integers");
    out.push_back(v.get<int>());
  }
  return out;
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& v : at(key)) out.push_back(v.get<double>());
  return out;
}

synth::SplitSpec split_of(const RunConfig& rc) {
  try {
    return synth::SplitSpec::preset(rc.get_int("split"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

synth::BenchmarkSizes benchmark_sizes(const RunConfig& rc) {
  return {rc.get_int("data.base_train"), rc.get_int("data.novel_pool"), rc.get_int("data.test")};
}

detector::DetectorConfig detector_config(const RunConfig& rc) {
  detector::DetectorConfig c;
  const auto w = rc.get_ints("model.widths");
  if (w.size() != 4) throw UsageError("model.widths needs 4 entries");
  for (std::size_t i = 0; i < 4; ++i) {
    if (w[i] <= 0) throw UsageError("model.widths must be positive");
    c.widths[i] = static_cast<std::size_t>(w[i]);
  }
  if (rc.get_int("model.feature_dim") <= 0) throw UsageError("model.feature_dim must be positive");
  c.feature_dim = static_cast<std::size_t>(rc.get_int("model.feature_dim"));
  c.temperature = rc.get_double("model.temperature");
  c.use_topdown = rc.get_bool("model.use_topdown");
  c.use_bottom_up = rc.get_bool("model.use_bottom_up");
  c.epsilon = rc.get_double("loss.epsilon");
  c.anchors.map_sizes.clear();
  for (int m : rc.get_ints("anchors.map_sizes")) {
    if (m <= 0) throw UsageError("anchors.map_sizes must be positive");
    c.anchors.map_sizes.push_back(static_cast<std::size_t>(m));
  }
  c.anchors.scales = rc.get_doubles("anchors.scales");
  c.anchors.aspects = rc.get_doubles("anchors.aspects");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

fewshot::SaliencySettings saliency_settings(const RunConfig& rc) {
  fewshot::SaliencySettings s;
  s.kind = rc.get_string("saliency.kind");
  if (s.kind != "oracle" && s.kind != "bms") throw UsageError("saliency.kind must be 'oracle' or 'bms'");
  s.blur_radius = rc.get_int("saliency.blur_radius");
  s.bms.thresholds_per_channel = rc.get_int("saliency.bms_thresholds");
  s.bms.opening_radius = rc.get_int("saliency.opening_radius");
  return s;
}

fewshot::Hyperparams hyperparams(const RunConfig& rc) {
  fewshot::Hyperparams hp;
  hp.alpha = rc.get_double("loss.alpha");
  hp.beta = rc.get_double("loss.beta");
  hp.eta = rc.get_double("loss.eta");
  hp.gamma = rc.get_double("loss.gamma");
  hp.epsilon = rc.get_double("loss.epsilon");
  hp.K = rc.get_int("novel.K");
  hp.base_multiplier = rc.get_int("novel.base_multiplier");
  try {
    hp.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return hp;
}

fewshot::TrainConfig train_config(const RunConfig& rc, const std::string& stage) {
  fewshot::TrainConfig t;
  const std::string p = stage + ".";
  t.epochs = rc.get_int(p + "epochs");
  t.batch_size = rc.get_int(p + "batch_size");
  t.lr = rc.get_double(p + "lr");
  t.momentum = rc.get_double(p + "momentum");
  t.weight_decay = rc.get_double(p + "weight_decay");
  t.lr_steps = rc.get_ints(p + "lr_steps");
  t.lr_decay = rc.get_double(p + "lr_decay");
  t.grad_clip = rc.get_double(p + "grad_clip");
  t.warmup_iters = rc.get_int(p + "warmup_iters");
  if (t.epochs < 0 || t.batch_size < 1 || t.lr < 0 || t.grad_clip < 0 || t.warmup_iters < 0) {
    throw UsageError(stage + ": epochs >= 0, batch_size >= 1, lr >= 0, grad_clip >= 0 and warmup_iters >= 0 required");
  }
  t.pos_thr = rc.get_double("match.pos_threshold");
  t.neg_pos_ratio = rc.get_double("match.neg_pos_ratio");
  t.seed = static_cast<std::uint64_t>(rc.get_int("seed"));
  t.hp = hyperparams(rc);
  t.saliency = saliency_settings(rc);
  return t;
}

detector::PostprocessConfig postprocess_config(const RunConfig& rc) {
  detector::PostprocessConfig p;
  p.score_thr = rc.get_double("eval.score_threshold");
  p.nms_iou = rc.get_double("eval.nms_iou");
  p.top_k = rc.get_int("eval.top_k");
  p.max_detections = rc.get_int("eval.max_detections");
  return p;
}

std::filesystem::path output_dir(const RunConfig& rc) {
  const std::filesystem::path dir = rc.get_string("output.dir");
  if (dir.is_absolute()) return dir;
  const char* root = std::getenv("AFSD_OUTPUT_ROOT");
  return (root && *root ? std::filesystem::path(root) : std::filesystem::current_path()) / dir;
}

}  // namespace afsd::cli
