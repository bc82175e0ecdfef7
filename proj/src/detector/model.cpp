#include "afsd/detector/model.hpp"

#include <cmath>
#include <stdexcept>

namespace afsd::detector {

namespace {

Tensor he_normal(std::mt19937_64& rng, Shape shape, std::size_t fan_in) {
  std::normal_distribution<double> d(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = d(rng);
  return t;
}

std::string stage_key(std::size_t s, const char* leaf) { return "backbone." + std::to_string(s) + "." + leaf; }
std::string head_key(std::size_t k, const char* part) { return "head." + std::to_string(k) + "." + part; }

const Var& need(const VarMap& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end()) throw std::invalid_argument("detector parameter missing: " + key);
  return it->second;
}

}  // namespace

void DetectorConfig::validate() const {
  if (image_size == 0 || image_size % 16 != 0) throw std::invalid_argument("image_size must be a multiple of 16");
  for (auto w : widths) {
    if (w == 0) throw std::invalid_argument("backbone widths must be positive");
  }
  if (feature_dim == 0) throw std::invalid_argument("feature_dim must be positive");
  if (anchors.map_sizes != std::vector<std::size_t>{image_size / 8, image_size / 16}) {
    throw std::invalid_argument("anchor map sizes must match the stage 3 and 4 grids (" +
                                std::to_string(image_size / 8) + ", " + std::to_string(image_size / 16) + ")");
  }
  if (anchors.scales.size() != 2 || anchors.aspects.empty()) throw std::invalid_argument("need two anchor scales and at least one aspect");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
}

nlohmann::json DetectorConfig::to_json() const {
  return {{"image_size", image_size},
          {"widths", widths},
          {"feature_dim", feature_dim},
          {"anchor_map_sizes", anchors.map_sizes},
          {"anchor_scales", anchors.scales},
          {"anchor_aspects", anchors.aspects},
          {"temperature", temperature},
          {"use_topdown", use_topdown},
          {"use_bottom_up", use_bottom_up},
          {"epsilon", epsilon},
          {"num_classes", num_classes}};
}

DetectorConfig DetectorConfig::from_json(const nlohmann::json& j) {
  DetectorConfig c;
  c.image_size = j.at("image_size").get<std::size_t>();
  c.widths = j.at("widths").get<std::array<std::size_t, 4>>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.anchors.map_sizes = j.at("anchor_map_sizes").get<std::vector<std::size_t>>();
  c.anchors.scales = j.at("anchor_scales").get<std::vector<double>>();
  c.anchors.aspects = j.at("anchor_aspects").get<std::vector<double>>();
  c.temperature = j.at("temperature").get<double>();
  c.use_topdown = j.at("use_topdown").get<bool>();
  c.use_bottom_up = j.at("use_bottom_up").get<bool>();
  c.epsilon = j.at("epsilon").get<double>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  return c;
}

DetectorParams init_detector(const DetectorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  DetectorParams p;
  p.config = cfg;
  auto& t = p.tensors;
  std::size_t in = 3;
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t out = cfg.widths[s];
    t[stage_key(s + 1, "w")] = he_normal(rng, {out, in, 3, 3}, in * 9);
    t[stage_key(s + 1, "b")] = Tensor({out});
    in = out;
  }
  const auto gc = attention::GcParams::init(cfg.widths[1], rng);
  t["gc.w_k"] = gc.w_k;
  t["gc.w_v1"] = gc.w_v1;
  t["gc.ln_gain"] = gc.ln_gain;
  t["gc.ln_bias"] = gc.ln_bias;
  t["gc.w_v2"] = gc.w_v2;
  const std::size_t a = cfg.anchors_per_position();
  for (std::size_t k = 0; k < 2; ++k) {
    const std::size_t c = cfg.widths[2 + k];
    // Small regression init keeps early offsets near the anchors.
    Tensor reg = he_normal(rng, {a * 4, c, 3, 3}, c * 9);
    for (auto& v : reg.data()) v *= 0.1;
    t[head_key(k, "reg.w")] = std::move(reg);
    t[head_key(k, "reg.b")] = Tensor({a * 4});
    t[head_key(k, "feat.w")] = he_normal(rng, {a * cfg.feature_dim, c, 3, 3}, c * 9);
    // Nonzero so an all-dead input column still yields a normalizable f_i,
    // but small: a large constant direction lets the cosine head call every
    // anchor background from feat.b alone, and base training then starved
    // stage 3 into dead ReLUs on about half the seeds.
    Tensor fb = he_normal(rng, {a * cfg.feature_dim}, cfg.feature_dim);
    for (auto& v : fb.data()) v *= 0.1;
    t[head_key(k, "feat.b")] = std::move(fb);
  }
  t["cls.w"] = he_normal(rng, {cfg.num_classes + 1, cfg.feature_dim}, cfg.feature_dim);
  return p;
}

VarMap record_params(Tape& tape, const ParamMap& params, bool requires_grad) {
  VarMap out;
  for (const auto& [name, value] : params) out.emplace(name, tape.leaf(value, requires_grad));
  return out;
}

Var cosine_logits(Var features, Var rows, double temperature) {
  return scale(matmul_nt(l2_normalize_rows(features), l2_normalize_rows(rows)), temperature);
}

ForwardResult forward(const VarMap& params, const Tensor& image, const saliency::SaliencyMap* sal,
                      const DetectorConfig& cfg) {
  const std::size_t s = cfg.image_size;
  if (image.shape() != Shape{3, s, s}) {
    throw ShapeError("detector expects a " + shape_str({3, s, s}) + " image, got " + shape_str(image.shape()));
  }
  if (cfg.use_bottom_up && sal == nullptr) throw std::invalid_argument("bottom-up fusion needs a saliency map");
  Tape& tape = need(params, "cls.w").tape();

  ForwardResult r;
  // Pixels arrive in [0,1]. Centering them keeps stage-1 pre-activations from
  // sharing the sign of each filter's weight sum, which let whole channels die
  // early in base training on some seeds.
  Tensor centered = image;
  for (double& v : centered.data()) v -= kInputMean;
  Var x = tape.constant(centered);
  std::array<Var, 4> stage;
  for (std::size_t k = 0; k < 4; ++k) {
    x = relu(conv2d(x, need(params, stage_key(k + 1, "w")), need(params, stage_key(k + 1, "b")), 2, 1));
    if (k == 1) {
      if (cfg.use_topdown) {
        attention::GcVars gc{need(params, "gc.w_k"), need(params, "gc.w_v1"), need(params, "gc.ln_gain"),
                             need(params, "gc.ln_bias"), need(params, "gc.w_v2")};
        x = attention::gc_block(x, gc, &r.topdown);
      }
      if (cfg.use_bottom_up) x = attention::fuse_bottom_up(x, *sal, {cfg.epsilon});
    }
    stage[k] = x;
  }

  const std::size_t a = cfg.anchors_per_position();
  std::vector<Var> feats, offs;
  for (std::size_t k = 0; k < 2; ++k) {
    Var src = stage[2 + k];
    offs.push_back(anchor_rows(conv2d(src, need(params, head_key(k, "reg.w")), need(params, head_key(k, "reg.b")), 1, 1), a));
    feats.push_back(anchor_rows(conv2d(src, need(params, head_key(k, "feat.w")), need(params, head_key(k, "feat.b")), 1, 1), a));
  }
  r.features = concat_rows(feats);
  r.offsets = concat_rows(offs);
  r.logits = cosine_logits(r.features, need(params, "cls.w"), cfg.temperature);
  return r;
}

}  // namespace afsd::detector
