#include "afsd/attention/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace afsd::attention {

namespace {

Tensor normal(std::mt19937_64& rng, Shape shape, double stddev) {
  std::normal_distribution<double> d(0.0, stddev);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = d(rng);
  return t;
}

Var zeros_bias(Var like_kernel) {
  return like_kernel.tape().constant(Tensor({like_kernel.shape()[0]}));
}

void check_kernel(Var features, Var kernel, const char* what) {
  if (features.shape().size() != 3) {
    throw ShapeError(std::string(what) + ": features must be [C,H,W], got " + shape_str(features.shape()));
  }
  const Shape& k = kernel.shape();
  if (k.size() != 4 || k[1] != features.shape()[0] || k[2] != 1 || k[3] != 1) {
    throw ShapeError(std::string(what) + ": kernel " + shape_str(k) + " does not match " +
                     std::to_string(features.shape()[0]) + " input channels");
  }
}

}  // namespace

GcParams GcParams::init(std::size_t channels, std::mt19937_64& rng, int ratio) {
  const std::size_t cb = bottleneck_width(channels, ratio);
  GcParams p;
  p.w_k = normal(rng, {1, channels, 1, 1}, std::sqrt(1.0 / channels));
  p.w_v1 = normal(rng, {cb, channels, 1, 1}, std::sqrt(2.0 / channels));
  p.ln_gain = Tensor({cb}, 1.0);
  p.ln_bias = Tensor({cb}, 0.0);
  p.w_v2 = Tensor({channels, cb, 1, 1}, 0.0);
  return p;
}

GcVars record(Tape& tape, const GcParams& p, bool requires_grad) {
  return {tape.leaf(p.w_k, requires_grad), tape.leaf(p.w_v1, requires_grad),
          tape.leaf(p.ln_gain, requires_grad), tape.leaf(p.ln_bias, requires_grad),
          tape.leaf(p.w_v2, requires_grad)};
}

Var topdown_map(Var features, Var w_k) {
  check_kernel(features, w_k, "topdown_map");
  if (w_k.shape()[0] != 1) throw ShapeError("topdown_map: w_k must have one output channel");
  const Shape s = features.shape();
  Var logits = conv2d(features, w_k, zeros_bias(w_k), 1, 0);
  return softmax_spatial(reshape(logits, {s[1], s[2]}));
}

Var global_context(Var features, Var h) { return spatial_weighted_sum(features, h); }

Var gc_block(Var features, const GcVars& p) { return gc_block(features, p, nullptr); }

Var gc_block(Var features, const GcVars& p, Var* h_out) {
  const std::size_t c = features.shape().at(0);
  Var h = topdown_map(features, p.w_k);
  if (h_out) *h_out = h;
  Var ctx = reshape(global_context(features, h), {c, 1, 1});
  check_kernel(ctx, p.w_v1, "gc_block w_v1");
  const std::size_t cb = p.w_v1.shape()[0];
  Var t = reshape(conv2d(ctx, p.w_v1, zeros_bias(p.w_v1), 1, 0), {cb});
  t = relu(layer_norm(t, p.ln_gain, p.ln_bias, kLayerNormEps));
  Var t3 = reshape(t, {cb, 1, 1});
  check_kernel(t3, p.w_v2, "gc_block w_v2");
  if (p.w_v2.shape()[0] != c) throw ShapeError("gc_block: w_v2 must map back to " + std::to_string(c) + " channels");
  Var out = reshape(conv2d(t3, p.w_v2, zeros_bias(p.w_v2), 1, 0), {c});
  return add_channel_vector(features, out);
}

Tensor pool_saliency(const saliency::SaliencyMap& s, std::size_t height, std::size_t width) {
  if (s.height <= 0 || s.width <= 0 || height == 0 || width == 0) {
    throw ShapeError("pool_saliency: empty map or target grid");
  }
  Tensor out({height, width});
  // Each target cell covers [i*Hs/H, (i+1)*Hs/H) of the source; partially
  // covered source pixels contribute by their overlap.
  auto overlap = [](double a0, double a1, double b0, double b1) {
    return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
  };
  const double sy = static_cast<double>(s.height) / height;
  const double sx = static_cast<double>(s.width) / width;
  for (std::size_t i = 0; i < height; ++i) {
    const double y0 = i * sy, y1 = (i + 1) * sy;
    for (std::size_t j = 0; j < width; ++j) {
      const double x0 = j * sx, x1 = (j + 1) * sx;
      double acc = 0.0, wsum = 0.0;
      for (int y = static_cast<int>(std::floor(y0)); y < std::min<int>(s.height, static_cast<int>(std::ceil(y1))); ++y) {
        const double wy = overlap(y, y + 1, y0, y1);
        for (int x = static_cast<int>(std::floor(x0)); x < std::min<int>(s.width, static_cast<int>(std::ceil(x1))); ++x) {
          const double w = wy * overlap(x, x + 1, x0, x1);
          acc += w * s.at(y, x);
          wsum += w;
        }
      }
      out.at(i, j) = acc / wsum;
    }
  }
  auto d = out.data();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const double mn = *lo, mx = *hi;
  for (auto& v : d) v = mx > mn ? (v - mn) / (mx - mn) : std::clamp(v, 0.0, 1.0);
  return out;
}

Var fuse_bottom_up(Var z, const saliency::SaliencyMap& s, const FusionConfig& cfg) {
  if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("fusion epsilon must be > 0");
  if (z.shape().size() != 3) throw ShapeError("fuse_bottom_up: z must be [C,H,W], got " + shape_str(z.shape()));
  Tensor m = pool_saliency(s, z.shape()[1], z.shape()[2]);
  for (auto& v : m.data()) v = std::log(cfg.epsilon + v);
  return mul_spatial(z, z.tape().constant(std::move(m)));
}

}  // namespace afsd::attention
