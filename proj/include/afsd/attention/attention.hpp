#pragma once

#include <cstdint>
#include <random>

#include "afsd/saliency/saliency.hpp"
#include "afsd/tensor/ops.hpp"

namespace afsd::attention {

constexpr int kBottleneckRatio = 4;
constexpr double kLayerNormEps = 1e-5;

inline std::size_t bottleneck_width(std::size_t channels, int ratio = kBottleneckRatio) {
  return std::max<std::size_t>(1, channels / static_cast<std::size_t>(ratio));
}

/// 1x1 kernels stored as conv weights: w_k [1,C,1,1], w_v1 [Cb,C,1,1],
/// w_v2 [C,Cb,1,1]. No biases.
struct GcParams {
  Tensor w_k;
  Tensor w_v1;
  Tensor ln_gain;
  Tensor ln_bias;
  Tensor w_v2;

  /// He-style normal init; w_v2 starts at zero so the block is the identity.
  static GcParams init(std::size_t channels, std::mt19937_64& rng, int ratio = kBottleneckRatio);
};

/// The same parameters once placed on a tape.
struct GcVars {
  Var w_k;
  Var w_v1;
  Var ln_gain;
  Var ln_bias;
  Var w_v2;
};

GcVars record(Tape& tape, const GcParams& p, bool requires_grad = true);

struct FusionConfig {
  double epsilon = 2.718281828459045;
};

/// h = softmax over all pixels of (w_k * features) -> [H,W].
Var topdown_map(Var features, Var w_k);

/// sum_ij features[:,i,j] * h[i,j] -> [C].
Var global_context(Var features, Var h);

/// features + W_v2 ReLU(LN(W_v1 y')) broadcast to every pixel.
Var gc_block(Var features, const GcVars& p);
/// Same, also handing back the attention map h.
Var gc_block(Var features, const GcVars& p, Var* h_out);

/// Average-pools `s` to [H,W] (cell-overlap weighted), then min-max
/// normalizes. A constant pooled map is kept as is.
Tensor pool_saliency(const saliency::SaliencyMap& s, std::size_t height, std::size_t width);

/// z[c,i,j] * ln(eps + s[i,j]) with s pooled to z's grid; s is a constant.
Var fuse_bottom_up(Var z, const saliency::SaliencyMap& s, const FusionConfig& cfg);

}  // namespace afsd::attention
