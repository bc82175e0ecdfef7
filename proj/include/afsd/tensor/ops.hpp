#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "afsd/tensor/tape.hpp"

// Differentiable primitives. Every function records one Op on the tape that
// owns its inputs; all inputs must live on the same tape.
namespace afsd {

// Elementwise, identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);
Var relu(Var x);
Var square(Var x);
/// ln(eps + x); requires eps + x > 0.
Var log_offset(Var x, double eps);
/// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
Var smooth_l1(Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var x) { return scale(x, s); }

// Reductions to a single-element tensor.
Var sum(Var x);
Var mean(Var x);
Var dot(Var a, Var b);

/// input [Cin,H,W], kernel [Cout,Cin,kH,kW], bias [Cout] -> [Cout,H',W'],
/// zero padding.
Var conv2d(Var input, Var kernel, Var bias, int stride, int padding);

/// Softmax over every element of `logits` (max-subtracted).
Var softmax_spatial(Var logits);

/// gain * (x - mean) / sqrt(var + eps) + bias over a 1-D tensor,
/// population variance.
Var layer_norm(Var x, Var gain, Var bias, double eps);

/// features [C,H,W], weights [H,W] -> [C]: sum_ij features[:,i,j] * weights[i,j].
Var spatial_weighted_sum(Var features, Var weights);
/// features [C,H,W] + v[c] at every pixel.
Var add_channel_vector(Var features, Var v);
/// features [C,H,W] * map[i,j] on every channel.
Var mul_spatial(Var features, Var map);

/// Rows of a [N,D] tensor scaled to unit L2 norm. A zero row is an error.
Var l2_normalize_rows(Var x);
/// a [N,D], b [M,D] -> a b^T [N,M].
Var matmul_nt(Var a, Var b);

/// Sum over rows with targets[r] >= 0 of -log softmax(logits[r])[targets[r]];
/// probabilities are clamped at 1e-12. Rows with negative targets are skipped.
Var cross_entropy(Var logits, std::span<const int> targets);

/// x [N,D] -> x[indices] [n,D]; indices must be non-empty.
Var gather_rows(Var x, std::span<const std::size_t> indices);
/// Stacks [n_k, D] tensors along the first axis.
Var concat_rows(std::span<const Var> parts);
/// Head map [A*D,H,W] -> [H*W*A, D], positions row-major, anchor-minor.
Var anchor_rows(Var head, std::size_t anchors_per_position);
/// x [N,K] -> x[:, begin:end].
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var reshape(Var x, Shape shape);

}  // namespace afsd
