#include "afsd/tensor/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

namespace afsd {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, std::string_view op, std::string_view arg) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + std::string(arg) + " must have rank " +
                     std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

Tape& common_tape(std::initializer_list<Var> vars) {
  Tape& t = vars.begin()->tape();
  for (const auto& v : vars) {
    if (&v.tape() != &t) throw std::invalid_argument("operands recorded on different tapes");
  }
  return t;
}

// ---- elementwise -------------------------------------------------------

enum class Binary { kAdd, kSub, kMul };

class BinaryOp final : public Op {
 public:
  explicit BinaryOp(Binary kind) : kind_(kind) {}
  std::string_view name() const override {
    switch (kind_) {
      case Binary::kAdd: return "add";
      case Binary::kSub: return "sub";
      case Binary::kMul: return "mul";
    }
    return "binary";
  }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& a = *in[0];
    const Tensor& b = *in[1];
    require_same_shape(a, b, name());
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
      switch (kind_) {
        case Binary::kAdd: out[i] = a[i] + b[i]; break;
        case Binary::kSub: out[i] = a[i] - b[i]; break;
        case Binary::kMul: out[i] = a[i] * b[i]; break;
      }
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    const Tensor& a = *in[0];
    const Tensor& b = *in[1];
    for (std::size_t i = 0; i < g.size(); ++i) {
      switch (kind_) {
        case Binary::kAdd:
          if (gin[0]) (*gin[0])[i] += g[i];
          if (gin[1]) (*gin[1])[i] += g[i];
          break;
        case Binary::kSub:
          if (gin[0]) (*gin[0])[i] += g[i];
          if (gin[1]) (*gin[1])[i] -= g[i];
          break;
        case Binary::kMul:
          if (gin[0]) (*gin[0])[i] += g[i] * b[i];
          if (gin[1]) (*gin[1])[i] += g[i] * a[i];
          break;
      }
    }
  }

 private:
  Binary kind_;
};

enum class Unary { kScale, kAddScalar, kRelu, kSquare, kLogOffset, kSmoothL1 };

class UnaryOp final : public Op {
 public:
  UnaryOp(Unary kind, double param) : kind_(kind), param_(param) {}
  std::string_view name() const override {
    switch (kind_) {
      case Unary::kScale: return "scale";
      case Unary::kAddScalar: return "add_scalar";
      case Unary::kRelu: return "relu";
      case Unary::kSquare: return "square";
      case Unary::kLogOffset: return "log_offset";
      case Unary::kSmoothL1: return "smooth_l1";
    }
    return "unary";
  }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& x = *in[0];
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = apply(x[i]);
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    if (!gin[0]) return;
    const Tensor& x = *in[0];
    for (std::size_t i = 0; i < x.size(); ++i) (*gin[0])[i] += g[i] * derivative(x[i]);
  }

 private:
  double apply(double x) const {
    switch (kind_) {
      case Unary::kScale: return param_ * x;
      case Unary::kAddScalar: return x + param_;
      case Unary::kRelu: return x > 0.0 ? x : 0.0;
      case Unary::kSquare: return x * x;
      case Unary::kLogOffset: return std::log(param_ + x);
      case Unary::kSmoothL1: {
        const double a = std::abs(x);
        return a < 1.0 ? 0.5 * x * x : a - 0.5;
      }
    }
    return 0.0;
  }
  double derivative(double x) const {
    switch (kind_) {
      case Unary::kScale: return param_;
      case Unary::kAddScalar: return 1.0;
      case Unary::kRelu: return x > 0.0 ? 1.0 : 0.0;
      case Unary::kSquare: return 2.0 * x;
      case Unary::kLogOffset: return 1.0 / (param_ + x);
      case Unary::kSmoothL1:
        if (std::abs(x) < 1.0) return x;
        return x > 0.0 ? 1.0 : -1.0;
    }
    return 0.0;
  }

  Unary kind_;
  double param_;
};

// ---- reductions --------------------------------------------------------

class SumOp final : public Op {
 public:
  explicit SumOp(bool average) : average_(average) {}
  std::string_view name() const override { return average_ ? "mean" : "sum"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    double s = 0.0;
    for (double v : in[0]->data()) s += v;
    if (average_) s /= static_cast<double>(in[0]->size());
    return Tensor::scalar(s);
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    if (!gin[0]) return;
    double d = g[0];
    if (average_) d /= static_cast<double>(in[0]->size());
    for (auto& v : gin[0]->data()) v += d;
  }

 private:
  bool average_;
};

class DotOp final : public Op {
 public:
  std::string_view name() const override { return "dot"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    if (in[0]->size() != in[1]->size()) {
      throw ShapeError("dot: length mismatch " + shape_str(in[0]->shape()) + " vs " +
                       shape_str(in[1]->shape()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < in[0]->size(); ++i) s += (*in[0])[i] * (*in[1])[i];
    return Tensor::scalar(s);
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    for (std::size_t i = 0; i < in[0]->size(); ++i) {
      if (gin[0]) (*gin[0])[i] += g[0] * (*in[1])[i];
      if (gin[1]) (*gin[1])[i] += g[0] * (*in[0])[i];
    }
  }
};

// ---- convolution -------------------------------------------------------

class Conv2dOp final : public Op {
 public:
  Conv2dOp(int stride, int padding) : stride_(stride), pad_(padding) {}
  std::string_view name() const override { return "conv2d"; }

  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& x = *in[0];
    const Tensor& k = *in[1];
    const Tensor& b = *in[2];
    require_rank(x, 3, name(), "input");
    require_rank(k, 4, name(), "kernel");
    require_rank(b, 1, name(), "bias");
    if (stride_ < 1 || pad_ < 0) throw std::invalid_argument("conv2d: stride >= 1 and padding >= 0");
    if (k.dim(1) != x.dim(0)) {
      throw ShapeError("conv2d: kernel expects " + std::to_string(k.dim(1)) +
                       " input channels, input " + shape_str(x.shape()) + " has " +
                       std::to_string(x.dim(0)));
    }
    if (b.dim(0) != k.dim(0)) {
      throw ShapeError("conv2d: bias " + shape_str(b.shape()) + " does not match kernel " +
                       shape_str(k.shape()));
    }
    cin_ = x.dim(0);
    h_ = x.dim(1);
    w_ = x.dim(2);
    cout_ = k.dim(0);
    kh_ = k.dim(2);
    kw_ = k.dim(3);
    const std::size_t p = static_cast<std::size_t>(pad_);
    if (kh_ > h_ + 2 * p || kw_ > w_ + 2 * p) {
      throw ShapeError("conv2d: kernel " + shape_str(k.shape()) + " larger than padded input " +
                       shape_str(x.shape()));
    }
    const std::size_t s = static_cast<std::size_t>(stride_);
    ho_ = (h_ + 2 * p - kh_) / s + 1;
    wo_ = (w_ + 2 * p - kw_) / s + 1;

    const std::size_t rows = cin_ * kh_ * kw_;
    const std::size_t cols = ho_ * wo_;
    col_ = Tensor({rows, cols}, 0.0);
    for (std::size_t c = 0; c < cin_; ++c) {
      for (std::size_t ky = 0; ky < kh_; ++ky) {
        for (std::size_t kx = 0; kx < kw_; ++kx) {
          double* dst = col_.data().data() + ((c * kh_ + ky) * kw_ + kx) * cols;
          for (std::size_t oy = 0; oy < ho_; ++oy) {
            const long iy = static_cast<long>(oy * s + ky) - pad_;
            if (iy < 0 || iy >= static_cast<long>(h_)) continue;
            const double* src = x.data().data() + (c * h_ + static_cast<std::size_t>(iy)) * w_;
            for (std::size_t ox = 0; ox < wo_; ++ox) {
              const long ix = static_cast<long>(ox * s + kx) - pad_;
              if (ix < 0 || ix >= static_cast<long>(w_)) continue;
              dst[oy * wo_ + ox] = src[ix];
            }
          }
        }
      }
    }

    Tensor out({cout_, ho_, wo_});
    MapMat o(out.data().data(), cout_, cols);
    ConstMapMat km(k.data().data(), cout_, rows);
    ConstMapMat cm(col_.data().data(), rows, cols);
    o.noalias() = km * cm;
    for (std::size_t c = 0; c < cout_; ++c) o.row(c).array() += b[c];
    return out;
  }

  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    const Tensor& k = *in[1];
    const std::size_t rows = cin_ * kh_ * kw_;
    const std::size_t cols = ho_ * wo_;
    ConstMapMat gm(g.data().data(), cout_, cols);
    if (gin[2]) {
      for (std::size_t c = 0; c < cout_; ++c) (*gin[2])[c] += gm.row(c).sum();
    }
    if (gin[1]) {
      MapMat gk(gin[1]->data().data(), cout_, rows);
      ConstMapMat cm(col_.data().data(), rows, cols);
      gk.noalias() += gm * cm.transpose();
    }
    if (gin[0]) {
      RowMat gcol(rows, cols);
      ConstMapMat km(k.data().data(), cout_, rows);
      gcol.noalias() = km.transpose() * gm;
      const std::size_t s = static_cast<std::size_t>(stride_);
      Tensor& gx = *gin[0];
      for (std::size_t c = 0; c < cin_; ++c) {
        for (std::size_t ky = 0; ky < kh_; ++ky) {
          for (std::size_t kx = 0; kx < kw_; ++kx) {
            const double* src = gcol.data() + ((c * kh_ + ky) * kw_ + kx) * cols;
            for (std::size_t oy = 0; oy < ho_; ++oy) {
              const long iy = static_cast<long>(oy * s + ky) - pad_;
              if (iy < 0 || iy >= static_cast<long>(h_)) continue;
              double* dst = gx.data().data() + (c * h_ + static_cast<std::size_t>(iy)) * w_;
              for (std::size_t ox = 0; ox < wo_; ++ox) {
                const long ix = static_cast<long>(ox * s + kx) - pad_;
                if (ix < 0 || ix >= static_cast<long>(w_)) continue;
                dst[ix] += src[oy * wo_ + ox];
              }
            }
          }
        }
      }
    }
  }

 private:
  int stride_;
  int pad_;
  std::size_t cin_ = 0, h_ = 0, w_ = 0, cout_ = 0, kh_ = 0, kw_ = 0, ho_ = 0, wo_ = 0;
  Tensor col_;
};

// ---- attention-specific ------------------------------------------------

class SoftmaxAllOp final : public Op {
 public:
  std::string_view name() const override { return "softmax_spatial"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& x = *in[0];
    const double m = *std::max_element(x.data().begin(), x.data().end());
    Tensor out(x.shape());
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      out[i] = std::exp(x[i] - m);
      z += out[i];
    }
    for (auto& v : out.data()) v /= z;
    return out;
  }
  void backward(std::span<const Tensor* const>, const Tensor& y, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    if (!gin[0]) return;
    double gy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) gy += g[i] * y[i];
    for (std::size_t i = 0; i < y.size(); ++i) (*gin[0])[i] += y[i] * (g[i] - gy);
  }
};

class LayerNormOp final : public Op {
 public:
  explicit LayerNormOp(double eps) : eps_(eps) {}
  std::string_view name() const override { return "layer_norm"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& x = *in[0];
    require_rank(x, 1, name(), "x");
    require_same_shape(x, *in[1], name());
    require_same_shape(x, *in[2], name());
    const double n = static_cast<double>(x.size());
    double mu = 0.0;
    for (double v : x.data()) mu += v;
    mu /= n;
    double var = 0.0;
    for (double v : x.data()) var += (v - mu) * (v - mu);
    var /= n;
    inv_std_ = 1.0 / std::sqrt(var + eps_);
    xhat_ = Tensor(x.shape());
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      xhat_[i] = (x[i] - mu) * inv_std_;
      out[i] = (*in[1])[i] * xhat_[i] + (*in[2])[i];
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    const Tensor& gain = *in[1];
    const std::size_t n = g.size();
    if (gin[1]) {
      for (std::size_t i = 0; i < n; ++i) (*gin[1])[i] += g[i] * xhat_[i];
    }
    if (gin[2]) {
      for (std::size_t i = 0; i < n; ++i) (*gin[2])[i] += g[i];
    }
    if (gin[0]) {
      double mean_d = 0.0;
      double mean_dx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = g[i] * gain[i];
        mean_d += d;
        mean_dx += d * xhat_[i];
      }
      mean_d /= static_cast<double>(n);
      mean_dx /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = g[i] * gain[i];
        (*gin[0])[i] += inv_std_ * (d - mean_d - xhat_[i] * mean_dx);
      }
    }
  }

 private:
  double eps_;
  double inv_std_ = 0.0;
  Tensor xhat_;
};

void require_map_matches(const Tensor& features, const Tensor& map, std::string_view op) {
  require_rank(features, 3, op, "features");
  require_rank(map, 2, op, "map");
  if (features.dim(1) != map.dim(0) || features.dim(2) != map.dim(1)) {
    throw ShapeError(std::string(op) + ": spatial extents of " + shape_str(features.shape()) +
                     " and " + shape_str(map.shape()) + " differ");
  }
}

class SpatialWeightedSumOp final : public Op {
 public:
  std::string_view name() const override { return "spatial_weighted_sum"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& f = *in[0];
    const Tensor& w = *in[1];
    require_map_matches(f, w, name());
    const std::size_t c = f.dim(0);
    const std::size_t p = w.size();
    Tensor out({c});
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t i = 0; i < p; ++i) s += f[ch * p + i] * w[i];
      out[ch] = s;
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    const Tensor& f = *in[0];
    const Tensor& w = *in[1];
    const std::size_t c = f.dim(0);
    const std::size_t p = w.size();
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < p; ++i) {
        if (gin[0]) (*gin[0])[ch * p + i] += g[ch] * w[i];
        if (gin[1]) (*gin[1])[i] += g[ch] * f[ch * p + i];
      }
    }
  }
};

class AddChannelVectorOp final : public Op {
 public:
  std::string_view name() const override { return "add_channel_vector"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& f = *in[0];
    const Tensor& v = *in[1];
    require_rank(f, 3, name(), "features");
    require_rank(v, 1, name(), "vector");
    if (v.dim(0) != f.dim(0)) {
      throw ShapeError("add_channel_vector: vector " + shape_str(v.shape()) +
                       " does not match channels of " + shape_str(f.shape()));
    }
    const std::size_t p = f.dim(1) * f.dim(2);
    Tensor out = f;
    for (std::size_t ch = 0; ch < f.dim(0); ++ch) {
      for (std::size_t i = 0; i < p; ++i) out[ch * p + i] += v[ch];
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    const Tensor& f = *in[0];
    const std::size_t p = f.dim(1) * f.dim(2);
    if (gin[0]) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
    }
    if (gin[1]) {
      for (std::size_t ch = 0; ch < f.dim(0); ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < p; ++i) s += g[ch * p + i];
        (*gin[1])[ch] += s;
      }
    }
  }
};

class MulSpatialOp final : public Op {
 public:
  std::string_view name() const override { return "mul_spatial"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& f = *in[0];
    const Tensor& m = *in[1];
    require_map_matches(f, m, name());
    const std::size_t p = m.size();
    Tensor out(f.shape());
    for (std::size_t ch = 0; ch < f.dim(0); ++ch) {
      for (std::size_t i = 0; i < p; ++i) out[ch * p + i] = f[ch * p + i] * m[i];
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    const Tensor& f = *in[0];
    const Tensor& m = *in[1];
    const std::size_t p = m.size();
    for (std::size_t ch = 0; ch < f.dim(0); ++ch) {
      for (std::size_t i = 0; i < p; ++i) {
        if (gin[0]) (*gin[0])[ch * p + i] += g[ch * p + i] * m[i];
        if (gin[1]) (*gin[1])[i] += g[ch * p + i] * f[ch * p + i];
      }
    }
  }
};

// ---- classifier / loss helpers ---------------------------------------------

class L2NormalizeRowsOp final : public Op {
 public:
  std::string_view name() const override { return "l2_normalize_rows"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& x = *in[0];
    require_rank(x, 2, name(), "x");
    const std::size_t n = x.dim(0);
    const std::size_t d = x.dim(1);
    norms_.assign(n, 0.0);
    Tensor out(x.shape());
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += x.at(r, j) * x.at(r, j);
      const double norm = std::sqrt(s);
      if (!(norm > 0.0)) {
        throw NumericError("l2_normalize_rows: row " + std::to_string(r) + " has zero norm");
      }
      norms_[r] = norm;
      for (std::size_t j = 0; j < d; ++j) out.at(r, j) = x.at(r, j) / norm;
    }
    return out;
  }
  void backward(std::span<const Tensor* const>, const Tensor& y, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    if (!gin[0]) return;
    const std::size_t n = y.dim(0);
    const std::size_t d = y.dim(1);
    for (std::size_t r = 0; r < n; ++r) {
      double gy = 0.0;
      for (std::size_t j = 0; j < d; ++j) gy += g.at(r, j) * y.at(r, j);
      for (std::size_t j = 0; j < d; ++j) {
        gin[0]->at(r, j) += (g.at(r, j) - y.at(r, j) * gy) / norms_[r];
      }
    }
  }

 private:
  std::vector<double> norms_;
};

class MatmulNtOp final : public Op {
 public:
  std::string_view name() const override { return "matmul_nt"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& a = *in[0];
    const Tensor& b = *in[1];
    require_rank(a, 2, name(), "a");
    require_rank(b, 2, name(), "b");
    if (a.dim(1) != b.dim(1)) {
      throw ShapeError("matmul_nt: inner extents differ " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    }
    Tensor out({a.dim(0), b.dim(0)});
    MapMat o(out.data().data(), a.dim(0), b.dim(0));
    ConstMapMat am(a.data().data(), a.dim(0), a.dim(1));
    ConstMapMat bm(b.data().data(), b.dim(0), b.dim(1));
    o.noalias() = am * bm.transpose();
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    const Tensor& a = *in[0];
    const Tensor& b = *in[1];
    ConstMapMat gm(g.data().data(), g.dim(0), g.dim(1));
    if (gin[0]) {
      MapMat ga(gin[0]->data().data(), a.dim(0), a.dim(1));
      ga.noalias() += gm * ConstMapMat(b.data().data(), b.dim(0), b.dim(1));
    }
    if (gin[1]) {
      MapMat gb(gin[1]->data().data(), b.dim(0), b.dim(1));
      gb.noalias() += gm.transpose() * ConstMapMat(a.data().data(), a.dim(0), a.dim(1));
    }
  }
};

class CrossEntropyOp final : public Op {
 public:
  explicit CrossEntropyOp(std::vector<int> targets) : targets_(std::move(targets)) {}
  std::string_view name() const override { return "cross_entropy"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& z = *in[0];
    require_rank(z, 2, name(), "logits");
    if (targets_.size() != z.dim(0)) {
      throw ShapeError("cross_entropy: " + std::to_string(targets_.size()) + " targets for logits " +
                       shape_str(z.shape()));
    }
    const std::size_t k = z.dim(1);
    const double log_floor = std::log(1e-12);
    clamped_.assign(targets_.size(), false);
    double total = 0.0;
    for (std::size_t r = 0; r < targets_.size(); ++r) {
      const int t = targets_[r];
      if (t < 0) continue;
      if (static_cast<std::size_t>(t) >= k) {
        throw std::out_of_range("cross_entropy: target " + std::to_string(t) + " out of " +
                                std::to_string(k) + " classes");
      }
      const double* row = z.data().data() + r * k;
      const double m = *std::max_element(row, row + k);
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - m);
      double logp = row[t] - m - std::log(s);
      if (logp < log_floor) {
        logp = log_floor;
        clamped_[r] = true;
      }
      total -= logp;
    }
    return Tensor::scalar(total);
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    if (!gin[0]) return;
    const Tensor& z = *in[0];
    const std::size_t k = z.dim(1);
    for (std::size_t r = 0; r < targets_.size(); ++r) {
      const int t = targets_[r];
      if (t < 0 || clamped_[r]) continue;
      const double* row = z.data().data() + r * k;
      const double m = *std::max_element(row, row + k);
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - m);
      for (std::size_t j = 0; j < k; ++j) {
        const double p = std::exp(row[j] - m) / s;
        gin[0]->at(r, j) += g[0] * (p - (static_cast<int>(j) == t ? 1.0 : 0.0));
      }
    }
  }

 private:
  std::vector<int> targets_;
  std::vector<bool> clamped_;
};

// ---- layout ----------------------------------------------------------------

class GatherRowsOp final : public Op {
 public:
  explicit GatherRowsOp(std::vector<std::size_t> idx) : idx_(std::move(idx)) {}
  std::string_view name() const override { return "gather_rows"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& x = *in[0];
    require_rank(x, 2, name(), "x");
    if (idx_.empty()) throw ShapeError("gather_rows: empty index list");
    const std::size_t d = x.dim(1);
    Tensor out({idx_.size(), d});
    for (std::size_t r = 0; r < idx_.size(); ++r) {
      if (idx_[r] >= x.dim(0)) throw std::out_of_range("gather_rows: row index out of range");
      std::copy_n(x.data().begin() + static_cast<long>(idx_[r] * d), d,
                  out.data().begin() + static_cast<long>(r * d));
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    if (!gin[0]) return;
    const std::size_t d = in[0]->dim(1);
    for (std::size_t r = 0; r < idx_.size(); ++r) {
      for (std::size_t j = 0; j < d; ++j) gin[0]->at(idx_[r], j) += g[r * d + j];
    }
  }

 private:
  std::vector<std::size_t> idx_;
};

class ConcatRowsOp final : public Op {
 public:
  std::string_view name() const override { return "concat_rows"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    if (in.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t d = in[0]->rank() == 2 ? in[0]->dim(1) : 0;
    std::size_t n = 0;
    for (const Tensor* t : in) {
      require_rank(*t, 2, name(), "part");
      if (t->dim(1) != d) throw ShapeError("concat_rows: column counts differ");
      n += t->dim(0);
    }
    std::vector<double> data;
    data.reserve(n * d);
    for (const Tensor* t : in) data.insert(data.end(), t->data().begin(), t->data().end());
    return Tensor({n, d}, std::move(data));
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      const std::size_t len = in[k]->size();
      if (gin[k]) {
        for (std::size_t i = 0; i < len; ++i) (*gin[k])[i] += g[offset + i];
      }
      offset += len;
    }
  }
};

class AnchorRowsOp final : public Op {
 public:
  explicit AnchorRowsOp(std::size_t per_position) : a_(per_position) {}
  std::string_view name() const override { return "anchor_rows"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& h = *in[0];
    require_rank(h, 3, name(), "head");
    if (a_ == 0 || h.dim(0) % a_ != 0) {
      throw ShapeError("anchor_rows: " + std::to_string(h.dim(0)) +
                       " channels not divisible by " + std::to_string(a_) + " anchors");
    }
    const std::size_t d = h.dim(0) / a_;
    const std::size_t p = h.dim(1) * h.dim(2);
    Tensor out({p * a_, d});
    for (std::size_t pos = 0; pos < p; ++pos) {
      for (std::size_t a = 0; a < a_; ++a) {
        for (std::size_t j = 0; j < d; ++j) out.at(pos * a_ + a, j) = h[(a * d + j) * p + pos];
      }
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    if (!gin[0]) return;
    const Tensor& h = *in[0];
    const std::size_t d = h.dim(0) / a_;
    const std::size_t p = h.dim(1) * h.dim(2);
    for (std::size_t pos = 0; pos < p; ++pos) {
      for (std::size_t a = 0; a < a_; ++a) {
        for (std::size_t j = 0; j < d; ++j) (*gin[0])[(a * d + j) * p + pos] += g.at(pos * a_ + a, j);
      }
    }
  }

 private:
  std::size_t a_;
};

class SliceColsOp final : public Op {
 public:
  SliceColsOp(std::size_t begin, std::size_t end) : begin_(begin), end_(end) {}
  std::string_view name() const override { return "slice_cols"; }
  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& x = *in[0];
    require_rank(x, 2, name(), "x");
    if (begin_ >= end_ || end_ > x.dim(1)) {
      throw ShapeError("slice_cols: bad range [" + std::to_string(begin_) + "," +
                       std::to_string(end_) + ") for " + shape_str(x.shape()));
    }
    Tensor out({x.dim(0), end_ - begin_});
    for (std::size_t r = 0; r < x.dim(0); ++r) {
      for (std::size_t j = begin_; j < end_; ++j) out.at(r, j - begin_) = x.at(r, j);
    }
    return out;
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    if (!gin[0]) return;
    for (std::size_t r = 0; r < in[0]->dim(0); ++r) {
      for (std::size_t j = begin_; j < end_; ++j) gin[0]->at(r, j) += g.at(r, j - begin_);
    }
  }

 private:
  std::size_t begin_, end_;
};

class ReshapeOp final : public Op {
 public:
  explicit ReshapeOp(Shape shape) : shape_(std::move(shape)) {}
  std::string_view name() const override { return "reshape"; }
  Tensor forward(std::span<const Tensor* const> in) override { return in[0]->reshaped(shape_); }
  void backward(std::span<const Tensor* const>, const Tensor&, const Tensor& g,
                std::span<Tensor* const> gin) const override {
    if (!gin[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
  }

 private:
  Shape shape_;
};

Var unary(Var x, Unary kind, double param = 0.0) {
  return x.tape().apply(std::make_unique<UnaryOp>(kind, param), {x});
}

Var binary(Var a, Var b, Binary kind) {
  return common_tape({a, b}).apply(std::make_unique<BinaryOp>(kind), {a, b});
}

}  // namespace

Var add(Var a, Var b) { return binary(a, b, Binary::kAdd); }
Var sub(Var a, Var b) { return binary(a, b, Binary::kSub); }
Var mul(Var a, Var b) { return binary(a, b, Binary::kMul); }
Var scale(Var x, double factor) { return unary(x, Unary::kScale, factor); }
Var add_scalar(Var x, double offset) { return unary(x, Unary::kAddScalar, offset); }
Var relu(Var x) { return unary(x, Unary::kRelu); }
Var square(Var x) { return unary(x, Unary::kSquare); }
Var log_offset(Var x, double eps) { return unary(x, Unary::kLogOffset, eps); }
Var smooth_l1(Var x) { return unary(x, Unary::kSmoothL1); }

Var sum(Var x) { return x.tape().apply(std::make_unique<SumOp>(false), {x}); }
Var mean(Var x) { return x.tape().apply(std::make_unique<SumOp>(true), {x}); }
Var dot(Var a, Var b) { return common_tape({a, b}).apply(std::make_unique<DotOp>(), {a, b}); }

Var conv2d(Var input, Var kernel, Var bias, int stride, int padding) {
  return common_tape({input, kernel, bias})
      .apply(std::make_unique<Conv2dOp>(stride, padding), {input, kernel, bias});
}

Var softmax_spatial(Var logits) {
  return logits.tape().apply(std::make_unique<SoftmaxAllOp>(), {logits});
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  return common_tape({x, gain, bias}).apply(std::make_unique<LayerNormOp>(eps), {x, gain, bias});
}

Var spatial_weighted_sum(Var features, Var weights) {
  return common_tape({features, weights})
      .apply(std::make_unique<SpatialWeightedSumOp>(), {features, weights});
}

Var add_channel_vector(Var features, Var v) {
  return common_tape({features, v}).apply(std::make_unique<AddChannelVectorOp>(), {features, v});
}

Var mul_spatial(Var features, Var map) {
  return common_tape({features, map}).apply(std::make_unique<MulSpatialOp>(), {features, map});
}

Var l2_normalize_rows(Var x) { return x.tape().apply(std::make_unique<L2NormalizeRowsOp>(), {x}); }

Var matmul_nt(Var a, Var b) {
  return common_tape({a, b}).apply(std::make_unique<MatmulNtOp>(), {a, b});
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  return logits.tape().apply(
      std::make_unique<CrossEntropyOp>(std::vector<int>(targets.begin(), targets.end())), {logits});
}

Var gather_rows(Var x, std::span<const std::size_t> indices) {
  return x.tape().apply(
      std::make_unique<GatherRowsOp>(std::vector<std::size_t>(indices.begin(), indices.end())), {x});
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  return parts.front().tape().apply(std::make_unique<ConcatRowsOp>(), parts);
}

Var anchor_rows(Var head, std::size_t anchors_per_position) {
  return head.tape().apply(std::make_unique<AnchorRowsOp>(anchors_per_position), {head});
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  return x.tape().apply(std::make_unique<SliceColsOp>(begin, end), {x});
}

Var reshape(Var x, Shape shape) {
  return x.tape().apply(std::make_unique<ReshapeOp>(std::move(shape)), {x});
}

}  // namespace afsd
