#include "afsd/tensor/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace afsd {

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& l : leaves) m = std::max(m, l.max_rel_error);
  return m;
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace {

double evaluate(const ScalarFunction& f, std::span<const NamedTensor> point) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const auto& p : point) leaves.push_back(tape.constant(p.value));
  const Var out = f(tape, leaves);
  if (out.value().size() != 1) throw ShapeError("grad_check: function must return a scalar");
  const double v = out.value()[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value at probe point");
  return v;
}

}  // namespace

GradCheckReport grad_check(const ScalarFunction& f, std::span<const NamedTensor> point, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& p : point) leaves.push_back(tape.leaf(p.value, true));
    const Var out = f(tape, leaves);
    if (!std::isfinite(out.value()[0])) {
      throw NumericError("grad_check: non-finite function value at the base point");
    }
    tape.backward(out);
    for (const auto& l : leaves) analytic.push_back(l.grad());
  }

  std::vector<NamedTensor> probe(point.begin(), point.end());
  GradCheckReport report;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    LeafError err{probe[k].name, 0.0};
    for (std::size_t i = 0; i < probe[k].value.size(); ++i) {
      const double orig = probe[k].value[i];
      probe[k].value[i] = orig + h;
      const double up = evaluate(f, probe);
      probe[k].value[i] = orig - h;
      const double down = evaluate(f, probe);
      probe[k].value[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      err.max_rel_error = std::max(err.max_rel_error, relative_error(analytic[k][i], numeric));
    }
    report.leaves.push_back(err);
  }
  return report;
}

}  // namespace afsd
