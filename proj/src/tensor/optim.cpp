#include "afsd/tensor/optim.hpp"

namespace afsd {

void sgd_momentum_step(ParamMap& params, const ParamMap& grads, ParamMap& velocity,
                       const SgdConfig& cfg) {
  for (auto& [name, param] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) continue;
    if (g->second.shape() != param.shape()) {
      throw ShapeError("sgd: gradient for '" + name + "' has shape " + shape_str(g->second.shape()) +
                       ", parameter has " + shape_str(param.shape()));
    }
    auto [it, inserted] = velocity.try_emplace(name, Tensor(param.shape(), 0.0));
    Tensor& v = it->second;
    if (v.shape() != param.shape()) {
      throw ShapeError("sgd: velocity for '" + name + "' has shape " + shape_str(v.shape()));
    }
    for (std::size_t i = 0; i < param.size(); ++i) {
      v[i] = cfg.momentum * v[i] + g->second[i] + cfg.weight_decay * param[i];
      param[i] -= cfg.lr * v[i];
    }
  }
}

void accumulate(ParamMap& dst, const ParamMap& src, double weight) {
  for (const auto& [name, t] : src) {
    auto [it, inserted] = dst.try_emplace(name, Tensor(t.shape(), 0.0));
    if (it->second.shape() != t.shape()) throw ShapeError("accumulate: shape mismatch for " + name);
    for (std::size_t i = 0; i < t.size(); ++i) it->second[i] += weight * t[i];
  }
}

}  // namespace afsd
