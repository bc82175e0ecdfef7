#pragma once

#include <map>
#include <string>

#include "afsd/tensor/tensor.hpp"

namespace afsd {

/// Named parameter tensors, iterated in canonical (lexicographic) order.
using ParamMap = std::map<std::string, Tensor>;

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v.
/// Missing velocity buffers start at zero. Parameters without a gradient
/// entry are left untouched.
void sgd_momentum_step(ParamMap& params, const ParamMap& grads, ParamMap& velocity,
                       const SgdConfig& cfg);

/// Adds `src` into `dst` entry by entry; `dst` gains missing names.
void accumulate(ParamMap& dst, const ParamMap& src, double weight = 1.0);

}  // namespace afsd
