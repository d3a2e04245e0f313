#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "cone/autodiff.hpp"
#include "cone/tensor.hpp"

namespace cone::ad {

// Named trainable tensors. Ordered so iteration (and serialization) is
// deterministic.
using ParamStore = std::map<std::string, Tensor>;

Bindings bind_params(const ParamStore& params);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

// One bias-corrected Adam update of every parameter named in `grads`.
// Moments are created lazily the first time a parameter is seen.
void adam_step(ParamStore& params, const Gradients& grads, AdamState& state);

// Uniform on [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))].
Tensor xavier_init(Index rows, Index cols, std::uint64_t seed);

}  // namespace cone::ad
