#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cone/autodiff.hpp"
#include "cone/optim.hpp"

namespace cone::ad {

// Fully connected network: ELU on every hidden layer, linear output.
// Parameters live in a ParamStore as "<prefix>.W<l>" (in x out) and
// "<prefix>.b<l>" (1 x out).
struct MlpShape {
  std::string prefix;
  Index in = 0;
  std::vector<Index> hidden;
  Index out = 1;
};

void init_mlp(ParamStore& params, const MlpShape& shape, std::uint64_t seed);
Expr mlp(const MlpShape& shape, const Expr& x);
std::vector<std::string> mlp_param_names(const MlpShape& shape);

}  // namespace cone::ad
