#include "cone/nn.hpp"

#include "cone/error.hpp"
#include "cone/rng.hpp"

namespace cone::ad {

namespace {

std::vector<Index> widths(const MlpShape& s) {
  std::vector<Index> w{s.in};
  w.insert(w.end(), s.hidden.begin(), s.hidden.end());
  w.push_back(s.out);
  return w;
}

}  // namespace

void init_mlp(ParamStore& params, const MlpShape& shape, std::uint64_t seed) {
  const auto w = widths(shape);
  for (Index l = 0; l + 1 < w.size(); ++l) {
    if (w[l] == 0 || w[l + 1] == 0) throw ShapeError("mlp '" + shape.prefix + "': zero width layer");
    params[shape.prefix + ".W" + std::to_string(l)] = xavier_init(w[l], w[l + 1], derive_seed(seed, l));
    params[shape.prefix + ".b" + std::to_string(l)] = Tensor(1, w[l + 1]);
  }
}

Expr mlp(const MlpShape& shape, const Expr& x) {
  if (x.cols() != shape.in)
    throw ShapeError("mlp '" + shape.prefix + "': expected " + std::to_string(shape.in) +
                     " input columns, got " + std::to_string(x.cols()));
  const auto w = widths(shape);
  Expr h = x;
  for (Index l = 0; l + 1 < w.size(); ++l) {
    const auto id = std::to_string(l);
    h = add_bias(matmul(h, input(shape.prefix + ".W" + id, w[l], w[l + 1])),
                 input(shape.prefix + ".b" + id, 1, w[l + 1]));
    if (l + 2 < w.size()) h = elu(h);
  }
  return h;
}

std::vector<std::string> mlp_param_names(const MlpShape& shape) {
  std::vector<std::string> names;
  for (Index l = 0; l <= shape.hidden.size(); ++l) {
    names.push_back(shape.prefix + ".W" + std::to_string(l));
    names.push_back(shape.prefix + ".b" + std::to_string(l));
  }
  return names;
}

}  // namespace cone::ad
