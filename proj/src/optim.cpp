#include "cone/optim.hpp"

#include <cmath>
#include <random>

#include "cone/error.hpp"
#include "cone/rng.hpp"

namespace cone::ad {

Bindings bind_params(const ParamStore& params) {
  Bindings b;
  for (const auto& [name, t] : params) b.bind(name, t);
  return b;
}

void adam_step(ParamStore& params, const Gradients& grads, AdamState& state) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ShapeError("adam_step: gradient for unknown parameter '" + name + "'");
    if (!it->second.same_shape(g)) throw ShapeError("adam_step: gradient shape mismatch for '" + name + "'");
    if (auto m = state.m.find(name); m != state.m.end() && !m->second.same_shape(g))
      throw ShapeError("adam_step: moment shape mismatch for '" + name + "'");
  }

  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto [mi, m_new] = state.m.try_emplace(name, g.rows(), g.cols());
    auto [vi, v_new] = state.v.try_emplace(name, g.rows(), g.cols());
    auto m = mi->second.map();
    auto v = vi->second.map();
    m = c.beta1 * m + (1.0 - c.beta1) * g.mat();
    v = c.beta2 * v + (1.0 - c.beta2) * g.mat().cwiseAbs2();
    p.map().array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
  }
}

Tensor xavier_init(Index rows, Index cols, std::uint64_t seed) {
  if (rows == 0 || cols == 0) throw ShapeError("xavier_init: empty shape");
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (double& x : t.values()) x = dist(rng);
  return t;
}

}  // namespace cone::ad
