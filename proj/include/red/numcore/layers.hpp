#pragma once

#include <random>
#include <string>

#include "red/numcore/ops.hpp"
#include "red/numcore/parameter.hpp"

namespace red::nc {

/// y = x W + b with W [in x out] (Xavier-uniform) and b [1 x out] (zeros).
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);

  Var operator()(const Var& x) const { return affine(x, weight->var, bias->var); }
  std::size_t in_features() const { return weight->value().rows(); }
  std::size_t out_features() const { return weight->value().cols(); }

  ParameterPtr weight;
  ParameterPtr bias;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim);

  Var operator()(const Var& x) const { return layer_norm(x, gamma->var, beta->var); }

  ParameterPtr gamma;
  ParameterPtr beta;
};

}  // namespace red::nc
