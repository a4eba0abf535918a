#include "red/numcore/layers.hpp"

namespace red::nc {

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight(store.create(name + ".weight", xavier_uniform(in, out, rng))),
      bias(store.create(name + ".bias", Tensor(1, out))) {}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim)
    : gamma(store.create(name + ".gamma", Tensor(1, dim, 1.0))), beta(store.create(name + ".beta", Tensor(1, dim))) {}

}  // namespace red::nc
