#include "fisale/layers.hpp"

#include <cmath>

#include "fisale/ops.hpp"

namespace fisale {

LinearParams make_linear(ParameterStore& store, const std::string& prefix, std::size_t in,
                         std::size_t out, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  LinearParams p;
  p.in = in;
  p.out = out;
  p.weight = store.add(prefix + ".weight", uniform_tensor({in, out}, bound, rng));
  p.bias = store.add(prefix + ".bias", uniform_tensor({out}, bound, rng));
  return p;
}

Var apply_linear(Graph& graph, ParameterStore& store, const LinearParams& p, Var x) {
  if (x.cols() != p.in) {
    throw DimensionError("linear expects width " + std::to_string(p.in) + ", got " +
                         std::to_string(x.cols()));
  }
  Var w = graph.parameter(store, p.weight);
  Var b = graph.parameter(store, p.bias);
  return ops::add_row(ops::matmul(x, w), b);
}

FfnParams make_ffn(ParameterStore& store, const std::string& prefix, std::size_t in,
                   std::size_t hidden, std::size_t out, Rng& rng) {
  return FfnParams{make_linear(store, prefix + ".fc1", in, hidden, rng),
                   make_linear(store, prefix + ".fc2", hidden, out, rng)};
}

Var ffn_forward(Graph& graph, ParameterStore& store, const FfnParams& p, Var x) {
  Var hidden = ops::gelu(apply_linear(graph, store, p.first, x));
  return apply_linear(graph, store, p.second, hidden);
}

}  // namespace fisale
