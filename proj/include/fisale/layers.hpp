#pragma once

#include <string>

#include "fisale/autodiff.hpp"

namespace fisale {

/// Store indices of an affine map x W + b with W of shape [in x out].
struct LinearParams {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t in = 0;
  std::size_t out = 0;
};

/// Registers `<prefix>.weight` / `<prefix>.bias`, uniform in +-sqrt(1/in).
LinearParams make_linear(ParameterStore& store, const std::string& prefix, std::size_t in,
                         std::size_t out, Rng& rng);

Var apply_linear(Graph& graph, ParameterStore& store, const LinearParams& p, Var x);

/// Two-layer feed-forward block: linear -> GELU -> linear.
struct FfnParams {
  LinearParams first;
  LinearParams second;
};

FfnParams make_ffn(ParameterStore& store, const std::string& prefix, std::size_t in,
                   std::size_t hidden, std::size_t out, Rng& rng);

Var ffn_forward(Graph& graph, ParameterStore& store, const FfnParams& p, Var x);

}  // namespace fisale
