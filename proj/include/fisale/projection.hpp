#pragma once

#include <span>
#include <string>
#include <vector>

#include "fisale/autodiff.hpp"
#include "fisale/layers.hpp"

namespace fisale {

/// Query projection of the latent coordinates and key projection of the point features.
struct EncodeParams {
  LinearParams query;
  LinearParams key;
};

EncodeParams make_encode(ParameterStore& store, const std::string& prefix, std::size_t width,
                         Rng& rng);

struct Encoded {
  Var weights;    ///< raw interpolation logits w = Q K^T, [M x N]
  Var projected;  ///< softmax(w) x, [M x D]
};

/// Points -> grid. Each grid node's weights over the N points sum to one.
Encoded encode_domain(Graph& graph, ParameterStore& store, Var features, Var latent_coords,
                      const EncodeParams& params);

/// Grid -> points with the encode-time logits; each point's weights over the
/// M grid nodes sum to one.
Var decode_domain(Var grid_features, Var weights);

/// Concatenates the pathways' features along channels, applies the FFN and
/// splits the result back into the original per-pathway widths.
std::vector<Var> aggregate_pathways(Graph& graph, ParameterStore& store,
                                    std::span<const Var> features, const FfnParams& ffn);

}  // namespace fisale
