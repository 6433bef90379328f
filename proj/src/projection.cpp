#include "fisale/projection.hpp"

#include "fisale/ops.hpp"

namespace fisale {

EncodeParams make_encode(ParameterStore& store, const std::string& prefix, std::size_t width,
                         Rng& rng) {
  EncodeParams p{make_linear(store, prefix + ".query", width, width, rng),
                 make_linear(store, prefix + ".key", width, width, rng)};
  // q_m . b is the same for every point n, so the row softmax cancels it.
  store.at(p.key.bias).trainable = false;
  return p;
}

Encoded encode_domain(Graph& graph, ParameterStore& store, Var features, Var latent_coords,
                      const EncodeParams& params) {
  if (features.cols() != latent_coords.cols()) {
    throw DimensionError("encode: feature width " + std::to_string(features.cols()) +
                         " differs from latent width " + std::to_string(latent_coords.cols()));
  }
  Var q = apply_linear(graph, store, params.query, latent_coords);
  Var k = apply_linear(graph, store, params.key, features);
  Var w = ops::matmul(q, k, false, true);
  Var p = ops::matmul(ops::softmax(w, 1), features);
  return Encoded{w, p};
}

Var decode_domain(Var grid_features, Var weights) {
  if (weights.rows() != grid_features.rows()) {
    throw DimensionError("decode: weights have " + std::to_string(weights.rows()) +
                         " grid rows, features have " + std::to_string(grid_features.rows()));
  }
  // softmax(w^T) along grid nodes == transpose of softmax(w) along axis 0.
  Var back = ops::softmax(weights, 0);
  return ops::matmul(back, grid_features, true, false);
}

std::vector<Var> aggregate_pathways(Graph& graph, ParameterStore& store,
                                    std::span<const Var> features, const FfnParams& ffn) {
  if (features.empty()) throw DimensionError("aggregate: no pathways");
  const std::size_t n = features[0].rows();
  for (const auto& f : features) {
    if (f.rows() != n) throw DimensionError("aggregate: pathways disagree on point count");
  }
  Var fused = ffn_forward(graph, store, ffn, ops::concat_cols(features));
  std::vector<Var> out;
  std::size_t offset = 0;
  for (const auto& f : features) {
    out.push_back(ops::slice_cols(fused, offset, f.cols()));
    offset += f.cols();
  }
  if (offset != fused.cols()) throw DimensionError("aggregate: FFN width mismatch");
  return out;
}

}  // namespace fisale
