#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fisale/autodiff.hpp"
#include "fisale/geometry.hpp"
#include "fisale/layers.hpp"

namespace fisale {

/// Latent grid coordinates plus the three projected domain feature blocks, all [M x D].
struct CouplingState {
  Var g_a;
  Var p_s;
  Var p_f;
  Var p_b;
};

enum class CouplingStep { solid, grid, fluid, interface };

/// Execution order of the four coupling substeps.
struct OrderingSpec {
  std::array<CouplingStep, 4> steps{CouplingStep::solid, CouplingStep::grid, CouplingStep::fluid,
                                    CouplingStep::interface};

  /// Parses "solid-grid-fluid-interface" style strings; throws on anything but a permutation.
  static OrderingSpec parse(const std::string& text);
  std::string to_string() const;
  void validate() const;
  bool operator==(const OrderingSpec&) const = default;
};

/// The six orderings compared in the ordering ablation, default last.
const std::vector<OrderingSpec>& ablation_orderings();

/// Softmax axes used inside linear attention. The default normalises queries
/// over features (axis 1) and keys over the sequence (axis 0).
struct AttentionAxes {
  int query_axis = 1;
  int key_axis = 0;
};

/// softmax(Q) (softmax(K)^T V) / D, never materialising the L_q x L_kv matrix.
Var linear_attention(Var q, Var k, Var v, AttentionAxes axes = {});

/// Dense softmax(Q) softmax(K)^T, for inspection only.
Tensor attention_logits(const Tensor& q, const Tensor& k, AttentionAxes axes = {});

struct AttentionParams {
  LinearParams query;
  LinearParams key;
  LinearParams value;
};

AttentionParams make_attention(ParameterStore& store, const std::string& prefix, std::size_t width,
                               Rng& rng);

struct PcmParams {
  AttentionParams solid;
  AttentionParams fluid;
  AttentionParams interface;
  LinearParams message;          ///< 3D -> D grid-velocity message
  std::size_t gamma_logits = 0;  ///< [M x k] velocity-diffusion logits
  std::size_t beta_logits = 0;   ///< [M x k] geometry-smoothing logits
  double dt = 1.0;
};

/// Logits start at zero, i.e. uniform neighbourhood weights.
PcmParams make_pcm(ParameterStore& store, const std::string& prefix, std::size_t width,
                   std::size_t nodes, std::size_t k, Rng& rng);

/// Cross-attention of the solid and interface blocks onto the whole system.
/// Returns the attention output split into (solid, interface) row blocks.
std::pair<Var, Var> update_solid(Graph& graph, ParameterStore& store, const CouplingState& state,
                                 const AttentionParams& params);

/// Velocity-based Laplacian smoothing of the latent grid:
/// v_i = sum_j softmax(gamma_i)_j Linear([p_s, p_f, p_b]_j), g^ = g + dt v,
/// g'_i = sum_j softmax(beta_i)_j g^_j.
Var update_grid(Graph& graph, ParameterStore& store, const CouplingState& state,
                const Neighborhoods& edges, const PcmParams& params);

/// Cross-attention of the fluid and interface blocks; returns (fluid, interface).
std::pair<Var, Var> update_fluid(Graph& graph, ParameterStore& store, const CouplingState& state,
                                 const AttentionParams& params);

/// Self-attention over all three blocks; returns (solid, fluid, interface).
std::array<Var, 3> update_interface(Graph& graph, ParameterStore& store, const CouplingState& state,
                                    const AttentionParams& params);

/// Runs the four substeps in `ordering`. Each step reads the freshest version
/// of its inputs; attention outputs are added to the blocks they update.
CouplingState pcm_forward(Graph& graph, ParameterStore& store, const CouplingState& state,
                          const Neighborhoods& edges, const OrderingSpec& ordering,
                          const PcmParams& params);

/// Runs an arbitrary prefix/sequence of substeps (used to stop just before a step).
CouplingState pcm_run_steps(Graph& graph, ParameterStore& store, const CouplingState& state,
                            const Neighborhoods& edges, std::span<const CouplingStep> steps,
                            const PcmParams& params);

/// Projected (Q, K) of an attention substep for `state`; throws for the grid step.
std::pair<Var, Var> substep_query_key(Graph& graph, ParameterStore& store,
                                      const CouplingState& state, CouplingStep step,
                                      const PcmParams& params);

CouplingStep parse_coupling_step(const std::string& name);
const char* coupling_step_name(CouplingStep step);

/// Ablation processor: one attention layer plus FFN over [p_s; p_f; p_b; g_a].
struct SimpleAttentionParams {
  AttentionParams attention;
  FfnParams ffn;
};

/// Hidden FFN width that puts the simple variant's parameter count closest to the PCM's.
std::size_t simple_variant_hidden(std::size_t width, std::size_t nodes, std::size_t k);
std::size_t pcm_parameter_count(std::size_t width, std::size_t nodes, std::size_t k);

SimpleAttentionParams make_simple_attention(ParameterStore& store, const std::string& prefix,
                                            std::size_t width, std::size_t hidden, Rng& rng);

/// Update blocks in (solid, fluid, interface, grid) order.
std::array<Var, 4> simple_attention_variant(Graph& graph, ParameterStore& store,
                                            const CouplingState& state,
                                            const SimpleAttentionParams& params);

/// Applies simple_attention_variant residually to every block.
CouplingState simple_attention_forward(Graph& graph, ParameterStore& store,
                                       const CouplingState& state,
                                       const SimpleAttentionParams& params);

}  // namespace fisale
