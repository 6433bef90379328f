#include "fisale/pcm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fisale/ops.hpp"

namespace fisale {

namespace {}  // namespace

const char* coupling_step_name(CouplingStep s) {
  switch (s) {
    case CouplingStep::solid:
      return "solid";
    case CouplingStep::grid:
      return "grid";
    case CouplingStep::fluid:
      return "fluid";
    case CouplingStep::interface:
      return "interface";
  }
  return "?";
}

CouplingStep parse_coupling_step(const std::string& name) {
  for (auto s :
       {CouplingStep::solid, CouplingStep::grid, CouplingStep::fluid, CouplingStep::interface}) {
    if (name == coupling_step_name(s)) return s;
  }
  throw std::invalid_argument("unknown coupling step: '" + name + "'");
}

namespace {

struct Projected {
  Var q, k, v;
};

Projected project(Graph& graph, ParameterStore& store, const AttentionParams& params,
                  std::initializer_list<Var> query_blocks,
                  std::initializer_list<Var> context_blocks) {
  Var q_in = ops::concat_rows(std::span<const Var>(query_blocks.begin(), query_blocks.size()));
  Var kv_in = ops::concat_rows(std::span<const Var>(context_blocks.begin(), context_blocks.size()));
  return Projected{apply_linear(graph, store, params.query, q_in),
                   apply_linear(graph, store, params.key, kv_in),
                   apply_linear(graph, store, params.value, kv_in)};
}

// Query/context block layout of each attention substep, positions added.
Projected project_step(Graph& graph, ParameterStore& store, const CouplingState& state,
                       CouplingStep step, const AttentionParams& params) {
  Var s = ops::add(state.p_s, state.g_a);
  Var f = ops::add(state.p_f, state.g_a);
  Var b = ops::add(state.p_b, state.g_a);
  switch (step) {
    case CouplingStep::solid:
      return project(graph, store, params, {s, b}, {s, f, b});
    case CouplingStep::fluid:
      return project(graph, store, params, {f, b}, {s, f, b});
    case CouplingStep::interface:
      return project(graph, store, params, {s, f, b}, {s, f, b});
    case CouplingStep::grid:
      break;
  }
  throw std::invalid_argument("the grid step has no attention");
}

Var attend(Graph& graph, ParameterStore& store, const CouplingState& state, CouplingStep step,
           const AttentionParams& params) {
  auto p = project_step(graph, store, state, step, params);
  return linear_attention(p.q, p.k, p.v);
}

void require_state(const CouplingState& s) {
  const auto m = s.g_a.rows(), d = s.g_a.cols();
  for (Var v : {s.p_s, s.p_f, s.p_b}) {
    if (v.rows() != m || v.cols() != d) {
      throw DimensionError("coupling state blocks must all be " + std::to_string(m) + "x" +
                           std::to_string(d));
    }
  }
}

}  // namespace

OrderingSpec OrderingSpec::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, '-')) parts.push_back(item);
  if (parts.size() != 4) throw std::invalid_argument("ordering needs four steps: " + text);
  OrderingSpec spec;
  for (std::size_t i = 0; i < 4; ++i) spec.steps[i] = parse_coupling_step(parts[i]);
  spec.validate();
  return spec;
}

std::string OrderingSpec::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) out += '-';
    out += coupling_step_name(steps[i]);
  }
  return out;
}

void OrderingSpec::validate() const {
  std::array<int, 4> seen{};
  for (auto s : steps) ++seen[static_cast<std::size_t>(s)];
  if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; })) {
    throw std::invalid_argument("ordering must use each step exactly once");
  }
}

const std::vector<OrderingSpec>& ablation_orderings() {
  static const std::vector<OrderingSpec> orderings = {
      OrderingSpec::parse("fluid-grid-solid-interface"),
      OrderingSpec::parse("grid-solid-fluid-interface"),
      OrderingSpec::parse("grid-solid-interface-fluid"),
      OrderingSpec::parse("grid-interface-solid-fluid"),
      OrderingSpec::parse("solid-fluid-interface-grid"),
      OrderingSpec::parse("solid-grid-fluid-interface"),
  };
  return orderings;
}

Var linear_attention(Var q, Var k, Var v, AttentionAxes axes) {
  if (q.cols() != k.cols() || k.cols() != v.cols()) {
    throw DimensionError("linear attention: Q, K, V widths differ");
  }
  if (k.rows() != v.rows()) throw DimensionError("linear attention: K and V lengths differ");
  const double width = static_cast<double>(q.cols());
  Var q_tilde = ops::softmax(q, axes.query_axis);
  Var k_tilde = ops::softmax(k, axes.key_axis);
  Var context = ops::matmul(k_tilde, v, true, false);  // [D x D]
  return ops::scale(ops::matmul(q_tilde, context), 1.0 / width);
}

Tensor attention_logits(const Tensor& q, const Tensor& k, AttentionAxes axes) {
  if (q.cols() != k.cols()) throw DimensionError("attention logits: width mismatch");
  return matmul(softmax(q, axes.query_axis), softmax(k, axes.key_axis), false, true);
}

AttentionParams make_attention(ParameterStore& store, const std::string& prefix, std::size_t width,
                               Rng& rng) {
  AttentionParams p{make_linear(store, prefix + ".query", width, width, rng),
                    make_linear(store, prefix + ".key", width, width, rng),
                    make_linear(store, prefix + ".value", width, width, rng)};
  // Keys are softmaxed along the sequence axis, which absorbs any per-column bias.
  store.at(p.key.bias).trainable = false;
  return p;
}

PcmParams make_pcm(ParameterStore& store, const std::string& prefix, std::size_t width,
                   std::size_t nodes, std::size_t k, Rng& rng) {
  PcmParams p;
  p.solid = make_attention(store, prefix + ".solid", width, rng);
  p.message = make_linear(store, prefix + ".grid.message", 3 * width, width, rng);
  p.gamma_logits = store.add(prefix + ".grid.gamma_logits", Tensor({nodes, k}));
  p.beta_logits = store.add(prefix + ".grid.beta_logits", Tensor({nodes, k}));
  p.fluid = make_attention(store, prefix + ".fluid", width, rng);
  p.interface = make_attention(store, prefix + ".interface", width, rng);
  return p;
}

std::pair<Var, Var> update_solid(Graph& graph, ParameterStore& store, const CouplingState& state,
                                 const AttentionParams& params) {
  require_state(state);
  Var out = attend(graph, store, state, CouplingStep::solid, params);
  const std::size_t m = state.g_a.rows();
  return {ops::slice_rows(out, 0, m), ops::slice_rows(out, m, m)};
}

Var update_grid(Graph& graph, ParameterStore& store, const CouplingState& state,
                const Neighborhoods& edges, const PcmParams& params) {
  require_state(state);
  const std::size_t m = state.g_a.rows();
  if (edges.nodes != m || edges.k == 0) {
    throw DimensionError("grid update: neighbourhoods do not cover the grid");
  }
  Var gamma = graph.parameter(store, params.gamma_logits);
  Var beta = graph.parameter(store, params.beta_logits);
  if (gamma.rows() != m || gamma.cols() != edges.k) {
    throw DimensionError("grid update: logits shape does not match neighbourhoods");
  }
  const std::array<Var, 3> parts{state.p_s, state.p_f, state.p_b};
  Var messages = apply_linear(graph, store, params.message, ops::concat_cols(parts));
  Var velocity = ops::neighbor_mix(ops::softmax(gamma, 1), messages, edges.index);
  Var moved = ops::add(state.g_a, ops::scale(velocity, params.dt));
  return ops::neighbor_mix(ops::softmax(beta, 1), moved, edges.index);
}

std::pair<Var, Var> update_fluid(Graph& graph, ParameterStore& store, const CouplingState& state,
                                 const AttentionParams& params) {
  require_state(state);
  Var out = attend(graph, store, state, CouplingStep::fluid, params);
  const std::size_t m = state.g_a.rows();
  return {ops::slice_rows(out, 0, m), ops::slice_rows(out, m, m)};
}

std::array<Var, 3> update_interface(Graph& graph, ParameterStore& store, const CouplingState& state,
                                    const AttentionParams& params) {
  require_state(state);
  Var out = attend(graph, store, state, CouplingStep::interface, params);
  const std::size_t m = state.g_a.rows();
  return {ops::slice_rows(out, 0, m), ops::slice_rows(out, m, m), ops::slice_rows(out, 2 * m, m)};
}

CouplingState pcm_forward(Graph& graph, ParameterStore& store, const CouplingState& state,
                          const Neighborhoods& edges, const OrderingSpec& ordering,
                          const PcmParams& params) {
  ordering.validate();
  return pcm_run_steps(graph, store, state, edges, ordering.steps, params);
}

std::pair<Var, Var> substep_query_key(Graph& graph, ParameterStore& store,
                                      const CouplingState& state, CouplingStep step,
                                      const PcmParams& params) {
  require_state(state);
  const AttentionParams* attention = nullptr;
  switch (step) {
    case CouplingStep::solid:
      attention = &params.solid;
      break;
    case CouplingStep::fluid:
      attention = &params.fluid;
      break;
    case CouplingStep::interface:
      attention = &params.interface;
      break;
    case CouplingStep::grid:
      throw std::invalid_argument("the grid step has no attention");
  }
  auto p = project_step(graph, store, state, step, *attention);
  return {p.q, p.k};
}

CouplingState pcm_run_steps(Graph& graph, ParameterStore& store, const CouplingState& state,
                            const Neighborhoods& edges, std::span<const CouplingStep> steps,
                            const PcmParams& params) {
  CouplingState cur = state;
  for (auto step : steps) {
    switch (step) {
      case CouplingStep::solid: {
        auto [ds, db] = update_solid(graph, store, cur, params.solid);
        cur.p_s = ops::add(cur.p_s, ds);
        cur.p_b = ops::add(cur.p_b, db);
        break;
      }
      case CouplingStep::grid:
        cur.g_a = update_grid(graph, store, cur, edges, params);
        break;
      case CouplingStep::fluid: {
        auto [df, db] = update_fluid(graph, store, cur, params.fluid);
        cur.p_f = ops::add(cur.p_f, df);
        cur.p_b = ops::add(cur.p_b, db);
        break;
      }
      case CouplingStep::interface: {
        auto [ds, df, db] = update_interface(graph, store, cur, params.interface);
        cur.p_s = ops::add(cur.p_s, ds);
        cur.p_f = ops::add(cur.p_f, df);
        cur.p_b = ops::add(cur.p_b, db);
        break;
      }
    }
  }
  return cur;
}

std::size_t pcm_parameter_count(std::size_t width, std::size_t nodes, std::size_t k) {
  // Trainable scalars only: the key bias of each attention is frozen.
  const std::size_t attention = 3 * width * width + 2 * width;
  const std::size_t message = 3 * width * width + width;
  return 3 * attention + message + 2 * nodes * k;
}

std::size_t simple_variant_hidden(std::size_t width, std::size_t nodes, std::size_t k) {
  const double target = static_cast<double>(pcm_parameter_count(width, nodes, k));
  const double attention = static_cast<double>(3 * width * width + 2 * width);
  const double w = static_cast<double>(width);
  // FFN with hidden h holds w*h + h + h*w + w scalars.
  const double hidden = (target - attention - w) / (2.0 * w + 1.0);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(hidden)));
}

SimpleAttentionParams make_simple_attention(ParameterStore& store, const std::string& prefix,
                                            std::size_t width, std::size_t hidden, Rng& rng) {
  SimpleAttentionParams p;
  p.attention = make_attention(store, prefix + ".attention", width, rng);
  p.ffn = make_ffn(store, prefix + ".ffn", width, hidden, width, rng);
  return p;
}

std::array<Var, 4> simple_attention_variant(Graph& graph, ParameterStore& store,
                                            const CouplingState& state,
                                            const SimpleAttentionParams& params) {
  require_state(state);
  const std::array<Var, 4> blocks{state.p_s, state.p_f, state.p_b, state.g_a};
  Var x = ops::concat_rows(blocks);
  Var q = apply_linear(graph, store, params.attention.query, x);
  Var k = apply_linear(graph, store, params.attention.key, x);
  Var v = apply_linear(graph, store, params.attention.value, x);
  Var out = ffn_forward(graph, store, params.ffn, linear_attention(q, k, v));
  const std::size_t m = state.g_a.rows();
  return {ops::slice_rows(out, 0, m), ops::slice_rows(out, m, m), ops::slice_rows(out, 2 * m, m),
          ops::slice_rows(out, 3 * m, m)};
}

CouplingState simple_attention_forward(Graph& graph, ParameterStore& store,
                                       const CouplingState& state,
                                       const SimpleAttentionParams& params) {
  auto [ds, df, db, dg] = simple_attention_variant(graph, store, state, params);
  return CouplingState{ops::add(state.g_a, dg), ops::add(state.p_s, ds), ops::add(state.p_f, df),
                       ops::add(state.p_b, db)};
}

}  // namespace fisale
