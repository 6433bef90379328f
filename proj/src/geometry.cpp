#include "fisale/geometry.hpp"

#include <algorithm>
#include <stdexcept>

#include "fisale/ops.hpp"

namespace fisale {

const char* domain_name(Domain d) {
  switch (d) {
    case Domain::fluid:
      return "fluid";
    case Domain::solid:
      return "solid";
    case Domain::interface:
      return "interface";
  }
  return "?";
}

Domain parse_domain(const std::string& name) {
  for (auto d : kDomains) {
    if (name == domain_name(d)) return d;
  }
  throw std::invalid_argument("unknown domain: " + name);
}

void DomainObservation::validate() const {
  if (positions.empty() || positions.rows() == 0) throw DimensionError("domain has no points");
  if (dim() < 1 || dim() > 3) throw DimensionError("spatial dimension must be 1, 2 or 3");
  if (quantities.rows() != positions.rows()) {
    throw DimensionError("positions and quantities disagree on point count");
  }
}

DomainObservation& SystemState::domain(Domain d) {
  switch (d) {
    case Domain::fluid:
      return fluid;
    case Domain::solid:
      return solid;
    case Domain::interface:
      return interface;
  }
  throw std::logic_error("bad domain");
}

const DomainObservation& SystemState::domain(Domain d) const {
  return const_cast<SystemState*>(this)->domain(d);
}

std::vector<double> SystemState::condition_values() const {
  std::vector<double> out;
  out.reserve(conditions.size());
  for (const auto& [name, value] : conditions) out.push_back(value);
  return out;
}

void SystemState::validate() const {
  for (auto d : kDomains) domain(d).validate();
  if (solid.dim() != fluid.dim() || interface.dim() != fluid.dim()) {
    throw DimensionError("domains disagree on spatial dimension");
  }
  if (interface.channels() != fluid.channels() + solid.channels()) {
    throw DimensionError("interface channels must equal fluid + solid channels");
  }
}

DomainStats& NormStats::domain(Domain d) {
  switch (d) {
    case Domain::fluid:
      return fluid;
    case Domain::solid:
      return solid;
    case Domain::interface:
      return interface;
  }
  throw std::logic_error("bad domain");
}

const DomainStats& NormStats::domain(Domain d) const {
  return const_cast<NormStats*>(this)->domain(d);
}

namespace {

Tensor standardize(const Tensor& x, const std::vector<double>& mean, const std::vector<double>& std,
                   bool inverse) {
  if (mean.size() != x.cols() || std.size() != x.cols()) {
    throw DimensionError("normalization stats have " + std::to_string(mean.size()) +
                         " channels, data has " + std::to_string(x.cols()));
  }
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      out(i, c) = inverse ? x(i, c) * std[c] + mean[c] : (x(i, c) - mean[c]) / std[c];
    }
  }
  return out;
}

}  // namespace

DomainObservation normalize_with_stats(const DomainObservation& obs, const DomainStats& stats) {
  return {standardize(obs.positions, stats.position_mean, stats.position_std, false),
          standardize(obs.quantities, stats.quantity_mean, stats.quantity_std, false)};
}

DomainObservation denormalize_with_stats(const DomainObservation& obs, const DomainStats& stats) {
  return {standardize(obs.positions, stats.position_mean, stats.position_std, true),
          standardize(obs.quantities, stats.quantity_mean, stats.quantity_std, true)};
}

namespace {

SystemState transform_state(const SystemState& state, const NormStats& stats, bool inverse) {
  SystemState out;
  for (auto d : kDomains) {
    out.domain(d) = inverse ? denormalize_with_stats(state.domain(d), stats.domain(d))
                            : normalize_with_stats(state.domain(d), stats.domain(d));
  }
  out.conditions = state.conditions;
  if (!state.conditions.empty()) {
    if (stats.condition_mean.size() != state.conditions.size()) {
      throw DimensionError("condition stats do not match condition count");
    }
    for (std::size_t i = 0; i < out.conditions.size(); ++i) {
      auto& v = out.conditions[i].second;
      v = inverse ? v * stats.condition_std[i] + stats.condition_mean[i]
                  : (v - stats.condition_mean[i]) / stats.condition_std[i];
    }
  }
  out.time = state.time;
  return out;
}

}  // namespace

SystemState normalize_state(const SystemState& state, const NormStats& stats) {
  return transform_state(state, stats, false);
}

SystemState denormalize_state(const SystemState& state, const NormStats& stats) {
  return transform_state(state, stats, true);
}

RegularGrid seed_regular_grid(std::span<const std::size_t> axis_counts) {
  if (axis_counts.empty() || axis_counts.size() > 3) {
    throw DimensionError("grid dimension must be 1, 2 or 3");
  }
  std::size_t total = 1;
  for (auto m : axis_counts) {
    if (m < 2) throw DimensionError("each grid axis needs at least 2 nodes");
    total *= m;
  }
  const std::size_t d = axis_counts.size();
  RegularGrid grid;
  grid.axis_counts.assign(axis_counts.begin(), axis_counts.end());
  grid.points = Tensor({total, d});

  auto coordinate = [](std::size_t i, std::size_t m) {
    // Endpoints are assigned exactly; interior nodes by affine interpolation.
    if (i == 0) return -kGridHalfWidth;
    if (i == m - 1) return kGridHalfWidth;
    return -kGridHalfWidth +
           2.0 * kGridHalfWidth * static_cast<double>(i) / static_cast<double>(m - 1);
  };

  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t axis = d; axis-- > 0;) {
      const std::size_t m = axis_counts[axis];
      grid.points(flat, axis) = coordinate(rem % m, m);
      rem /= m;
    }
  }
  return grid;
}

Neighborhoods knn_edges(const Tensor& coords, std::size_t k) {
  const std::size_t m = coords.rows();
  if (k == 0 || k >= m) {
    throw std::invalid_argument("knn requires 0 < k < M (k=" + std::to_string(k) +
                                ", M=" + std::to_string(m) + ")");
  }
  const Tensor dist = pairwise_sq_distances(coords, coords);
  Neighborhoods out;
  out.nodes = m;
  out.k = k;
  out.index.reserve(m * k);
  std::vector<std::pair<double, std::size_t>> candidates;
  candidates.reserve(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    candidates.clear();
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) candidates.emplace_back(dist(i, j), j);
    }
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end());
    for (std::size_t j = 0; j < k; ++j) out.index.push_back(candidates[j].second);
  }
  return out;
}

Var domain_offset(Graph& graph, const Tensor& grid_points, const Tensor& positions,
                  Var kernel_weight, Var kernel_bias) {
  if (positions.empty() || positions.rows() == 0) {
    throw DimensionError("domain_offset needs at least one point");
  }
  if (positions.cols() != grid_points.cols()) {
    throw DimensionError("domain_offset: grid and positions differ in dimension");
  }
  Tensor neg_sq = pairwise_sq_distances(grid_points, positions);
  for (auto& v : neg_sq.data()) v = -v;
  Var logits = ops::scalar_affine(graph.constant(std::move(neg_sq)), kernel_weight, kernel_bias);
  Var weights = ops::softmax(logits, 1);
  // Rows of `weights` sum to one, so sum_j w_ij (g_j - a_i) = (W g)_i - a_i.
  Var pulled = ops::matmul(weights, graph.constant(positions));
  Tensor minus_grid = grid_points;
  for (auto& v : minus_grid.data()) v = -v;
  return ops::add_constant(pulled, minus_grid);
}

LatentInitParams make_latent_init(ParameterStore& store, const std::string& prefix, std::size_t dim,
                                  std::size_t width, Rng& rng) {
  LatentInitParams p;
  p.kernel_weight = store.add(prefix + ".kernel.weight", Tensor::scalar(1.0));
  // The bias shifts every logit of a softmax row equally, so it never moves the
  // output; it is stored for the layout but not trained.
  p.kernel_bias = store.add(prefix + ".kernel.bias", Tensor::scalar(0.0), false);
  p.projection = make_linear(store, prefix + ".projection", dim, width, rng);
  return p;
}

LatentGrid init_latent_grid(Graph& graph, ParameterStore& store, const RegularGrid& grid,
                            const Tensor& fluid_positions, const Tensor& solid_positions,
                            const Tensor& interface_positions, const LatentInitParams& params,
                            std::size_t k) {
  if (k >= grid.size()) throw std::invalid_argument("knn requires k < M");
  Var w = graph.parameter(store, params.kernel_weight);
  Var b = graph.parameter(store, params.kernel_bias);
  Var shifted = graph.constant(grid.points);
  for (const Tensor* positions : {&solid_positions, &fluid_positions, &interface_positions}) {
    shifted = ops::add(shifted, domain_offset(graph, grid.points, *positions, w, b));
  }
  LatentGrid out;
  out.coords = apply_linear(graph, store, params.projection, shifted);
  out.edges = knn_edges(out.coords.value(), k);
  return out;
}

}  // namespace fisale
