#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fisale/autodiff.hpp"
#include "fisale/layers.hpp"

namespace fisale {

enum class Domain { fluid = 0, solid = 1, interface = 2 };
inline constexpr std::array<Domain, 3> kDomains{Domain::fluid, Domain::solid, Domain::interface};
const char* domain_name(Domain d);
Domain parse_domain(const std::string& name);

/// Positions [N x d] and physical quantities [N x C] of one domain at one time.
struct DomainObservation {
  Tensor positions;
  Tensor quantities;

  std::size_t count() const { return positions.rows(); }
  std::size_t dim() const { return positions.cols(); }
  std::size_t channels() const { return quantities.cols(); }
  /// Throws DimensionError unless N >= 1, d in {1,2,3} and row counts agree.
  void validate() const;
};

/// Fluid, solid and interface observations plus condition metadata.
struct SystemState {
  DomainObservation fluid;
  DomainObservation solid;
  DomainObservation interface;
  std::vector<std::pair<std::string, double>> conditions;
  double time = 0.0;

  DomainObservation& domain(Domain d);
  const DomainObservation& domain(Domain d) const;
  std::vector<double> condition_values() const;
  /// Checks each domain plus C_b = C_f + C_s and a shared spatial dimension.
  void validate() const;
};

/// Per-channel mean / standard deviation of one domain.
struct DomainStats {
  std::vector<double> position_mean, position_std;
  std::vector<double> quantity_mean, quantity_std;
};

struct NormStats {
  DomainStats fluid, solid, interface;
  std::vector<double> condition_mean, condition_std;

  DomainStats& domain(Domain d);
  const DomainStats& domain(Domain d) const;
};

inline constexpr double kStdFloor = 1e-8;

DomainObservation normalize_with_stats(const DomainObservation& obs, const DomainStats& stats);
DomainObservation denormalize_with_stats(const DomainObservation& obs, const DomainStats& stats);
SystemState normalize_state(const SystemState& state, const NormStats& stats);
SystemState denormalize_state(const SystemState& state, const NormStats& stats);

/// Axis-aligned grid over [-3.5, 3.5]^d, flattened row-major (last axis fastest).
struct RegularGrid {
  Tensor points;
  std::vector<std::size_t> axis_counts;
  std::size_t size() const { return points.rows(); }
};

inline constexpr double kGridHalfWidth = 3.5;

RegularGrid seed_regular_grid(std::span<const std::size_t> axis_counts);

/// Row-major [M x k] neighbor indices; node i's neighbors are index[i*k .. i*k+k).
struct Neighborhoods {
  std::size_t nodes = 0;
  std::size_t k = 0;
  std::vector<std::size_t> index;

  std::span<const std::size_t> of(std::size_t i) const { return {index.data() + i * k, k}; }
};

/// Exact k nearest neighbors (self excluded), ties broken by smaller index.
Neighborhoods knn_edges(const Tensor& coords, std::size_t k);

/// Geometry-aware offset contributed by one domain:
/// sum_j softmax_j(w * -|a_i - g_j|^2 + b) (g_j - a_i).
Var domain_offset(Graph& graph, const Tensor& grid_points, const Tensor& positions,
                  Var kernel_weight, Var kernel_bias);

/// Trainable pieces of one pathway's grid initialisation.
struct LatentInitParams {
  std::size_t kernel_weight = 0;
  std::size_t kernel_bias = 0;
  LinearParams projection;
};

/// Kernel affine starts at weight 1, bias 0 (a plain normalised RBF).
LatentInitParams make_latent_init(ParameterStore& store, const std::string& prefix, std::size_t dim,
                                  std::size_t width, Rng& rng);

struct LatentGrid {
  Var coords;
  Neighborhoods edges;
};

LatentGrid init_latent_grid(Graph& graph, ParameterStore& store, const RegularGrid& grid,
                            const Tensor& fluid_positions, const Tensor& solid_positions,
                            const Tensor& interface_positions, const LatentInitParams& params,
                            std::size_t k);

}  // namespace fisale
