#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fisale/autodiff.hpp"
#include "fisale/geometry.hpp"
#include "fisale/layers.hpp"
#include "fisale/pcm.hpp"
#include "fisale/projection.hpp"

namespace fisale {

enum class Task { single_step, rollout, steady_state };
enum class Processor { pcm, simple_attention };

const char* task_name(Task t);
Task parse_task(const std::string& s);
const char* processor_name(Processor p);
Processor parse_processor(const std::string& s);

struct ModelConfig {
  std::size_t dim = 2;
  std::size_t levels = 2;
  /// One grid shape per pathway; H = grid_shapes.size().
  std::vector<std::vector<std::size_t>> grid_shapes{{16, 16}, {8, 8}};
  std::vector<std::size_t> channels{64, 64};
  std::size_t k = 6;
  OrderingSpec ordering;
  Task task = Task::single_step;
  std::size_t stride = 4;
  double noise_variance = 0.0;
  Processor processor = Processor::pcm;
  /// Aggregation FFN hidden width as a multiple of sum(D).
  std::size_t ffn_ratio = 2;
  double pcm_dt = 1.0;

  std::size_t pathways() const { return grid_shapes.size(); }
  std::size_t total_channels() const;
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;

  /// Table-5 style defaults: 2D -> H=2, L=2, [16,16]/[8,8], D=[64,64];
  /// 3D -> H=2, L=3, [5,5,5]/[4,4,4], D=[96,128].
  static ModelConfig defaults_for(std::size_t dim);
  /// d=2, H=2, M=[[4,4],[2,2]], D=[8,8], L=1, k=3.
  static ModelConfig tiny();
};

/// Flat `key = value` text. Recognised model keys: d, H, L, M, D, k, ordering,
/// task, stride, noise_variance, processor, ffn_ratio, pcm_dt. M is written as
/// "16x16,8x8" and D as "64,64". `extra` receives keys the caller handles
/// itself; anything else is an error.
ModelConfig parse_model_config(const std::map<std::string, std::string>& entries,
                               const std::vector<std::string>& extra_keys = {});
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::string format_model_config(const ModelConfig& cfg);

/// Channel layout of the data the model is built for.
struct DataLayout {
  std::size_t dim = 2;
  std::size_t fluid_channels = 1;
  std::size_t solid_channels = 1;
  std::size_t condition_count = 0;

  std::size_t interface_channels() const { return fluid_channels + solid_channels; }
  std::size_t channels(Domain d) const;
  static DataLayout of(const SystemState& state);
};

struct PathwayParams {
  LatentInitParams init;
  std::array<LinearParams, 3> embed;
  std::vector<std::array<EncodeParams, 3>> encode;  // per level
  std::vector<PcmParams> pcm;                       // per level (processor == pcm)
  std::vector<SimpleAttentionParams> simple;        // per level (processor == simple)
};

struct ModelParams {
  std::vector<PathwayParams> pathways;
  std::vector<std::array<FfnParams, 3>> aggregate;  // per level, per domain
  std::array<LinearParams, 3> heads;
};

/// Next-state prediction, one observation per domain (normalised space).
struct Prediction {
  DomainObservation fluid;
  DomainObservation solid;
  DomainObservation interface;

  DomainObservation& domain(Domain d);
  const DomainObservation& domain(Domain d) const;
};

/// Per-domain head outputs [N x (d + C)], positions first.
struct ForwardOutput {
  std::array<Var, 3> outputs;
  std::size_t dim = 0;
  Prediction prediction() const;
};

/// Coupling states entering each processor, for inspection tools.
struct ForwardTrace {
  std::vector<std::vector<CouplingState>> pcm_inputs;  // [level][pathway]
  std::vector<Neighborhoods> edges;                    // [pathway]
};

class FisaleModel {
 public:
  FisaleModel(ModelConfig config, DataLayout layout, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const DataLayout& layout() const { return layout_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const ModelParams& handles() const { return handles_; }
  const std::vector<RegularGrid>& grids() const { return grids_; }

  /// Input embedding: per pathway, per domain Linear(d + C [+ conditions] -> D_h).
  std::vector<std::array<Var, 3>> embed_inputs(Graph& graph, const SystemState& normalized);

  ForwardOutput forward(Graph& graph, const SystemState& normalized, ForwardTrace* trace = nullptr);
  /// Non-recording forward.
  Prediction predict(const SystemState& normalized);

 private:
  ModelConfig config_;
  DataLayout layout_;
  ParameterStore store_;
  ModelParams handles_;
  std::vector<RegularGrid> grids_;
};

/// Mean over domains of the per-domain relative L2 (single-step / steady) or
/// RMSE (rollout) of stacked [positions, quantities], on normalised data.
Var compute_loss(const ForwardOutput& pred, const SystemState& target, Task task);

/// Adds i.i.d. N(0, variance) noise to every normalised position and quantity.
SystemState inject_noise(const SystemState& state, double variance, std::uint64_t seed);

/// Per-domain per-point flags; flagged points keep their input positions.
struct BoundaryMask {
  std::vector<bool> fluid, solid, interface;
  const std::vector<bool>& domain(Domain d) const;
  std::vector<bool>& domain(Domain d);
  bool empty() const { return fluid.empty() && solid.empty() && interface.empty(); }
};

/// Overwrites masked predicted positions with the input positions, exactly.
/// Empty per-domain vectors mean "no mask" for that domain.
Prediction apply_boundary_mask(const Prediction& pred, const SystemState& input,
                               const BoundaryMask& mask);

}  // namespace fisale
