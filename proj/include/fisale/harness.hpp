#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fisale/data_io.hpp"
#include "fisale/model.hpp"
#include "fisale/reference_solver.hpp"

namespace fisale {

// ---- metrics ---------------------------------------------------------------

/// ||u - u_hat||_F / ||u||_F; falls back to ||u - u_hat||_F when ||u|| = 0.
double relative_l2(const Tensor& u, const Tensor& u_hat);
/// sqrt(1/N sum_i ||u_i - u_hat_i||^2) over the rows of [N x C] tensors.
double rmse_metric(const Tensor& u, const Tensor& u_hat);

enum class MetricKind { relative_l2, rmse };
const char* metric_name(MetricKind m);

struct QuantityMetric {
  Domain domain = Domain::fluid;
  std::string quantity;
  std::string unit;
  /// Metric of the quantity pooled over every evaluated point of every sample.
  double value = 0.0;
  /// Mean of the per-sample values (evaluation only).
  std::optional<double> sample_mean;
  /// The pooled reference norm was zero, so value is an absolute L2.
  bool absolute_fallback = false;
  /// Some single sample had a zero reference norm (affects sample_mean only).
  bool zero_reference_samples = false;
};

struct MetricReport {
  MetricKind metric = MetricKind::relative_l2;
  std::vector<QuantityMetric> rows;
  std::array<double, 3> domain_mean{};
  double mean = 0.0;
  std::size_t samples = 0;
  /// Rollouts only: per-step values of every row (curve[step][row]) and their means.
  std::vector<std::vector<double>> curve;
  std::vector<double> step_mean;
  std::optional<std::size_t> failure_step;

  nlohmann::ordered_json to_json() const;
};

// ---- optimizer -------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m, v;
  std::size_t step = 0;
};

/// Bias-corrected adaptive-moment update of every trainable entry, then zero_grad.
/// Entries whose gradient is identically zero only decay their moments.
/// Throws NumericError (before touching anything) on a non-finite gradient.
void optimizer_step(ParameterStore& params, AdamState& state, const AdamConfig& cfg);

// ---- configuration ---------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-3;
  /// Samples (frames for rollout training) accumulated per optimizer step.
  std::size_t batch = 50;
  std::uint64_t seed = 0;
  Task task = Task::single_step;
  std::size_t stride = 4;
  double noise_variance = 0.0;
  /// Stop after this many optimizer steps; 0 means no cap.
  std::size_t max_steps = 0;
  /// Validate every N optimizer steps; 0 means at the end of every epoch.
  std::size_t validate_every = 0;
  /// Also write `<out>.latest` every N optimizer steps; 0 disables it.
  std::size_t checkpoint_every = 0;

  /// 2D tasks: lr 1e-3, batch 50. 3D steady state: lr 5e-4, batch 1.
  static TrainConfig defaults_for(const ModelConfig& model);
};

/// Keys understood by parse_train_config.
const std::vector<std::string>& train_config_keys();

/// Training keys of a combined config; task, stride and noise come from `model`.
TrainConfig parse_train_config(const std::map<std::string, std::string>& entries,
                               const ModelConfig& model);

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

/// One flat key-value file holding both model and training keys.
RunConfig read_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text);

// ---- model files -----------------------------------------------------------

/// Writes the parameters to `path` and config, layout and seed to `<path>.json`.
void save_model(const FisaleModel& model, std::uint64_t seed, const std::filesystem::path& path);
std::unique_ptr<FisaleModel> load_model(const std::filesystem::path& path);

// ---- data ------------------------------------------------------------------

struct Dataset {
  std::filesystem::path dir;
  Manifest manifest;

  static Dataset open(const std::filesystem::path& dir);
  std::vector<Trajectory> load(Split split) const;
  Trajectory load(const std::string& id) const;
};

/// (input frame, target frame) pairs: every frame t with t + stride in range,
/// or (first, last) for the steady-state task.
struct FramePair {
  std::size_t trajectory = 0;
  std::size_t input = 0;
  std::size_t target = 0;
};

std::vector<FramePair> frame_pairs(std::span<const Trajectory> trajectories, Task task,
                                   std::size_t stride);

// ---- evaluation ------------------------------------------------------------

/// Maps a normalised input state to the normalised next state.
using Predictor = std::function<Prediction(const SystemState&)>;
Predictor model_predictor(FisaleModel& model);

/// Denormalised prediction with masked positions copied from the original input.
SystemState predict_state(const Predictor& predictor, const SystemState& input,
                          const NormStats& stats, const BoundaryMask& mask);

/// Per-quantity metric in original units, pooled over all samples: each
/// quantity's values are stacked across samples before taking the norm ratio
/// (or RMSE), so frames where a quantity passes through zero do not dominate.
MetricReport evaluate_pairs(const Predictor& predictor, std::span<const Trajectory> trajectories,
                            std::span<const FramePair> pairs, const NormStats& stats,
                            const std::array<std::vector<ChannelInfo>, 3>& channels,
                            MetricKind metric);

/// Relative L2 for single-step / steady-state models, RMSE for rollout models.
MetricReport evaluate_split(FisaleModel& model, const Dataset& data, Split split);

struct RolloutResult {
  Trajectory predicted;  // starts with the true first frame
  MetricReport report;   // RMSE per step and RMSE-all per quantity
};

/// u_hat_{k+1} = F(u_hat_k) from frame 0 with the model stride between frames.
/// A non-finite state ends the rollout early and records the failing step.
RolloutResult rollout(const Predictor& predictor, const Trajectory& truth, std::size_t steps,
                      std::size_t stride, const NormStats& stats);
RolloutResult rollout(FisaleModel& model, const Dataset& data, const std::string& id,
                      std::size_t steps);

// ---- training --------------------------------------------------------------

struct TrainResult {
  std::vector<double> losses;  // mean batch loss per optimizer step
  std::size_t steps = 0;
  double best_validation = 0.0;
  std::size_t best_step = 0;
  bool validated = false;
};

/// Trains `model` in place on the train split. The best-validation parameters
/// (the last ones when there is no validation split) are written to `out`;
/// `log` receives append-only CSV rows "step,epoch,train_loss,val_metric".
TrainResult train_loop(FisaleModel& model, const Dataset& data, const TrainConfig& cfg,
                       const std::filesystem::path& out, std::ostream* log = nullptr);

// ---- gradient check --------------------------------------------------------

/// Random instance of the given sizes: positions in [-1.5, 1.5], quantities in [-1, 1].
SystemState random_state(const DataLayout& layout, std::array<std::size_t, 3> counts, Rng& rng);

/// Finite-difference check of the single-step loss on a random instance whose
/// target is the model's own prediction perturbed by U(-1, 1) noise.
GradCheckReport model_grad_check(const ModelConfig& config, std::uint64_t seed, double tol,
                                 std::array<std::size_t, 3> counts = {12, 6, 4},
                                 std::size_t fluid_channels = 2, std::size_t solid_channels = 1);

// ---- attention inspection --------------------------------------------------

struct AttentionDump {
  Tensor logits;                   // softmax(Q) softmax(K)^T
  std::vector<Domain> row_blocks;  // block order of the rows
  std::vector<Domain> column_blocks;
  std::size_t block = 0;  // rows per block (grid size M)
};

/// Dense logits of one coupling substep of the PCM at (level, pathway), with
/// the coupling state taken right before that substep runs.
AttentionDump dump_attention(FisaleModel& model, const SystemState& normalized, std::size_t level,
                             std::size_t pathway, CouplingStep step);

/// CSV: header row of column labels "<block>:<index>", then one labelled row per query.
void write_attention_csv(const AttentionDump& dump, std::ostream& out);

// ---- dataset generation ----------------------------------------------------

struct PistonDatasetOptions {
  std::size_t trajectories = 10;
  std::uint64_t seed = 0;
  /// Fraction of trajectories drawn with stiffness outside the training range.
  double ood_fraction = 0.0;
  PistonParams base;
  PistonRanges ranges;
};

/// Simulates and saves every trajectory, then writes an 8:1:1 manifest.
Manifest generate_piston_dataset(const std::filesystem::path& dir,
                                 const PistonDatasetOptions& options);

struct PotentialDatasetOptions {
  std::size_t samples = 10;
  std::uint64_t seed = 0;
  PotentialParams base;
  std::pair<double, double> speed{0.5, 1.5};
  std::pair<double, double> alpha{0.05, 0.2};
};

Manifest generate_potential_dataset(const std::filesystem::path& dir,
                                    const PotentialDatasetOptions& options);

}  // namespace fisale
