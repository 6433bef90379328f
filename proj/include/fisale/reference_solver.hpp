#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fisale/data_io.hpp"

namespace fisale {

/// Gas column in a tube closed at x = 0 and driven by a spring-mounted piston at x = L(t).
struct PistonParams {
  double L0 = 1.0;         ///< rest length (m)
  double mass = 1.0;       ///< piston mass (kg)
  double kappa = 40.0;     ///< spring stiffness (N/m)
  double damping = 0.0;    ///< c_d (N s/m)
  double area = 1.0;       ///< A (m^2)
  double rho0 = 1.0;       ///< kg/m^3
  double c = 4.0;          ///< sound speed (m/s)
  double p0 = 1.0;         ///< reference pressure (Pa)
  double s0 = 0.005;       ///< initial displacement (m)
  std::size_t nodes = 21;  ///< N_x velocity nodes including both ends
  double dt = 0.005;
  std::size_t steps = 1000;
  double tol = 1e-8;
  double omega = 0.5;
  std::size_t max_subiters = 50;
  /// Emitted frames are every `save_every` steps (the first and last always included).
  std::size_t save_every = 1;
  /// 1: points on the tube axis; 2: two lanes at y = +-width/2.
  std::size_t dim = 2;
  double width = 0.2;
  double thickness = 0.1;  ///< piston thickness, only for placing solid points

  /// Throws std::invalid_argument on non-physical settings.
  void validate() const;
  double cell_width() const { return L0 / static_cast<double>(nodes - 1); }
  /// dt <= 0.5 dx / (c + max|w|) with the mesh speed bounded by the spring-only amplitude.
  double cfl_limit() const;
};

/// Staggered state: pressure perturbation p - p0 on the N_x - 1 cells, velocity
/// on the N_x nodes (v_0 = 0, v_N = s_dot).
struct PistonState {
  double s = 0.0;
  double s_dot = 0.0;
  double s_ddot = 0.0;
  std::vector<double> p;
  std::vector<double> v;
  double time = 0.0;

  double length(const PistonParams& params) const { return params.L0 + s; }
};

PistonState piston_initial_state(const PistonParams& params);

/// Pressure perturbation felt by the piston (last cell).
double interface_pressure(const PistonState& state);

struct StepReport {
  std::size_t subiterations = 0;
  std::vector<double> residuals;
};

/// Fixed-point partitioned step. The fluid is first advanced with a predicted
/// piston motion; then solid (Newmark, given interface pressure) -> residual
/// |s_new - s_prev| -> relaxed update of s -> mesh motion -> fluid
/// (kick-drift-kick with v_N = s_dot), until the residual drops below tol.
/// Throws NumericError on divergence.
PistonState partitioned_step(const PistonState& state, const PistonParams& params,
                             StepReport* report = nullptr);

struct MeshMotion {
  std::vector<double> positions;
  std::vector<double> velocities;
};

/// Harmonic extension of the end velocity in 1D: x_i = xi_i L, w_i = xi_i dL/dt.
MeshMotion mesh_motion_1d(std::span<const double> xi, double length, double length_rate);

/// Mechanical energy 0.5 m s_dot^2 + 0.5 kappa s^2 + A sum dx (p^2/(2 rho0 c^2) + rho0 v^2/2).
double piston_energy(const PistonState& state, const PistonParams& params);

/// Converts a solver state into a frame: fluid = interior nodes with (p - p0, v),
/// solid = 4 points with stress = -kappa s / A, interface = piston face with (p - p0, v, stress).
SystemState piston_frame(const PistonState& state, const PistonParams& params);

struct PistonRun {
  std::vector<PistonState> states;  // every saved step
  std::vector<StepReport> reports;  // every step
};

/// Integrates `params.steps` steps; states are kept at the save cadence.
PistonRun run_piston(const PistonParams& params);

/// run_piston packaged as a trajectory with conditions and channel metadata.
Trajectory simulate_piston(const PistonParams& params, std::uint64_t seed);

/// Closed-form free response of m s'' + c_d s' + kappa s = 0 with s(0) = s0, s'(0) = 0.
double damped_oscillator(double s0, double mass, double kappa, double damping, double t);

/// Log-uniform ranges used for dataset generation.
struct PistonRanges {
  std::pair<double, double> kappa{20.0, 60.0};
  std::pair<double, double> kappa_ood{80.0, 120.0};
  std::pair<double, double> mass{0.9, 1.1};
  std::pair<double, double> damping{0.01, 0.1};
  std::pair<double, double> s0{0.0025, 0.01};
  std::pair<double, double> c{3.8, 4.2};
};

PistonParams sample_piston_params(const PistonParams& base, const PistonRanges& ranges, bool ood,
                                  Rng& rng);

struct PotentialParams {
  double U = 1.0;
  double R = 1.0;
  double alpha = 0.1;
  double rho = 1.0;
  double p_inf = 0.0;
  std::size_t dim = 2;
  std::size_t n_fluid = 64;
  std::size_t n_solid = 16;
  std::size_t n_interface = 16;
};

struct FlowSample {
  double pressure = 0.0;
  std::array<double, 2> velocity{};
};

/// Uniform stream U past a cylinder of radius R, evaluated at (x, y) with r >= R.
FlowSample cylinder_flow(double U, double R, double rho, double p_inf, double x, double y);

/// Steady-state pair: the input holds the undeformed geometry with zero
/// quantities; the target holds the flow field and the rigidly displaced solid.
std::pair<SystemState, SystemState> gen_potential_flow(const PotentialParams& params,
                                                       std::uint64_t seed);

/// The pair as a two-frame trajectory; fluid points are flagged as fixed.
Trajectory potential_trajectory(const PotentialParams& params, std::uint64_t seed);

}  // namespace fisale
