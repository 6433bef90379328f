#include "fisale/reference_solver.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>

namespace fisale {

namespace {

// Velocity nodes xi_j = j / N, pressure cells at (i + 1/2) / N.
struct Staggered {
  std::size_t cells;
  double dxi;
};

Staggered layout(const PistonParams& prm) {
  return {prm.nodes - 1, 1.0 / static_cast<double>(prm.nodes - 1)};
}

// Interior-node velocity tendency: pressure gradient plus mesh advection.
void velocity_rate(const std::vector<double>& p, const std::vector<double>& v, double length,
                   double length_rate, const PistonParams& prm, std::vector<double>& out) {
  const auto g = layout(prm);
  const double dx = length * g.dxi;
  out.assign(v.size(), 0.0);
  for (std::size_t j = 1; j < g.cells; ++j) {
    const double w = static_cast<double>(j) * g.dxi * length_rate;
    out[j] = -(p[j] - p[j - 1]) / (prm.rho0 * dx) + w * (v[j + 1] - v[j - 1]) / (2.0 * dx);
  }
}

void pressure_rate(const std::vector<double>& p, const std::vector<double>& v, double length,
                   double length_rate, const PistonParams& prm, std::vector<double>& out) {
  const auto g = layout(prm);
  const double dx = length * g.dxi;
  const double bulk = prm.rho0 * prm.c * prm.c;
  out.assign(p.size(), 0.0);
  for (std::size_t i = 0; i < g.cells; ++i) {
    const double w = (static_cast<double>(i) + 0.5) * g.dxi * length_rate;
    double dpdx = 0.0;
    if (g.cells > 1) {
      if (i == 0) {
        dpdx = (p[1] - p[0]) / dx;
      } else if (i + 1 == g.cells) {
        dpdx = (p[i] - p[i - 1]) / dx;
      } else {
        dpdx = (p[i + 1] - p[i - 1]) / (2.0 * dx);
      }
    }
    out[i] = -bulk * (v[i + 1] - v[i]) / dx + w * dpdx;
  }
}

struct Kinematics {
  double s, s_dot, s_ddot;
};

// Newmark (average acceleration) update consistent with a given end displacement.
Kinematics kinematics_from(double s_new, const PistonState& prev, double dt) {
  const double a = 4.0 * (s_new - prev.s - dt * prev.s_dot) / (dt * dt) - prev.s_ddot;
  return {s_new, prev.s_dot + 0.5 * dt * (prev.s_ddot + a), a};
}

// Solid subproblem: Newmark step of m s'' = -kappa s - c_d s' + A P with P held fixed.
double solve_solid(const PistonState& prev, double pressure, const PistonParams& prm) {
  const double dt = prm.dt;
  const double rhs = -prm.kappa * (prev.s + dt * prev.s_dot + 0.25 * dt * dt * prev.s_ddot) -
                     prm.damping * (prev.s_dot + 0.5 * dt * prev.s_ddot) + prm.area * pressure;
  const double a = rhs / (prm.mass + 0.25 * prm.kappa * dt * dt + 0.5 * prm.damping * dt);
  return prev.s + dt * prev.s_dot + 0.25 * dt * dt * (prev.s_ddot + a);
}

// Fluid subproblem: kick-drift-kick on the moving mesh with v_N tied to the piston.
void advance_fluid(const PistonState& prev, const Kinematics& next, const PistonParams& prm,
                   PistonState& out) {
  const double dt = prm.dt;
  const double l0 = prm.L0 + prev.s;
  const double l1 = prm.L0 + next.s;
  if (l1 <= 0.0 || l0 <= 0.0) throw NumericError("mesh inversion: tube length became non-positive");
  const double mid_rate = (next.s - prev.s) / dt;
  const auto g = layout(prm);

  std::vector<double> rate;
  std::vector<double> v = prev.v;
  velocity_rate(prev.p, prev.v, l0, prev.s_dot, prm, rate);
  for (std::size_t j = 1; j < g.cells; ++j) v[j] += 0.5 * dt * rate[j];
  v[0] = 0.0;
  v[g.cells] = mid_rate;

  std::vector<double> p = prev.p;
  pressure_rate(prev.p, v, 0.5 * (l0 + l1), mid_rate, prm, rate);
  for (std::size_t i = 0; i < g.cells; ++i) p[i] += dt * rate[i];

  velocity_rate(p, v, l1, next.s_dot, prm, rate);
  for (std::size_t j = 1; j < g.cells; ++j) v[j] += 0.5 * dt * rate[j];
  v[0] = 0.0;
  v[g.cells] = next.s_dot;  // kinematic coupling by assignment

  out.p = std::move(p);
  out.v = std::move(v);
  out.s = next.s;
  out.s_dot = next.s_dot;
  out.s_ddot = next.s_ddot;
  out.time = prev.time + dt;
}

double log_uniform(std::pair<double, double> range, Rng& rng) {
  std::uniform_real_distribution<double> u(std::log(range.first), std::log(range.second));
  return std::exp(u(rng));
}

}  // namespace

void PistonParams::validate() const {
  if (!(L0 > 0) || !(mass > 0) || !(kappa > 0) || !(area > 0) || !(rho0 > 0) || !(c > 0) ||
      !(p0 > 0) || !(dt > 0)) {
    throw std::invalid_argument("piston: physical constants and dt must be positive");
  }
  if (damping < 0) throw std::invalid_argument("piston: damping must be non-negative");
  if (!(L0 > std::abs(s0))) throw std::invalid_argument("piston: need L0 > |s0|");
  if (!(omega > 0 && omega <= 1)) throw std::invalid_argument("piston: omega must be in (0, 1]");
  if (nodes < 3) throw std::invalid_argument("piston: need at least 3 nodes");
  if (max_subiters < 1) throw std::invalid_argument("piston: max_subiters must be >= 1");
  if (save_every < 1) throw std::invalid_argument("piston: save_every must be >= 1");
  if (dim != 1 && dim != 2) throw std::invalid_argument("piston: dim must be 1 or 2");
  if (!(tol > 0)) throw std::invalid_argument("piston: tol must be positive");
  if (dt > cfl_limit()) {
    throw std::invalid_argument("piston: dt=" + std::to_string(dt) + " exceeds the CFL limit " +
                                std::to_string(cfl_limit()));
  }
}

double PistonParams::cfl_limit() const {
  // Spring-only amplitude bound on the piston (hence mesh) speed.
  const double w_max = std::abs(s0) * std::sqrt(kappa / mass);
  const double dx_min = (L0 - std::abs(s0)) / static_cast<double>(nodes - 1);
  return 0.5 * dx_min / (c + w_max);
}

PistonState piston_initial_state(const PistonParams& params) {
  params.validate();
  PistonState s;
  s.s = params.s0;
  s.s_dot = 0.0;
  s.p.assign(params.nodes - 1, 0.0);
  s.v.assign(params.nodes, 0.0);
  s.s_ddot = (-params.kappa * s.s + params.area * interface_pressure(s)) / params.mass;
  return s;
}

double interface_pressure(const PistonState& state) {
  if (state.p.empty()) throw DimensionError("piston state has no cells");
  return state.p.back();
}

namespace {

// Mesh motion and fluid advance for a trial end displacement.
void fluid_for(const PistonState& state, double s_new, const PistonParams& params,
               PistonState& next) {
  const Kinematics kin = kinematics_from(s_new, state, params.dt);
  const double length = params.L0 + std::min(kin.s, state.s);
  if (length <= 0.0) throw NumericError("mesh inversion: tube length became non-positive");
  const double dx = length / static_cast<double>(params.nodes - 1);
  if (params.dt > 0.5 * dx / (params.c + std::abs(kin.s_dot))) {
    throw NumericError("CFL bound violated at t=" + std::to_string(state.time));
  }
  advance_fluid(state, kin, params, next);
}

}  // namespace

PistonState partitioned_step(const PistonState& state, const PistonParams& params,
                             StepReport* report) {
  const double dt = params.dt;
  PistonState next;
  StepReport local;
  // The first fluid solve uses an explicit predictor of the piston motion, so
  // every solid solve sees an end-of-step interface pressure.
  double s_iter = state.s + dt * state.s_dot + 0.5 * dt * dt * state.s_ddot;
  fluid_for(state, s_iter, params, next);
  for (std::size_t k = 0; k < params.max_subiters; ++k) {
    const double s_solid = solve_solid(state, interface_pressure(next), params);
    const double r = std::abs(s_solid - s_iter);
    if (!std::isfinite(r)) throw NumericError("partitioned step produced a non-finite residual");
    local.residuals.push_back(r);
    if (r < params.tol) {
      // Accept the piston's own Newmark solution (relaxed iterates would feed
      // O(tol / dt^2) errors into the acceleration) and re-run the fluid with it.
      if (s_solid != s_iter) fluid_for(state, s_solid, params, next);
      local.subiterations = k + 1;
      if (report) *report = std::move(local);
      return next;
    }
    s_iter = params.omega * s_solid + (1.0 - params.omega) * s_iter;
    fluid_for(state, s_iter, params, next);
  }
  throw NumericError("partitioned step did not converge within " +
                     std::to_string(params.max_subiters) +
                     " subiterations at t=" + std::to_string(state.time) + " (last residual " +
                     std::to_string(local.residuals.back()) + ")");
}

MeshMotion mesh_motion_1d(std::span<const double> xi, double length, double length_rate) {
  if (!(length > 0)) throw std::invalid_argument("mesh motion: length must be positive");
  MeshMotion m;
  m.positions.reserve(xi.size());
  m.velocities.reserve(xi.size());
  for (double f : xi) {
    m.positions.push_back(f * length);
    m.velocities.push_back(f * length_rate);
  }
  return m;
}

double piston_energy(const PistonState& state, const PistonParams& params) {
  const auto g = layout(params);
  const double dx = (params.L0 + state.s) * g.dxi;
  double fluid = 0.0;
  const double bulk = params.rho0 * params.c * params.c;
  for (double p : state.p) fluid += dx * p * p / (2.0 * bulk);
  // End nodes are prescribed (wall, piston) and carry no fluid kinetic energy.
  for (std::size_t j = 1; j + 1 < state.v.size(); ++j) {
    fluid += dx * params.rho0 * state.v[j] * state.v[j] / 2.0;
  }
  return 0.5 * params.mass * state.s_dot * state.s_dot + 0.5 * params.kappa * state.s * state.s +
         params.area * fluid;
}

SystemState piston_frame(const PistonState& state, const PistonParams& params) {
  const auto g = layout(params);
  const double length = params.L0 + state.s;
  const double stress = -params.kappa * state.s / params.area;
  const double p_face = interface_pressure(state);
  const std::size_t interior = g.cells - 1;
  const std::size_t lanes = params.dim == 2 ? 2 : 1;
  const std::size_t d = params.dim;
  const std::array<double, 2> lane_y{-0.5 * params.width, 0.5 * params.width};

  SystemState f;
  f.time = state.time;
  f.fluid.positions = Tensor({lanes * interior, d});
  f.fluid.quantities = Tensor({lanes * interior, 2});
  for (std::size_t lane = 0; lane < lanes; ++lane) {
    for (std::size_t j = 1; j <= interior; ++j) {
      const std::size_t row = lane * interior + (j - 1);
      f.fluid.positions(row, 0) = static_cast<double>(j) * g.dxi * length;
      if (d == 2) f.fluid.positions(row, 1) = lane_y[lane];
      f.fluid.quantities(row, 0) = 0.5 * (state.p[j - 1] + state.p[j]);
      f.fluid.quantities(row, 1) = state.v[j];
    }
  }

  f.solid.positions = Tensor({4, d});
  f.solid.quantities = Tensor({4, 1}, stress);
  for (std::size_t k = 0; k < 4; ++k) {
    if (d == 2) {
      f.solid.positions(k, 0) = length + (k < 2 ? 0.0 : params.thickness);
      f.solid.positions(k, 1) = lane_y[k % 2];
    } else {
      f.solid.positions(k, 0) = length + params.thickness * static_cast<double>(k) / 3.0;
    }
  }

  f.interface.positions = Tensor({lanes, d});
  f.interface.quantities = Tensor({lanes, 3});
  for (std::size_t lane = 0; lane < lanes; ++lane) {
    f.interface.positions(lane, 0) = length;
    if (d == 2) f.interface.positions(lane, 1) = lane_y[lane];
    f.interface.quantities(lane, 0) = p_face;
    f.interface.quantities(lane, 1) = state.v.back();
    f.interface.quantities(lane, 2) = stress;
  }
  return f;
}

PistonRun run_piston(const PistonParams& params) {
  PistonRun run;
  PistonState state = piston_initial_state(params);
  run.states.push_back(state);
  run.reports.reserve(params.steps);
  for (std::size_t n = 1; n <= params.steps; ++n) {
    StepReport report;
    state = partitioned_step(state, params, &report);
    run.reports.push_back(std::move(report));
    if (n % params.save_every == 0 || n == params.steps) run.states.push_back(state);
  }
  return run;
}

Trajectory simulate_piston(const PistonParams& params, std::uint64_t seed) {
  const PistonRun run = run_piston(params);
  Trajectory t;
  t.id = "piston_" + std::to_string(seed);
  for (const auto& s : run.states) t.frames.push_back(piston_frame(s, params));
  t.meta.conditions = {{"kappa", params.kappa},
                       {"mass", params.mass},
                       {"damping", params.damping},
                       {"c", params.c},
                       {"s0", params.s0}};
  for (auto& f : t.frames) f.conditions = t.meta.conditions;
  t.meta.frame_dt = params.dt * static_cast<double>(params.save_every);
  t.meta.channels = {std::vector<ChannelInfo>{{"p", "Pa"}, {"v", "m/s"}},
                     std::vector<ChannelInfo>{{"stress", "Pa"}},
                     std::vector<ChannelInfo>{{"p", "Pa"}, {"v", "m/s"}, {"stress", "Pa"}}};
  return t;
}

double damped_oscillator(double s0, double mass, double kappa, double damping, double t) {
  const double w0 = std::sqrt(kappa / mass);
  const double zeta = damping / (2.0 * mass);  // decay rate
  if (zeta < w0) {
    const double wd = std::sqrt(w0 * w0 - zeta * zeta);
    return s0 * std::exp(-zeta * t) * (std::cos(wd * t) + zeta / wd * std::sin(wd * t));
  }
  if (zeta == w0) return s0 * std::exp(-zeta * t) * (1.0 + zeta * t);
  const double r = std::sqrt(zeta * zeta - w0 * w0);
  const double r1 = -zeta + r, r2 = -zeta - r;
  return s0 * (r2 * std::exp(r1 * t) - r1 * std::exp(r2 * t)) / (r2 - r1);
}

PistonParams sample_piston_params(const PistonParams& base, const PistonRanges& ranges, bool ood,
                                  Rng& rng) {
  PistonParams p = base;
  p.kappa = log_uniform(ood ? ranges.kappa_ood : ranges.kappa, rng);
  p.mass = log_uniform(ranges.mass, rng);
  p.damping = log_uniform(ranges.damping, rng);
  p.s0 = log_uniform(ranges.s0, rng);
  p.c = log_uniform(ranges.c, rng);
  return p;
}

FlowSample cylinder_flow(double U, double R, double rho, double p_inf, double x, double y) {
  const std::complex<double> z(x, y);
  if (std::abs(z) < R * (1.0 - 1e-12)) {
    throw std::invalid_argument("potential flow evaluated inside the cylinder");
  }
  const std::complex<double> dw = U * (1.0 - R * R / (z * z));
  FlowSample s;
  s.velocity = {dw.real(), -dw.imag()};
  const double speed2 = std::norm(dw);
  s.pressure = p_inf + 0.5 * rho * (U * U - speed2);
  return s;
}

std::pair<SystemState, SystemState> gen_potential_flow(const PotentialParams& prm,
                                                       std::uint64_t seed) {
  if (prm.dim != 2 && prm.dim != 3)
    throw std::invalid_argument("potential flow: dim must be 2 or 3");
  if (!(prm.R > 0) || prm.U < 0) throw std::invalid_argument("potential flow: need R > 0, U >= 0");
  if (prm.n_fluid < 1 || prm.n_solid < 1 || prm.n_interface < 1) {
    throw std::invalid_argument("potential flow: every domain needs points");
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t d = prm.dim;
  const std::size_t cf = 1 + d, cs = d;
  const double shift = prm.alpha * 0.5 * prm.rho * prm.U * prm.U;
  const double two_pi = 2.0 * std::numbers::pi;
  auto depth = [&]() { return d == 3 ? prm.R * (2.0 * unit(rng) - 1.0) : 0.0; };

  SystemState in, out;
  in.conditions = out.conditions = {{"U", prm.U}, {"alpha", prm.alpha}};
  in.time = 0.0;
  out.time = 1.0;

  auto fill_flow = [&](Tensor& q, std::size_t row, double x, double y) {
    const auto s = cylinder_flow(prm.U, prm.R, prm.rho, prm.p_inf, x, y);
    q(row, 0) = s.pressure;
    q(row, 1) = s.velocity[0];
    q(row, 2) = s.velocity[1];
  };

  // Fluid: annulus R < r < 4R, fixed sample points.
  in.fluid.positions = Tensor({prm.n_fluid, d});
  for (std::size_t i = 0; i < prm.n_fluid; ++i) {
    double u = unit(rng);
    while (u == 0.0) u = unit(rng);
    const double r = prm.R * (1.0 + 3.0 * u);
    const double th = two_pi * unit(rng);
    in.fluid.positions(i, 0) = r * std::cos(th);
    in.fluid.positions(i, 1) = r * std::sin(th);
    if (d == 3) in.fluid.positions(i, 2) = depth();
  }
  in.fluid.quantities = Tensor({prm.n_fluid, cf});
  out.fluid.positions = in.fluid.positions;
  out.fluid.quantities = Tensor({prm.n_fluid, cf});
  for (std::size_t i = 0; i < prm.n_fluid; ++i) {
    fill_flow(out.fluid.quantities, i, in.fluid.positions(i, 0), in.fluid.positions(i, 1));
  }

  auto ring = [&](std::size_t n, double r) {
    Tensor pos({n, d});
    for (std::size_t i = 0; i < n; ++i) {
      const double th = two_pi * static_cast<double>(i) / static_cast<double>(n);
      pos(i, 0) = r * std::cos(th);
      pos(i, 1) = r * std::sin(th);
      if (d == 3) pos(i, 2) = depth();
    }
    return pos;
  };

  // Solid: inner ring, rigidly displaced along x by alpha * dynamic pressure.
  in.solid.positions = ring(prm.n_solid, 0.5 * prm.R);
  in.solid.quantities = Tensor({prm.n_solid, cs});
  out.solid.positions = in.solid.positions;
  out.solid.quantities = Tensor({prm.n_solid, cs});
  for (std::size_t i = 0; i < prm.n_solid; ++i) {
    out.solid.positions(i, 0) += shift;
    out.solid.quantities(i, 0) = shift;
  }

  // Interface: the cylinder surface.
  in.interface.positions = ring(prm.n_interface, prm.R);
  in.interface.quantities = Tensor({prm.n_interface, cf + cs});
  out.interface.positions = in.interface.positions;
  out.interface.quantities = Tensor({prm.n_interface, cf + cs});
  for (std::size_t i = 0; i < prm.n_interface; ++i) {
    fill_flow(out.interface.quantities, i, in.interface.positions(i, 0),
              in.interface.positions(i, 1));
    out.interface.positions(i, 0) += shift;
    out.interface.quantities(i, cf) = shift;
  }
  return {in, out};
}

Trajectory potential_trajectory(const PotentialParams& params, std::uint64_t seed) {
  auto [in, out] = gen_potential_flow(params, seed);
  Trajectory t;
  t.id = "potential_" + std::to_string(seed);
  t.meta.conditions = in.conditions;
  t.meta.frame_dt = 1.0;
  std::vector<ChannelInfo> fluid{{"p", "Pa"}, {"u_x", "m/s"}, {"u_y", "m/s"}};
  std::vector<ChannelInfo> solid{{"d_x", "m"}, {"d_y", "m"}};
  if (params.dim == 3) {
    fluid.push_back({"u_z", "m/s"});
    solid.push_back({"d_z", "m"});
  }
  std::vector<ChannelInfo> iface = fluid;
  iface.insert(iface.end(), solid.begin(), solid.end());
  t.meta.channels = {fluid, solid, iface};
  t.meta.mask.fluid.assign(in.fluid.count(), true);
  t.frames = {std::move(in), std::move(out)};
  return t;
}

}  // namespace fisale
