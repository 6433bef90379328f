// Acceptance runs. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <numeric>
#include <sstream>

#include "fisale/checkpoint.hpp"
#include "fisale/harness.hpp"
#include "fisale/ops.hpp"
#include "fisale/pcm.hpp"
#include "fisale/projection.hpp"
#include "support.hpp"

using namespace fisale;
using fisale::test::random_size;
using fisale::test::random_tensor;
using fisale::test::TempDir;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(int index, const std::string& name, const Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " " << index << " " << name << ":" << o.detail.str()
            << std::endl;
  if (!o.pass) ++failures;
}

template <typename F>
void run_criterion(int index, const std::string& name, F&& body) {
  Outcome o;
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  report(index, name, o);
}

bool envelope_holds(const Tensor& out, const Tensor& source, std::span<const std::size_t> rows,
                    std::size_t out_row, double slack) {
  for (std::size_t c = 0; c < source.cols(); ++c) {
    double lo = source(rows[0], c), hi = lo;
    for (std::size_t r : rows) {
      lo = std::min(lo, source(r, c));
      hi = std::max(hi, source(r, c));
    }
    if (out(out_row, c) < lo - slack || out(out_row, c) > hi + slack) return false;
  }
  return true;
}

bool rows_sum_to_one(const Tensor& w, int axis, double tol) {
  const std::size_t outer = axis == 1 ? w.rows() : w.cols();
  const std::size_t inner = axis == 1 ? w.cols() : w.rows();
  for (std::size_t i = 0; i < outer; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < inner; ++j) {
      const double v = axis == 1 ? w(i, j) : w(j, i);
      if (v < 0) return false;
      s += v;
    }
    if (std::abs(s - 1.0) > tol) return false;
  }
  return true;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

/// Mean single-step loss over every training pair.
double train_set_loss(FisaleModel& model, const Dataset& data) {
  const auto train = data.load(Split::train);
  const auto pairs = frame_pairs(train, model.config().task, model.config().stride);
  const NormStats& stats = data.manifest.stats;
  double total = 0;
  for (const auto& p : pairs) {
    Graph g(false);
    const auto out = model.forward(g, normalize_state(train[p.trajectory].frames[p.input], stats));
    const SystemState target = normalize_state(train[p.trajectory].frames[p.target], stats);
    total += compute_loss(out, target, model.config().task).value()[0];
  }
  return total / static_cast<double>(pairs.size());
}

// ---- 1 ---------------------------------------------------------------------

void gradient_fidelity(Outcome& o) {
  std::vector<std::pair<std::string, ModelConfig>> variants;
  for (const auto& ordering : ablation_orderings()) {
    ModelConfig cfg = ModelConfig::tiny();
    cfg.ordering = ordering;
    variants.emplace_back(ordering.to_string(), cfg);
  }
  ModelConfig simple = ModelConfig::tiny();
  simple.processor = Processor::simple_attention;
  variants.emplace_back("simple-attention", simple);

  for (const auto& [name, cfg] : variants) {
    const auto t0 = Clock::now();
    const GradCheckReport r = model_grad_check(cfg, 1, 1e-4, {12, 6, 4});
    const double sec = seconds_since(t0);
    o.detail << " " << name << " worst=" << r.worst() << " n=" << r.entries.size() << " t=" << sec
             << "s;";
    o.require(r.passed(), name + " relative error");
    o.require(sec < 120.0, name + " runtime");
  }
}

// ---- 2 ---------------------------------------------------------------------

void linear_attention_equivalence(Outcome& o) {
  Rng rng(201);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t lq = random_size(rng, 1, 64), lk = random_size(rng, 1, 64);
    const std::size_t d = random_size(rng, 1, 16);
    const Tensor q = random_tensor({lq, d}, rng, -3, 3);
    const Tensor k = random_tensor({lk, d}, rng, -3, 3);
    const Tensor v = random_tensor({lk, d}, rng, -3, 3);
    Graph g(false);
    const Tensor fast = linear_attention(g.constant(q), g.constant(k), g.constant(v)).value();
    Tensor dense = matmul(attention_logits(q, k), v);
    for (double& x : dense.storage()) x /= static_cast<double>(d);
    worst = std::max(worst, max_abs_diff(fast, dense));
  }
  o.detail << " 100 instances, max abs diff " << worst;
  o.require(worst <= 1e-6, "dense agreement");
}

// ---- 3 ---------------------------------------------------------------------

void stochastic_weights(Outcome& o) {
  Rng rng(301);
  std::size_t encode_ok = 0, decode_ok = 0, neighbor_ok = 0, envelope_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t width = random_size(rng, 1, 8);
    const std::size_t n = random_size(rng, 1, 40), m = random_size(rng, 2, 20);
    ParameterStore store;
    const EncodeParams params = make_encode(store, "enc", width, rng);
    Graph g(false);
    const Tensor x = random_tensor({n, width}, rng, -4, 4);
    const Tensor grid = random_tensor({m, width}, rng, -2, 2);
    const Encoded enc = encode_domain(g, store, g.constant(x), g.constant(grid), params);
    encode_ok += rows_sum_to_one(softmax(enc.weights.value(), 1), 1, 1e-6);
    decode_ok += rows_sum_to_one(softmax(enc.weights.value(), 0), 0, 1e-6);

    const Tensor z = random_tensor({m, width}, rng, -4, 4);
    const Tensor decoded = decode_domain(g.constant(z), enc.weights).value();
    bool env = true;
    const auto xs = all_rows(n), zs = all_rows(m);
    for (std::size_t i = 0; i < m; ++i)
      env &= envelope_holds(enc.projected.value(), x, xs, i, 1e-10);
    for (std::size_t j = 0; j < n; ++j) env &= envelope_holds(decoded, z, zs, j, 1e-10);

    // Neighbourhood weights of the grid update and their convex combination.
    const std::size_t k = random_size(rng, 1, m - 1);
    const Neighborhoods edges = knn_edges(random_tensor({m, 2}, rng), k);
    const Tensor logits = random_tensor({m, k}, rng, -10, 10);
    const Tensor weights = softmax(logits, 1);
    neighbor_ok += rows_sum_to_one(weights, 1, 1e-6);
    const Tensor mixed = ops::neighbor_mix(g.constant(weights), g.constant(z), edges.index).value();
    for (std::size_t i = 0; i < m; ++i) env &= envelope_holds(mixed, z, edges.of(i), i, 1e-10);
    envelope_ok += env;
  }
  o.detail << " encode " << encode_ok << "/100, decode " << decode_ok << "/100, neighbourhood "
           << neighbor_ok << "/100, envelope " << envelope_ok << "/100";
  o.require(encode_ok == 100 && decode_ok == 100 && neighbor_ok == 100, "weight sums");
  o.require(envelope_ok == 100, "envelope");
}

// ---- 4 ---------------------------------------------------------------------

void knn_exactness(Outcome& o) {
  Rng rng(401);
  std::size_t ok = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = random_size(rng, 2, 200);
    const std::size_t d = random_size(rng, 1, 3);
    const std::size_t k = random_size(rng, 1, std::min<std::size_t>(m - 1, 12));
    Tensor x = random_tensor({m, d}, rng, -3, 3);
    if (trial % 2 == 0) {
      for (double& v : x.storage()) v = std::round(v);  // lattice points force ties
    }
    std::vector<std::size_t> expect;
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<std::pair<double, std::size_t>> dist;
      for (std::size_t j = 0; j < m; ++j) {
        if (j == i) continue;
        double s = 0;
        for (std::size_t c = 0; c < d; ++c) s += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
        dist.emplace_back(s, j);
      }
      std::sort(dist.begin(), dist.end());
      for (std::size_t n = 0; n < k; ++n) expect.push_back(dist[n].second);
    }
    ok += knn_edges(x, k).index == expect;
  }
  o.detail << " " << ok << "/50 point sets match brute force";
  o.require(ok == 50, "brute force agreement");
}

// ---- 5 ---------------------------------------------------------------------

std::vector<double> displacement_trace(PistonParams p, double dt, std::size_t every, double t_end) {
  p.dt = dt;
  p.steps = static_cast<std::size_t>(std::llround(t_end / dt));
  p.save_every = every;
  std::vector<double> out;
  for (const auto& s : run_piston(p).states) out.push_back(s.s);
  return out;
}

void solver_convergence(Outcome& o) {
  const PistonParams p;
  const double t_end = p.dt * static_cast<double>(p.steps);
  // Common output times every 2 coarse steps; the reference uses dt / 8.
  const auto ref = displacement_trace(p, p.dt / 8, 16, t_end);
  const auto coarse = displacement_trace(p, p.dt, 2, t_end);
  const auto fine = displacement_trace(p, p.dt / 2, 4, t_end);
  double e1 = 0, e2 = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    e1 = std::max(e1, std::abs(coarse.at(i) - ref[i]));
    e2 = std::max(e2, std::abs(fine.at(i) - ref[i]));
  }
  o.detail << " displacement error dt=" << e1 << " dt/2=" << e2 << " ratio " << e1 / e2 << ";";
  o.require(e1 / e2 >= 1.8, "self-convergence ratio");

  PistonParams undamped;
  undamped.damping = 0.0;
  const PistonRun run = run_piston(undamped);
  const double e0 = piston_energy(run.states.front(), undamped);
  double drift = 0;
  for (const auto& s : run.states) {
    drift = std::max(drift, std::abs(piston_energy(s, undamped) - e0) / e0);
  }
  o.detail << " energy drift over " << undamped.steps << " steps " << drift << ";";
  o.require(undamped.steps >= 1000 && drift < 0.01, "energy drift");

  PistonParams decoupled;
  decoupled.area = 1e-12;
  decoupled.damping = 0.05;
  const double period = 2 * std::acos(-1.0) / std::sqrt(decoupled.kappa / decoupled.mass);
  decoupled.dt = period / 1e4;
  decoupled.steps = 20000;
  double worst = 0;
  for (const auto& s : run_piston(decoupled).states) {
    const double exact =
        damped_oscillator(decoupled.s0, decoupled.mass, decoupled.kappa, decoupled.damping, s.time);
    worst = std::max(worst, std::abs(s.s - exact));
  }
  o.detail << " decoupled max error / s0 " << worst / decoupled.s0;
  o.require(worst / decoupled.s0 <= 1e-4, "decoupled limit");
}

// ---- 6 and 9 ---------------------------------------------------------------

struct OverfitRun {
  double train_metric = 0;
  double final_loss = 0;
  double seconds = 0;
};

Dataset overfit_dataset(const std::filesystem::path& dir) {
  PistonDatasetOptions opt;
  opt.trajectories = 4;
  opt.seed = 7;
  opt.base.steps = 200;
  opt.base.save_every = 4;
  generate_piston_dataset(dir, opt);
  write_manifest(build_manifest(dir, {1, 0, 0}, 7), dir / kManifestName);
  return Dataset::open(dir);
}

OverfitRun overfit(const Dataset& data, const OrderingSpec& ordering,
                   const std::filesystem::path& ckpt) {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.ordering = ordering;
  FisaleModel model(cfg, data.manifest.layout(), 0);
  TrainConfig tc = TrainConfig::defaults_for(cfg);
  tc.batch = 16;
  tc.learning_rate = 0.01;
  tc.max_steps = 2000;
  tc.epochs = 1000000;
  const auto t0 = Clock::now();
  train_loop(model, data, tc, ckpt);
  OverfitRun r;
  r.seconds = seconds_since(t0);
  r.train_metric = evaluate_split(model, data, Split::train).mean;
  r.final_loss = train_set_loss(model, data);
  return r;
}

// ---- 7 ---------------------------------------------------------------------

void generalization(Outcome& o, const std::filesystem::path& dir) {
  PistonDatasetOptions opt;
  opt.trajectories = 89;
  opt.ood_fraction = 9.0 / 89.0;
  opt.seed = 11;
  opt.base.steps = 200;
  opt.base.save_every = 4;
  generate_piston_dataset(dir / "data", opt);
  const Dataset data = Dataset::open(dir / "data");
  const std::size_t n_train = data.manifest.ids(Split::train).size();
  const std::size_t n_val = data.manifest.ids(Split::val).size();
  const std::size_t n_test = data.manifest.ids(Split::test).size();
  o.detail << " splits " << n_train << "/" << n_val << "/" << n_test << " ood "
           << data.manifest.ids(Split::ood).size() << ";";
  o.require(n_train == 64 && n_val == 8 && n_test == 8, "split sizes");

  ModelConfig cfg = ModelConfig::defaults_for(2);
  cfg.channels = {32, 32};
  FisaleModel model(cfg, data.manifest.layout(), 0);
  TrainConfig tc = TrainConfig::defaults_for(cfg);
  tc.batch = 8;
  tc.learning_rate = 0.003;
  tc.max_steps = 600;
  tc.epochs = 1000000;
  tc.validate_every = 150;
  const auto t0 = Clock::now();
  const TrainResult tr = train_loop(model, data, tc, dir / "gen.ckpt");
  auto best = load_model(dir / "gen.ckpt");
  const MetricReport test = evaluate_split(*best, data, Split::test);
  const MetricReport ood = evaluate_split(*best, data, Split::ood);
  // Reported for reference only: per-sample ratios blow up when a quantity crosses zero.
  double per_sample = 0;
  for (const auto& row : test.rows) per_sample += row.sample_mean.value_or(0.0);
  per_sample /= static_cast<double>(test.rows.size());
  o.detail << " best val " << tr.best_validation << " at step " << tr.best_step
           << ", test mean (pooled) " << test.mean << ", test per-sample row mean " << per_sample
           << ", ood mean " << ood.mean << ", " << seconds_since(t0) << "s";
  o.require(test.mean < 0.15, "test mean relative L2");
  o.require(std::isfinite(ood.mean), "ood finite");
}

// ---- 8 ---------------------------------------------------------------------

void noise_direction(Outcome& o, const std::filesystem::path& dir) {
  PistonDatasetOptions opt;
  opt.trajectories = 20;
  opt.seed = 21;
  opt.base.steps = 200;
  opt.base.save_every = 4;
  generate_piston_dataset(dir / "data", opt);
  write_manifest(build_manifest(dir / "data", {12, 2, 6}, 21), dir / "data" / kManifestName);
  const Dataset data = Dataset::open(dir / "data");

  auto rmse_all = [&](double variance, std::uint64_t seed) {
    ModelConfig cfg = ModelConfig::tiny();
    cfg.task = Task::rollout;
    cfg.stride = 1;
    cfg.noise_variance = variance;
    FisaleModel model(cfg, data.manifest.layout(), seed);
    TrainConfig tc = TrainConfig::defaults_for(cfg);
    tc.batch = 16;
    tc.learning_rate = 0.003;
    tc.max_steps = 3000;
    tc.epochs = 1000000;
    tc.seed = seed;
    train_loop(model, data, tc, dir / "noise.ckpt");
    auto best = load_model(dir / "noise.ckpt");
    double total = 0;
    std::size_t count = 0;
    for (const auto& id : data.manifest.ids(Split::test)) {
      const RolloutResult r = rollout(*best, data, id, 50);
      if (r.report.failure_step || r.report.curve.size() != 50) return std::nan("");
      total += r.report.mean;
      ++count;
    }
    return total / static_cast<double>(count);
  };

  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const double clean = rmse_all(0.0, seed);
    const double noisy = rmse_all(1e-3, seed);
    o.detail << " seed " << seed << ": noise " << noisy << " vs none " << clean << ";";
    o.require(std::isfinite(clean) && std::isfinite(noisy), "finite rollouts");
    o.require(noisy <= 1.05 * clean, "seed " + std::to_string(seed) + " direction");
  }
}

// ---- 10 --------------------------------------------------------------------

void format_integrity(Outcome& o, const std::filesystem::path& dir) {
  Rng rng(1001);
  std::size_t ok = 0;
  for (int i = 0; i < 1000; ++i) {
    Trajectory t = fisale::test::random_f32_trajectory(rng, "t" + std::to_string(i));
    const auto path = dir / "t.fsl";
    write_trajectory(t, path);
    ok += fisale::test::bit_equal(t, read_trajectory(path));
  }
  o.detail << " " << ok << "/1000 trajectories bit-exact;";
  o.require(ok == 1000, "trajectory round trip");

  ParameterStore store;
  std::uniform_int_distribution<std::uint64_t> bits;
  for (int i = 0; i < 20; ++i) {
    Tensor t({random_size(rng, 1, 6), random_size(rng, 1, 6)});
    for (double& v : t.storage()) {
      do {
        v = std::bit_cast<double>(bits(rng));
      } while (!std::isfinite(v));
    }
    t[0] = -0.0;
    if (t.size() > 1) t[1] = 4.9e-324;
    store.add("p" + std::to_string(i), t, i % 3 != 0);
  }
  write_checkpoint(dir / "m.ckpt", store);
  const auto back = read_checkpoint(dir / "m.ckpt");
  bool same = back.size() == store.size();
  for (std::size_t i = 0; same && i < back.size(); ++i) {
    same = back[i].name == store.at(i).name && back[i].trainable == store.at(i).trainable &&
           fisale::test::bit_equal(back[i].value, store.at(i).value);
  }
  o.detail << " checkpoint " << (same ? "bit-exact" : "differs");
  o.require(same, "checkpoint round trip");
}

// ---- 11 --------------------------------------------------------------------

void metric_oracles(Outcome& o) {
  Rng rng(1101);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = random_size(rng, 1, 50), c = random_size(rng, 1, 4);
    const Tensor u = random_tensor({n, c}, rng, -5, 5), v = random_tensor({n, c}, rng, -5, 5);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      num += (u[i] - v[i]) * (u[i] - v[i]);
      den += u[i] * u[i];
    }
    worst = std::max(worst, std::abs(relative_l2(u, v) - std::sqrt(num / den)));
    worst = std::max(worst, std::abs(rmse_metric(u, v) - std::sqrt(num / static_cast<double>(n))));
  }
  o.detail << " direct re-evaluation max diff " << worst << ";";
  o.require(worst <= 1e-12, "direct formula");

  auto make = [&](const std::string& id) {
    Trajectory t;
    t.id = id;
    for (int f = 0; f < 4; ++f) {
      SystemState s = fisale::test::random_system(2, {9, 4, 3}, 2, 1, rng);
      s.time = f;
      t.frames.push_back(std::move(s));
    }
    t.meta.channels = {std::vector<ChannelInfo>{{"p", "Pa"}, {"v", "m/s"}},
                       std::vector<ChannelInfo>{{"stress", "Pa"}},
                       std::vector<ChannelInfo>{{"p", "Pa"}, {"v", "m/s"}, {"stress", "Pa"}}};
    return t;
  };
  std::vector<Trajectory> base{make("a"), make("b")};
  std::vector<Trajectory> scaled = base;
  for (auto& t : scaled) {
    for (auto& f : t.frames) {
      for (auto d : kDomains) {
        for (double& x : f.domain(d).quantities.storage()) x *= 10.0;
      }
    }
  }
  const auto pairs = frame_pairs(base, Task::single_step, 1);
  const Predictor identity = [](const SystemState& s) {
    return Prediction{s.fluid, s.solid, s.interface};
  };
  double rmse_dev = 0, rel_dev = 0;
  for (auto kind : {MetricKind::rmse, MetricKind::relative_l2}) {
    const auto a = evaluate_pairs(identity, base, pairs, compute_norm_stats(base),
                                  base[0].meta.channels, kind);
    const auto b = evaluate_pairs(identity, scaled, pairs, compute_norm_stats(scaled),
                                  base[0].meta.channels, kind);
    for (std::size_t r = 0; r < a.rows.size(); ++r) {
      if (kind == MetricKind::rmse) {
        rmse_dev = std::max(rmse_dev, std::abs(b.rows[r].value / a.rows[r].value - 10.0) / 10.0);
      } else {
        rel_dev = std::max(rel_dev, std::abs(b.rows[r].value / a.rows[r].value - 1.0));
      }
    }
  }
  o.detail << " 10x scaling: RMSE ratio deviation " << rmse_dev << ", relative L2 deviation "
           << rel_dev;
  o.require(rmse_dev <= 1e-12 && rel_dev <= 1e-12, "unit scaling");
}

}  // namespace

int main(int argc, char** argv) {
  // Optional list of criterion numbers to run; all by default.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  auto wanted = [&](int n) { return only.empty() || std::count(only.begin(), only.end(), n); };

  TempDir dir("acceptance");
  std::optional<OverfitRun> default_run;

  if (wanted(1)) run_criterion(1, "gradient fidelity", gradient_fidelity);
  if (wanted(2)) run_criterion(2, "linear-attention equivalence", linear_attention_equivalence);
  if (wanted(3)) run_criterion(3, "stochastic-weight invariants", stochastic_weights);
  if (wanted(4)) run_criterion(4, "kNN exactness", knn_exactness);
  if (wanted(5)) run_criterion(5, "reference-solver convergence", solver_convergence);

  std::optional<Dataset> overfit_data;
  if (wanted(6) || wanted(9)) overfit_data = overfit_dataset(dir.path() / "overfit");
  if (wanted(6)) {
    run_criterion(6, "overfit probe", [&](Outcome& o) {
      const OverfitRun r = overfit(*overfit_data, OrderingSpec{}, dir.path() / "overfit.ckpt");
      default_run = r;
      o.detail << " train relative L2 " << r.train_metric << " after 2000 steps, " << r.seconds
               << "s";
      o.require(r.train_metric < 0.05, "train relative L2");
      o.require(r.seconds < 600.0, "wall time");
    });
  }
  if (wanted(7)) {
    run_criterion(7, "generalization probe", [&](Outcome& o) {
      std::filesystem::create_directories(dir.path() / "gen");
      generalization(o, dir.path() / "gen");
    });
  }
  if (wanted(8)) {
    run_criterion(8, "noise-injection direction", [&](Outcome& o) {
      std::filesystem::create_directories(dir.path() / "noise");
      noise_direction(o, dir.path() / "noise");
    });
  }
  if (wanted(9)) {
    run_criterion(9, "ordering robustness", [&](Outcome& o) {
      std::vector<double> losses;
      for (const auto& ordering : ablation_orderings()) {
        double loss = 0;
        if (default_run && ordering == OrderingSpec{}) {
          loss = default_run->final_loss;
        } else {
          loss = overfit(*overfit_data, ordering, dir.path() / "order.ckpt").final_loss;
        }
        losses.push_back(loss);
        o.detail << " " << ordering.to_string() << "=" << loss << ";";
      }
      const auto [lo, hi] = std::minmax_element(losses.begin(), losses.end());
      const double mean =
          std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
      const double spread = (*hi - *lo) / mean;
      o.detail << " spread (max-min)/mean " << spread;
      o.require(spread <= 0.2, "relative spread");
    });
  }
  if (wanted(10)) {
    run_criterion(10, "format integrity", [&](Outcome& o) { format_integrity(o, dir.path()); });
  }
  if (wanted(11)) run_criterion(11, "metric oracles", metric_oracles);

  return failures == 0 ? 0 : 1;
}
