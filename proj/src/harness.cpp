#include "fisale/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "fisale/checkpoint.hpp"
#include "fisale/ops.hpp"

namespace fisale {

namespace {

using json = nlohmann::ordered_json;

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

Tensor column(const Tensor& t, std::size_t c) {
  Tensor out({t.rows(), 1});
  for (std::size_t i = 0; i < t.rows(); ++i) out[i] = t(i, c);
  return out;
}

bool state_finite(const SystemState& s) {
  for (auto d : kDomains) {
    if (!s.domain(d).positions.all_finite() || !s.domain(d).quantities.all_finite()) return false;
  }
  return true;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (!value.empty() && value.front() == '-') throw std::invalid_argument(value);
    v = std::stoull(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': not a count: " + value);
  }
  if (used != value.size()) {
    throw std::invalid_argument("config key '" + key + "': not a count: " + value);
  }
  return static_cast<std::size_t>(v);
}

double parse_number(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': not a number: " + value);
  }
  if (used != value.size() || !std::isfinite(v)) {
    throw std::invalid_argument("config key '" + key + "': not a number: " + value);
  }
  return v;
}

std::filesystem::path sidecar(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

// Row layout shared by evaluation and rollout reports.
MetricReport empty_report(const std::array<std::vector<ChannelInfo>, 3>& channels,
                          MetricKind metric) {
  MetricReport r;
  r.metric = metric;
  for (auto d : kDomains) {
    for (const auto& ch : channels[static_cast<std::size_t>(d)]) {
      QuantityMetric q;
      q.domain = d;
      q.quantity = ch.name;
      q.unit = ch.unit;
      r.rows.push_back(std::move(q));
    }
  }
  return r;
}

// Metric of every (domain, quantity) row for one predicted state.
std::vector<double> row_values(const SystemState& truth, const SystemState& pred,
                               const MetricReport& layout, std::vector<bool>* fallback) {
  std::vector<double> out;
  out.reserve(layout.rows.size());
  std::array<std::size_t, 3> next{};
  for (std::size_t r = 0; r < layout.rows.size(); ++r) {
    const auto d = layout.rows[r].domain;
    const auto c = next[static_cast<std::size_t>(d)]++;
    const Tensor& u = truth.domain(d).quantities;
    const Tensor& u_hat = pred.domain(d).quantities;
    require_same_shape(u, u_hat, "metric");
    if (c >= u.cols()) throw DimensionError("metric: channel list longer than the data");
    const Tensor a = column(u, c), b = column(u_hat, c);
    if (layout.metric == MetricKind::relative_l2) {
      double norm = 0;
      for (double v : a.data()) norm += v * v;
      if (norm == 0 && fallback) (*fallback)[r] = true;
      out.push_back(relative_l2(a, b));
    } else {
      out.push_back(rmse_metric(a, b));
    }
  }
  return out;
}

void finish_report(MetricReport& r) {
  std::array<double, 3> sum{};
  std::array<std::size_t, 3> count{};
  for (const auto& row : r.rows) {
    sum[static_cast<std::size_t>(row.domain)] += row.value;
    ++count[static_cast<std::size_t>(row.domain)];
  }
  double total = 0;
  std::size_t domains = 0;
  for (std::size_t d = 0; d < 3; ++d) {
    r.domain_mean[d] = count[d] ? sum[d] / static_cast<double>(count[d]) : 0.0;
    if (count[d]) {
      total += r.domain_mean[d];
      ++domains;
    }
  }
  r.mean = domains ? total / static_cast<double>(domains) : 0.0;
}

// Validation pairs are thinned evenly to keep periodic validation cheap.
std::vector<FramePair> thin(std::vector<FramePair> pairs, std::size_t limit) {
  if (limit == 0 || pairs.size() <= limit) return pairs;
  std::vector<FramePair> out;
  out.reserve(limit);
  for (std::size_t i = 0; i < limit; ++i) out.push_back(pairs[i * pairs.size() / limit]);
  return out;
}

}  // namespace

// ---- metrics ---------------------------------------------------------------

double relative_l2(const Tensor& u, const Tensor& u_hat) {
  require_same_shape(u, u_hat, "relative_l2");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double e = u[i] - u_hat[i];
    num += e * e;
    den += u[i] * u[i];
  }
  return den > 0 ? std::sqrt(num) / std::sqrt(den) : std::sqrt(num);
}

double rmse_metric(const Tensor& u, const Tensor& u_hat) {
  require_same_shape(u, u_hat, "rmse_metric");
  if (u.rows() == 0) throw DimensionError("rmse_metric: no points");
  double sum = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double e = u[i] - u_hat[i];
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(u.rows()));
}

const char* metric_name(MetricKind m) {
  return m == MetricKind::relative_l2 ? "relative_l2" : "rmse";
}

json MetricReport::to_json() const {
  json j;
  j["metric"] = metric_name(metric);
  j["samples"] = samples;
  json rows_j = json::array();
  for (const auto& r : rows) {
    json row{{"domain", domain_name(r.domain)},
             {"quantity", r.quantity},
             {"unit", r.unit},
             {"value", r.value}};
    if (r.sample_mean) row["sample_mean"] = *r.sample_mean;
    if (r.absolute_fallback) row["absolute_fallback"] = true;
    if (r.zero_reference_samples) row["zero_reference_samples"] = true;
    rows_j.push_back(std::move(row));
  }
  j["rows"] = rows_j;
  j["domain_mean"] = {
      {"fluid", domain_mean[0]}, {"solid", domain_mean[1]}, {"interface", domain_mean[2]}};
  j["mean"] = mean;
  if (!step_mean.empty() || failure_step) {
    j["step_mean"] = step_mean;
    j["curve"] = curve;
  }
  if (failure_step) j["failure_step"] = *failure_step;
  return j;
}

// ---- optimizer -------------------------------------------------------------

void optimizer_step(ParameterStore& params, AdamState& state, const AdamConfig& cfg) {
  for (const auto& e : params) {
    if (e.trainable && !e.grad.empty() && !e.grad.all_finite()) {
      throw NumericError("non-finite gradient in " + e.name);
    }
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& e : params) {
      state.m.emplace_back(e.value.shape());
      state.v.emplace_back(e.value.shape());
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& e = params.at(i);
    if (!e.trainable) continue;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const bool has_grad = !e.grad.empty() && std::any_of(e.grad.data().begin(), e.grad.data().end(),
                                                         [](double g) { return g != 0.0; });
    for (std::size_t k = 0; k < e.value.size(); ++k) {
      const double g = has_grad ? e.grad[k] : 0.0;
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      if (!has_grad) continue;
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      e.value[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
  params.zero_grad();
}

// ---- configuration ---------------------------------------------------------

TrainConfig TrainConfig::defaults_for(const ModelConfig& model) {
  TrainConfig cfg;
  if (model.dim == 3 && model.task == Task::steady_state) {
    cfg.learning_rate = 5e-4;
    cfg.batch = 1;
  }
  cfg.task = model.task;
  cfg.stride = model.stride;
  cfg.noise_variance = model.noise_variance;
  return cfg;
}

const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys{
      "epochs", "lr", "batch", "seed", "max_steps", "validate_every", "checkpoint_every"};
  return keys;
}

TrainConfig parse_train_config(const std::map<std::string, std::string>& entries,
                               const ModelConfig& model) {
  TrainConfig cfg = TrainConfig::defaults_for(model);
  for (const auto& [key, value] : entries) {
    if (key == "epochs")
      cfg.epochs = parse_size(key, value);
    else if (key == "lr")
      cfg.learning_rate = parse_number(key, value);
    else if (key == "batch")
      cfg.batch = parse_size(key, value);
    else if (key == "seed")
      cfg.seed = parse_size(key, value);
    else if (key == "max_steps")
      cfg.max_steps = parse_size(key, value);
    else if (key == "validate_every")
      cfg.validate_every = parse_size(key, value);
    else if (key == "checkpoint_every")
      cfg.checkpoint_every = parse_size(key, value);
  }
  if (cfg.batch == 0) throw std::invalid_argument("batch must be positive");
  if (!(cfg.learning_rate > 0)) throw std::invalid_argument("lr must be positive");
  return cfg;
}

RunConfig parse_run_config(const std::string& text) {
  const auto entries = parse_key_values(text);
  RunConfig rc;
  rc.model = parse_model_config(entries, train_config_keys());
  rc.train = parse_train_config(entries, rc.model);
  return rc;
}

RunConfig read_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

// ---- model files -----------------------------------------------------------

void save_model(const FisaleModel& model, std::uint64_t seed, const std::filesystem::path& path) {
  write_checkpoint(path, model.params());
  const auto& l = model.layout();
  json j;
  j["seed"] = seed;
  j["config"] = format_model_config(model.config());
  j["layout"] = {{"d", l.dim},
                 {"fluid_channels", l.fluid_channels},
                 {"solid_channels", l.solid_channels},
                 {"conditions", l.condition_count}};
  std::ofstream os(sidecar(path), std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + sidecar(path).string());
  os << j.dump(2) << "\n";
}

std::unique_ptr<FisaleModel> load_model(const std::filesystem::path& path) {
  std::ifstream is(sidecar(path));
  if (!is) throw std::runtime_error("missing model description " + sidecar(path).string());
  const auto j = nlohmann::json::parse(is);
  const ModelConfig cfg = parse_model_config(parse_key_values(j.at("config").get<std::string>()));
  const auto& l = j.at("layout");
  DataLayout layout{l.at("d").get<std::size_t>(), l.at("fluid_channels").get<std::size_t>(),
                    l.at("solid_channels").get<std::size_t>(),
                    l.at("conditions").get<std::size_t>()};
  auto model = std::make_unique<FisaleModel>(cfg, layout, j.at("seed").get<std::uint64_t>());
  load_checkpoint(path, model->params());
  return model;
}

// ---- data ------------------------------------------------------------------

Dataset Dataset::open(const std::filesystem::path& dir) {
  Dataset d;
  d.dir = dir;
  d.manifest = load_manifest(dir);
  return d;
}

std::vector<Trajectory> Dataset::load(Split split) const {
  std::vector<Trajectory> out;
  for (const auto& id : manifest.ids(split)) out.push_back(load_trajectory(dir, id));
  return out;
}

Trajectory Dataset::load(const std::string& id) const {
  manifest.entry(id);
  return load_trajectory(dir, id);
}

std::vector<FramePair> frame_pairs(std::span<const Trajectory> trajectories, Task task,
                                   std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("stride must be positive");
  std::vector<FramePair> out;
  for (std::size_t t = 0; t < trajectories.size(); ++t) {
    const std::size_t n = trajectories[t].frames.size();
    if (task == Task::steady_state) {
      if (n >= 2) out.push_back({t, 0, n - 1});
      continue;
    }
    for (std::size_t i = 0; i + stride < n; ++i) out.push_back({t, i, i + stride});
  }
  return out;
}

// ---- evaluation ------------------------------------------------------------

Predictor model_predictor(FisaleModel& model) {
  return [&model](const SystemState& s) { return model.predict(s); };
}

SystemState predict_state(const Predictor& predictor, const SystemState& input,
                          const NormStats& stats, const BoundaryMask& mask) {
  const Prediction p = predictor(normalize_state(input, stats));
  SystemState out;
  for (auto d : kDomains) out.domain(d) = p.domain(d);
  out = denormalize_state(out, stats);
  Prediction masked;
  for (auto d : kDomains) masked.domain(d) = out.domain(d);
  masked = apply_boundary_mask(masked, input, mask);
  for (auto d : kDomains) out.domain(d) = masked.domain(d);
  out.conditions = input.conditions;
  out.time = input.time;
  return out;
}

MetricReport evaluate_pairs(const Predictor& predictor, std::span<const Trajectory> trajectories,
                            std::span<const FramePair> pairs, const NormStats& stats,
                            const std::array<std::vector<ChannelInfo>, 3>& channels,
                            MetricKind metric) {
  if (pairs.empty()) throw std::invalid_argument("evaluation needs at least one sample");
  MetricReport report = empty_report(channels, metric);
  const std::size_t rows = report.rows.size();
  std::vector<std::vector<double>> truth_cols(rows), pred_cols(rows);
  std::vector<double> sample_sum(rows, 0.0);
  std::vector<bool> fallback(rows, false);
  for (const auto& pair : pairs) {
    const Trajectory& traj = trajectories[pair.trajectory];
    const SystemState& truth = traj.frames.at(pair.target);
    const SystemState pred =
        predict_state(predictor, traj.frames.at(pair.input), stats, traj.meta.mask);
    const auto values = row_values(truth, pred, report, &fallback);
    std::array<std::size_t, 3> next{};
    for (std::size_t r = 0; r < rows; ++r) {
      sample_sum[r] += values[r];
      const auto d = report.rows[r].domain;
      const auto c = next[static_cast<std::size_t>(d)]++;
      const Tensor& u = truth.domain(d).quantities;
      const Tensor& u_hat = pred.domain(d).quantities;
      for (std::size_t i = 0; i < u.rows(); ++i) {
        truth_cols[r].push_back(u(i, c));
        pred_cols[r].push_back(u_hat(i, c));
      }
    }
  }
  report.samples = pairs.size();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t n = truth_cols[r].size();
    const Tensor u({n, 1}, std::move(truth_cols[r]));
    const Tensor u_hat({n, 1}, std::move(pred_cols[r]));
    report.rows[r].value =
        metric == MetricKind::relative_l2 ? relative_l2(u, u_hat) : rmse_metric(u, u_hat);
    report.rows[r].sample_mean = sample_sum[r] / static_cast<double>(pairs.size());
    double norm = 0;
    for (double v : u.data()) norm += v * v;
    report.rows[r].absolute_fallback = metric == MetricKind::relative_l2 && norm == 0;
    report.rows[r].zero_reference_samples = fallback[r];
  }
  finish_report(report);
  return report;
}

MetricReport evaluate_split(FisaleModel& model, const Dataset& data, Split split) {
  if (!data.manifest.has_stats) throw std::invalid_argument("manifest has no norm stats");
  const auto trajectories = data.load(split);
  if (trajectories.empty()) {
    throw std::invalid_argument(std::string("split '") + split_name(split) + "' is empty");
  }
  const auto& cfg = model.config();
  const auto pairs = frame_pairs(trajectories, cfg.task, cfg.stride);
  const MetricKind kind = cfg.task == Task::rollout ? MetricKind::rmse : MetricKind::relative_l2;
  return evaluate_pairs(model_predictor(model), trajectories, pairs, data.manifest.stats,
                        data.manifest.channels, kind);
}

RolloutResult rollout(const Predictor& predictor, const Trajectory& truth, std::size_t steps,
                      std::size_t stride, const NormStats& stats) {
  if (steps == 0 || stride == 0) throw std::invalid_argument("rollout needs steps, stride >= 1");
  if (truth.frames.size() < steps * stride + 1) {
    throw std::invalid_argument("trajectory " + truth.id + " has " +
                                std::to_string(truth.frames.size()) + " frames, rollout needs " +
                                std::to_string(steps * stride + 1));
  }
  RolloutResult res;
  res.predicted.id = truth.id + "_rollout";
  res.predicted.meta = truth.meta;
  res.predicted.meta.frame_dt = truth.meta.frame_dt * static_cast<double>(stride);
  res.predicted.frames.push_back(truth.frames.front());
  MetricReport& report = res.report;
  report = empty_report(truth.meta.channels, MetricKind::rmse);
  std::vector<double> sum(report.rows.size(), 0.0);

  SystemState current = truth.frames.front();
  for (std::size_t k = 1; k <= steps; ++k) {
    SystemState next = predict_state(predictor, current, stats, truth.meta.mask);
    const SystemState& target = truth.frames[k * stride];
    next.time = target.time;
    if (!state_finite(next)) {
      report.failure_step = k;
      break;
    }
    const auto values = row_values(target, next, report, nullptr);
    double step_sum = 0;
    for (std::size_t r = 0; r < sum.size(); ++r) {
      sum[r] += values[r];
      step_sum += values[r];
    }
    report.curve.push_back(values);
    report.step_mean.push_back(values.empty() ? 0.0
                                              : step_sum / static_cast<double>(values.size()));
    res.predicted.frames.push_back(next);
    current = std::move(next);
  }
  report.samples = report.curve.size();
  for (std::size_t r = 0; r < sum.size(); ++r) {
    report.rows[r].value = report.samples ? sum[r] / static_cast<double>(report.samples) : 0.0;
  }
  finish_report(report);
  return res;
}

RolloutResult rollout(FisaleModel& model, const Dataset& data, const std::string& id,
                      std::size_t steps) {
  if (!data.manifest.has_stats) throw std::invalid_argument("manifest has no norm stats");
  return rollout(model_predictor(model), data.load(id), steps, model.config().stride,
                 data.manifest.stats);
}

// ---- training --------------------------------------------------------------

TrainResult train_loop(FisaleModel& model, const Dataset& data, const TrainConfig& cfg,
                       const std::filesystem::path& out, std::ostream* log) {
  if (!data.manifest.has_stats) throw std::invalid_argument("manifest has no norm stats");
  if (cfg.batch == 0) throw std::invalid_argument("batch must be positive");
  const NormStats& stats = data.manifest.stats;
  const auto train = data.load(Split::train);
  if (train.empty()) throw std::invalid_argument("train split is empty");
  const auto val = data.load(Split::val);
  const auto pairs = frame_pairs(train, cfg.task, cfg.stride);
  if (pairs.empty()) throw std::invalid_argument("no training pairs at this stride");
  const auto val_pairs = thin(frame_pairs(val, cfg.task, cfg.stride), 256);

  std::vector<std::vector<SystemState>> normalized(train.size());
  for (std::size_t t = 0; t < train.size(); ++t) {
    for (const auto& f : train[t].frames) normalized[t].push_back(normalize_state(f, stats));
  }

  TrainResult result;
  AdamState adam;
  const AdamConfig adam_cfg{cfg.learning_rate};
  Rng rng(cfg.seed);
  Rng noise_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(pairs.size());
  const bool use_noise = cfg.task == Task::rollout && cfg.noise_variance > 0;

  // The initial parameters are the checkpoint until something better is found.
  save_model(model, cfg.seed, out);
  if (log) *log << "step,epoch,train_loss,val_metric\n";

  auto validate = [&](std::size_t step, std::size_t epoch, double loss) {
    std::string cell;
    if (!val_pairs.empty()) {
      const auto report = evaluate_pairs(model_predictor(model), val, val_pairs, stats,
                                         data.manifest.channels, MetricKind::relative_l2);
      if (!result.validated || report.mean < result.best_validation) {
        result.best_validation = report.mean;
        result.best_step = step;
        result.validated = true;
        save_model(model, cfg.seed, out);
      }
      std::ostringstream os;
      os.precision(9);
      os << report.mean;
      cell = os.str();
    }
    if (log) *log << step << ',' << epoch << ',' << loss << ',' << cell << '\n' << std::flush;
  };

  model.params().zero_grad();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      const double weight = 1.0 / static_cast<double>(end - start);
      double batch_loss = 0;
      for (std::size_t i = start; i < end; ++i) {
        const FramePair& p = pairs[order[i]];
        SystemState input = normalized[p.trajectory][p.input];
        if (use_noise) input = inject_noise(input, cfg.noise_variance, noise_rng());
        Graph graph;
        const ForwardOutput fo = model.forward(graph, input);
        Var loss = compute_loss(fo, normalized[p.trajectory][p.target], cfg.task);
        const double value = loss.value()[0];
        if (!std::isfinite(value)) {
          std::ostringstream ids;
          for (std::size_t j = start; j < end; ++j) {
            const FramePair& q = pairs[order[j]];
            ids << ' ' << train[q.trajectory].id << '@' << q.input;
          }
          std::ofstream dump(out.string() + ".diverged.txt", std::ios::trunc);
          dump << "step " << result.steps << " epoch " << epoch << " loss " << value << "\nbatch"
               << ids.str() << "\n";
          throw NumericError("non-finite training loss at step " + std::to_string(result.steps) +
                             "; batch:" + ids.str());
        }
        batch_loss += value * weight;
        graph.backward(ops::scale(loss, weight));
      }
      optimizer_step(model.params(), adam, adam_cfg);
      ++result.steps;
      result.losses.push_back(batch_loss);
      const bool capped = cfg.max_steps && result.steps >= cfg.max_steps;
      const bool last_in_epoch = end == order.size();
      if ((cfg.validate_every && result.steps % cfg.validate_every == 0) ||
          (!cfg.validate_every && last_in_epoch) || capped) {
        validate(result.steps, epoch, batch_loss);
      } else if (log) {
        *log << result.steps << ',' << epoch << ',' << batch_loss << ",\n";
      }
      if (cfg.checkpoint_every && result.steps % cfg.checkpoint_every == 0) {
        save_model(model, cfg.seed, out.string() + ".latest");
      }
      if (capped) break;
    }
    if (cfg.max_steps && result.steps >= cfg.max_steps) break;
  }
  if (val_pairs.empty() && result.steps > 0) save_model(model, cfg.seed, out);
  return result;
}

// ---- gradient check --------------------------------------------------------

SystemState random_state(const DataLayout& layout, std::array<std::size_t, 3> counts, Rng& rng) {
  SystemState s;
  for (auto d : kDomains) {
    const std::size_t i = static_cast<std::size_t>(d);
    auto& obs = s.domain(d);
    obs.positions = uniform_tensor({counts[i], layout.dim}, 1.5, rng);
    obs.quantities = uniform_tensor({counts[i], layout.channels(d)}, 1.0, rng);
  }
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t c = 0; c < layout.condition_count; ++c) {
    s.conditions.emplace_back("c" + std::to_string(c), u(rng));
  }
  return s;
}

GradCheckReport model_grad_check(const ModelConfig& config, std::uint64_t seed, double tol,
                                 std::array<std::size_t, 3> counts, std::size_t fluid_channels,
                                 std::size_t solid_channels) {
  Rng rng(seed);
  DataLayout layout{config.dim, fluid_channels, solid_channels,
                    config.task == Task::steady_state ? 2u : 0u};
  const SystemState input = random_state(layout, counts, rng);
  FisaleModel model(config, layout, seed);
  const Prediction p = model.predict(input);
  SystemState target = input;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto d : kDomains) {
    auto& obs = target.domain(d);
    obs = p.domain(d);
    for (double& v : obs.positions.storage()) v += u(rng);
    for (double& v : obs.quantities.storage()) v += u(rng);
  }
  const Task loss_task = config.task == Task::rollout ? Task::rollout : Task::single_step;
  return grad_check(
      [&](Graph& g, ParameterStore&) {
        return compute_loss(model.forward(g, input), target, loss_task);
      },
      model.params(), tol);
}

// ---- attention inspection --------------------------------------------------

AttentionDump dump_attention(FisaleModel& model, const SystemState& normalized, std::size_t level,
                             std::size_t pathway, CouplingStep step) {
  const auto& cfg = model.config();
  if (cfg.processor != Processor::pcm) {
    throw std::invalid_argument("attention dumps need the PCM processor");
  }
  if (level >= cfg.levels) {
    throw std::out_of_range("level " + std::to_string(level) +
                            " out of range (L=" + std::to_string(cfg.levels) + ")");
  }
  if (pathway >= cfg.pathways()) {
    throw std::out_of_range("pathway " + std::to_string(pathway) +
                            " out of range (H=" + std::to_string(cfg.pathways()) + ")");
  }
  if (step == CouplingStep::grid) throw std::invalid_argument("the grid step has no attention");

  Graph graph(false);
  ForwardTrace trace;
  model.forward(graph, normalized, &trace);
  const CouplingState& entry = trace.pcm_inputs.at(level).at(pathway);
  const PcmParams& params = model.handles().pathways.at(pathway).pcm.at(level);
  const auto& steps = cfg.ordering.steps;
  const auto at =
      static_cast<std::size_t>(std::find(steps.begin(), steps.end(), step) - steps.begin());
  const CouplingState before =
      pcm_run_steps(graph, model.params(), entry, trace.edges.at(pathway),
                    std::span<const CouplingStep>(steps.data(), at), params);
  auto [q, k] = substep_query_key(graph, model.params(), before, step, params);

  AttentionDump dump;
  dump.logits = attention_logits(q.value(), k.value());
  dump.block = before.g_a.rows();
  dump.column_blocks = {Domain::solid, Domain::fluid, Domain::interface};
  switch (step) {
    case CouplingStep::solid:
      dump.row_blocks = {Domain::solid, Domain::interface};
      break;
    case CouplingStep::fluid:
      dump.row_blocks = {Domain::fluid, Domain::interface};
      break;
    default:
      dump.row_blocks = dump.column_blocks;
      break;
  }
  return dump;
}

void write_attention_csv(const AttentionDump& dump, std::ostream& out) {
  out.precision(17);
  out << "query";
  for (auto b : dump.column_blocks) {
    for (std::size_t j = 0; j < dump.block; ++j) out << ',' << domain_name(b) << ':' << j;
  }
  out << '\n';
  std::size_t r = 0;
  for (auto b : dump.row_blocks) {
    for (std::size_t i = 0; i < dump.block; ++i, ++r) {
      out << domain_name(b) << ':' << i;
      for (std::size_t c = 0; c < dump.logits.cols(); ++c) out << ',' << dump.logits(r, c);
      out << '\n';
    }
  }
}

// ---- dataset generation ----------------------------------------------------

Manifest generate_piston_dataset(const std::filesystem::path& dir,
                                 const PistonDatasetOptions& options) {
  if (options.trajectories == 0) throw std::invalid_argument("need at least one trajectory");
  if (options.ood_fraction < 0 || options.ood_fraction > 1) {
    throw std::invalid_argument("ood fraction must lie in [0, 1]");
  }
  std::filesystem::create_directories(dir);
  const auto n = options.trajectories;
  const auto n_ood = static_cast<std::size_t>(std::llround(options.ood_fraction * n));
  Rng rng(options.seed);
  for (std::size_t i = 0; i < n; ++i) {
    const bool ood = i >= n - n_ood;
    const PistonParams params = sample_piston_params(options.base, options.ranges, ood, rng);
    Trajectory t = simulate_piston(params, i);
    char id[32];
    std::snprintf(id, sizeof id, "piston_%05zu", i);
    t.id = id;
    t.meta.ood = ood;
    save_trajectory(t, dir);
  }
  Manifest m = build_manifest(dir, {8, 1, 1}, options.seed);
  write_manifest(m, dir / kManifestName);
  return m;
}

Manifest generate_potential_dataset(const std::filesystem::path& dir,
                                    const PotentialDatasetOptions& options) {
  if (options.samples == 0) throw std::invalid_argument("need at least one sample");
  std::filesystem::create_directories(dir);
  Rng rng(options.seed);
  std::uniform_real_distribution<double> speed(options.speed.first, options.speed.second);
  std::uniform_real_distribution<double> alpha(options.alpha.first, options.alpha.second);
  for (std::size_t i = 0; i < options.samples; ++i) {
    PotentialParams p = options.base;
    p.U = speed(rng);
    p.alpha = alpha(rng);
    Trajectory t = potential_trajectory(p, rng());
    char id[32];
    std::snprintf(id, sizeof id, "potential_%05zu", i);
    t.id = id;
    save_trajectory(t, dir);
  }
  Manifest m = build_manifest(dir, {8, 1, 1}, options.seed);
  write_manifest(m, dir / kManifestName);
  return m;
}

}  // namespace fisale
