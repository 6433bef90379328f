#include "fisale/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "fisale/ops.hpp"

namespace fisale {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': not an integer: " + value);
  }
  if (pos != value.size() || v < 0) {
    throw std::invalid_argument("config key '" + key + "': not a non-negative integer: " + value);
  }
  return static_cast<std::size_t>(v);
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': not a number: " + value);
  }
  if (pos != value.size() || !std::isfinite(v)) {
    throw std::invalid_argument("config key '" + key + "': not a finite number: " + value);
  }
  return v;
}

std::string join_counts(const std::vector<std::size_t>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(v[i]);
  }
  return out;
}

Tensor stacked_target(const DomainObservation& obs) {
  const std::size_t n = obs.count(), d = obs.dim(), c = obs.channels();
  Tensor out({n, d + c});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out(i, j) = obs.positions(i, j);
    for (std::size_t j = 0; j < c; ++j) out(i, d + j) = obs.quantities(i, j);
  }
  return out;
}

}  // namespace

const char* task_name(Task t) {
  switch (t) {
    case Task::single_step:
      return "single_step";
    case Task::rollout:
      return "rollout";
    case Task::steady_state:
      return "steady_state";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  for (auto t : {Task::single_step, Task::rollout, Task::steady_state}) {
    if (s == task_name(t)) return t;
  }
  throw std::invalid_argument("unknown task: '" + s + "'");
}

const char* processor_name(Processor p) { return p == Processor::pcm ? "pcm" : "simple_attention"; }

Processor parse_processor(const std::string& s) {
  if (s == "pcm") return Processor::pcm;
  if (s == "simple_attention") return Processor::simple_attention;
  throw std::invalid_argument("unknown processor: '" + s + "'");
}

std::size_t ModelConfig::total_channels() const {
  return std::accumulate(channels.begin(), channels.end(), std::size_t{0});
}

void ModelConfig::validate() const {
  if (dim < 1 || dim > 3) throw std::invalid_argument("d must be 1, 2 or 3");
  if (levels < 1) throw std::invalid_argument("L must be at least 1");
  if (grid_shapes.empty()) throw std::invalid_argument("H must be at least 1");
  if (channels.size() != grid_shapes.size()) {
    throw std::invalid_argument("M and D must list one entry per pathway");
  }
  for (std::size_t h = 0; h < grid_shapes.size(); ++h) {
    const auto& shape = grid_shapes[h];
    if (shape.size() != dim) {
      throw std::invalid_argument("pathway " + std::to_string(h) + " grid has " +
                                  std::to_string(shape.size()) + " axes, d is " +
                                  std::to_string(dim));
    }
    std::size_t m = 1;
    for (auto c : shape) {
      if (c < 2) throw std::invalid_argument("grid axis counts must be >= 2");
      m *= c;
    }
    if (k < 1 || k >= m) {
      throw std::invalid_argument("k must satisfy 1 <= k < M (M=" + std::to_string(m) + ")");
    }
    if (channels[h] < 1) throw std::invalid_argument("channel counts must be positive");
  }
  if (stride < 1) throw std::invalid_argument("stride must be at least 1");
  if (noise_variance < 0) throw std::invalid_argument("noise_variance must be >= 0");
  if (ffn_ratio < 1) throw std::invalid_argument("ffn_ratio must be at least 1");
  ordering.validate();
}

ModelConfig ModelConfig::defaults_for(std::size_t dim) {
  ModelConfig cfg;
  cfg.dim = dim;
  if (dim == 3) {
    cfg.levels = 3;
    cfg.grid_shapes = {{5, 5, 5}, {4, 4, 4}};
    cfg.channels = {96, 128};
    cfg.task = Task::steady_state;
  } else if (dim == 1) {
    cfg.grid_shapes = {{16}, {8}};
  }
  return cfg;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig cfg;
  cfg.dim = 2;
  cfg.levels = 1;
  cfg.grid_shapes = {{4, 4}, {2, 2}};
  cfg.channels = {8, 8};
  cfg.k = 3;
  cfg.stride = 1;
  return cfg;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    }
    if (!out.emplace(key, value).second) {
      throw std::invalid_argument("config key '" + key + "' given twice");
    }
  }
  return out;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str());
}

ModelConfig parse_model_config(const std::map<std::string, std::string>& entries,
                               const std::vector<std::string>& extra_keys) {
  ModelConfig cfg;
  if (auto it = entries.find("d"); it != entries.end()) {
    cfg = ModelConfig::defaults_for(parse_count("d", it->second));
  }
  std::size_t pathways = 0;
  for (const auto& [key, value] : entries) {
    if (key == "d") continue;
    if (key == "H") {
      pathways = parse_count(key, value);
    } else if (key == "L") {
      cfg.levels = parse_count(key, value);
    } else if (key == "M") {
      cfg.grid_shapes.clear();
      for (const auto& item : split(value, ',')) {
        std::vector<std::size_t> shape;
        for (const auto& c : split(item, 'x')) shape.push_back(parse_count(key, c));
        cfg.grid_shapes.push_back(shape);
      }
    } else if (key == "D") {
      cfg.channels.clear();
      for (const auto& c : split(value, ',')) cfg.channels.push_back(parse_count(key, c));
    } else if (key == "k") {
      cfg.k = parse_count(key, value);
    } else if (key == "ordering") {
      cfg.ordering = OrderingSpec::parse(value);
    } else if (key == "task") {
      cfg.task = parse_task(value);
    } else if (key == "stride") {
      cfg.stride = parse_count(key, value);
    } else if (key == "noise_variance") {
      cfg.noise_variance = parse_real(key, value);
    } else if (key == "processor") {
      cfg.processor = parse_processor(value);
    } else if (key == "ffn_ratio") {
      cfg.ffn_ratio = parse_count(key, value);
    } else if (key == "pcm_dt") {
      cfg.pcm_dt = parse_real(key, value);
    } else if (std::find(extra_keys.begin(), extra_keys.end(), key) == extra_keys.end()) {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  if (pathways != 0 && (cfg.grid_shapes.size() != pathways || cfg.channels.size() != pathways)) {
    throw std::invalid_argument("H does not match the number of M / D entries");
  }
  cfg.validate();
  return cfg;
}

std::string format_model_config(const ModelConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "d = " << cfg.dim << "\n";
  out << "H = " << cfg.pathways() << "\n";
  out << "L = " << cfg.levels << "\n";
  std::string shapes;
  for (std::size_t h = 0; h < cfg.grid_shapes.size(); ++h) {
    if (h) shapes += ',';
    shapes += join_counts(cfg.grid_shapes[h], 'x');
  }
  out << "M = " << shapes << "\n";
  out << "D = " << join_counts(cfg.channels, ',') << "\n";
  out << "k = " << cfg.k << "\n";
  out << "ordering = " << cfg.ordering.to_string() << "\n";
  out << "task = " << task_name(cfg.task) << "\n";
  out << "stride = " << cfg.stride << "\n";
  out << "noise_variance = " << cfg.noise_variance << "\n";
  out << "processor = " << processor_name(cfg.processor) << "\n";
  out << "ffn_ratio = " << cfg.ffn_ratio << "\n";
  out << "pcm_dt = " << cfg.pcm_dt << "\n";
  return out.str();
}

std::size_t DataLayout::channels(Domain d) const {
  switch (d) {
    case Domain::fluid:
      return fluid_channels;
    case Domain::solid:
      return solid_channels;
    case Domain::interface:
      return interface_channels();
  }
  return 0;
}

DataLayout DataLayout::of(const SystemState& state) {
  state.validate();
  return DataLayout{state.fluid.dim(), state.fluid.channels(), state.solid.channels(),
                    state.conditions.size()};
}

DomainObservation& Prediction::domain(Domain d) {
  return d == Domain::fluid ? fluid : d == Domain::solid ? solid : interface;
}

const DomainObservation& Prediction::domain(Domain d) const {
  return d == Domain::fluid ? fluid : d == Domain::solid ? solid : interface;
}

Prediction ForwardOutput::prediction() const {
  Prediction p;
  for (auto dom : kDomains) {
    const Tensor& out = outputs[static_cast<std::size_t>(dom)].value();
    if (dim == 0 || out.cols() < dim) throw DimensionError("prediction: bad output width");
    const std::size_t n = out.rows(), c = out.cols() - dim;
    auto& obs = p.domain(dom);
    obs.positions = Tensor({n, dim});
    obs.quantities = Tensor({n, c});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim; ++j) obs.positions(i, j) = out(i, j);
      for (std::size_t j = 0; j < c; ++j) obs.quantities(i, j) = out(i, dim + j);
    }
  }
  return p;
}

FisaleModel::FisaleModel(ModelConfig config, DataLayout layout, std::uint64_t seed)
    : config_(std::move(config)), layout_(layout) {
  config_.validate();
  if (layout_.dim != config_.dim) {
    throw DimensionError("data dimension " + std::to_string(layout_.dim) +
                         " differs from model d=" + std::to_string(config_.dim));
  }
  Rng rng(seed);
  const bool conditioned = config_.task == Task::steady_state;
  const std::size_t cond = conditioned ? layout_.condition_count : 0;

  for (std::size_t h = 0; h < config_.pathways(); ++h) {
    const std::string pre = "pathway" + std::to_string(h);
    const std::size_t width = config_.channels[h];
    grids_.push_back(seed_regular_grid(config_.grid_shapes[h]));
    const std::size_t m = grids_.back().size();

    PathwayParams p;
    p.init = make_latent_init(store_, pre + ".grid", config_.dim, width, rng);
    for (auto dom : kDomains) {
      const std::size_t in = config_.dim + layout_.channels(dom) + cond;
      p.embed[static_cast<std::size_t>(dom)] =
          make_linear(store_, pre + ".embed." + domain_name(dom), in, width, rng);
    }
    for (std::size_t l = 0; l < config_.levels; ++l) {
      const std::string lp = pre + ".level" + std::to_string(l);
      std::array<EncodeParams, 3> enc;
      for (auto dom : kDomains) {
        enc[static_cast<std::size_t>(dom)] =
            make_encode(store_, lp + ".encode." + domain_name(dom), width, rng);
      }
      p.encode.push_back(enc);
      if (config_.processor == Processor::pcm) {
        PcmParams pcm = make_pcm(store_, lp + ".pcm", width, m, config_.k, rng);
        pcm.dt = config_.pcm_dt;
        p.pcm.push_back(pcm);
      } else {
        p.simple.push_back(make_simple_attention(store_, lp + ".simple", width,
                                                 simple_variant_hidden(width, m, config_.k), rng));
      }
    }
    handles_.pathways.push_back(std::move(p));
  }

  const std::size_t total = config_.total_channels();
  for (std::size_t l = 0; l < config_.levels; ++l) {
    std::array<FfnParams, 3> agg;
    for (auto dom : kDomains) {
      agg[static_cast<std::size_t>(dom)] =
          make_ffn(store_, "level" + std::to_string(l) + ".aggregate." + domain_name(dom), total,
                   config_.ffn_ratio * total, total, rng);
    }
    handles_.aggregate.push_back(agg);
  }
  for (auto dom : kDomains) {
    handles_.heads[static_cast<std::size_t>(dom)] =
        make_linear(store_, std::string("head.") + domain_name(dom), total,
                    config_.dim + layout_.channels(dom), rng);
  }
}

std::vector<std::array<Var, 3>> FisaleModel::embed_inputs(Graph& graph,
                                                          const SystemState& normalized) {
  normalized.validate();
  const bool conditioned = config_.task == Task::steady_state;
  const std::vector<double> cond = normalized.condition_values();
  if (normalized.fluid.dim() != layout_.dim) throw DimensionError("embed: dimension mismatch");
  if (conditioned && cond.size() != layout_.condition_count) {
    throw DimensionError("embed: expected " + std::to_string(layout_.condition_count) +
                         " conditions, got " + std::to_string(cond.size()));
  }
  std::array<Var, 3> inputs;
  for (auto dom : kDomains) {
    const auto& obs = normalized.domain(dom);
    if (obs.channels() != layout_.channels(dom)) {
      throw DimensionError(std::string("embed: ") + domain_name(dom) + " has " +
                           std::to_string(obs.channels()) + " channels, model expects " +
                           std::to_string(layout_.channels(dom)));
    }
    Tensor in = stacked_target(obs);
    if (conditioned && !cond.empty()) {
      const std::size_t base = in.cols();
      Tensor wide({in.rows(), base + cond.size()});
      for (std::size_t i = 0; i < in.rows(); ++i) {
        for (std::size_t j = 0; j < base; ++j) wide(i, j) = in(i, j);
        for (std::size_t j = 0; j < cond.size(); ++j) wide(i, base + j) = cond[j];
      }
      in = std::move(wide);
    }
    inputs[static_cast<std::size_t>(dom)] = graph.constant(std::move(in));
  }
  std::vector<std::array<Var, 3>> out;
  for (const auto& p : handles_.pathways) {
    std::array<Var, 3> x;
    for (std::size_t i = 0; i < 3; ++i) x[i] = apply_linear(graph, store_, p.embed[i], inputs[i]);
    out.push_back(x);
  }
  return out;
}

ForwardOutput FisaleModel::forward(Graph& graph, const SystemState& normalized,
                                   ForwardTrace* trace) {
  const std::size_t H = config_.pathways();
  std::vector<LatentGrid> grids;
  for (std::size_t h = 0; h < H; ++h) {
    grids.push_back(init_latent_grid(graph, store_, grids_[h], normalized.fluid.positions,
                                     normalized.solid.positions, normalized.interface.positions,
                                     handles_.pathways[h].init, config_.k));
  }
  if (trace) {
    trace->pcm_inputs.assign(config_.levels, {});
    trace->edges.clear();
    for (const auto& g : grids) trace->edges.push_back(g.edges);
  }

  auto x = embed_inputs(graph, normalized);
  constexpr auto F = static_cast<std::size_t>(Domain::fluid);
  constexpr auto S = static_cast<std::size_t>(Domain::solid);
  constexpr auto B = static_cast<std::size_t>(Domain::interface);

  for (std::size_t l = 0; l < config_.levels; ++l) {
    for (std::size_t h = 0; h < H; ++h) {
      const auto& p = handles_.pathways[h];
      std::array<Encoded, 3> enc;
      for (std::size_t i = 0; i < 3; ++i) {
        enc[i] = encode_domain(graph, store_, x[h][i], grids[h].coords, p.encode[l][i]);
      }
      CouplingState state{grids[h].coords, enc[S].projected, enc[F].projected, enc[B].projected};
      if (trace) trace->pcm_inputs[l].push_back(state);
      CouplingState next =
          config_.processor == Processor::pcm
              ? pcm_forward(graph, store_, state, grids[h].edges, config_.ordering, p.pcm[l])
              : simple_attention_forward(graph, store_, state, p.simple[l]);
      // The grid keeps its deformation into the next level; edges stay fixed.
      grids[h].coords = next.g_a;
      const std::array<Var, 3> processed{next.p_f, next.p_s, next.p_b};
      for (std::size_t i = 0; i < 3; ++i) {
        x[h][i] = ops::add(x[h][i], decode_domain(processed[i], enc[i].weights));
      }
    }
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<Var> per_path;
      for (std::size_t h = 0; h < H; ++h) per_path.push_back(x[h][i]);
      auto fused = aggregate_pathways(graph, store_, per_path, handles_.aggregate[l][i]);
      for (std::size_t h = 0; h < H; ++h) x[h][i] = ops::add(x[h][i], fused[h]);
    }
  }

  ForwardOutput out;
  out.dim = config_.dim;
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<Var> per_path;
    for (std::size_t h = 0; h < H; ++h) per_path.push_back(x[h][i]);
    Var joined = H == 1 ? per_path[0] : ops::concat_cols(per_path);
    out.outputs[i] = apply_linear(graph, store_, handles_.heads[i], joined);
  }
  return out;
}

Prediction FisaleModel::predict(const SystemState& normalized) {
  Graph graph(false);
  return forward(graph, normalized).prediction();
}

Var compute_loss(const ForwardOutput& pred, const SystemState& target, Task task) {
  Var total;
  for (auto dom : kDomains) {
    const auto i = static_cast<std::size_t>(dom);
    Var out = pred.outputs[i];
    Tensor t = stacked_target(target.domain(dom));
    if (out.shape() != t.shape()) {
      throw DimensionError(std::string("loss: ") + domain_name(dom) + " prediction " +
                           shape_string(out.shape()) + " vs target " + shape_string(t.shape()));
    }
    double norm = 0;
    for (double v : t.data()) norm += v * v;
    norm = std::sqrt(norm);
    Tensor negated = t;
    for (double& v : negated.storage()) v = -v;
    Var diff = ops::add_constant(out, negated);
    Var sq = ops::sum(ops::square(diff));
    Var term;
    if (task == Task::rollout) {
      term = ops::sqrt(ops::scale(sq, 1.0 / static_cast<double>(t.rows())));
    } else {
      // Zero targets fall back to the absolute L2 norm.
      term = ops::scale(ops::sqrt(sq), norm > 0 ? 1.0 / norm : 1.0);
    }
    total = total.valid() ? ops::add(total, term) : term;
  }
  return ops::scale(total, 1.0 / 3.0);
}

SystemState inject_noise(const SystemState& state, double variance, std::uint64_t seed) {
  if (variance < 0) throw std::invalid_argument("noise variance must be non-negative");
  if (variance == 0) return state;
  SystemState out = state;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(variance));
  for (auto dom : kDomains) {
    auto& obs = out.domain(dom);
    for (double& v : obs.positions.storage()) v += normal(rng);
    for (double& v : obs.quantities.storage()) v += normal(rng);
  }
  return out;
}

const std::vector<bool>& BoundaryMask::domain(Domain d) const {
  return d == Domain::fluid ? fluid : d == Domain::solid ? solid : interface;
}

std::vector<bool>& BoundaryMask::domain(Domain d) {
  return d == Domain::fluid ? fluid : d == Domain::solid ? solid : interface;
}

Prediction apply_boundary_mask(const Prediction& pred, const SystemState& input,
                               const BoundaryMask& mask) {
  Prediction out = pred;
  for (auto dom : kDomains) {
    const auto& flags = mask.domain(dom);
    if (flags.empty()) continue;
    auto& target = out.domain(dom).positions;
    const auto& source = input.domain(dom).positions;
    if (flags.size() != target.rows() || source.rows() != target.rows()) {
      throw DimensionError(std::string("boundary mask for ") + domain_name(dom) + " has " +
                           std::to_string(flags.size()) + " entries for " +
                           std::to_string(target.rows()) + " points");
    }
    if (source.cols() != target.cols()) throw DimensionError("boundary mask: dimension mismatch");
    for (std::size_t i = 0; i < flags.size(); ++i) {
      if (!flags[i]) continue;
      for (std::size_t j = 0; j < target.cols(); ++j) target(i, j) = source(i, j);
    }
  }
  return out;
}

}  // namespace fisale
