#include "fisale/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace fisale {

std::size_t ParameterStore::add(std::string name, Tensor value, bool trainable) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  const std::size_t i = entries_.size();
  Tensor grad(value.shape());
  index_.emplace(name, i);
  entries_.push_back(Entry{std::move(name), std::move(value), std::move(grad), trainable});
  return i;
}

std::size_t ParameterStore::index(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return it->second;
}

bool ParameterStore::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

std::size_t ParameterStore::parameter_count() const { return parameter_count(""); }

std::size_t ParameterStore::parameter_count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable && std::string_view(e.name).starts_with(prefix)) n += e.value.size();
  }
  return n;
}

const Tensor& Var::value() const { return graph->value(id); }

Var Graph::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::parameter(ParameterStore& store, std::size_t index) {
  auto& cache = param_nodes_[&store];
  if (cache.size() < store.size()) cache.resize(store.size(), -1);
  if (cache[index] >= 0) return Var{this, cache[index]};

  const auto& entry = store.at(index);
  Node node;
  node.value = entry.value;
  node.requires_grad = record_ && entry.trainable;
  node.store = &store;
  node.param_index = index;
  nodes_.push_back(std::move(node));
  cache[index] = static_cast<int>(nodes_.size() - 1);
  return Var{this, cache[index]};
}

Var Graph::push(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError("non-finite value produced in forward pass");
  Node node;
  node.value = std::move(value);
  if (record_) {
    node.requires_grad =
        std::any_of(parents.begin(), parents.end(), [this](Var p) { return requires_grad(p.id); });
    if (node.requires_grad) node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Tensor& Graph::grad(int id) {
  auto& node = nodes_[static_cast<std::size_t>(id)];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Graph::accumulate(int id, const Tensor& delta) {
  if (!requires_grad(id)) return;
  auto& g = grad(id);
  if (g.size() != delta.size()) throw DimensionError("gradient shape mismatch");
  auto dst = g.data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Graph::backward(Var loss) {
  if (nodes_.empty()) throw std::logic_error("backward on an empty graph");
  if (loss.graph != this) throw std::logic_error("loss belongs to another graph");
  if (loss.value().size() != 1) throw DimensionError("backward requires a scalar loss");
  if (!record_) throw std::logic_error("backward on a non-recording graph");

  grad(loss.id).fill(1.0);
  for (int id = loss.id; id >= 0; --id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.backward) {
      // The closure may append to other nodes' grads but never to its own.
      const Tensor out_grad = node.grad;
      node.backward(*this, id, out_grad);
    } else if (node.store != nullptr) {
      auto& entry = node.store->at(node.param_index);
      auto dst = entry.grad.data();
      auto src = node.grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_relative_error);
  return w;
}

GradCheckReport grad_check(const LossBuilder& build, ParameterStore& params, double tol,
                           double step) {
  params.zero_grad();
  {
    Graph graph;
    Var loss = build(graph, params);
    if (!std::isfinite(loss.value()[0])) throw NumericError("grad_check: non-finite loss");
    graph.backward(loss);
  }

  auto evaluate = [&]() {
    Graph graph(false);
    const double v = build(graph, params).value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
    return v;
  };

  GradCheckReport report;
  report.tolerance = tol;
  for (auto& entry : params) {
    if (!entry.trainable) continue;
    GradCheckEntry result;
    result.name = entry.name;
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      const double original = entry.value[i];
      auto at = [&](double offset) {
        entry.value[i] = original + offset;
        return evaluate();
      };
      // Fourth-order central stencil; lets the step stay large enough that
      // f64 roundoff in the loss does not swamp small gradient entries.
      const double numeric =
          (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step);
      entry.value[i] = original;
      const double analytic = entry.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double err = std::abs(analytic - numeric) / denom;
      if (i == 0 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_index = i;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
    report.entries.push_back(std::move(result));
  }
  return report;
}

}  // namespace fisale
