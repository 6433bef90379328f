#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fisale/tensor.hpp"

namespace fisale {

/// Named trainable arrays with gradients accumulated until reset.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
  };

  std::size_t add(std::string name, Tensor value, bool trainable = true);
  std::size_t index(std::string_view name) const;
  bool contains(std::string_view name) const;

  Entry& at(std::size_t i) { return entries_.at(i); }
  const Entry& at(std::size_t i) const { return entries_.at(i); }
  Entry& at(std::string_view name) { return entries_.at(index(name)); }
  const Entry& at(std::string_view name) const { return entries_.at(index(name)); }

  std::size_t size() const noexcept { return entries_.size(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  void zero_grad();
  /// Number of trainable scalars.
  std::size_t parameter_count() const;
  /// Trainable scalars whose name starts with `prefix`.
  std::size_t parameter_count(std::string_view prefix) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Graph;

/// Handle to a value recorded in a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const noexcept { return graph != nullptr && id >= 0; }
};

/// Tape of primitive operations in execution order.
///
/// Reverse replay propagates adjoints to every recorded input that requires a
/// gradient and accumulates them into the owning ParameterStore entries.
class Graph {
 public:
  /// Receives the graph, the id of the node being replayed and its adjoint.
  using BackwardFn = std::function<void(Graph&, int self, const Tensor& out_grad)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const noexcept { return record_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  Var constant(Tensor value);
  /// Leaf bound to a store entry. Repeated calls within one graph share the node.
  Var parameter(ParameterStore& store, std::size_t index);

  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id); }

  /// Records an op output. `backward` is kept only when recording and some parent needs it.
  Var push(Tensor value, std::span<const Var> parents, BackwardFn backward);
  Var push(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
    return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
  }

  /// Adds `delta` into the adjoint of node `id` (no-op when it needs no gradient).
  void accumulate(int id, const Tensor& delta);
  /// Mutable adjoint of node `id`, allocated on first use.
  Tensor& grad(int id);

  /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    ParameterStore* store = nullptr;
    std::size_t param_index = 0;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const ParameterStore*, std::vector<int>> param_nodes_;
};

using Rng = std::mt19937_64;

/// Uniform(-bound, bound) initialised tensor.
Tensor uniform_tensor(Shape shape, double bound, Rng& rng);

/// Per-parameter outcome of a finite-difference comparison.
struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  double worst() const;
  bool passed() const { return worst() <= tolerance; }
};

/// Builds a scalar loss in a fresh graph from the current store values.
using LossBuilder = std::function<Var(Graph&, ParameterStore&)>;

/// Compares reverse-mode gradients against fourth-order central differences
/// for every trainable entry. Relative error is
/// |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
GradCheckReport grad_check(const LossBuilder& build, ParameterStore& params, double tol,
                           double step = 1e-3);

}  // namespace fisale
