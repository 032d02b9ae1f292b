#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "catsnn/tensor.hpp"

namespace catsnn {

class Graph;

/// Handle to a node recorded on a Graph. Cheap to copy; valid while the
/// owning graph is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;
  std::size_t id() const noexcept { return id_; }
  Graph* graph() const noexcept { return graph_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Backward rule of a recorded op. `grad_in[i]` is null when input i does not
/// need a gradient; otherwise the rule must ADD its contribution into it.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

/// Append-only tape of operations. Node ids are assigned in creation order,
/// so the tape is topologically sorted by construction and a single reverse
/// sweep visits every node once.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  Var record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse sweep seeded with d(root)/d(root) = 1. Root must be scalar.
  void backward(const Var& root);

  /// Gradient accumulated on `v` by the last backward(), or null.
  const Tensor* grad(const Var& v) const;
  Tensor grad_or_zeros(const Var& v) const;

  /// With grad disabled, ops record values only (inference mode).
  void set_grad_enabled(bool enabled) noexcept { grad_enabled_ = enabled; }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

 private:
  struct Node {
    const char* op = "leaf";
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::optional<Tensor> grad;
  };

  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

}  // namespace catsnn
