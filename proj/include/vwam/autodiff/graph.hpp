#pragma once

// Tape-based reverse-mode differentiation.
//
// Nodes are appended in evaluation order, so the tape is already a
// topological order and backward() is a single reverse sweep. A Graph built
// with tracing disabled stores values only and cannot be differentiated.

#include <cstddef>
#include <functional>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vwam/autodiff/tensor.hpp"

namespace vwam::ad {

using NodeId = std::size_t;

enum class OpTag {
  kLeaf,
  kConv2d,
  kRelu,
  kMaxPool2d,
  kAdaptiveAvgPool,
  kLinear,
  kMatmul,
  kAdd,
  kMul,
  kScale,
  kMean,
  kSum,
  kDot,
  kBilinearSample,
  kInverseFft2,
  kComplexMagnitude,
  kChannelAffine,
  kChannelMix,
  kReshape,
  kConcat,
};

std::string_view op_name(OpTag op);

template <typename T>
class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
class Var {
 public:
  Var() = default;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph<T>& graph() const { return *graph_; }
  NodeId id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph<T>;
  Var(Graph<T>* graph, NodeId id) : graph_(graph), id_(id) {}

  Graph<T>* graph_ = nullptr;
  NodeId id_ = 0;
};

template <typename T>
class Gradients {
 public:
  bool contains(const Var<T>& v) const { return grads_.count(v.id()) != 0; }

  // Zero tensor for parameters the output does not depend on.
  const Tensor<T>& operator[](const Var<T>& v) const {
    auto it = grads_.find(v.id());
    if (it == grads_.end()) throw Error("no gradient recorded for node " + std::to_string(v.id()));
    return it->second;
  }

 private:
  friend class Graph<T>;
  std::unordered_map<NodeId, Tensor<T>> grads_;
};

template <typename T>
class Graph {
 public:
  // grad_in[i] is null when input i does not need a gradient. Buffers are
  // zero-initialized and must be accumulated into, never overwritten.
  using BackwardFn = std::function<void(std::span<const T> grad_out, std::span<T* const> grad_in)>;

  explicit Graph(bool tracing = true) : tracing_(tracing) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool tracing() const { return tracing_; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(Tensor<T> value) {
    require_finite(value);
    return push(OpTag::kLeaf, {}, std::move(value), nullptr, false);
  }

  // Leaf whose gradient backward() reports.
  Var<T> parameter(Tensor<T> value) {
    if (!tracing_) throw Error("parameters require a tracing graph");
    require_finite(value);
    return push(OpTag::kLeaf, {}, std::move(value), nullptr, true);
  }

  const Tensor<T>& value(NodeId id) const { return nodes_.at(id).value; }
  OpTag op(NodeId id) const { return nodes_.at(id).op; }

  // Records an operator result. Called by the operator library.
  Var<T> record(OpTag op, std::vector<NodeId> inputs, Tensor<T> value, BackwardFn backward) {
    bool needs = false;
    if (tracing_) {
      for (NodeId in : inputs) needs = needs || nodes_.at(in).requires_grad;
    }
    return push(op, std::move(inputs), std::move(value), needs ? std::move(backward) : nullptr, needs);
  }

  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }

  // d(output)/d(parameter) for every parameter leaf. The tape is consumed.
  Gradients<T> backward(const Var<T>& output) {
    if (!tracing_) throw Error("backward() on a non-tracing graph");
    if (consumed_) throw Error("backward() called twice on the same graph");
    if (output.graph_ != this) throw Error("backward() output belongs to another graph");
    if (nodes_.at(output.id()).value.size() != 1) {
      throw ShapeError("backward() needs a scalar output, got " +
                       shape_str(nodes_[output.id()].value.shape()));
    }
    consumed_ = true;

    std::vector<std::vector<T>> grads(output.id() + 1);
    grads[output.id()].assign(1, T(1));
    std::vector<T*> grad_in;
    for (NodeId i = output.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.backward || grads[i].empty()) continue;
      grad_in.assign(node.inputs.size(), nullptr);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const NodeId in = node.inputs[k];
        if (!nodes_[in].requires_grad) continue;
        if (grads[in].empty()) grads[in].assign(nodes_[in].value.size(), T(0));
        grad_in[k] = grads[in].data();
      }
      node.backward(std::span<const T>(grads[i]), std::span<T* const>(grad_in));
      node.backward = nullptr;
      if (i != output.id()) std::vector<T>().swap(grads[i]);
    }

    Gradients<T> result;
    for (NodeId i = 0; i < nodes_.size(); ++i) {
      const Node& node = nodes_[i];
      if (node.op != OpTag::kLeaf || !node.requires_grad) continue;
      if (i < grads.size() && !grads[i].empty()) {
        result.grads_.emplace(i, Tensor<T>(node.value.shape(), std::move(grads[i])));
      } else {
        result.grads_.emplace(i, Tensor<T>::zeros(node.value.shape()));
      }
    }
    return result;
  }

 private:
  struct Node {
    OpTag op;
    std::vector<NodeId> inputs;
    Tensor<T> value;
    BackwardFn backward;
    bool requires_grad;
  };

  static void require_finite(const Tensor<T>& value) {
    if (!all_finite<T>(value.data())) throw NumericError("leaf tensor contains a non-finite value");
  }

  Var<T> push(OpTag op, std::vector<NodeId> inputs, Tensor<T> value, BackwardFn backward,
              bool requires_grad) {
    if (consumed_) throw Error("graph already consumed by backward()");
    nodes_.push_back(Node{op, std::move(inputs), std::move(value), std::move(backward), requires_grad});
    return Var<T>(this, nodes_.size() - 1);
  }

  bool tracing_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph_->value(id_);
}

}  // namespace vwam::ad
