// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "numerics/tensor.hpp"

namespace cl4ac::nn {

// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t id = 0;
};

// Records executed operations so their adjoints can be replayed in exact
// reverse order. A tape supports one backward pass.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor<T> value) { return push(std::move(value), nullptr, false); }

  // Registers a parameter as a leaf. Repeated calls return the same handle.
  Var param(Parameter<T>& p) {
    auto it = param_index_.find(&p);
    if (it != param_index_.end()) return Var{it->second};
    Var v = push(Tensor<T>(), &p, true);
    param_index_.emplace(&p, v.id);
    return v;
  }

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.param ? n.param->value() : n.value;
  }
  const Shape& shape(Var v) const { return value(v).shape(); }

  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool has_grad(Var v) const { return nodes_.at(v.id).has_grad; }

  // Gradient buffer of a node, allocated (zero) on first use.
  Tensor<T>& grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (!n.has_grad) {
      n.grad = Tensor<T>(value(v).shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  // Appends an op output. `backward` runs only when the output received a
  // gradient; it reads grad(out) and accumulates into its inputs.
  Var record(Tensor<T> out, bool requires_grad, BackwardFn backward) {
    Var v = push(std::move(out), nullptr, requires_grad);
    if (requires_grad) ops_.push_back(Op{v.id, std::move(backward)});
    return v;
  }

  // Seeds d(loss)/d(loss) = 1 and replays the recorded adjoints in reverse.
  // Parameter leaves add their node gradient into Parameter::grad().
  void backward(Var loss) {
    if (consumed_) throw ContractError("tape already consumed by a backward pass");
    if (value(loss).size() != 1) {
      throw ContractError("backward needs a scalar loss, got shape " + shape_str(shape(loss)));
    }
    consumed_ = true;
    if (!requires_grad(loss)) return;
    grad(loss)[0] = T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (!nodes_[it->out].has_grad) continue;
      it->fn(*this, Var{it->out});
    }
    for (Node& n : nodes_) {
      if (!n.param || !n.has_grad) continue;
      auto dst = n.param->grad().data();
      auto src = n.grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }

  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Parameter<T>* param = nullptr;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
  };
  struct Op {
    std::uint32_t out;
    BackwardFn fn;
  };

  Var push(Tensor<T> value, Parameter<T>* p, bool requires_grad) {
    if (consumed_) throw ContractError("cannot record on a consumed tape");
    nodes_.push_back(Node{std::move(value), p, {}, false, requires_grad});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  std::deque<Node> nodes_;  // stable references across push_back
  std::vector<Op> ops_;
  std::unordered_map<const Parameter<T>*, std::uint32_t> param_index_;
  bool consumed_ = false;
};

}  // namespace cl4ac::nn
