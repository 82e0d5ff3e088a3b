#pragma once

#include <unordered_map>
#include <vector>

#include "semisup/tensor/primitives.hpp"

namespace semisup {

// Record of executed primitives for reverse-mode differentiation. Node ids are
// append order; an op node only ever references earlier ids, and backward()
// replays nodes in exact reverse execution order. Leaves marked stop-gradient
// take part in the forward value but receive no gradient and block flow
// upstream.
template <typename T>
class Tape {
 public:
  int leaf(Tensor<T> value, bool stop_gradient = false);
  int constant(Tensor<T> value) { return leaf(std::move(value), true); }

  int apply(PrimOp op, std::vector<int> inputs, PrimAttrs attrs = {});

  const Tensor<T>& value(int id) const;
  bool is_leaf(int id) const { return node(id).is_leaf; }
  bool requires_grad(int id) const { return node(id).needs_grad; }
  std::size_t node_count() const { return nodes_.size(); }

  // Gradient of a scalar output with respect to every non-stop leaf it
  // depends on (absent key == zero gradient).
  std::unordered_map<int, Tensor<T>> backward(int output_id) const;

 private:
  struct Node {
    PrimOp op{};
    bool is_leaf = false;
    bool stop = false;
    bool needs_grad = false;
    std::vector<int> inputs;
    PrimAttrs attrs;
    Tensor<T> value;
    std::vector<std::int32_t> aux;
  };

  const Node& node(int id) const;

  std::vector<Node> nodes_;
};

}  // namespace semisup
