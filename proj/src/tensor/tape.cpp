#include "semisup/tensor/tape.hpp"

#include "semisup/kernels/kernels.hpp"

namespace semisup {

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw ValueError("tape: id " + std::to_string(id) + " is not on this tape (" +
                     std::to_string(nodes_.size()) + " nodes)");
  return nodes_[static_cast<std::size_t>(id)];
}

template <typename T>
int Tape<T>::leaf(Tensor<T> value, bool stop_gradient) {
  if (!value.all_finite()) throw NumericError("tape: leaf value contains non-finite entries");
  Node n;
  n.is_leaf = true;
  n.stop = stop_gradient;
  n.needs_grad = !stop_gradient;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <typename T>
int Tape<T>::apply(PrimOp op, std::vector<int> inputs, PrimAttrs attrs) {
  std::vector<Tensor<T>> in_values;
  in_values.reserve(inputs.size());
  bool needs = false;
  for (int id : inputs) {
    const Node& n = node(id);  // also validates id < current size
    in_values.push_back(n.value);
    needs = needs || n.needs_grad;
  }
  Node n;
  n.op = op;
  n.inputs = std::move(inputs);
  n.attrs = attrs;
  n.needs_grad = needs;
  n.value = detail::prim_forward(op, in_values, attrs, n.aux);
  if (!n.value.all_finite())
    throw NumericError(std::string(prim_name(op)) + ": non-finite values in output (shape " +
                       n.value.shape().str() + ")");
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <typename T>
const Tensor<T>& Tape<T>::value(int id) const {
  return node(id).value;
}

template <typename T>
std::unordered_map<int, Tensor<T>> Tape<T>::backward(int output_id) const {
  const Node& out = node(output_id);
  if (out.value.size() != 1)
    throw ShapeError("backward: output must be scalar, got shape " + out.value.shape().str());

  std::unordered_map<int, Tensor<T>> grads;
  if (!out.needs_grad) return grads;

  // one lazily-allocated gradient buffer per node
  std::vector<std::vector<T>> buf(static_cast<std::size_t>(output_id) + 1);
  buf[static_cast<std::size_t>(output_id)] = {T(1)};

  for (int id = output_id; id >= 0; --id) {
    const auto uid = static_cast<std::size_t>(id);
    const Node& n = nodes_[uid];
    if (buf[uid].empty() || !n.needs_grad) continue;
    if (n.is_leaf) continue;

    std::vector<Tensor<T>> in_values;
    in_values.reserve(n.inputs.size());
    std::vector<T*> grad_in(n.inputs.size(), nullptr);
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      const auto in_id = static_cast<std::size_t>(n.inputs[i]);
      in_values.push_back(nodes_[in_id].value);
      if (nodes_[in_id].needs_grad) {
        if (buf[in_id].empty()) buf[in_id].assign(nodes_[in_id].value.size(), T(0));
        grad_in[i] = buf[in_id].data();
      }
    }
    detail::prim_vjp(n.op, in_values, n.value, n.attrs, n.aux, buf[uid].data(), grad_in);
    if (id != output_id) buf[uid].clear();  // free as we go
  }

  for (int id = 0; id <= output_id; ++id) {
    const auto uid = static_cast<std::size_t>(id);
    const Node& n = nodes_[uid];
    if (n.is_leaf && n.needs_grad && !buf[uid].empty())
      grads.emplace(id, Tensor<T>::from_vec(n.value.shape(), std::move(buf[uid])));
  }
  return grads;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace semisup
