#pragma once

#include <cstring>
#include <memory>
#include <vector>

#include "semisup/kernels/kernels.hpp"
#include "semisup/tensor/errors.hpp"
#include "semisup/tensor/shape.hpp"

namespace semisup {

// Dense n-dimensional array with a contiguous row-major buffer. Values are
// immutable once constructed; "mutation" means building a new tensor. Copies
// share the buffer. Image layout across the project is batch x height x width
// x channel.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }
  static Tensor full(Shape shape, T v) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<T>>(t.shape_.numel(), v);
    return t;
  }
  static Tensor from_vec(Shape shape, std::vector<T> values) {
    if (shape.numel() != values.size())
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape.str());
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<T>>(std::move(values));
    return t;
  }
  static Tensor scalar(T v) { return from_vec(Shape{1}, {v}); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  bool empty() const { return size() == 0; }

  const T* data() const { return data_->data(); }
  T operator[](std::size_t i) const { return (*data_)[i]; }

  T at(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.rank()) throw ShapeError("index rank mismatch for " + shape_.str());
    std::size_t flat = 0;
    std::size_t d = 0;
    for (auto i : idx) {
      if (i >= shape_[d]) throw ShapeError("index out of range for " + shape_.str());
      flat = flat * shape_[d] + i;
      ++d;
    }
    return (*data_)[flat];
  }

  T item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_.str());
    return (*data_)[0];
  }

  std::vector<T> to_vector() const { return *data_; }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>((*data_)[i]);
    return Tensor<U>::from_vec(shape_, std::move(out));
  }

  Tensor reshaped(Shape s) const {
    if (s.numel() != size())
      throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
    Tensor t = *this;
    t.shape_ = std::move(s);
    return t;
  }

  bool all_finite() const { return kernels::all_finite(data(), size()); }

  bool same_values(const Tensor& o) const {
    return shape_ == o.shape_ &&
           std::memcmp(data(), o.data(), size() * sizeof(T)) == 0;
  }

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<T>> data_;
};

}  // namespace semisup
