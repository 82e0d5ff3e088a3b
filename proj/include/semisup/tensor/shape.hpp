#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "semisup/tensor/errors.hpp"

namespace semisup {

// Dimension list of a dense tensor. All dims are strictly positive.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { check(); }
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { check(); }

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  const std::vector<std::size_t>& dims() const { return dims_; }

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : dims_) n *= d;
    return dims_.empty() ? 0 : n;
  }

  bool operator==(const Shape& o) const { return dims_ == o.dims_; }
  bool operator!=(const Shape& o) const { return dims_ != o.dims_; }

  std::string str() const {
    if (dims_.empty()) return "()";
    std::string s;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += 'x';
      s += std::to_string(dims_[i]);
    }
    return s;
  }

 private:
  void check() const {
    for (auto d : dims_)
      if (d == 0) throw ShapeError("shape " + str_raw() + " has a zero dimension");
  }
  std::string str_raw() const {
    std::string s = "[";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(dims_[i]);
    }
    return s + "]";
  }

  std::vector<std::size_t> dims_;
};

}  // namespace semisup
