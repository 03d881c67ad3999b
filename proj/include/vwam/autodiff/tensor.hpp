#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vwam/error.hpp"

namespace vwam::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array. Storage is immutable and shared between copies, so
// a Tensor can be handed to other threads without synchronization.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{0}, std::vector<T>{}) {}

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::make_shared<const std::vector<T>>(std::move(data))) {
    if (shape_size(shape_) != data_->size()) {
      throw ShapeError("tensor data length " + std::to_string(data_->size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return filled(std::move(shape), T(0)); }

  static Tensor filled(Shape shape, T value) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value));
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_->size(); }
  bool empty() const { return data_->empty(); }

  std::span<const T> data() const { return {data_->data(), data_->size()}; }
  T operator[](std::size_t i) const { return (*data_)[i]; }

  T item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return (*data_)[0];
  }

  Tensor reshape(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_->begin(), data_->end()));
  }

  std::vector<T> to_vector() const { return *data_; }

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<T>> data_;
};

template <typename T>
bool all_finite(std::span<const T> values);

}  // namespace vwam::ad
