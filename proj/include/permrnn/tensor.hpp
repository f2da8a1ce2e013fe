#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace permrnn {

// Dense array of 64-bit floats with a shape and an optional gradient
// buffer. The gradient is a scratch accumulator written by backward passes,
// so it is mutable; the logical value (shape + data) is immutable once a
// tensor has been handed to a computation.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  mutable std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  Tensor() = default;

  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);

  std::size_t size() const { return data.size(); }
  bool is_scalar() const { return data.size() == 1; }

  // Value of a scalar tensor; contract error otherwise.
  double item() const;

  std::size_t rows() const;
  std::size_t cols() const;

  Tensor& set_requires_grad(bool on = true) {
    requires_grad = on;
    return *this;
  }

  void zero_grad() const;

  // Adds g (length n == data.size()) into the grad buffer, allocating it on
  // first use. Used by the tape during backward.
  void accumulate_grad(const double* g, std::size_t n) const;

  bool all_finite() const;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

// Number of elements implied by a shape (1 for rank-0).
std::size_t shape_numel(const std::vector<std::size_t>& shape);

}  // namespace permrnn
