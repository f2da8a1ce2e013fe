#include "permrnn/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace permrnn {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_consistent(const std::vector<std::size_t>& shape, std::size_t n) {
  if (shape_numel(shape) != n) {
    throw std::invalid_argument("tensor shape " + shape_to_string(shape) +
                                " does not match data length " + std::to_string(n));
  }
}

}  // namespace

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.shape = {1};
  t.data = {v};
  return t;
}

Tensor Tensor::vector(std::vector<double> v) {
  Tensor t;
  t.shape = {v.size()};
  t.data = std::move(v);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  check_consistent({rows, cols}, v.size());
  Tensor t;
  t.shape = {rows, cols};
  t.data = std::move(v);
  return t;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  t.data.assign(shape_numel(shape), 0.0);
  t.shape = std::move(shape);
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t;
  t.data.assign(shape_numel(shape), v);
  t.shape = std::move(shape);
  return t;
}

double Tensor::item() const {
  if (data.size() != 1) {
    throw std::invalid_argument("item() requires a scalar tensor, got shape " +
                                shape_to_string(shape));
  }
  return data[0];
}

std::size_t Tensor::rows() const {
  if (shape.size() != 2) {
    throw std::invalid_argument("rows() requires a matrix, got shape " + shape_to_string(shape));
  }
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (shape.size() != 2) {
    throw std::invalid_argument("cols() requires a matrix, got shape " + shape_to_string(shape));
  }
  return shape[1];
}

void Tensor::zero_grad() const {
  grad.assign(data.size(), 0.0);
}

void Tensor::accumulate_grad(const double* g, std::size_t n) const {
  if (n != data.size()) {
    throw std::invalid_argument("gradient length " + std::to_string(n) +
                                " does not match tensor length " + std::to_string(data.size()));
  }
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) grad[i] += g[i];
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace permrnn
