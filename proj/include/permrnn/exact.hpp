#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "permrnn/models.hpp"

namespace permrnn {

// ---------------------------------------------------------------------------
// Exact parity RNN: a 12-weight ReLU cell whose state update is XOR, so the
// final state over any binary sequence is the parity of its bit sum.

RnnParams build_parity_rnn();

// Number of weight entries in the construction (start state pinned at zero
// is not counted): 12.
std::size_t parity_rnn_weight_count(const RnnParams& p);

// (sum of bits) mod 2. Entries must be 0 or 1.
int parity_oracle(std::span<const int> bits);

// Final scalar state of the cell over a raw bit sequence.
double parity_rnn_output(const RnnParams& p, std::span<const int> bits);

// Walks every binary sequence of length <= max_len (prefix-sharing DFS) and
// returns the largest |raw state - parity| observed.
double parity_exhaustive_max_error(const RnnParams& p, int max_len);

// ---------------------------------------------------------------------------
// Binary-input DeepSets reduction: with only two possible inputs, any
// (phi, rho) pair collapses to a scalar map of the ones-count,
// rho(n*v0 + z*(v1 - v0)) with v0 = phi(0), v1 = phi(1). eval() reproduces
// deepsets_forward bit-exactly by summing in the same canonical order.

class ReducedBinaryDeepSets {
 public:
  ReducedBinaryDeepSets(const MlpParams& phi, const MlpParams& rho, std::size_t n);

  Tensor eval(std::size_t ones_count) const;
  double eval_scalar(std::size_t ones_count) const;

  const Tensor& phi_of_zero() const { return v0_; }
  const Tensor& phi_of_one() const { return v1_; }
  std::size_t set_size() const { return n_; }

 private:
  Tensor v0_, v1_;
  MlpParams rho_;
  std::size_t n_;
};

ReducedBinaryDeepSets reduce_binary_deepsets(const MlpParams& phi, const MlpParams& rho,
                                             std::size_t n);

// ---------------------------------------------------------------------------
// Piecewise-linear analysis of scalar ReLU nets

struct PiecewiseLinear1D {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> breakpoints;  // strictly increasing, inside (lo, hi)
  std::vector<double> slopes;       // one per segment: breakpoints.size() + 1
  double value_at_lo = 0.0;

  std::size_t segment_count() const { return slopes.size(); }
  double eval(double x) const;
};

// Exact segment decomposition of a scalar-input scalar-output net over
// [lo, hi], computed by propagating breakpoint sets layer by layer. Hidden
// activations must be relu (final layer may be linear); adjacent segments
// whose slopes agree within 1e-9 are merged.
PiecewiseLinear1D trace_piecewise_linear(const MlpParams& net, double lo, double hi);

// 4*log2(n) for n a power of two; the minimal parameter budget of a scalar
// ReLU aggregator that realizes n sign switches.
std::size_t min_deepsets_units(std::size_t n);

}  // namespace permrnn
