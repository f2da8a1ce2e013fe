#include "permrnn/exact.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace permrnn {

RnnParams build_parity_rnn() {
  RnnParams p;
  p.w_out = Tensor::matrix(1, 3, {1.0, -1.0, -1.0});
  p.w_in = Tensor::matrix(3, 1, {2.0, 2.0, 2.0});
  p.w_state = Tensor::matrix(3, 1, {2.0, 2.0, 2.0});
  p.bias = Tensor::vector({0.0, -1.0, -3.0});
  p.s0 = Tensor::vector({0.0});
  p.act = Activation::relu;
  for (Tensor* t : {&p.w_out, &p.w_in, &p.w_state, &p.bias, &p.s0}) t->requires_grad = true;
  return p;
}

std::size_t parity_rnn_weight_count(const RnnParams& p) {
  return p.w_out.size() + p.w_in.size() + p.w_state.size() + p.bias.size();
}

int parity_oracle(std::span<const int> bits) {
  int acc = 0;
  for (int b : bits) {
    if (b != 0 && b != 1) {
      throw std::invalid_argument("parity_oracle: entry " + std::to_string(b) +
                                  " is not a bit");
    }
    acc ^= b;
  }
  return acc;
}

namespace {

Tensor rnn_step_value(const RnnParams& p, const Tensor& s, double x) {
  Tape tape;
  Var out = rnn_step(tape, p, tape.constant(s), tape.constant(Tensor::scalar(x)));
  return out.value();
}

void parity_dfs(const RnnParams& p, const Tensor& state, int parity, int depth_left,
                double& worst) {
  worst = std::max(worst, std::fabs(state.item() - static_cast<double>(parity)));
  if (depth_left == 0) return;
  for (int bit = 0; bit <= 1; ++bit) {
    Tensor next = rnn_step_value(p, state, static_cast<double>(bit));
    parity_dfs(p, next, parity ^ bit, depth_left - 1, worst);
  }
}

}  // namespace

double parity_rnn_output(const RnnParams& p, std::span<const int> bits) {
  Tensor state = p.s0;
  for (int b : bits) state = rnn_step_value(p, state, static_cast<double>(b));
  return state.item();
}

double parity_exhaustive_max_error(const RnnParams& p, int max_len) {
  double worst = 0.0;
  parity_dfs(p, p.s0, 0, max_len, worst);
  return worst;
}

// ---------------------------------------------------------------------------

ReducedBinaryDeepSets::ReducedBinaryDeepSets(const MlpParams& phi, const MlpParams& rho,
                                             std::size_t n)
    : rho_(rho), n_(n) {
  if (n < 1) throw std::invalid_argument("reduce_binary_deepsets: set size must be >= 1");
  if (!phi.empty() && phi.input_width() != 1) {
    throw std::invalid_argument("reduce_binary_deepsets: phi must take scalar input");
  }
  Tape tape;
  v0_ = mlp_forward(tape, phi, tape.constant(Tensor::scalar(0.0))).value();
  v1_ = mlp_forward(tape, phi, tape.constant(Tensor::scalar(1.0))).value();
}

Tensor ReducedBinaryDeepSets::eval(std::size_t ones_count) const {
  if (ones_count > n_) {
    throw std::invalid_argument("reduce_binary_deepsets: ones_count exceeds set size");
  }
  // Sum in the canonical (sorted) element order: all zeros, then all ones.
  // This matches deepsets_forward addition-for-addition, so results agree
  // bit-exactly with the unreduced network.
  const std::size_t zeros = n_ - ones_count;
  Tensor agg = zeros > 0 ? v0_ : v1_;
  for (std::size_t i = 1; i < zeros; ++i) {
    for (std::size_t j = 0; j < agg.size(); ++j) agg.data[j] += v0_.data[j];
  }
  for (std::size_t i = zeros > 0 ? 0 : 1; i < ones_count; ++i) {
    for (std::size_t j = 0; j < agg.size(); ++j) agg.data[j] += v1_.data[j];
  }
  Tape tape;
  return mlp_forward(tape, rho_, tape.constant(agg)).value();
}

double ReducedBinaryDeepSets::eval_scalar(std::size_t ones_count) const {
  return eval(ones_count).item();
}

ReducedBinaryDeepSets reduce_binary_deepsets(const MlpParams& phi, const MlpParams& rho,
                                             std::size_t n) {
  return ReducedBinaryDeepSets(phi, rho, n);
}

// ---------------------------------------------------------------------------

double PiecewiseLinear1D::eval(double x) const {
  double val = value_at_lo;
  double left = lo;
  for (std::size_t k = 0; k < slopes.size(); ++k) {
    const double right = k < breakpoints.size() ? breakpoints[k] : hi;
    const bool last = k + 1 == slopes.size();
    if (x <= right || last) return val + slopes[k] * (x - left);
    val += slopes[k] * (right - left);
    left = right;
  }
  return val;
}

namespace {

struct Affine {
  double slope = 0.0;
  double intercept = 0.0;
  double at(double x) const { return slope * x + intercept; }
};

// Per-unit affine pieces over the shared segment grid.
struct Layerwise {
  std::vector<double> breaks;               // interior breakpoints, sorted
  std::vector<std::vector<Affine>> units;   // units[u][segment]

  std::size_t segments() const { return breaks.size() + 1; }
};

constexpr double kBreakDedupe = 1e-12;
constexpr double kSlopeMergeTol = 1e-9;

double segment_left(const Layerwise& lw, double lo, std::size_t k) {
  return k == 0 ? lo : lw.breaks[k - 1];
}

double segment_right(const Layerwise& lw, double hi, std::size_t k) {
  return k == lw.breaks.size() ? hi : lw.breaks[k];
}

// Inserts new interior breakpoints, duplicating each unit's affine piece for
// the refined segments.
void refine(Layerwise& lw, double lo, double hi, std::vector<double> candidates) {
  if (candidates.empty()) return;
  std::sort(candidates.begin(), candidates.end());
  std::vector<double> merged;
  merged.reserve(lw.breaks.size() + candidates.size());
  std::size_t i = 0, j = 0;
  auto push = [&](double v) {
    if (v <= lo + kBreakDedupe || v >= hi - kBreakDedupe) return;
    if (!merged.empty() && v - merged.back() <= kBreakDedupe) return;
    merged.push_back(v);
  };
  while (i < lw.breaks.size() || j < candidates.size()) {
    if (j == candidates.size() || (i < lw.breaks.size() && lw.breaks[i] <= candidates[j])) {
      push(lw.breaks[i++]);
    } else {
      push(candidates[j++]);
    }
  }
  // Remap each old segment's affine to the refined segments it covers.
  std::vector<std::vector<Affine>> new_units(lw.units.size());
  for (auto& nu : new_units) nu.resize(merged.size() + 1);
  for (std::size_t seg = 0; seg <= merged.size(); ++seg) {
    const double left = seg == 0 ? lo : merged[seg - 1];
    const double right = seg == merged.size() ? hi : merged[seg];
    const double mid = 0.5 * (left + right);
    // locate containing old segment
    std::size_t old_seg = static_cast<std::size_t>(
        std::upper_bound(lw.breaks.begin(), lw.breaks.end(), mid) - lw.breaks.begin());
    for (std::size_t u = 0; u < lw.units.size(); ++u) {
      new_units[u][seg] = lw.units[u][old_seg];
    }
  }
  lw.breaks = std::move(merged);
  lw.units = std::move(new_units);
}

}  // namespace

PiecewiseLinear1D trace_piecewise_linear(const MlpParams& net, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("trace_piecewise_linear: need lo < hi");
  for (std::size_t li = 0; li + 1 < net.layers.size(); ++li) {
    if (net.layers[li].act != Activation::relu) {
      throw std::invalid_argument("trace_piecewise_linear: hidden activation must be relu, got " +
                                  activation_name(net.layers[li].act));
    }
  }
  if (!net.layers.empty()) {
    const Activation out_act = net.layers.back().act;
    if (out_act != Activation::linear && out_act != Activation::relu) {
      throw std::invalid_argument("trace_piecewise_linear: unsupported output activation " +
                                  activation_name(out_act));
    }
  }
  if (!net.empty() && (net.input_width() != 1 || net.output_width() != 1)) {
    throw std::invalid_argument("trace_piecewise_linear: net must be scalar in/out");
  }

  Layerwise lw;
  lw.units = {{Affine{1.0, 0.0}}};  // the input coordinate itself

  for (const MlpLayer& layer : net.layers) {
    const std::size_t out_w = layer.weight.rows();
    const std::size_t in_w = layer.weight.cols();

    // Affine pre-activations per segment.
    std::vector<std::vector<Affine>> pre(out_w);
    for (auto& p : pre) p.resize(lw.segments());
    for (std::size_t seg = 0; seg < lw.segments(); ++seg) {
      for (std::size_t u = 0; u < out_w; ++u) {
        Affine acc{0.0, layer.bias.data[u]};
        const double* wrow = layer.weight.data.data() + u * in_w;
        for (std::size_t v = 0; v < in_w; ++v) {
          acc.slope += wrow[v] * lw.units[v][seg].slope;
          acc.intercept += wrow[v] * lw.units[v][seg].intercept;
        }
        pre[u][seg] = acc;
      }
    }
    lw.units = std::move(pre);

    if (layer.act == Activation::relu) {
      // Each unit adds a breakpoint wherever its pre-activation crosses zero
      // strictly inside a segment.
      std::vector<double> candidates;
      for (std::size_t u = 0; u < lw.units.size(); ++u) {
        for (std::size_t seg = 0; seg < lw.segments(); ++seg) {
          const Affine& a = lw.units[u][seg];
          if (a.slope == 0.0) continue;
          const double z = -a.intercept / a.slope;
          if (z > segment_left(lw, lo, seg) && z < segment_right(lw, hi, seg)) {
            candidates.push_back(z);
          }
        }
      }
      refine(lw, lo, hi, std::move(candidates));
      for (std::size_t u = 0; u < lw.units.size(); ++u) {
        for (std::size_t seg = 0; seg < lw.segments(); ++seg) {
          Affine& a = lw.units[u][seg];
          const double mid = 0.5 * (segment_left(lw, lo, seg) + segment_right(lw, hi, seg));
          if (a.at(mid) <= 0.0) a = Affine{0.0, 0.0};
        }
      }
    }
  }

  // Collapse to the scalar output and merge equal-slope neighbors.
  const std::vector<Affine>& out = lw.units[0];
  PiecewiseLinear1D pl;
  pl.lo = lo;
  pl.hi = hi;
  pl.value_at_lo = out[0].at(lo);
  pl.slopes.push_back(out[0].slope);
  for (std::size_t seg = 1; seg < out.size(); ++seg) {
    if (std::fabs(out[seg].slope - pl.slopes.back()) <= kSlopeMergeTol) continue;
    pl.breakpoints.push_back(lw.breaks[seg - 1]);
    pl.slopes.push_back(out[seg].slope);
  }
  return pl;
}

std::size_t min_deepsets_units(std::size_t n) {
  if (n < 2 || (n & (n - 1)) != 0) {
    throw std::invalid_argument("min_deepsets_units: " + std::to_string(n) +
                                " is not a power of two >= 2");
  }
  std::size_t k = 0;
  for (std::size_t m = n; m > 1; m >>= 1) ++k;
  return 4 * k;
}

}  // namespace permrnn
