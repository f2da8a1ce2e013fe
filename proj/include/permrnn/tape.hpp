#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "permrnn/tensor.hpp"

namespace permrnn {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid until the tape is reset.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  double item() const { return value().item(); }
  std::size_t size() const { return value().size(); }
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Define-by-run computation tape. Operations append nodes in topological
// order; backward() replays the node list once in reverse, accumulating
// gradients and depositing them into the bound leaf tensors. A tape is
// rebuilt per forward pass and is confined to a single thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Lifts an external tensor onto the tape. Calls with the same tensor are
  // memoized so a parameter used many times is a single leaf. Gradients are
  // deposited into t.grad if t.requires_grad.
  Var leaf(const Tensor& t);

  // Unnamed constant; never receives a gradient.
  Var constant(Tensor t);
  Var constant(double v) { return constant(Tensor::scalar(v)); }

  Var matvec(Var m, Var v);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var relu(Var x);
  Var tanh(Var x);
  Var sigmoid(Var x);
  Var square(Var x);
  Var abs(Var x);
  Var softplus(Var x);
  Var sum(Var x);
  Var mean(Var x);
  Var scale(Var x, double k);

  // Propagates d(loss)/d(leaf) into every bound leaf with requires_grad.
  // loss must be scalar. Repeated calls accumulate into the leaves.
  void backward(Var loss);

  const Tensor& value(Var v) const;

  void reset();
  std::size_t node_count() const { return nodes_.size(); }

  // Smallest |input| seen by any relu node; infinity when no relu was
  // recorded. Lets tests keep finite-difference probes away from kinks.
  double min_abs_relu_input() const;

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kConst,
    kMatVec,
    kAdd,
    kSub,
    kMul,
    kRelu,
    kTanh,
    kSigmoid,
    kSquare,
    kAbs,
    kSoftplus,
    kSum,
    kMean,
    kScale,
  };

  struct Node {
    Op op;
    bool needs_grad = false;
    int a = -1;
    int b = -1;
    double k = 0.0;
    Tensor value;
    const Tensor* bound = nullptr;  // leaf only
    std::vector<double> grad;       // sized during backward
  };

  Var push(Node node);
  Node& at(Var v);
  const Node& at(Var v) const;
  void check_same_tape(Var v) const;
  static void check_equal_shapes(const Tensor& a, const Tensor& b, const char* op);

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> leaf_ids_;
};

// Operator sugar; both operands must live on the same tape.
inline Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }

// Compares reverse-mode gradients against central finite differences for a
// deterministic scalar-valued forward closure. Returns the worst relative
// error over every coordinate of every parameter, with denominator
// max(|analytic|, |numeric|, 1e-8).
double grad_check(const std::function<Var(Tape&)>& forward,
                  const std::vector<Tensor*>& params, double epsilon);

}  // namespace permrnn
