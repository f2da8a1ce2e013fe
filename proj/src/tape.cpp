#include "permrnn/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace permrnn {

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("Var::value on empty handle");
  return tape_->value(*this);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Tape::Node& Tape::at(Var v) { return nodes_[static_cast<std::size_t>(v.id_)]; }
const Tape::Node& Tape::at(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)]; }

void Tape::check_same_tape(Var v) const {
  if (v.tape_ != this || v.id_ < 0 || v.id_ >= static_cast<int>(nodes_.size())) {
    throw std::logic_error("Var does not belong to this tape");
  }
}

void Tape::check_equal_shapes(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_to_string(a.shape) + " vs " + shape_to_string(b.shape));
  }
}

const Tensor& Tape::value(Var v) const {
  check_same_tape(v);
  return at(v).value;
}

Var Tape::leaf(const Tensor& t) {
  auto it = leaf_ids_.find(&t);
  if (it != leaf_ids_.end()) return Var(this, it->second);
  Node n;
  n.op = Op::kLeaf;
  n.needs_grad = t.requires_grad;
  n.value = t;  // copy of the current value; grads flow to the original
  n.bound = &t;
  Var v = push(std::move(n));
  leaf_ids_.emplace(&t, v.id_);
  return v;
}

Var Tape::constant(Tensor t) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(t);
  return push(std::move(n));
}

Var Tape::matvec(Var m, Var v) {
  check_same_tape(m);
  check_same_tape(v);
  const Tensor& mt = at(m).value;
  const Tensor& vt = at(v).value;
  if (mt.shape.size() != 2 || vt.shape.size() != 1 || mt.shape[1] != vt.shape[0]) {
    throw std::invalid_argument("matvec: shape mismatch " + shape_to_string(mt.shape) +
                                " vs " + shape_to_string(vt.shape));
  }
  const std::size_t rows = mt.shape[0];
  const std::size_t cols = mt.shape[1];
  Node n;
  n.op = Op::kMatVec;
  n.a = m.id_;
  n.b = v.id_;
  n.needs_grad = at(m).needs_grad || at(v).needs_grad;
  n.value = Tensor::zeros({rows});
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    const double* row = mt.data.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * vt.data[j];
    n.value.data[i] = acc;
  }
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& at_ = at(a).value;
  const Tensor& bt = at(b).value;
  check_equal_shapes(at_, bt, "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a.id_;
  n.b = b.id_;
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  n.value = at_;
  for (std::size_t i = 0; i < bt.data.size(); ++i) n.value.data[i] += bt.data[i];
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& at_ = at(a).value;
  const Tensor& bt = at(b).value;
  check_equal_shapes(at_, bt, "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a.id_;
  n.b = b.id_;
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  n.value = at_;
  for (std::size_t i = 0; i < bt.data.size(); ++i) n.value.data[i] -= bt.data[i];
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& at_ = at(a).value;
  const Tensor& bt = at(b).value;
  check_equal_shapes(at_, bt, "mul");
  Node n;
  n.op = Op::kMul;
  n.a = a.id_;
  n.b = b.id_;
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  n.value = at_;
  for (std::size_t i = 0; i < bt.data.size(); ++i) n.value.data[i] *= bt.data[i];
  return push(std::move(n));
}

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  // max(x,0) + log1p(exp(-|x|)) never overflows for finite x
  return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

}  // namespace

Var Tape::relu(Var x) {
  check_same_tape(x);
  Node n;
  n.op = Op::kRelu;
  n.a = x.id_;
  n.needs_grad = at(x).needs_grad;
  n.value = at(x).value;
  for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

Var Tape::tanh(Var x) {
  check_same_tape(x);
  Node n;
  n.op = Op::kTanh;
  n.a = x.id_;
  n.needs_grad = at(x).needs_grad;
  n.value = at(x).value;
  for (double& v : n.value.data) v = std::tanh(v);
  return push(std::move(n));
}

Var Tape::sigmoid(Var x) {
  check_same_tape(x);
  Node n;
  n.op = Op::kSigmoid;
  n.a = x.id_;
  n.needs_grad = at(x).needs_grad;
  n.value = at(x).value;
  for (double& v : n.value.data) v = stable_sigmoid(v);
  return push(std::move(n));
}

Var Tape::square(Var x) {
  check_same_tape(x);
  Node n;
  n.op = Op::kSquare;
  n.a = x.id_;
  n.needs_grad = at(x).needs_grad;
  n.value = at(x).value;
  for (double& v : n.value.data) v = v * v;
  return push(std::move(n));
}

Var Tape::abs(Var x) {
  check_same_tape(x);
  Node n;
  n.op = Op::kAbs;
  n.a = x.id_;
  n.needs_grad = at(x).needs_grad;
  n.value = at(x).value;
  for (double& v : n.value.data) v = std::fabs(v);
  return push(std::move(n));
}

Var Tape::softplus(Var x) {
  check_same_tape(x);
  Node n;
  n.op = Op::kSoftplus;
  n.a = x.id_;
  n.needs_grad = at(x).needs_grad;
  n.value = at(x).value;
  for (double& v : n.value.data) v = stable_softplus(v);
  return push(std::move(n));
}

Var Tape::sum(Var x) {
  check_same_tape(x);
  Node n;
  n.op = Op::kSum;
  n.a = x.id_;
  n.needs_grad = at(x).needs_grad;
  double acc = 0.0;
  for (double v : at(x).value.data) acc += v;
  n.value = Tensor::scalar(acc);
  return push(std::move(n));
}

Var Tape::mean(Var x) {
  check_same_tape(x);
  Node n;
  n.op = Op::kMean;
  n.a = x.id_;
  n.needs_grad = at(x).needs_grad;
  double acc = 0.0;
  for (double v : at(x).value.data) acc += v;
  n.value = Tensor::scalar(acc / static_cast<double>(at(x).value.size()));
  return push(std::move(n));
}

Var Tape::scale(Var x, double k) {
  check_same_tape(x);
  Node n;
  n.op = Op::kScale;
  n.a = x.id_;
  n.k = k;
  n.needs_grad = at(x).needs_grad;
  n.value = at(x).value;
  for (double& v : n.value.data) v *= k;
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  check_same_tape(loss);
  if (at(loss).value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_to_string(at(loss).value.shape));
  }
  const int top = loss.id_;
  for (int i = 0; i <= top; ++i) nodes_[static_cast<std::size_t>(i)].grad.clear();
  auto& ln = nodes_[static_cast<std::size_t>(top)];
  ln.grad.assign(1, 1.0);

  auto ensure = [](Node& n) {
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  };

  for (int i = top; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.empty()) continue;
    const std::vector<double>& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
        if (n.bound && n.bound->requires_grad) {
          n.bound->accumulate_grad(g.data(), g.size());
        }
        break;
      case Op::kConst:
        break;
      case Op::kMatVec: {
        Node& m = nodes_[static_cast<std::size_t>(n.a)];
        Node& v = nodes_[static_cast<std::size_t>(n.b)];
        const std::size_t rows = m.value.shape[0];
        const std::size_t cols = m.value.shape[1];
        if (m.needs_grad) {
          ensure(m);
          for (std::size_t r = 0; r < rows; ++r) {
            double* mg = m.grad.data() + r * cols;
            const double gr = g[r];
            for (std::size_t c = 0; c < cols; ++c) mg[c] += gr * v.value.data[c];
          }
        }
        if (v.needs_grad) {
          ensure(v);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* mr = m.value.data.data() + r * cols;
            const double gr = g[r];
            for (std::size_t c = 0; c < cols; ++c) v.grad[c] += gr * mr[c];
          }
        }
        break;
      }
      case Op::kAdd: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        Node& b = nodes_[static_cast<std::size_t>(n.b)];
        if (a.needs_grad) {
          ensure(a);
          for (std::size_t j = 0; j < g.size(); ++j) a.grad[j] += g[j];
        }
        if (b.needs_grad) {
          ensure(b);
          for (std::size_t j = 0; j < g.size(); ++j) b.grad[j] += g[j];
        }
        break;
      }
      case Op::kSub: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        Node& b = nodes_[static_cast<std::size_t>(n.b)];
        if (a.needs_grad) {
          ensure(a);
          for (std::size_t j = 0; j < g.size(); ++j) a.grad[j] += g[j];
        }
        if (b.needs_grad) {
          ensure(b);
          for (std::size_t j = 0; j < g.size(); ++j) b.grad[j] -= g[j];
        }
        break;
      }
      case Op::kMul: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        Node& b = nodes_[static_cast<std::size_t>(n.b)];
        if (a.needs_grad) {
          ensure(a);
          for (std::size_t j = 0; j < g.size(); ++j) a.grad[j] += g[j] * b.value.data[j];
        }
        if (b.needs_grad) {
          ensure(b);
          for (std::size_t j = 0; j < g.size(); ++j) b.grad[j] += g[j] * a.value.data[j];
        }
        break;
      }
      case Op::kRelu: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        ensure(a);
        // subgradient at 0 is 0
        for (std::size_t j = 0; j < g.size(); ++j) {
          if (a.value.data[j] > 0.0) a.grad[j] += g[j];
        }
        break;
      }
      case Op::kTanh: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        ensure(a);
        for (std::size_t j = 0; j < g.size(); ++j) {
          const double y = n.value.data[j];
          a.grad[j] += g[j] * (1.0 - y * y);
        }
        break;
      }
      case Op::kSigmoid: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        ensure(a);
        for (std::size_t j = 0; j < g.size(); ++j) {
          const double y = n.value.data[j];
          a.grad[j] += g[j] * y * (1.0 - y);
        }
        break;
      }
      case Op::kSquare: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        ensure(a);
        for (std::size_t j = 0; j < g.size(); ++j) a.grad[j] += g[j] * 2.0 * a.value.data[j];
        break;
      }
      case Op::kAbs: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        ensure(a);
        for (std::size_t j = 0; j < g.size(); ++j) {
          const double x = a.value.data[j];
          if (x > 0.0) {
            a.grad[j] += g[j];
          } else if (x < 0.0) {
            a.grad[j] -= g[j];
          }
        }
        break;
      }
      case Op::kSoftplus: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        ensure(a);
        for (std::size_t j = 0; j < g.size(); ++j) {
          a.grad[j] += g[j] * stable_sigmoid(a.value.data[j]);
        }
        break;
      }
      case Op::kSum: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        ensure(a);
        for (std::size_t j = 0; j < a.grad.size(); ++j) a.grad[j] += g[0];
        break;
      }
      case Op::kMean: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        ensure(a);
        const double k = g[0] / static_cast<double>(a.value.size());
        for (std::size_t j = 0; j < a.grad.size(); ++j) a.grad[j] += k;
        break;
      }
      case Op::kScale: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        ensure(a);
        for (std::size_t j = 0; j < g.size(); ++j) a.grad[j] += g[j] * n.k;
        break;
      }
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  leaf_ids_.clear();
}

double Tape::min_abs_relu_input() const {
  double best = std::numeric_limits<double>::infinity();
  for (const Node& n : nodes_) {
    if (n.op != Op::kRelu) continue;
    const Node& a = nodes_[static_cast<std::size_t>(n.a)];
    for (double v : a.value.data) best = std::min(best, std::fabs(v));
  }
  return best;
}

double grad_check(const std::function<Var(Tape&)>& forward,
                  const std::vector<Tensor*>& params, double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("grad_check: epsilon must be positive");

  for (Tensor* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = forward(tape);
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor* p : params) {
    if (p->grad.size() != p->data.size()) p->zero_grad();
    analytic.push_back(p->grad);
  }

  auto eval = [&]() {
    Tape tape;
    return forward(tape).item();
  };

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor* p = params[pi];
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      const double orig = p->data[i];
      p->data[i] = orig + epsilon;
      const double up = eval();
      p->data[i] = orig - epsilon;
      const double down = eval();
      p->data[i] = orig;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[pi][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace permrnn
