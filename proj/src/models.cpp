#include "permrnn/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace permrnn {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::linear: return "linear";
  }
  return "?";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "linear") return Activation::linear;
  throw std::invalid_argument("unknown activation: " + name);
}

Var apply_activation(Tape& tape, Var x, Activation act) {
  switch (act) {
    case Activation::relu: return tape.relu(x);
    case Activation::tanh: return tape.tanh(x);
    case Activation::sigmoid: return tape.sigmoid(x);
    case Activation::linear: return x;
  }
  throw std::logic_error("unreachable activation");
}

// ---------------------------------------------------------------------------
// MLP

std::size_t MlpParams::input_width() const {
  if (layers.empty()) throw std::logic_error("input_width of identity mlp");
  return layers.front().weight.cols();
}

std::size_t MlpParams::output_width() const {
  if (layers.empty()) throw std::logic_error("output_width of identity mlp");
  return layers.back().weight.rows();
}

namespace {

Tensor glorot_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t = Tensor::zeros({rows, cols});
  for (double& v : t.data) v = rng.uniform(-limit, limit);
  t.requires_grad = true;
  return t;
}

Tensor zero_param(std::vector<std::size_t> shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.requires_grad = true;
  return t;
}

}  // namespace

MlpParams make_mlp(const std::vector<std::size_t>& widths, Activation hidden_act,
                   Activation output_act, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("make_mlp: need at least in+out widths");
  MlpParams mlp;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    MlpLayer layer;
    layer.weight = glorot_matrix(widths[i + 1], widths[i], rng);
    layer.bias = zero_param({widths[i + 1]});
    layer.act = (i + 2 == widths.size()) ? output_act : hidden_act;
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

Var mlp_forward(Tape& tape, const MlpParams& mlp, Var x) {
  Var h = x;
  for (const MlpLayer& layer : mlp.layers) {
    h = tape.add(tape.matvec(tape.leaf(layer.weight), h), tape.leaf(layer.bias));
    h = apply_activation(tape, h, layer.act);
  }
  return h;
}

double mlp_eval_scalar(const MlpParams& mlp, double x) {
  Tape tape;
  Var out = mlp_forward(tape, mlp, tape.constant(Tensor::scalar(x)));
  return out.item();
}

// ---------------------------------------------------------------------------
// Recurrent cells

RnnParams make_rnn(std::size_t hidden, std::size_t input_width, std::size_t state_width,
                   Activation act, Rng& rng) {
  RnnParams p;
  p.w_out = glorot_matrix(state_width, hidden, rng);
  p.w_in = glorot_matrix(hidden, input_width, rng);
  p.w_state = glorot_matrix(hidden, state_width, rng);
  p.bias = zero_param({hidden});
  p.s0 = zero_param({state_width});
  p.act = act;
  return p;
}

Var rnn_step(Tape& tape, const RnnParams& p, Var s, Var x) {
  Var pre = tape.add(tape.matvec(tape.leaf(p.w_in), x), tape.matvec(tape.leaf(p.w_state), s));
  pre = tape.add(pre, tape.leaf(p.bias));
  Var hidden = apply_activation(tape, pre, p.act);
  return tape.matvec(tape.leaf(p.w_out), hidden);
}

GruParams make_gru(std::size_t hidden, std::size_t input_width, Rng& rng) {
  GruParams p;
  p.w_update = glorot_matrix(hidden, input_width, rng);
  p.u_update = glorot_matrix(hidden, hidden, rng);
  p.b_update = zero_param({hidden});
  p.w_reset = glorot_matrix(hidden, input_width, rng);
  p.u_reset = glorot_matrix(hidden, hidden, rng);
  p.b_reset = zero_param({hidden});
  p.w_cand = glorot_matrix(hidden, input_width, rng);
  p.u_cand = glorot_matrix(hidden, hidden, rng);
  p.b_cand = zero_param({hidden});
  p.s0 = zero_param({hidden});
  return p;
}

Var gru_step(Tape& tape, const GruParams& p, Var s, Var x) {
  auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b) {
    Var pre = tape.add(tape.matvec(tape.leaf(w), x), tape.matvec(tape.leaf(u), s));
    return tape.add(pre, tape.leaf(b));
  };
  Var z = tape.sigmoid(gate(p.w_update, p.u_update, p.b_update));
  Var r = tape.sigmoid(gate(p.w_reset, p.u_reset, p.b_reset));
  Var cand_pre = tape.add(tape.matvec(tape.leaf(p.w_cand), x),
                          tape.matvec(tape.leaf(p.u_cand), tape.mul(r, s)));
  Var cand = tape.tanh(tape.add(cand_pre, tape.leaf(p.b_cand)));
  // s' = z*s + (1-z)*cand
  Var ones = tape.constant(Tensor::full({p.s0.size()}, 1.0));
  return tape.add(tape.mul(z, s), tape.mul(tape.sub(ones, z), cand));
}

Var run_sequence(Tape& tape, const RecurrentModel& cell, Var state,
                 std::span<const Tensor> xs, std::vector<Var>* trace) {
  for (const Tensor& x : xs) {
    state = cell.step(tape, state, tape.constant(x));
    if (trace) trace->push_back(state);
  }
  return state;
}

Var run_sequence(Tape& tape, const RecurrentModel& cell, std::span<const Tensor> xs,
                 std::vector<Var>* trace) {
  return run_sequence(tape, cell, tape.leaf(cell.initial_state()), xs, trace);
}

// ---------------------------------------------------------------------------
// DeepSets

DeepSetsParams make_deepsets(std::size_t input_width, std::size_t phi_hidden,
                             std::size_t phi_out, std::size_t rho_hidden,
                             std::size_t output_width, Rng& rng) {
  DeepSetsParams p;
  p.phi = make_mlp({input_width, phi_hidden, phi_out}, Activation::relu, Activation::linear, rng);
  p.rho = make_mlp({phi_out, rho_hidden, output_width}, Activation::relu, Activation::linear, rng);
  return p;
}

Var deepsets_forward(Tape& tape, const DeepSetsParams& p, std::span<const Tensor> xs) {
  if (xs.empty()) throw std::invalid_argument("deepsets_forward: empty input set");
  // Canonical summation order: stable sort of the inputs.
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(xs[a].data.begin(), xs[a].data.end(),
                                        xs[b].data.begin(), xs[b].data.end());
  });
  Var agg;
  for (std::size_t i = 0; i < order.size(); ++i) {
    Var e = mlp_forward(tape, p.phi, tape.constant(xs[order[i]]));
    agg = (i == 0) ? e : tape.add(agg, e);
  }
  return mlp_forward(tape, p.rho, agg);
}

// ---------------------------------------------------------------------------
// Encoding + full model

Tensor InputEncoding::encode(int x) const {
  if (one_hot) {
    if (x < 0 || x > alphabet_max) {
      throw std::invalid_argument("encode: symbol " + std::to_string(x) +
                                  " outside alphabet [0," + std::to_string(alphabet_max) + "]");
    }
    Tensor t = Tensor::zeros({static_cast<std::size_t>(alphabet_max) + 1});
    t.data[static_cast<std::size_t>(x)] = 1.0;
    return t;
  }
  const double divisor = alphabet_max >= 1 ? static_cast<double>(alphabet_max) : 1.0;
  const double scaled = static_cast<double>(x) / divisor;
  return Tensor::scalar(centered ? 2.0 * scaled - 1.0 : scaled);
}

EncodedDataset encode_sequences(const std::vector<std::vector<int>>& sequences,
                                const std::vector<double>& labels,
                                const InputEncoding& enc) {
  EncodedDataset out;
  out.sequences.reserve(sequences.size());
  for (const auto& seq : sequences) {
    std::vector<Tensor> enc_seq;
    enc_seq.reserve(seq.size());
    for (int x : seq) {
      enc_seq.push_back(enc.encode(x));
      out.element_pool.push_back(enc_seq.back());
    }
    out.sequences.push_back(std::move(enc_seq));
  }
  out.labels = labels;
  return out;
}

std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::rnn: return "rnn";
    case ModelKind::gru: return "gru";
    case ModelKind::deepsets: return "deepsets";
  }
  return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "rnn") return ModelKind::rnn;
  if (name == "gru") return ModelKind::gru;
  if (name == "deepsets") return ModelKind::deepsets;
  throw std::invalid_argument("unknown model kind: " + name);
}

namespace {

void collect_mlp(MlpParams& mlp, std::vector<Tensor*>& out) {
  for (auto& layer : mlp.layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
}

}  // namespace

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  switch (kind) {
    case ModelKind::rnn:
      out = {&rnn.w_out, &rnn.w_in, &rnn.w_state, &rnn.bias, &rnn.s0};
      break;
    case ModelKind::gru:
      out = {&gru.w_update, &gru.u_update, &gru.b_update, &gru.w_reset, &gru.u_reset,
             &gru.b_reset, &gru.w_cand, &gru.u_cand, &gru.b_cand, &gru.s0};
      break;
    case ModelKind::deepsets:
      collect_mlp(deepsets.phi, out);
      collect_mlp(deepsets.rho, out);
      break;
  }
  collect_mlp(head, out);
  return out;
}

std::vector<const Tensor*> Model::parameters() const {
  auto mut = const_cast<Model*>(this)->parameters();
  return std::vector<const Tensor*>(mut.begin(), mut.end());
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

std::unique_ptr<RecurrentModel> Model::make_cell() const {
  switch (kind) {
    case ModelKind::rnn: return std::make_unique<RnnCell>(rnn);
    case ModelKind::gru: return std::make_unique<GruCell>(gru);
    case ModelKind::deepsets:
      throw std::invalid_argument("deepsets model has no recurrent cell");
  }
  throw std::logic_error("unreachable model kind");
}

Var output_head(Tape& tape, const MlpParams& head, Var state) {
  return head.empty() ? state : mlp_forward(tape, head, state);
}

Var model_final_state(Tape& tape, const Model& m, std::span<const Tensor> xs) {
  if (m.kind == ModelKind::deepsets) return deepsets_forward(tape, m.deepsets, xs);
  auto cell = m.make_cell();
  return run_sequence(tape, *cell, xs);
}

Var model_output(Tape& tape, const Model& m, std::span<const Tensor> xs) {
  return output_head(tape, m.head, model_final_state(tape, m, xs));
}

double predict_scalar(const Model& m, std::span<const int> xs) {
  std::vector<Tensor> enc;
  enc.reserve(xs.size());
  for (int x : xs) enc.push_back(m.encoding.encode(x));
  Tape tape;
  return model_output(tape, m, enc).item();
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void write_double(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  os << "tensor " << name << ' ' << t.shape.size();
  for (std::size_t d : t.shape) os << ' ' << d;
  for (double v : t.data) {
    os << ' ';
    write_double(os, v);
  }
  os << '\n';
}

Tensor read_tensor(std::istream& is, const std::string& expected_name) {
  std::string tok, name;
  is >> tok >> name;
  if (tok != "tensor" || name != expected_name) {
    throw std::runtime_error("model parse: expected tensor " + expected_name + ", got " +
                             tok + " " + name);
  }
  std::size_t rank = 0;
  is >> rank;
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) is >> d;
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.data) is >> v;
  if (!is) throw std::runtime_error("model parse: truncated tensor " + expected_name);
  t.requires_grad = true;
  return t;
}

void write_mlp(std::ostream& os, const std::string& name, const MlpParams& mlp) {
  os << name << ' ' << mlp.layers.size() << '\n';
  for (const MlpLayer& layer : mlp.layers) {
    os << "layer " << activation_name(layer.act) << '\n';
    write_tensor(os, "weight", layer.weight);
    write_tensor(os, "bias", layer.bias);
  }
}

MlpParams read_mlp(std::istream& is, const std::string& expected_name) {
  std::string tok;
  is >> tok;
  if (tok != expected_name) {
    throw std::runtime_error("model parse: expected " + expected_name + ", got " + tok);
  }
  std::size_t n = 0;
  is >> n;
  MlpParams mlp;
  for (std::size_t i = 0; i < n; ++i) {
    std::string layer_tok, act;
    is >> layer_tok >> act;
    if (layer_tok != "layer") throw std::runtime_error("model parse: expected layer");
    MlpLayer layer;
    layer.act = activation_from_name(act);
    layer.weight = read_tensor(is, "weight");
    layer.bias = read_tensor(is, "bias");
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

}  // namespace

std::string model_to_string(const Model& m) {
  std::ostringstream os;
  os << "permrnn-model 1\n";
  os << "kind " << model_kind_name(m.kind) << '\n';
  os << "encoding "
     << (m.encoding.one_hot ? "onehot" : (m.encoding.centered ? "scalar-centered" : "scalar"))
     << ' ' << m.encoding.alphabet_max << '\n';
  os << "head_logits " << (m.head_logits ? 1 : 0) << '\n';
  switch (m.kind) {
    case ModelKind::rnn:
      os << "activation " << activation_name(m.rnn.act) << '\n';
      write_tensor(os, "w_out", m.rnn.w_out);
      write_tensor(os, "w_in", m.rnn.w_in);
      write_tensor(os, "w_state", m.rnn.w_state);
      write_tensor(os, "bias", m.rnn.bias);
      write_tensor(os, "s0", m.rnn.s0);
      break;
    case ModelKind::gru:
      write_tensor(os, "w_update", m.gru.w_update);
      write_tensor(os, "u_update", m.gru.u_update);
      write_tensor(os, "b_update", m.gru.b_update);
      write_tensor(os, "w_reset", m.gru.w_reset);
      write_tensor(os, "u_reset", m.gru.u_reset);
      write_tensor(os, "b_reset", m.gru.b_reset);
      write_tensor(os, "w_cand", m.gru.w_cand);
      write_tensor(os, "u_cand", m.gru.u_cand);
      write_tensor(os, "b_cand", m.gru.b_cand);
      write_tensor(os, "s0", m.gru.s0);
      break;
    case ModelKind::deepsets:
      write_mlp(os, "phi", m.deepsets.phi);
      write_mlp(os, "rho", m.deepsets.rho);
      break;
  }
  write_mlp(os, "head", m.head);
  os << "end\n";
  return os.str();
}

Model model_from_string(const std::string& text) {
  std::istringstream is(text);
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "permrnn-model" || version != 1) {
    throw std::runtime_error("not a permrnn model file");
  }
  Model m;
  std::string tok, kind_name, enc_kind;
  is >> tok >> kind_name;
  if (tok != "kind") throw std::runtime_error("model parse: expected kind");
  m.kind = model_kind_from_name(kind_name);
  is >> tok >> enc_kind >> m.encoding.alphabet_max;
  if (tok != "encoding") throw std::runtime_error("model parse: expected encoding");
  if (enc_kind != "onehot" && enc_kind != "scalar" && enc_kind != "scalar-centered") {
    throw std::runtime_error("model parse: unknown encoding " + enc_kind);
  }
  m.encoding.one_hot = (enc_kind == "onehot");
  m.encoding.centered = (enc_kind == "scalar-centered");
  int logits = 0;
  is >> tok >> logits;
  if (tok != "head_logits") throw std::runtime_error("model parse: expected head_logits");
  m.head_logits = logits != 0;
  switch (m.kind) {
    case ModelKind::rnn: {
      std::string act;
      is >> tok >> act;
      if (tok != "activation") throw std::runtime_error("model parse: expected activation");
      m.rnn.act = activation_from_name(act);
      m.rnn.w_out = read_tensor(is, "w_out");
      m.rnn.w_in = read_tensor(is, "w_in");
      m.rnn.w_state = read_tensor(is, "w_state");
      m.rnn.bias = read_tensor(is, "bias");
      m.rnn.s0 = read_tensor(is, "s0");
      break;
    }
    case ModelKind::gru:
      m.gru.w_update = read_tensor(is, "w_update");
      m.gru.u_update = read_tensor(is, "u_update");
      m.gru.b_update = read_tensor(is, "b_update");
      m.gru.w_reset = read_tensor(is, "w_reset");
      m.gru.u_reset = read_tensor(is, "u_reset");
      m.gru.b_reset = read_tensor(is, "b_reset");
      m.gru.w_cand = read_tensor(is, "w_cand");
      m.gru.u_cand = read_tensor(is, "u_cand");
      m.gru.b_cand = read_tensor(is, "b_cand");
      m.gru.s0 = read_tensor(is, "s0");
      break;
    case ModelKind::deepsets:
      m.deepsets.phi = read_mlp(is, "phi");
      m.deepsets.rho = read_mlp(is, "rho");
      break;
  }
  m.head = read_mlp(is, "head");
  is >> tok;
  if (tok != "end") throw std::runtime_error("model parse: expected end");
  return m;
}

void save_model(const Model& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << model_to_string(m);
  if (!os) throw std::runtime_error("write failed: " + path);
}

Model load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open model file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return model_from_string(buf.str());
}

}  // namespace permrnn
