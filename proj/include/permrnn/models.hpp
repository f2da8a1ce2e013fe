#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "permrnn/rng.hpp"
#include "permrnn/tape.hpp"

namespace permrnn {

enum class Activation { relu, tanh, sigmoid, linear };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

Var apply_activation(Tape& tape, Var x, Activation act);

// ---------------------------------------------------------------------------
// Feed-forward nets

struct MlpLayer {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]
  Activation act = Activation::relu;
};

struct MlpParams {
  std::vector<MlpLayer> layers;  // empty acts as the identity map

  bool empty() const { return layers.empty(); }
  std::size_t input_width() const;
  std::size_t output_width() const;
};

// widths = {in, h1, ..., out}; hidden layers get hidden_act, the last layer
// output_act. Glorot-uniform weights, zero biases.
MlpParams make_mlp(const std::vector<std::size_t>& widths, Activation hidden_act,
                   Activation output_act, Rng& rng);

Var mlp_forward(Tape& tape, const MlpParams& mlp, Var x);

// Plain (non-recorded) evaluation for scalar-in/scalar-out nets.
double mlp_eval_scalar(const MlpParams& mlp, double x);

// ---------------------------------------------------------------------------
// Recurrent cells

// State update s' = w_out · act(w_in x + w_state s + bias); the start state
// is a learned parameter alongside the weights.
struct RnnParams {
  Tensor w_out;    // [d_s x h]
  Tensor w_in;     // [h x d_in]
  Tensor w_state;  // [h x d_s]
  Tensor bias;     // [h]
  Tensor s0;       // [d_s]
  Activation act = Activation::tanh;

  std::size_t hidden_width() const { return bias.size(); }
  std::size_t state_width() const { return s0.size(); }
};

RnnParams make_rnn(std::size_t hidden, std::size_t input_width, std::size_t state_width,
                   Activation act, Rng& rng);

Var rnn_step(Tape& tape, const RnnParams& p, Var s, Var x);

// Gated cell with update/reset gates and a tanh candidate; a saturated
// update gate passes the previous state through unchanged.
struct GruParams {
  Tensor w_update, u_update, b_update;
  Tensor w_reset, u_reset, b_reset;
  Tensor w_cand, u_cand, b_cand;
  Tensor s0;

  std::size_t state_width() const { return s0.size(); }
};

GruParams make_gru(std::size_t hidden, std::size_t input_width, Rng& rng);

Var gru_step(Tape& tape, const GruParams& p, Var s, Var x);

// Minimal interface the sequence runner, regularizers and auditors need.
class RecurrentModel {
 public:
  virtual ~RecurrentModel() = default;
  virtual Var step(Tape& tape, Var state, Var input) const = 0;
  virtual const Tensor& initial_state() const = 0;
};

class RnnCell final : public RecurrentModel {
 public:
  explicit RnnCell(const RnnParams& p) : p_(&p) {}
  Var step(Tape& tape, Var s, Var x) const override { return rnn_step(tape, *p_, s, x); }
  const Tensor& initial_state() const override { return p_->s0; }

 private:
  const RnnParams* p_;
};

class GruCell final : public RecurrentModel {
 public:
  explicit GruCell(const GruParams& p) : p_(&p) {}
  Var step(Tape& tape, Var s, Var x) const override { return gru_step(tape, *p_, s, x); }
  const Tensor& initial_state() const override { return p_->s0; }

 private:
  const GruParams* p_;
};

// Left fold of the cell over xs starting from `state`. Empty xs returns the
// start state. When trace is given it receives the state after every step.
Var run_sequence(Tape& tape, const RecurrentModel& cell, Var state,
                 std::span<const Tensor> xs, std::vector<Var>* trace = nullptr);

// Same, starting from the cell's learned initial state.
Var run_sequence(Tape& tape, const RecurrentModel& cell, std::span<const Tensor> xs,
                 std::vector<Var>* trace = nullptr);

// ---------------------------------------------------------------------------
// DeepSets

struct DeepSetsParams {
  MlpParams phi;  // per-element map
  MlpParams rho;  // map applied to the aggregated sum
};

DeepSetsParams make_deepsets(std::size_t input_width, std::size_t phi_hidden,
                             std::size_t phi_out, std::size_t rho_hidden,
                             std::size_t output_width, Rng& rng);

// rho(sum_i phi(x_i)). The phi outputs are summed in the order of a stable
// sort of the inputs, so any permutation of xs produces a bit-identical
// result despite float addition being non-associative. xs must be non-empty.
Var deepsets_forward(Tape& tape, const DeepSetsParams& p, std::span<const Tensor> xs);

// ---------------------------------------------------------------------------
// Input encoding and full models

struct InputEncoding {
  bool one_hot = false;
  bool centered = false;  // scalar mode: map [0, max] onto [-1, 1]
  int alphabet_max = 1;

  std::size_t width() const {
    return one_hot ? static_cast<std::size_t>(alphabet_max) + 1 : 1;
  }
  Tensor encode(int x) const;
};

struct EncodedDataset {
  std::vector<std::vector<Tensor>> sequences;
  std::vector<double> labels;
  std::vector<Tensor> element_pool;  // multiset of every element occurrence
};

EncodedDataset encode_sequences(const std::vector<std::vector<int>>& sequences,
                                const std::vector<double>& labels,
                                const InputEncoding& enc);

enum class ModelKind { rnn, gru, deepsets };

std::string model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

// A complete trainable model: one recurrent cell or a DeepSets pair, an
// optional output head, and the input encoding it was trained with.
struct Model {
  ModelKind kind = ModelKind::rnn;
  RnnParams rnn;
  GruParams gru;
  DeepSetsParams deepsets;
  MlpParams head;  // empty = identity output mapping
  InputEncoding encoding;
  bool head_logits = false;  // head output is a classification logit

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;

  // Adapter over the recurrent part; contract error for deepsets.
  std::unique_ptr<RecurrentModel> make_cell() const;
};

// Output head application (identity when the head is empty).
Var output_head(Tape& tape, const MlpParams& head, Var state);

// Final state / scalar output of the full model on an encoded sequence.
Var model_final_state(Tape& tape, const Model& m, std::span<const Tensor> xs);
Var model_output(Tape& tape, const Model& m, std::span<const Tensor> xs);

// Encodes a raw integer sequence and returns the scalar model output.
double predict_scalar(const Model& m, std::span<const int> xs);

// ---------------------------------------------------------------------------
// Serialization: plain-text, full decimal precision, bit-exact round trip.

void save_model(const Model& m, const std::string& path);
std::string model_to_string(const Model& m);
Model load_model(const std::string& path);
Model model_from_string(const std::string& text);

}  // namespace permrnn
