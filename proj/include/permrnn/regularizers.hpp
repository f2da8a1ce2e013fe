#pragma once

#include <cstdint>
#include <vector>

#include "permrnn/models.hpp"
#include "permrnn/rng.hpp"

namespace permrnn {

struct SamplerConfig {
  int states_per_batch = 32;
  enum class Scheme { uniform, prefix_only } scheme = Scheme::uniform;
  int pairs_per_state = 1;
  std::uint64_t seed = 0;
};

// The ordered element subset of a training sequence that produced a state.
struct StateProvenance {
  int sequence_index = 0;
  std::vector<int> element_indices;  // in fold order; empty means s0 itself
};

// Sampled reachable states. Each state is reproducible bit-exactly by
// re-folding its provenance under the parameters it was collected with.
struct StateBank {
  std::vector<Tensor> states;
  std::vector<StateProvenance> provenance;
  std::uint64_t seed = 0;

  std::size_t size() const { return states.size(); }
};

// Draws cfg.states_per_batch states: sequence uniform, subset length m
// uniform on {0..len} (or a uniform prefix), elements without replacement in
// sampled order, folded from the start state.
StateBank collect_states(const RecurrentModel& cell, const EncodedDataset& data,
                         const SamplerConfig& cfg);

// Re-folds one provenance entry on the tape so gradients reach the
// parameters through the state itself.
Var materialize_state(Tape& tape, const RecurrentModel& cell, const EncodedDataset& data,
                      const StateProvenance& prov);

// f(s,x1,x2) - f(s,x2,x1), differentiable through everything.
Var swap_residual(Tape& tape, const RecurrentModel& cell, Var s, Var x1, Var x2);
Tensor swap_residual(const RecurrentModel& cell, const Tensor& s, const Tensor& x1,
                     const Tensor& x2);

// Mean over (state from bank) x (pairs_per_state input pairs drawn from the
// data's element marginal) of the squared swap residual. Bank states are
// re-materialized under the current parameters unless detach_states is set.
Var sire_penalty(Tape& tape, const RecurrentModel& cell, const EncodedDataset& data,
                 const StateBank& bank, int pairs_per_state, Rng& pair_rng,
                 bool detach_states = false);

enum class SubsetPolicy { uniform_length, full_sequence };

// Mean over samples of the squared distance between final states of two
// independent uniform orderings of a random element subset of a random
// training sequence.
Var sub_penalty(Tape& tape, const RecurrentModel& cell, const EncodedDataset& data,
                int num_samples, Rng& rng, SubsetPolicy policy = SubsetPolicy::uniform_length);

// Every binary sequence of length max_len as a dataset, plus a bank holding
// the fold of every binary string of length <= max_len (prefix provenance).
// Exhaustive-mode cap: max_len <= 6.
struct ExhaustiveBinary {
  EncodedDataset data;
  StateBank bank;
};

ExhaustiveBinary exhaustive_binary_bank(const RecurrentModel& cell, const InputEncoding& enc,
                                        int max_len);

}  // namespace permrnn
