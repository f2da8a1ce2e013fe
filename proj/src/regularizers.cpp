#include "permrnn/regularizers.hpp"

#include <stdexcept>

namespace permrnn {

StateBank collect_states(const RecurrentModel& cell, const EncodedDataset& data,
                         const SamplerConfig& cfg) {
  if (data.sequences.empty()) throw std::invalid_argument("collect_states: empty dataset");
  if (cfg.states_per_batch < 1 || cfg.pairs_per_state < 1) {
    throw std::invalid_argument("collect_states: counts must be >= 1");
  }
  Rng rng = Rng::stream(cfg.seed, "collect-states");
  StateBank bank;
  bank.seed = cfg.seed;
  bank.states.reserve(static_cast<std::size_t>(cfg.states_per_batch));
  bank.provenance.reserve(static_cast<std::size_t>(cfg.states_per_batch));
  for (int k = 0; k < cfg.states_per_batch; ++k) {
    StateProvenance prov;
    prov.sequence_index = static_cast<int>(rng.uniform_below(data.sequences.size()));
    const int len = static_cast<int>(data.sequences[static_cast<std::size_t>(prov.sequence_index)].size());
    const int m = rng.uniform_int(0, len);
    if (cfg.scheme == SamplerConfig::Scheme::prefix_only) {
      prov.element_indices.resize(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i) prov.element_indices[static_cast<std::size_t>(i)] = i;
    } else {
      prov.element_indices = rng.ordered_subset(len, m);
    }
    Tape tape;
    bank.states.push_back(materialize_state(tape, cell, data, prov).value());
    bank.provenance.push_back(std::move(prov));
  }
  return bank;
}

Var materialize_state(Tape& tape, const RecurrentModel& cell, const EncodedDataset& data,
                      const StateProvenance& prov) {
  const auto& seq = data.sequences.at(static_cast<std::size_t>(prov.sequence_index));
  Var state = tape.leaf(cell.initial_state());
  for (int idx : prov.element_indices) {
    state = cell.step(tape, state, tape.constant(seq.at(static_cast<std::size_t>(idx))));
  }
  return state;
}

Var swap_residual(Tape& tape, const RecurrentModel& cell, Var s, Var x1, Var x2) {
  Var forward = cell.step(tape, cell.step(tape, s, x1), x2);
  Var swapped = cell.step(tape, cell.step(tape, s, x2), x1);
  return tape.sub(forward, swapped);
}

Tensor swap_residual(const RecurrentModel& cell, const Tensor& s, const Tensor& x1,
                     const Tensor& x2) {
  Tape tape;
  return swap_residual(tape, cell, tape.constant(s), tape.constant(x1), tape.constant(x2))
      .value();
}

Var sire_penalty(Tape& tape, const RecurrentModel& cell, const EncodedDataset& data,
                 const StateBank& bank, int pairs_per_state, Rng& pair_rng,
                 bool detach_states) {
  if (bank.size() == 0) throw std::invalid_argument("sire_penalty: empty state bank");
  if (pairs_per_state < 1) throw std::invalid_argument("sire_penalty: pairs must be >= 1");
  if (data.element_pool.empty()) throw std::invalid_argument("sire_penalty: empty element pool");

  Var total;
  long terms = 0;
  for (std::size_t b = 0; b < bank.size(); ++b) {
    Var state = detach_states ? tape.constant(bank.states[b])
                              : materialize_state(tape, cell, data, bank.provenance[b]);
    for (int k = 0; k < pairs_per_state; ++k) {
      const Tensor& x1 = data.element_pool[pair_rng.uniform_below(data.element_pool.size())];
      const Tensor& x2 = data.element_pool[pair_rng.uniform_below(data.element_pool.size())];
      Var res = swap_residual(tape, cell, state, tape.constant(x1), tape.constant(x2));
      Var sq = tape.sum(tape.square(res));
      total = total.valid() ? tape.add(total, sq) : sq;
      ++terms;
    }
  }
  return tape.scale(total, 1.0 / static_cast<double>(terms));
}

Var sub_penalty(Tape& tape, const RecurrentModel& cell, const EncodedDataset& data,
                int num_samples, Rng& rng, SubsetPolicy policy) {
  if (num_samples < 1) throw std::invalid_argument("sub_penalty: num_samples must be >= 1");
  if (data.sequences.empty()) throw std::invalid_argument("sub_penalty: empty dataset");

  Var total;
  for (int k = 0; k < num_samples; ++k) {
    const auto& seq = data.sequences[rng.uniform_below(data.sequences.size())];
    const int len = static_cast<int>(seq.size());
    const int m = policy == SubsetPolicy::full_sequence ? len : rng.uniform_int(0, len);
    std::vector<int> subset = rng.ordered_subset(len, m);
    std::vector<int> first = subset;
    std::vector<int> second = subset;
    rng.shuffle(first);
    rng.shuffle(second);
    auto fold = [&](const std::vector<int>& order) {
      Var state = tape.leaf(cell.initial_state());
      for (int idx : order) {
        state = cell.step(tape, state, tape.constant(seq[static_cast<std::size_t>(idx)]));
      }
      return state;
    };
    Var diff = tape.sub(fold(first), fold(second));
    Var sq = tape.sum(tape.square(diff));
    total = total.valid() ? tape.add(total, sq) : sq;
  }
  return tape.scale(total, 1.0 / static_cast<double>(num_samples));
}

ExhaustiveBinary exhaustive_binary_bank(const RecurrentModel& cell, const InputEncoding& enc,
                                        int max_len) {
  if (max_len < 1 || max_len > 6) {
    throw std::invalid_argument("exhaustive_binary_bank: max_len must be in [1,6]");
  }
  ExhaustiveBinary out;
  std::vector<std::vector<int>> seqs;
  const int count = 1 << max_len;
  for (int bits = 0; bits < count; ++bits) {
    std::vector<int> seq(static_cast<std::size_t>(max_len));
    for (int i = 0; i < max_len; ++i) seq[static_cast<std::size_t>(i)] = (bits >> i) & 1;
    seqs.push_back(std::move(seq));
  }
  out.data = encode_sequences(seqs, std::vector<double>(seqs.size(), 0.0), enc);

  // Every binary string of length m <= max_len is the m-prefix of some
  // length-max_len sequence above; sequence index = its bit pattern.
  for (int m = 0; m <= max_len; ++m) {
    const int prefixes = 1 << m;
    for (int bits = 0; bits < prefixes; ++bits) {
      StateProvenance prov;
      prov.sequence_index = bits;  // low m bits match, rest zero-padded
      prov.element_indices.resize(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i) prov.element_indices[static_cast<std::size_t>(i)] = i;
      Tape tape;
      out.bank.states.push_back(materialize_state(tape, cell, out.data, prov).value());
      out.bank.provenance.push_back(std::move(prov));
    }
  }
  return out;
}

}  // namespace permrnn
