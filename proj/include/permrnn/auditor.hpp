#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "permrnn/models.hpp"
#include "permrnn/regularizers.hpp"

namespace permrnn {

// Violations are squared L2 distances between final states (or outputs when
// a head is supplied) that an invariant model would make equal.
struct AuditReport {
  std::string probe;  // full-perm | subset-perm | pair-swap
  double mean_sq_violation = 0.0;
  double max_sq_violation = 0.0;
  long num_probes = 0;
  std::uint64_t seed = 0;
};

std::string audit_report_csv_header();
std::string audit_report_csv_row(const AuditReport& r);

using SetFunction = std::function<Tensor(std::span<const Tensor>)>;

// Compares each sequence's final state under the identity order against
// sampled permutations.
AuditReport audit_perm_invariance(const RecurrentModel& cell, const EncodedDataset& data,
                                  int perms_per_seq, std::uint64_t seed,
                                  const MlpParams* head = nullptr);
AuditReport audit_perm_invariance_fn(const SetFunction& eval, const EncodedDataset& data,
                                     int perms_per_seq, std::uint64_t seed,
                                     std::size_t min_subset_len = 0);

// Samples element subsets, then pairs of orderings of each subset.
AuditReport audit_subset_invariance(const RecurrentModel& cell, const EncodedDataset& data,
                                    int subsets_per_seq, int perms_per_subset,
                                    std::uint64_t seed, const MlpParams* head = nullptr);
AuditReport audit_subset_invariance_fn(const SetFunction& eval, const EncodedDataset& data,
                                       int subsets_per_seq, int perms_per_subset,
                                       std::uint64_t seed, std::size_t min_subset_len = 0);

// Squared swap residuals over sampled (bank state, x1, x2) triples; the
// audit twin of the SIRE penalty.
AuditReport audit_pair_swap(const RecurrentModel& cell, const StateBank& bank,
                            const EncodedDataset& data, int pairs, std::uint64_t seed);

// Exhaustive binary-alphabet variants (length cap 6): every reachable state
// from folds of length <= max_len with all four input pairs, and every
// ordering of every element subset of every length-max_len sequence.
AuditReport audit_pair_swap_exhaustive(const RecurrentModel& cell, const InputEncoding& enc,
                                       int max_len);
AuditReport audit_subset_invariance_exhaustive(const RecurrentModel& cell,
                                               const InputEncoding& enc, int max_len);

// Largest squared state change caused by transposing one adjacent input pair
// anywhere in the sequence.
double max_adjacent_swap_violation(const RecurrentModel& cell, std::span<const Tensor> seq);

// Decomposes a permutation into the element swaps that map identity onto it:
// repeatedly fix the first misplaced position by swapping it with the
// position currently holding its value.
std::vector<std::pair<int, int>> swap_chain(const std::vector<int>& perm);

// One (i,j) swap as 2(j-i)-1 adjacent transpositions.
std::vector<std::pair<int, int>> swap_to_adjacent(std::pair<int, int> swap);

// Full adjacent-transposition decomposition of a permutation; never longer
// than t^2 for a permutation of size t.
std::vector<std::pair<int, int>> swap_chain_adjacent(const std::vector<int>& perm);

}  // namespace permrnn
