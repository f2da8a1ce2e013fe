#include "permrnn/auditor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace permrnn {

namespace {

double sq_distance(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc;
}

void tally(AuditReport& r, double sq) {
  r.mean_sq_violation += sq;
  r.max_sq_violation = std::max(r.max_sq_violation, sq);
  ++r.num_probes;
}

void finish(AuditReport& r) {
  if (r.num_probes > 0) r.mean_sq_violation /= static_cast<double>(r.num_probes);
}

SetFunction state_eval(const RecurrentModel& cell, const MlpParams* head) {
  return [&cell, head](std::span<const Tensor> xs) {
    Tape tape;
    Var state = run_sequence(tape, cell, xs);
    if (head && !head->empty()) state = mlp_forward(tape, *head, state);
    return state.value();
  };
}

std::vector<Tensor> gather(const std::vector<Tensor>& seq, const std::vector<int>& order) {
  std::vector<Tensor> out;
  out.reserve(order.size());
  for (int i : order) out.push_back(seq[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

std::string audit_report_csv_header() {
  return "probe,mean_sq_violation,max_sq_violation,num_probes,seed";
}

std::string audit_report_csv_row(const AuditReport& r) {
  char buf[96];
  std::ostringstream os;
  os << r.probe << ',';
  std::snprintf(buf, sizeof(buf), "%.17g", r.mean_sq_violation);
  os << buf << ',';
  std::snprintf(buf, sizeof(buf), "%.17g", r.max_sq_violation);
  os << buf << ',' << r.num_probes << ',' << r.seed;
  return os.str();
}

AuditReport audit_perm_invariance_fn(const SetFunction& eval, const EncodedDataset& data,
                                     int perms_per_seq, std::uint64_t seed,
                                     std::size_t min_subset_len) {
  if (perms_per_seq < 1) throw std::invalid_argument("audit_perm_invariance: perms must be >= 1");
  Rng rng = Rng::stream(seed, "audit/full-perm");
  AuditReport report;
  report.probe = "full-perm";
  report.seed = seed;
  for (const auto& seq : data.sequences) {
    if (seq.size() < min_subset_len) continue;
    const Tensor base = eval(seq);
    for (int k = 0; k < perms_per_seq; ++k) {
      const std::vector<int> perm = rng.permutation(static_cast<int>(seq.size()));
      tally(report, sq_distance(base, eval(gather(seq, perm))));
    }
  }
  finish(report);
  return report;
}

AuditReport audit_perm_invariance(const RecurrentModel& cell, const EncodedDataset& data,
                                  int perms_per_seq, std::uint64_t seed,
                                  const MlpParams* head) {
  return audit_perm_invariance_fn(state_eval(cell, head), data, perms_per_seq, seed);
}

AuditReport audit_subset_invariance_fn(const SetFunction& eval, const EncodedDataset& data,
                                       int subsets_per_seq, int perms_per_subset,
                                       std::uint64_t seed, std::size_t min_subset_len) {
  if (subsets_per_seq < 1 || perms_per_subset < 1) {
    throw std::invalid_argument("audit_subset_invariance: counts must be >= 1");
  }
  Rng rng = Rng::stream(seed, "audit/subset-perm");
  AuditReport report;
  report.probe = "subset-perm";
  report.seed = seed;
  for (const auto& seq : data.sequences) {
    const int len = static_cast<int>(seq.size());
    for (int j = 0; j < subsets_per_seq; ++j) {
      const int m = rng.uniform_int(static_cast<int>(min_subset_len), len);
      const std::vector<int> subset = rng.ordered_subset(len, m);
      if (static_cast<std::size_t>(m) < std::max<std::size_t>(min_subset_len, 1)) {
        // empty subset: both orderings are the empty fold
        for (int k = 0; k < perms_per_subset; ++k) tally(report, 0.0);
        continue;
      }
      const std::vector<Tensor> elems = gather(seq, subset);
      for (int k = 0; k < perms_per_subset; ++k) {
        std::vector<int> a = rng.permutation(m);
        std::vector<int> b = rng.permutation(m);
        tally(report, sq_distance(eval(gather(elems, a)), eval(gather(elems, b))));
      }
    }
  }
  finish(report);
  return report;
}

AuditReport audit_subset_invariance(const RecurrentModel& cell, const EncodedDataset& data,
                                    int subsets_per_seq, int perms_per_subset,
                                    std::uint64_t seed, const MlpParams* head) {
  return audit_subset_invariance_fn(state_eval(cell, head), data, subsets_per_seq,
                                    perms_per_subset, seed);
}

AuditReport audit_pair_swap(const RecurrentModel& cell, const StateBank& bank,
                            const EncodedDataset& data, int pairs, std::uint64_t seed) {
  if (bank.size() == 0) throw std::invalid_argument("audit_pair_swap: empty bank");
  if (pairs < 1) throw std::invalid_argument("audit_pair_swap: pairs must be >= 1");
  if (data.element_pool.empty()) throw std::invalid_argument("audit_pair_swap: empty pool");
  Rng rng = Rng::stream(seed, "audit/pair-swap");
  AuditReport report;
  report.probe = "pair-swap";
  report.seed = seed;
  for (int k = 0; k < pairs; ++k) {
    const Tensor& s = bank.states[rng.uniform_below(bank.size())];
    const Tensor& x1 = data.element_pool[rng.uniform_below(data.element_pool.size())];
    const Tensor& x2 = data.element_pool[rng.uniform_below(data.element_pool.size())];
    const Tensor res = swap_residual(cell, s, x1, x2);
    double sq = 0.0;
    for (double v : res.data) sq += v * v;
    tally(report, sq);
  }
  finish(report);
  return report;
}

AuditReport audit_pair_swap_exhaustive(const RecurrentModel& cell, const InputEncoding& enc,
                                       int max_len) {
  const ExhaustiveBinary ex = exhaustive_binary_bank(cell, enc, max_len);
  const Tensor zero = enc.encode(0);
  const Tensor one = enc.encode(1);
  AuditReport report;
  report.probe = "pair-swap";
  for (const Tensor& s : ex.bank.states) {
    for (const Tensor* x1 : {&zero, &one}) {
      for (const Tensor* x2 : {&zero, &one}) {
        const Tensor res = swap_residual(cell, s, *x1, *x2);
        double sq = 0.0;
        for (double v : res.data) sq += v * v;
        tally(report, sq);
      }
    }
  }
  finish(report);
  return report;
}

namespace {

void all_orderings(int m, std::vector<std::vector<int>>& out) {
  std::vector<int> idx(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) idx[static_cast<std::size_t>(i)] = i;
  do {
    out.push_back(idx);
  } while (std::next_permutation(idx.begin(), idx.end()));
}

}  // namespace

AuditReport audit_subset_invariance_exhaustive(const RecurrentModel& cell,
                                               const InputEncoding& enc, int max_len) {
  if (max_len < 1 || max_len > 6) {
    throw std::invalid_argument("audit_subset_invariance_exhaustive: max_len must be in [1,6]");
  }
  const ExhaustiveBinary ex = exhaustive_binary_bank(cell, enc, max_len);
  const SetFunction eval = state_eval(cell, nullptr);

  // Orderings of 0..m-1 for every m, enumerated once.
  std::vector<std::vector<std::vector<int>>> orderings(static_cast<std::size_t>(max_len) + 1);
  for (int m = 1; m <= max_len; ++m) all_orderings(m, orderings[static_cast<std::size_t>(m)]);

  AuditReport report;
  report.probe = "subset-perm";
  for (const auto& seq : ex.data.sequences) {
    const int len = static_cast<int>(seq.size());
    for (int mask = 0; mask < (1 << len); ++mask) {
      std::vector<int> subset;
      for (int i = 0; i < len; ++i) {
        if (mask & (1 << i)) subset.push_back(i);
      }
      const int m = static_cast<int>(subset.size());
      if (m < 2) continue;  // a single ordering; nothing to compare
      const std::vector<Tensor> elems = gather(seq, subset);
      const Tensor base = eval(gather(elems, orderings[static_cast<std::size_t>(m)][0]));
      for (std::size_t k = 1; k < orderings[static_cast<std::size_t>(m)].size(); ++k) {
        tally(report, sq_distance(base, eval(gather(elems, orderings[static_cast<std::size_t>(m)][k]))));
      }
    }
  }
  finish(report);
  return report;
}

double max_adjacent_swap_violation(const RecurrentModel& cell, std::span<const Tensor> seq) {
  const SetFunction eval = state_eval(cell, nullptr);
  std::vector<Tensor> base(seq.begin(), seq.end());
  const Tensor ref = eval(base);
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < base.size(); ++i) {
    std::vector<Tensor> swapped = base;
    std::swap(swapped[i], swapped[i + 1]);
    worst = std::max(worst, sq_distance(ref, eval(swapped)));
  }
  return worst;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<int, int>> swap_chain(const std::vector<int>& perm) {
  const int t = static_cast<int>(perm.size());
  std::vector<bool> seen(perm.size(), false);
  for (int v : perm) {
    if (v < 0 || v >= t || seen[static_cast<std::size_t>(v)]) {
      throw std::invalid_argument("swap_chain: not a permutation of 0..t-1");
    }
    seen[static_cast<std::size_t>(v)] = true;
  }
  std::vector<int> arr(perm.size());
  for (int i = 0; i < t; ++i) arr[static_cast<std::size_t>(i)] = i;
  std::vector<std::pair<int, int>> chain;
  for (int i = 0; i < t; ++i) {
    if (arr[static_cast<std::size_t>(i)] == perm[static_cast<std::size_t>(i)]) continue;
    int j = i + 1;
    while (arr[static_cast<std::size_t>(j)] != perm[static_cast<std::size_t>(i)]) ++j;
    std::swap(arr[static_cast<std::size_t>(i)], arr[static_cast<std::size_t>(j)]);
    chain.emplace_back(i, j);
  }
  return chain;
}

std::vector<std::pair<int, int>> swap_to_adjacent(std::pair<int, int> swap) {
  int i = swap.first;
  int j = swap.second;
  if (i > j) std::swap(i, j);
  std::vector<std::pair<int, int>> out;
  if (i == j) return out;
  // bubble position j down to i, then the displaced element back up
  for (int k = j - 1; k >= i; --k) out.emplace_back(k, k + 1);
  for (int k = i + 1; k < j; ++k) out.emplace_back(k, k + 1);
  return out;
}

std::vector<std::pair<int, int>> swap_chain_adjacent(const std::vector<int>& perm) {
  std::vector<std::pair<int, int>> out;
  for (const auto& s : swap_chain(perm)) {
    const auto adj = swap_to_adjacent(s);
    out.insert(out.end(), adj.begin(), adj.end());
  }
  return out;
}

}  // namespace permrnn
