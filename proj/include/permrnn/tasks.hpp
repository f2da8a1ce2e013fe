#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace permrnn {

// A generated supervised dataset: integer sequences with scalar labels that
// are always recomputable, exactly, from the task's label function.
struct SequenceDataset {
  std::vector<std::vector<int>> sequences;
  std::vector<double> labels;
  std::string task;  // parity | sum | range | variance | half-range
  int alphabet_max = 1;
  std::uint64_t seed = 0;

  std::size_t size() const { return sequences.size(); }
};

double sum_label(std::span<const int> xs);
double range_label(std::span<const int> xs);
double variance_label(std::span<const int> xs);

// max of the first floor(k/2) elements minus min of the rest; needs k >= 2.
// May be negative.
double half_range_label(std::span<const int> xs);

double task_label(const std::string& task, std::span<const int> xs);

// True when rounding predictions to the nearest integer and comparing with
// the label is the task's headline metric (all tasks except variance).
bool task_uses_accuracy(const std::string& task);

// Fair i.i.d. bits, lengths uniform on [len_lo, len_hi], labels = parity.
SequenceDataset gen_parity(std::size_t count, int len_lo, int len_hi, std::uint64_t seed);

// i.i.d. uniform integers in [0, alphabet_max], fixed length, labels by the
// named task (sum | range | variance | half-range).
SequenceDataset gen_arithmetic(const std::string& task, std::size_t count, int seq_len,
                               int alphabet_max, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Local window perturbation: for each window size w (in order), an
// independent uniform permutation is applied within every consecutive block
// of w entries (a trailing partial block is permuted within itself).
// output[i] == input[permutation[i]].

struct Perturbation {
  std::vector<double> output;
  std::vector<int> permutation;
};

Perturbation local_perturb(std::span<const double> vec, std::span<const int> window_sizes,
                           std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dataset files: a header line "<task> <alphabet-max> <seed>" followed by one
// line per example, "x1 x2 ... xn<TAB>label". Loading re-derives every label
// from the task function and requires an exact match.

std::string dataset_to_string(const SequenceDataset& ds);
SequenceDataset dataset_from_string(const std::string& text);
void save_dataset(const SequenceDataset& ds, const std::string& path);
SequenceDataset load_dataset(const std::string& path);

}  // namespace permrnn
