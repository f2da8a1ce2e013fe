#include "permrnn/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "permrnn/exact.hpp"
#include "permrnn/rng.hpp"

namespace permrnn {

namespace {

void require_nonempty(std::span<const int> xs, const char* what) {
  if (xs.empty()) throw std::invalid_argument(std::string(what) + ": empty sequence");
}

}  // namespace

double sum_label(std::span<const int> xs) {
  require_nonempty(xs, "sum_label");
  double acc = 0.0;
  for (int x : xs) acc += static_cast<double>(x);
  return acc;
}

double range_label(std::span<const int> xs) {
  require_nonempty(xs, "range_label");
  auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
  return static_cast<double>(*mx - *mn);
}

double variance_label(std::span<const int> xs) {
  require_nonempty(xs, "variance_label");
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (int x : xs) mean += static_cast<double>(x);
  mean /= n;
  double acc = 0.0;
  for (int x : xs) {
    const double d = static_cast<double>(x) - mean;
    acc += d * d;
  }
  return acc / n;
}

double half_range_label(std::span<const int> xs) {
  if (xs.size() < 2) throw std::invalid_argument("half_range_label: need length >= 2");
  const std::size_t half = xs.size() / 2;
  int mx = xs[0];
  for (std::size_t i = 1; i < half; ++i) mx = std::max(mx, xs[i]);
  int mn = xs[half];
  for (std::size_t i = half + 1; i < xs.size(); ++i) mn = std::min(mn, xs[i]);
  return static_cast<double>(mx - mn);
}

double task_label(const std::string& task, std::span<const int> xs) {
  if (task == "parity") return static_cast<double>(parity_oracle(xs));
  if (task == "sum") return sum_label(xs);
  if (task == "range") return range_label(xs);
  if (task == "variance") return variance_label(xs);
  if (task == "half-range") return half_range_label(xs);
  throw std::invalid_argument("unknown task: " + task);
}

bool task_uses_accuracy(const std::string& task) {
  if (task == "variance") return false;
  (void)task_label(task, std::vector<int>{0, 0});  // validates the tag
  return true;
}

SequenceDataset gen_parity(std::size_t count, int len_lo, int len_hi, std::uint64_t seed) {
  if (len_lo < 1 || len_lo > len_hi) {
    throw std::invalid_argument("gen_parity: need 1 <= len_lo <= len_hi");
  }
  Rng rng = Rng::stream(seed, "gen/parity");
  SequenceDataset ds;
  ds.task = "parity";
  ds.alphabet_max = 1;
  ds.seed = seed;
  ds.sequences.reserve(count);
  ds.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int len = rng.uniform_int(len_lo, len_hi);
    std::vector<int> seq(static_cast<std::size_t>(len));
    for (int& x : seq) x = static_cast<int>(rng.uniform_below(2));
    ds.labels.push_back(static_cast<double>(parity_oracle(seq)));
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

SequenceDataset gen_arithmetic(const std::string& task, std::size_t count, int seq_len,
                               int alphabet_max, std::uint64_t seed) {
  if (task != "sum" && task != "range" && task != "variance" && task != "half-range") {
    throw std::invalid_argument("gen_arithmetic: unknown task " + task);
  }
  if (seq_len < 1 || (task == "half-range" && seq_len < 2)) {
    throw std::invalid_argument("gen_arithmetic: sequence length too short for " + task);
  }
  if (alphabet_max < 1) throw std::invalid_argument("gen_arithmetic: alphabet_max must be >= 1");
  Rng rng = Rng::stream(seed, "gen/" + task);
  SequenceDataset ds;
  ds.task = task;
  ds.alphabet_max = alphabet_max;
  ds.seed = seed;
  ds.sequences.reserve(count);
  ds.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<int> seq(static_cast<std::size_t>(seq_len));
    for (int& x : seq) x = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(alphabet_max) + 1));
    ds.labels.push_back(task_label(task, seq));
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

Perturbation local_perturb(std::span<const double> vec, std::span<const int> window_sizes,
                           std::uint64_t seed) {
  const std::size_t n = vec.size();
  Rng rng = Rng::stream(seed, "local-perturb");
  std::vector<int> total(n);
  for (std::size_t i = 0; i < n; ++i) total[i] = static_cast<int>(i);

  for (int w : window_sizes) {
    if (w < 1) throw std::invalid_argument("local_perturb: window size must be >= 1");
    std::vector<int> pass(n);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(w)) {
      const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(w), n - start);
      std::vector<int> block = rng.permutation(static_cast<int>(len));
      for (std::size_t i = 0; i < len; ++i) {
        pass[start + i] = static_cast<int>(start) + block[i];
      }
    }
    // out[i] = mid[pass[i]] and mid[j] = in[total[j]]  =>  out[i] = in[total[pass[i]]]
    std::vector<int> composed(n);
    for (std::size_t i = 0; i < n; ++i) {
      composed[i] = total[static_cast<std::size_t>(pass[i])];
    }
    total = std::move(composed);
  }

  Perturbation out;
  out.permutation = std::move(total);
  out.output.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.output[i] = vec[static_cast<std::size_t>(out.permutation[i])];
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string dataset_to_string(const SequenceDataset& ds) {
  std::ostringstream os;
  os << ds.task << ' ' << ds.alphabet_max << ' ' << ds.seed << '\n';
  char buf[32];
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const auto& seq = ds.sequences[i];
    for (std::size_t j = 0; j < seq.size(); ++j) {
      if (j) os << ' ';
      os << seq[j];
    }
    std::snprintf(buf, sizeof(buf), "%.17g", ds.labels[i]);
    os << '\t' << buf << '\n';
  }
  return os.str();
}

SequenceDataset dataset_from_string(const std::string& text) {
  std::istringstream is(text);
  SequenceDataset ds;
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error("dataset parse: missing header");
  {
    std::istringstream hs(header);
    if (!(hs >> ds.task >> ds.alphabet_max >> ds.seed)) {
      throw std::runtime_error("dataset parse: bad header line");
    }
  }
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("dataset parse: missing label field");
    std::istringstream ss(line.substr(0, tab));
    std::vector<int> seq;
    int x;
    while (ss >> x) {
      if (x < 0 || x > ds.alphabet_max) {
        throw std::runtime_error("dataset parse: element outside [0," +
                                 std::to_string(ds.alphabet_max) + "]");
      }
      seq.push_back(x);
    }
    const double label = std::strtod(line.c_str() + tab + 1, nullptr);
    const double expect = task_label(ds.task, seq);
    if (label != expect) {
      throw std::runtime_error("dataset parse: label does not match the " + ds.task +
                               " label function");
    }
    ds.sequences.push_back(std::move(seq));
    ds.labels.push_back(label);
  }
  return ds;
}

void save_dataset(const SequenceDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << dataset_to_string(ds);
  if (!os) throw std::runtime_error("write failed: " + path);
}

SequenceDataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return dataset_from_string(buf.str());
}

}  // namespace permrnn
