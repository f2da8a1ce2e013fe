#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>

#include "permrnn/tasks.hpp"

using namespace permrnn;

TEST_CASE("arithmetic label functions") {
  CHECK(sum_label(std::vector<int>{1, 2, 3}) == 6.0);
  CHECK(range_label(std::vector<int>{5, 5, 5}) == 0.0);
  CHECK(variance_label(std::vector<int>{0, 2}) == 1.0);
  CHECK_THROWS_AS(sum_label(std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("half_range_label") {
  CHECK(half_range_label(std::vector<int>{3, 9, 2, 5, 1, 7}) == 8.0);
  CHECK(half_range_label(std::vector<int>{0, 99}) == -99.0);
  // odd length: floor(5/2) = 2 first-half elements
  CHECK(half_range_label(std::vector<int>{4, 8, 3, 6, 5}) == 8.0 - 3.0);
  CHECK_THROWS_AS(half_range_label(std::vector<int>{7}), std::invalid_argument);

  SUBCASE("invariant within halves, sensitive across them") {
    const std::vector<int> base{3, 9, 2, 5, 1, 7};
    const std::vector<int> within{9, 3, 2, 7, 1, 5};  // halves permuted internally
    CHECK(half_range_label(base) == half_range_label(within));
    const std::vector<int> across{1, 9, 2, 5, 3, 7};  // 3 <-> 1 across the split
    CHECK(half_range_label(base) != half_range_label(across));
  }
}

TEST_CASE("gen_parity") {
  const SequenceDataset ds = gen_parity(500, 2, 10, 42);
  CHECK(ds.size() == 500);
  CHECK(ds.task == "parity");
  CHECK(ds.alphabet_max == 1);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& seq = ds.sequences[i];
    CHECK(seq.size() >= 2);
    CHECK(seq.size() <= 10);
    for (int x : seq) CHECK((x == 0 || x == 1));
    CHECK((ds.labels[i] == 0.0 || ds.labels[i] == 1.0));
    CHECK(ds.labels[i] == task_label("parity", seq));
  }
  // determinism
  const SequenceDataset again = gen_parity(500, 2, 10, 42);
  CHECK(again.sequences == ds.sequences);
  CHECK(again.labels == ds.labels);
  // a different seed changes the data
  CHECK(gen_parity(500, 2, 10, 43).sequences != ds.sequences);
}

TEST_CASE("gen_arithmetic") {
  for (const char* task : {"sum", "range", "variance", "half-range"}) {
    const SequenceDataset ds = gen_arithmetic(task, 200, 10, 19, 7);
    CHECK(ds.size() == 200);
    CHECK(ds.alphabet_max == 19);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK(ds.sequences[i].size() == 10);
      for (int x : ds.sequences[i]) CHECK((x >= 0 && x <= 19));
      CHECK(ds.labels[i] == task_label(task, ds.sequences[i]));
    }
    const SequenceDataset again = gen_arithmetic(task, 200, 10, 19, 7);
    CHECK(again.sequences == ds.sequences);
  }
  CHECK_THROWS_AS(gen_arithmetic("product", 10, 5, 9, 0), std::invalid_argument);
}

TEST_CASE("local_perturb") {
  std::vector<double> input(784);
  for (std::size_t i = 0; i < input.size(); ++i) input[i] = static_cast<double>(i);

  SUBCASE("window size 1 is the identity") {
    const Perturbation p = local_perturb(input, std::vector<int>{1}, 5);
    CHECK(p.output == input);
    for (std::size_t i = 0; i < p.permutation.size(); ++i) {
      CHECK(p.permutation[i] == static_cast<int>(i));
    }
  }

  SUBCASE("output is a permutation with bounded displacement") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const Perturbation p = local_perturb(input, std::vector<int>{4, 7}, seed);
      std::vector<int> sorted = p.permutation;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == static_cast<int>(i));
      for (std::size_t i = 0; i < p.permutation.size(); ++i) {
        CHECK(std::abs(p.permutation[i] - static_cast<int>(i)) <= 11);
      }
      // applying the returned permutation reproduces the output
      for (std::size_t i = 0; i < input.size(); ++i) {
        CHECK(p.output[i] == input[static_cast<std::size_t>(p.permutation[i])]);
      }
    }
  }

  SUBCASE("trailing partial window is permuted within itself") {
    std::vector<double> ten(10);
    for (std::size_t i = 0; i < 10; ++i) ten[i] = static_cast<double>(i);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Perturbation p = local_perturb(ten, std::vector<int>{4}, seed);
      // last block is indices 8,9 only
      for (std::size_t i = 8; i < 10; ++i) CHECK(p.permutation[i] >= 8);
    }
  }
}

TEST_CASE("dataset files round-trip and validate labels") {
  const SequenceDataset ds = gen_arithmetic("variance", 50, 8, 99, 21);
  const std::string text = dataset_to_string(ds);
  const SequenceDataset back = dataset_from_string(text);
  CHECK(back.sequences == ds.sequences);
  CHECK(back.labels == ds.labels);
  CHECK(back.task == ds.task);
  CHECK(back.alphabet_max == ds.alphabet_max);
  CHECK(back.seed == ds.seed);
  CHECK(dataset_to_string(back) == text);

  SUBCASE("corrupted labels are rejected") {
    std::string bad = text;
    const std::size_t tab = bad.find('\t');
    REQUIRE(tab != std::string::npos);
    bad[tab + 1] = bad[tab + 1] == '9' ? '8' : '9';
    CHECK_THROWS_AS(dataset_from_string(bad), std::runtime_error);
  }
}
