#pragma once

// ROUGE-N / ROUGE-L F-scores over token lists and a paired approximate
// randomization significance test.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace extsum {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static RougeScore from_ratios(double precision, double recall);
};

using Tokens = std::vector<std::string>;

// Clipped n-gram overlap. n must be 1 or 2.
RougeScore rouge_n(std::span<const std::string> hypothesis, std::span<const std::string> reference, int n);
RougeScore rouge_l(std::span<const std::string> hypothesis, std::span<const std::string> reference);
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

struct RougeTriple {
  RougeScore rouge1, rouge2, rougeL;
};
RougeTriple rouge_all(std::span<const std::string> hypothesis, std::span<const std::string> reference);

struct SigTestResult {
  double p_value = 1.0;
  std::size_t n_trials = 0;
  double observed_delta = 0.0;
};

// Paired approximate randomization on mean(a) - mean(b). Each trial swaps
// every pair independently with probability 1/2;
// p = (#{|trial delta| >= |observed|} + 1) / (n_trials + 1).
SigTestResult approx_randomization(std::span<const double> scores_a, std::span<const double> scores_b,
                                   std::size_t n_trials, std::uint64_t seed);

// p * m, clipped to 1.
std::vector<double> bonferroni(std::span<const double> p_values, std::size_t m);

}  // namespace extsum
