#include "extsum/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>

namespace extsum {

namespace {

using NgramCounts = std::map<std::vector<std::string_view>, std::size_t>;

NgramCounts count_ngrams(std::span<const std::string> tokens, int n) {
  NgramCounts counts;
  const auto len = static_cast<std::size_t>(n);
  if (tokens.size() < len) return counts;
  for (std::size_t i = 0; i + len <= tokens.size(); ++i) {
    std::vector<std::string_view> gram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                       tokens.begin() + static_cast<std::ptrdiff_t>(i + len));
    ++counts[std::move(gram)];
  }
  return counts;
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

RougeScore RougeScore::from_ratios(double precision, double recall) {
  RougeScore s{precision, recall, 0.0};
  if (precision + recall > 0.0) s.f1 = 2.0 * precision * recall / (precision + recall);
  return s;
}

RougeScore rouge_n(std::span<const std::string> hypothesis, std::span<const std::string> reference, int n) {
  if (n != 1 && n != 2) throw std::invalid_argument("rouge_n: n must be 1 or 2");
  const auto hyp = count_ngrams(hypothesis, n);
  const auto ref = count_ngrams(reference, n);
  std::size_t hyp_total = 0, ref_total = 0, overlap = 0;
  for (const auto& [g, c] : hyp) hyp_total += c;
  for (const auto& [g, c] : ref) {
    ref_total += c;
    if (auto it = hyp.find(g); it != hyp.end()) overlap += std::min(c, it->second);
  }
  return RougeScore::from_ratios(ratio(overlap, hyp_total), ratio(overlap, ref_total));
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  // Two-row DP over b.
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(std::span<const std::string> hypothesis, std::span<const std::string> reference) {
  const std::size_t l = lcs_length(hypothesis, reference);
  return RougeScore::from_ratios(ratio(l, hypothesis.size()), ratio(l, reference.size()));
}

RougeTriple rouge_all(std::span<const std::string> hypothesis, std::span<const std::string> reference) {
  return {rouge_n(hypothesis, reference, 1), rouge_n(hypothesis, reference, 2), rouge_l(hypothesis, reference)};
}

SigTestResult approx_randomization(std::span<const double> a, std::span<const double> b, std::size_t n_trials,
                                   std::uint64_t seed) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("approx_randomization: " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + " paired scores");
  }
  if (a.empty()) throw std::invalid_argument("approx_randomization: no scores");
  if (n_trials == 0) throw std::invalid_argument("approx_randomization: n_trials must be >= 1");

  const double n = static_cast<double>(a.size());
  // Accumulate per-pair differences so that (a,b) and (b,a) see identical
  // arithmetic up to sign.
  std::vector<double> diff(a.size());
  double observed = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff[i] = a[i] - b[i];
    observed += diff[i];
  }
  observed /= n;
  const double threshold = std::abs(observed);

  std::mt19937_64 rng(seed);
  std::size_t at_least = 0;
  for (std::size_t t = 0; t < n_trials; ++t) {
    double delta = 0.0;
    std::uint64_t bits = 0;
    int remaining = 0;
    for (double d : diff) {
      if (remaining == 0) {
        bits = rng();
        remaining = 64;
      }
      delta += (bits & 1u) ? -d : d;
      bits >>= 1;
      --remaining;
    }
    delta /= n;
    // Relative slack absorbs summation-order rounding between the observed and
    // the trial deltas.
    if (std::abs(delta) >= threshold - 1e-12 * std::max(1.0, threshold)) ++at_least;
  }
  SigTestResult r;
  r.n_trials = n_trials;
  r.observed_delta = observed;
  r.p_value = static_cast<double>(at_least + 1) / static_cast<double>(n_trials + 1);
  return r;
}

std::vector<double> bonferroni(std::span<const double> p_values, std::size_t m) {
  if (m < p_values.size()) throw std::invalid_argument("bonferroni: m smaller than the number of comparisons");
  std::vector<double> out;
  out.reserve(p_values.size());
  for (double p : p_values) out.push_back(std::min(1.0, p * static_cast<double>(m)));
  return out;
}

}  // namespace extsum
