#ifndef SRTUNE_STATS_HPP
#define SRTUNE_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "srtune/errors.hpp"

namespace srtune {

enum class TestMethod { exact, normal_approximation };

inline const char* to_string(TestMethod m) { return m == TestMethod::exact ? "exact" : "normal-approximation"; }

struct StatTestResult {
  double statistic = 0.0; // U of the first sample, or W+ for the signed-rank test
  double p_value = 1.0;   // two-sided
  TestMethod method = TestMethod::exact;
  std::size_t n_a = 0;
  std::size_t n_b = 0; // second sample size; effective pair count is n_a for signed-rank
};

/// Combined sizes up to this use full enumeration for the rank-sum test.
inline constexpr std::size_t ranksum_exact_limit = 12;
/// Non-zero differences up to this use full enumeration for the signed-rank test.
inline constexpr std::size_t signedrank_exact_limit = 20;
/// Largest sample for which an exact p can be requested explicitly.
inline constexpr std::size_t forced_exact_limit = 64;

namespace detail {

/// Midranks doubled so they stay integral: a value tied over positions
/// [i, j] (1-based) gets i + j.
inline std::vector<int> doubled_midranks(std::span<const double> v, double* tie_term = nullptr) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<int> ranks(n);
  double ties = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]])
      ++j;
    const int doubled = static_cast<int>(i + 1 + j + 1);
    for (std::size_t t = i; t <= j; ++t)
      ranks[order[t]] = doubled;
    const double size = static_cast<double>(j - i + 1);
    ties += size * size * size - size;
    i = j + 1;
  }
  if (tie_term)
    *tie_term = ties;
  return ranks;
}

inline double normal_two_sided(double deviation, double variance) {
  if (variance <= 0.0)
    return 1.0;
  const double z = std::max(0.0, deviation - 0.5) / std::sqrt(variance);
  return std::clamp(std::erfc(z / std::sqrt(2.0)), 0.0, 1.0);
}

} // namespace detail

/// Wilcoxon rank-sum (Mann-Whitney U) test, two-sided, midranks for ties.
/// Exact null distribution when n_a + n_b <= 12, otherwise the normal
/// approximation with tie and continuity corrections. `method` overrides the
/// automatic choice.
inline StatTestResult ranksum_test(std::span<const double> a, std::span<const double> b,
                                   std::optional<TestMethod> method = std::nullopt) {
  if (a.empty() || b.empty())
    throw InputError("ranksum_test: empty sample");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::size_t na = a.size(), nb = b.size(), n = pooled.size();
  double tie_term = 0;
  const std::vector<int> r2 = detail::doubled_midranks(pooled, &tie_term);
  long long sum_a2 = 0;
  for (std::size_t i = 0; i < na; ++i)
    sum_a2 += r2[i];

  StatTestResult res;
  res.n_a = na;
  res.n_b = nb;
  const double ra = 0.5 * static_cast<double>(sum_a2);
  res.statistic = ra - 0.5 * static_cast<double>(na * (na + 1));

  const bool exact = method ? *method == TestMethod::exact : n <= ranksum_exact_limit;
  if (exact && n > forced_exact_limit)
    throw InputError("ranksum_test: sample too large for exact enumeration");
  if (exact) {
    // Count size-na subsets of the doubled ranks by their sum.
    const int max_sum = std::accumulate(r2.begin(), r2.end(), 0);
    std::vector<std::vector<double>> ways(na + 1, std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
    ways[0][0] = 1.0;
    for (int r : r2)
      for (std::size_t c = na; c >= 1; --c)
        for (int s = max_sum; s >= r; --s)
          ways[c][static_cast<std::size_t>(s)] += ways[c - 1][static_cast<std::size_t>(s - r)];
    // Mean of the doubled sum is na·(n + 1); compare doubled deviations.
    const long long mean2 = static_cast<long long>(na) * static_cast<long long>(n + 1);
    const long long obs = std::llabs(sum_a2 - mean2);
    double hits = 0, total = 0;
    for (int s = 0; s <= max_sum; ++s) {
      const double w = ways[na][static_cast<std::size_t>(s)];
      total += w;
      if (std::llabs(s - mean2) >= obs)
        hits += w;
    }
    res.method = TestMethod::exact;
    res.p_value = std::clamp(hits / total, 0.0, 1.0);
    return res;
  }
  const double mu = 0.5 * static_cast<double>(na * nb);
  const double nd = static_cast<double>(n);
  const double var = static_cast<double>(na * nb) / 12.0 * ((nd + 1.0) - tie_term / (nd * (nd - 1.0)));
  res.method = TestMethod::normal_approximation;
  res.p_value = detail::normal_two_sided(std::abs(res.statistic - mu), var);
  return res;
}

/// Wilcoxon signed-rank test on paired samples, two-sided. Zero differences
/// are dropped; exact enumeration of sign patterns for up to 20 remaining
/// pairs, otherwise the normal approximation with tie and continuity
/// corrections. Stands in for the "paired rank-sum" comparisons. `method`
/// overrides the automatic choice.
inline StatTestResult signedrank_test(std::span<const double> x, std::span<const double> y,
                                      std::optional<TestMethod> method = std::nullopt) {
  if (x.size() != y.size())
    throw InputError("signedrank_test: samples must be paired");
  if (x.empty())
    throw InputError("signedrank_test: empty sample");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (d != 0.0)
      diffs.push_back(d);
  }
  if (diffs.empty())
    throw DegenerateInputError("signedrank_test: all differences are zero");
  std::vector<double> mags(diffs.size());
  for (std::size_t i = 0; i < diffs.size(); ++i)
    mags[i] = std::abs(diffs[i]);
  double tie_term = 0;
  const std::vector<int> r2 = detail::doubled_midranks(mags, &tie_term);
  const std::size_t n = diffs.size();
  long long w2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += r2[i];
    if (diffs[i] > 0)
      w2 += r2[i];
  }
  StatTestResult res;
  res.n_a = n;
  res.n_b = n;
  res.statistic = 0.5 * static_cast<double>(w2);

  const bool exact = method ? *method == TestMethod::exact : n <= signedrank_exact_limit;
  if (exact && n > forced_exact_limit)
    throw InputError("signedrank_test: sample too large for exact enumeration");
  if (exact) {
    std::vector<double> ways(static_cast<std::size_t>(total2) + 1, 0.0);
    ways[0] = 1.0;
    for (int r : r2)
      for (long long s = total2; s >= r; --s)
        ways[static_cast<std::size_t>(s)] += ways[static_cast<std::size_t>(s - r)];
    // Null mean of the doubled W+ is total2 / 2; compare 2·deviation.
    const long long obs = std::llabs(2 * w2 - total2);
    double hits = 0, all = 0;
    for (long long s = 0; s <= total2; ++s) {
      const double w = ways[static_cast<std::size_t>(s)];
      all += w;
      if (std::llabs(2 * s - total2) >= obs)
        hits += w;
    }
    res.method = TestMethod::exact;
    res.p_value = std::clamp(hits / all, 0.0, 1.0);
    return res;
  }
  const double nd = static_cast<double>(n);
  const double mu = nd * (nd + 1.0) / 4.0;
  const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
  res.method = TestMethod::normal_approximation;
  res.p_value = detail::normal_two_sided(std::abs(res.statistic - mu), var);
  return res;
}

} // namespace srtune

#endif // SRTUNE_STATS_HPP
