// Independent brute-force oracles for the statistics under test. These stay
// deliberately separate from the library implementations: straight-line
// formula transcriptions, longhand sum-of-squares, and literal enumerations.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace oracle {

inline double mae(const std::vector<double>& a, const std::vector<double>& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::fabs(a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

inline double sae(const std::vector<double>& a, const std::vector<double>& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::fabs(a[i] - b[i]);
  return total;
}

inline double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(total / static_cast<double>(a.size()));
}

// r = sum((x-mx)(y-my)) / sqrt(sum((x-mx)^2) sum((y-my)^2))
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (x[i] - mx) * (y[i] - my);
    dx += (x[i] - mx) * (x[i] - mx);
    dy += (y[i] - my) * (y[i] - my);
  }
  return num / std::sqrt(dx * dy);
}

// Midranks computed by counting smaller elements and ties, no sorting.
inline std::vector<double> midranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t smaller = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (v[j] < v[i]) ++smaller;
      if (v[j] == v[i]) ++equal;
    }
    ranks[i] = static_cast<double>(smaller) + (static_cast<double>(equal) + 1.0) / 2.0;
  }
  return ranks;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(midranks(x), midranks(y));
}

struct AnovaDecomposition {
  double msr, msc, mse;
  double icc31, icc21;
};

// Longhand two-way ANOVA without replication over an n x k matrix
// (row-major), followed by the single-rater ICC definitions.
inline AnovaDecomposition anova_icc(const std::vector<double>& cells, std::size_t n,
                                    std::size_t k) {
  double grand = 0.0;
  for (double v : cells) grand += v;
  grand /= static_cast<double>(n * k);

  double ss_total = 0.0;
  for (double v : cells) ss_total += (v - grand) * (v - grand);

  double ss_rows = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < k; ++j) row += cells[i * k + j];
    row /= static_cast<double>(k);
    ss_rows += static_cast<double>(k) * (row - grand) * (row - grand);
  }

  double ss_cols = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < n; ++i) col += cells[i * k + j];
    col /= static_cast<double>(n);
    ss_cols += static_cast<double>(n) * (col - grand) * (col - grand);
  }

  const double ss_err = ss_total - ss_rows - ss_cols;
  AnovaDecomposition d{};
  d.msr = ss_rows / static_cast<double>(n - 1);
  d.msc = ss_cols / static_cast<double>(k - 1);
  d.mse = ss_err / static_cast<double>((n - 1) * (k - 1));
  d.icc31 = (d.msr - d.mse) / (d.msr + static_cast<double>(k - 1) * d.mse);
  d.icc21 = (d.msr - d.mse) /
            (d.msr + static_cast<double>(k - 1) * d.mse +
             (static_cast<double>(k) / static_cast<double>(n)) * (d.msc - d.mse));
  return d;
}

// Exact two-sided Wilcoxon p by literal enumeration of all 2^n sign
// assignments over integer ranks 1..n: the fraction of assignments whose
// min(W+, W-) is at most the observed min. Gray-code order keeps each step
// a single rank flip.
inline double wilcoxon_enumeration_p(std::size_t n, double w_observed) {
  const double total_rank_sum = static_cast<double>(n * (n + 1) / 2);
  const std::uint64_t patterns = std::uint64_t{1} << n;
  double w_plus = 0.0;  // pattern 0: every sign negative
  std::uint64_t extreme = 0;
  std::uint64_t previous_gray = 0;
  for (std::uint64_t index = 0; index < patterns; ++index) {
    const std::uint64_t gray = index ^ (index >> 1);
    const std::uint64_t changed = gray ^ previous_gray;
    if (changed != 0) {
      int bit = 0;
      std::uint64_t c = changed;
      while ((c & 1) == 0) {
        c >>= 1;
        ++bit;
      }
      const double rank = static_cast<double>(bit + 1);
      w_plus += (gray & changed) ? rank : -rank;
    }
    previous_gray = gray;
    const double w_min = std::min(w_plus, total_rank_sum - w_plus);
    if (w_min <= w_observed) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(patterns);
}

struct BhOracle {
  std::vector<bool> reject;
  std::vector<double> adjusted;
};

// Quadratic transcription of the step-up definition: sort, reject the
// largest prefix with p_(i) <= (i/m) q, adjusted p_(i) = min over j >= i of
// min(1, m p_(j) / j).
inline BhOracle benjamini_hochberg(const std::vector<double>& p, double q) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return p[i] < p[j]; });

  std::size_t largest = 0;
  for (std::size_t i = 1; i <= m; ++i) {
    if (p[order[i - 1]] <= q * static_cast<double>(i) / static_cast<double>(m)) largest = i;
  }

  BhOracle out;
  out.reject.assign(m, false);
  out.adjusted.assign(m, 0.0);
  for (std::size_t i = 1; i <= largest; ++i) out.reject[order[i - 1]] = true;
  for (std::size_t i = 1; i <= m; ++i) {
    double best = 1.0;
    for (std::size_t j = i; j <= m; ++j) {
      best = std::min(best, std::min(1.0, static_cast<double>(m) * p[order[j - 1]] /
                                              static_cast<double>(j)));
    }
    out.adjusted[order[i - 1]] = best;
  }
  return out;
}

// The dual-axis decision tables written out cell by cell, for max score 4
// (intensity columns 0..4) and max score 2 (intensity columns 0..2).
inline const int kGridTableMax4[4][5] = {
    {0, 0, 0, 0, 0},
    {0, 1, 1, 2, 3},
    {0, 1, 2, 3, 4},
    {0, 1, 2, 3, 4},
};

inline const int kGridTableMax2[4][3] = {
    {0, 0, 0},
    {0, 1, 1},
    {0, 1, 2},
    {0, 1, 2},
};

}  // namespace oracle
