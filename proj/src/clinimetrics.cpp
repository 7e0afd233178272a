#include "hamrater/clinimetrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>

#include "hamrater/dist.hpp"

namespace hamrater::clinimetrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

void PairedScores::validate() const {
  if (a.empty()) throw ClinimetricsError("paired scores: empty series");
  if (a.size() != b.size())
    throw ClinimetricsError("paired scores: series lengths differ");
  if (!labels.empty() && labels.size() != a.size())
    throw ClinimetricsError("paired scores: label count does not match series length");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
      throw ClinimetricsError("paired scores: missing or non-finite value at index " +
                              std::to_string(i));
  }
}

void RatingsMatrix::validate() const {
  if (n < 2 || k < 2) throw ClinimetricsError("ratings matrix: need n >= 2 subjects and k >= 2 raters");
  if (values.size() != n * k) throw ClinimetricsError("ratings matrix: incomplete cells");
  for (double v : values) {
    if (!std::isfinite(v)) throw ClinimetricsError("ratings matrix: missing or non-finite cell");
  }
}

RatingsMatrix RatingsMatrix::from_columns(const std::vector<std::vector<double>>& columns) {
  RatingsMatrix m;
  m.k = columns.size();
  m.n = columns.empty() ? 0 : columns.front().size();
  for (const auto& col : columns) {
    if (col.size() != m.n) throw ClinimetricsError("ratings matrix: ragged columns");
  }
  m.values.resize(m.n * m.k);
  for (std::size_t j = 0; j < m.k; ++j)
    for (std::size_t i = 0; i < m.n; ++i) m(i, j) = columns[j][i];
  return m;
}

double mae(const PairedScores& p) {
  p.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p.a[i] - p.b[i]);
  return s / static_cast<double>(p.size());
}

double rmse(const PairedScores& p) {
  p.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p.a[i] - p.b[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(p.size()));
}

double sae(const PairedScores& p) {
  p.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p.a[i] - p.b[i]);
  return s;
}

namespace {

CorrelationResult correlation_with_t_test(const std::vector<double>& x,
                                          const std::vector<double>& y,
                                          const std::string& label) {
  const std::size_t n = x.size();
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0)
    throw ClinimetricsError(label + ": undefined correlation (zero-variance series)");
  double r = sxy / std::sqrt(sxx * syy);
  r = std::clamp(r, -1.0, 1.0);

  CorrelationResult res;
  res.value = r;
  if (n < 3) {
    res.test = {kNaN, kNaN, label + ": p undefined for n < 3"};
    return res;
  }
  const double df = static_cast<double>(n - 2);
  const double denom = 1.0 - r * r;
  if (denom <= 0.0) {
    res.test = {std::numeric_limits<double>::infinity(), 0.0,
                label + ": |r| = 1, t unbounded, two-sided p = 0"};
    return res;
  }
  const double t = r * std::sqrt(df / denom);
  res.test = {t, dist::student_t_two_sided_p(t, df),
              label + ": two-sided t test, df = " + std::to_string(n - 2)};
  return res;
}

}  // namespace

CorrelationResult pearson(const PairedScores& p) {
  p.validate();
  return correlation_with_t_test(p.a, p.b, "pearson");
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = midrank;
    i = j + 1;
  }
  return ranks;
}

CorrelationResult spearman(const PairedScores& p) {
  p.validate();
  return correlation_with_t_test(average_ranks(p.a), average_ranks(p.b), "spearman");
}

IccResult icc(const RatingsMatrix& m, IccForm form) {
  m.validate();
  const double n = static_cast<double>(m.n);
  const double k = static_cast<double>(m.k);

  double grand = 0.0;
  for (double v : m.values) grand += v;
  grand /= (n * k);

  std::vector<double> row_mean(m.n, 0.0), col_mean(m.k, 0.0);
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t j = 0; j < m.k; ++j) {
      row_mean[i] += m(i, j) / k;
      col_mean[j] += m(i, j) / n;
    }

  double ssr = 0.0, ssc = 0.0, sst = 0.0;
  for (double rm : row_mean) ssr += (rm - grand) * (rm - grand);
  ssr *= k;
  for (double cm : col_mean) ssc += (cm - grand) * (cm - grand);
  ssc *= n;
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t j = 0; j < m.k; ++j) sst += (m(i, j) - grand) * (m(i, j) - grand);
  double sse = sst - ssr - ssc;
  if (sse < 0.0) sse = 0.0;  // guard rounding on exact-agreement matrices

  const double msr = ssr / (n - 1.0);
  const double msc = ssc / (k - 1.0);
  const double mse = sse / ((n - 1.0) * (k - 1.0));

  if (msr <= 0.0 && mse <= 0.0)
    throw ClinimetricsError("icc: degenerate matrix (no subject or residual variance)");

  IccResult res;
  if (form == IccForm::Consistency_3_1) {
    res.value = (msr - mse) / (msr + (k - 1.0) * mse);
  } else {
    res.value = (msr - mse) / (msr + (k - 1.0) * mse + (k / n) * (msc - mse));
  }

  const double df1 = n - 1.0;
  const double df2 = (n - 1.0) * (k - 1.0);
  std::ostringstream note;
  note << (form == IccForm::Consistency_3_1 ? "ICC(3,1)" : "ICC(2,1)")
       << ": one-sided F = MSR/MSE test, df = (" << static_cast<long>(df1) << ", "
       << static_cast<long>(df2) << ")";
  if (mse <= 0.0) {
    res.test = {std::numeric_limits<double>::infinity(), 0.0, note.str() + ", MSE = 0"};
  } else {
    const double f = msr / mse;
    res.test = {f, dist::f_upper_tail_p(f, df1, df2), note.str()};
  }
  return res;
}

namespace {

struct WilcoxonParts {
  double w_plus = 0.0;
  double w_minus = 0.0;
  std::size_t n = 0;                        // effective n after zero removal
  std::size_t zeros_dropped = 0;
  bool has_ties = false;
  std::vector<std::size_t> tie_group_sizes; // over |residuals|
};

WilcoxonParts wilcoxon_parts(const std::vector<double>& residuals) {
  WilcoxonParts parts;
  std::vector<double> abs_values;
  std::vector<int> signs;
  for (double r : residuals) {
    if (r == 0.0) {
      ++parts.zeros_dropped;
      continue;
    }
    abs_values.push_back(std::fabs(r));
    signs.push_back(r > 0.0 ? 1 : -1);
  }
  parts.n = abs_values.size();
  if (parts.n == 0) return parts;

  const std::vector<double> ranks = average_ranks(abs_values);
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (signs[i] > 0) {
      parts.w_plus += ranks[i];
    } else {
      parts.w_minus += ranks[i];
    }
  }

  std::vector<double> sorted_abs = abs_values;
  std::sort(sorted_abs.begin(), sorted_abs.end());
  std::size_t i = 0;
  while (i < sorted_abs.size()) {
    std::size_t j = i;
    while (j + 1 < sorted_abs.size() && sorted_abs[j + 1] == sorted_abs[i]) ++j;
    const std::size_t group = j - i + 1;
    parts.tie_group_sizes.push_back(group);
    if (group > 1) parts.has_ties = true;
    i = j + 1;
  }
  return parts;
}

}  // namespace

double wilcoxon_exact_p(std::size_t n, double w_min) {
  if (n == 0) throw ClinimetricsError("wilcoxon exact: empty sample");
  if (n > kWilcoxonExactLimit)
    throw ClinimetricsError("wilcoxon exact: n exceeds the enumeration limit");
  const std::size_t total = n * (n + 1) / 2;
  // Count of sign assignments per achievable W+ (ranks are integers 1..n).
  std::vector<std::uint64_t> count(total + 1, 0);
  count[0] = 1;
  for (std::size_t rank = 1; rank <= n; ++rank) {
    for (std::size_t s = total + 1; s-- > rank;) count[s] += count[s - rank];
  }
  const auto w = static_cast<std::size_t>(std::llround(w_min));
  std::uint64_t extreme = 0;
  for (std::size_t s = 0; s <= total; ++s) {
    const std::size_t m = std::min(s, total - s);
    if (static_cast<double>(m) <= static_cast<double>(w)) extreme += count[s];
  }
  return static_cast<double>(extreme) / std::pow(2.0, static_cast<double>(n));
}

double wilcoxon_approx_p(double w_min, std::size_t n,
                         const std::vector<std::size_t>& tie_group_sizes) {
  if (n == 0) throw ClinimetricsError("wilcoxon approx: empty sample");
  const double dn = static_cast<double>(n);
  const double mu = dn * (dn + 1.0) / 4.0;
  double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0;
  for (std::size_t t : tie_group_sizes) {
    const double dt = static_cast<double>(t);
    var -= (dt * dt * dt - dt) / 48.0;
  }
  if (var <= 0.0) throw ClinimetricsError("wilcoxon approx: zero variance (all ranks tied away)");
  const double z = std::max(0.0, std::fabs(w_min - mu) - 0.5) / std::sqrt(var);
  return dist::normal_two_sided_p(z);
}

TestResult wilcoxon_signed_rank(const std::vector<double>& residuals) {
  const WilcoxonParts parts = wilcoxon_parts(residuals);
  if (parts.n == 0)
    throw ClinimetricsError("wilcoxon: all residuals are zero (no information)");
  const double w = std::min(parts.w_plus, parts.w_minus);

  TestResult res;
  res.statistic = w;
  std::ostringstream note;
  note << "zeros dropped: " << parts.zeros_dropped << "; effective n = " << parts.n;
  if (parts.n <= kWilcoxonExactLimit && !parts.has_ties) {
    res.p_value = wilcoxon_exact_p(parts.n, w);
    res.method_note = "wilcoxon signed-rank: exact sign-assignment enumeration; " + note.str();
  } else {
    res.p_value = wilcoxon_approx_p(w, parts.n, parts.tie_group_sizes);
    res.method_note =
        "wilcoxon signed-rank: normal approximation, tie-corrected variance, "
        "0.5 continuity correction; " +
        note.str();
  }
  return res;
}

BhResult benjamini_hochberg(const std::vector<double>& p_values, double q) {
  if (!(q > 0.0 && q < 1.0)) throw ClinimetricsError("benjamini-hochberg: q must lie in (0, 1)");
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0))
      throw ClinimetricsError("benjamini-hochberg: p-values must lie in [0, 1]");
  }
  const std::size_t m = p_values.size();
  BhResult res;
  res.reject.assign(m, false);
  res.adjusted.assign(m, 0.0);
  if (m == 0) return res;

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return p_values[i] < p_values[j]; });

  // Step-up: reject the largest prefix with p_(i) <= (i/m) q.
  std::size_t cutoff = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double threshold = q * static_cast<double>(i + 1) / static_cast<double>(m);
    if (p_values[order[i]] <= threshold) cutoff = i + 1;
  }
  for (std::size_t i = 0; i < cutoff; ++i) res.reject[order[i]] = true;

  // adjusted p_(i) = min_{j >= i} min(1, m p_(j) / j)
  double running = 1.0;
  for (std::size_t i = m; i-- > 0;) {
    const double candidate =
        std::min(1.0, p_values[order[i]] * static_cast<double>(m) / static_cast<double>(i + 1));
    running = std::min(running, candidate);
    res.adjusted[order[i]] = running;
  }
  return res;
}

BlandAltmanResult bland_altman(const PairedScores& p) {
  p.validate();
  if (p.size() < 2) throw ClinimetricsError("bland-altman: need at least two pairs");
  BlandAltmanResult res;
  std::vector<double> d(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    d[i] = p.a[i] - p.b[i];
    res.points.emplace_back((p.a[i] + p.b[i]) / 2.0, d[i]);
  }
  res.bias_mean = mean(d);
  double ss = 0.0;
  for (double v : d) ss += (v - res.bias_mean) * (v - res.bias_mean);
  const double sd = std::sqrt(ss / static_cast<double>(d.size() - 1));
  res.loa_low = res.bias_mean - 1.96 * sd;
  res.loa_high = res.bias_mean + 1.96 * sd;
  return res;
}

std::map<int, double> resolve_ground_truth(const std::vector<std::map<int, double>>& raters) {
  if (raters.empty()) throw ClinimetricsError("ground truth: need at least one rater");
  const auto& first = raters.front();
  for (std::size_t r = 1; r < raters.size(); ++r) {
    if (raters[r].size() != first.size())
      throw ClinimetricsError("ground truth: raters cover different item sets");
    for (const auto& [item_id, unused] : first) {
      if (raters[r].find(item_id) == raters[r].end())
        throw ClinimetricsError("ground truth: rater " + std::to_string(r) +
                                " is missing item " + std::to_string(item_id));
    }
  }

  std::map<int, double> out;
  for (const auto& [item_id, unused] : first) {
    std::vector<double> scores;
    scores.reserve(raters.size());
    for (const auto& rater : raters) scores.push_back(rater.at(item_id));
    std::sort(scores.begin(), scores.end());
    const std::size_t n = scores.size();
    out[item_id] = (n % 2 == 1) ? scores[n / 2] : (scores[n / 2 - 1] + scores[n / 2]) / 2.0;
  }
  return out;
}

std::vector<std::string> select_high_discrepancy(const std::vector<std::string>& ids,
                                                 const std::vector<double>& agent_totals,
                                                 const std::vector<double>& truth_totals,
                                                 std::size_t top_k) {
  if (ids.size() != agent_totals.size() || ids.size() != truth_totals.size())
    throw ClinimetricsError("high-discrepancy selection: misaligned inputs");
  if (top_k > ids.size())
    throw ClinimetricsError("high-discrepancy selection: top_k exceeds the population");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const double di = std::fabs(agent_totals[i] - truth_totals[i]);
    const double dj = std::fabs(agent_totals[j] - truth_totals[j]);
    if (di != dj) return di > dj;
    return ids[i] < ids[j];
  });
  std::vector<std::string> out;
  out.reserve(top_k);
  for (std::size_t i = 0; i < top_k; ++i) out.push_back(ids[order[i]]);
  return out;
}

std::string MetricScope::key() const {
  std::string k = instrument + "|" + model + "|" + dataset + "|";
  k += item_id ? std::to_string(*item_id) : std::string("full");
  return k;
}

MetricReport compute_metric_report(const MetricScope& scope, const PairedScores& p) {
  p.validate();
  MetricReport report;
  report.scope = scope;
  report.n = p.size();
  report.mae = mae(p);
  report.rmse = rmse(p);
  report.sae = sae(p);

  try {
    const CorrelationResult r = pearson(p);
    report.pearson_r = r.value;
    report.pearson_test = r.test;
  } catch (const ClinimetricsError& e) {
    report.pearson_r = kNaN;
    report.pearson_test = {kNaN, kNaN, e.what()};
  }
  try {
    const CorrelationResult rho = spearman(p);
    report.spearman_rho = rho.value;
    report.spearman_test = rho.test;
  } catch (const ClinimetricsError& e) {
    report.spearman_rho = kNaN;
    report.spearman_test = {kNaN, kNaN, e.what()};
  }

  try {
    const RatingsMatrix m = RatingsMatrix::from_columns({p.a, p.b});
    const IccResult c31 = icc(m, IccForm::Consistency_3_1);
    const IccResult a21 = icc(m, IccForm::Agreement_2_1);
    report.icc_3_1 = c31.value;
    report.icc_3_1_test = c31.test;
    report.icc_2_1 = a21.value;
    report.icc_2_1_test = a21.test;
  } catch (const ClinimetricsError& e) {
    report.icc_3_1 = report.icc_2_1 = kNaN;
    report.icc_3_1_test = report.icc_2_1_test = {kNaN, kNaN, e.what()};
  }

  std::vector<double> residuals(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) residuals[i] = p.a[i] - p.b[i];
  try {
    report.bias_test = wilcoxon_signed_rank(residuals);
  } catch (const ClinimetricsError&) {
    report.bias_test = std::nullopt;  // all residuals zero: bias not applicable
  }

  if (p.size() >= 2) {
    const BlandAltmanResult ba = bland_altman(p);
    report.bias_mean = ba.bias_mean;
    report.loa_low = ba.loa_low;
    report.loa_high = ba.loa_high;
    report.bland_altman_points = ba.points;
  } else {
    report.bias_mean = p.a[0] - p.b[0];
    report.loa_low = report.loa_high = report.bias_mean;
  }
  return report;
}

void judge_targets(MetricReport& report, double alpha) {
  const auto adjusted = [&](const char* metric) -> std::optional<double> {
    auto it = report.p_adjusted.find(metric);
    if (it == report.p_adjusted.end() || std::isnan(it->second)) return std::nullopt;
    return it->second;
  };
  for (const char* metric : {kMetricPearson, kMetricSpearman, kMetricIcc31, kMetricIcc21}) {
    const auto p = adjusted(metric);
    report.target_flags[metric] = p.has_value() && *p < alpha;
  }
  if (!report.bias_test.has_value()) {
    report.target_flags[kMetricBias] = true;  // no detectable bias at all
  } else {
    const auto p = adjusted(kMetricBias);
    report.target_flags[kMetricBias] = p.has_value() && *p >= alpha;
  }
}

}  // namespace hamrater::clinimetrics
