#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hamrater::clinimetrics {

class ClinimetricsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Candidate (a) vs reference (b) scores aligned by index.
struct PairedScores {
  std::vector<std::string> labels;
  std::vector<double> a;
  std::vector<double> b;

  std::size_t size() const { return a.size(); }
  void validate() const;  // equal non-zero lengths, no missing values
};

// Complete n subjects x k raters matrix, row-major.
struct RatingsMatrix {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * k + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * k + j]; }
  void validate() const;  // n >= 2, k >= 2, complete
  static RatingsMatrix from_columns(const std::vector<std::vector<double>>& columns);
};

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::string method_note;
};

double mae(const PairedScores& p);
double rmse(const PairedScores& p);
double sae(const PairedScores& p);

struct CorrelationResult {
  double value = 0.0;
  TestResult test;
};

// Sample Pearson correlation; p from t = r*sqrt((n-2)/(1-r^2)), two-sided,
// n-2 degrees of freedom. Zero-variance input raises ClinimetricsError.
CorrelationResult pearson(const PairedScores& p);

// Pearson correlation of average-ranked data (ties get the mean rank); p via
// the same t transform.
CorrelationResult spearman(const PairedScores& p);

// Average (midrank) ranks, 1-based; ties share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& values);

enum class IccForm { Consistency_3_1, Agreement_2_1 };

struct IccResult {
  double value = 0.0;
  TestResult test;
};

// Single-rater intraclass correlation from a two-way ANOVA without
// replication. ICC(3,1) = (MSR-MSE)/(MSR+(k-1)MSE); ICC(2,1) adds the rater
// variance term (k/n)(MSC-MSE) to the denominator. p is the one-sided
// F = MSR/MSE test with (n-1, (n-1)(k-1)) degrees of freedom.
IccResult icc(const RatingsMatrix& m, IccForm form);

// Wilcoxon signed-rank on residuals. Zeros are dropped (classic treatment);
// |residuals| get average ranks; statistic is W = min(W+, W-). Exact
// two-sided p by full enumeration of sign assignments when the effective n
// is <= kWilcoxonExactLimit and |residuals| are tie-free; otherwise the
// normal approximation with tie-corrected variance and a 0.5 continuity
// correction. All residuals zero raises ClinimetricsError (no information;
// callers report the bias test as not applicable).
inline constexpr std::size_t kWilcoxonExactLimit = 25;

TestResult wilcoxon_signed_rank(const std::vector<double>& residuals);

// The two computation routes, exposed for verification. Exact p counts sign
// assignments whose min(W+, W-) does not exceed w_min over integer ranks
// 1..n (tie-free only).
double wilcoxon_exact_p(std::size_t n, double w_min);
double wilcoxon_approx_p(double w_min, std::size_t n,
                         const std::vector<std::size_t>& tie_group_sizes);

struct BhResult {
  std::vector<bool> reject;      // original order
  std::vector<double> adjusted;  // original order
};

// Benjamini-Hochberg step-up FDR control at level q.
BhResult benjamini_hochberg(const std::vector<double>& p_values, double q);

struct BlandAltmanResult {
  double bias_mean = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
  std::vector<std::pair<double, double>> points;  // (mean(a_i, b_i), a_i - b_i)
};

// Limits of agreement: bias +/- 1.96 * sample SD of the differences.
BlandAltmanResult bland_altman(const PairedScores& p);

// Per-item median over raters; an even rater count yields the mean of the
// two middle values (kept fractional). A single rater passes through.
std::map<int, double> resolve_ground_truth(const std::vector<std::map<int, double>>& raters);

// Top-k interview ids by |agent_total - truth_total| descending, ties broken
// by lexicographic interview id.
std::vector<std::string> select_high_discrepancy(const std::vector<std::string>& ids,
                                                 const std::vector<double>& agent_totals,
                                                 const std::vector<double>& truth_totals,
                                                 std::size_t top_k);

struct MetricScope {
  std::string instrument;
  std::string model;
  std::string dataset;
  std::optional<int> item_id;

  std::string key() const;
};

// Metric names used as keys in p_adjusted / target_flags.
inline constexpr const char* kMetricPearson = "pearson";
inline constexpr const char* kMetricSpearman = "spearman";
inline constexpr const char* kMetricIcc31 = "icc_3_1";
inline constexpr const char* kMetricIcc21 = "icc_2_1";
inline constexpr const char* kMetricBias = "bias";

struct MetricReport {
  MetricScope scope;
  std::size_t n = 0;
  double mae = 0.0;
  double rmse = 0.0;
  double sae = 0.0;
  // Correlations and ICCs are NaN with an explanatory method_note when the
  // data is degenerate for them (e.g. a never-endorsed item).
  double pearson_r = 0.0;
  TestResult pearson_test;
  double spearman_rho = 0.0;
  TestResult spearman_test;
  double icc_3_1 = 0.0;
  TestResult icc_3_1_test;
  double icc_2_1 = 0.0;
  TestResult icc_2_1_test;
  std::optional<TestResult> bias_test;  // nullopt = not applicable (all residuals zero)
  double bias_mean = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
  std::vector<std::pair<double, double>> bland_altman_points;
  std::map<std::string, double> p_adjusted;
  std::map<std::string, bool> target_flags;
};

// Full metric suite over one paired-score scope. Degenerate association
// metrics are recorded as NaN rather than raised, so one flat item cannot
// void a batch evaluation.
MetricReport compute_metric_report(const MetricScope& scope, const PairedScores& p);

// Association metrics pass when adjusted p < alpha; the bias target passes
// when adjusted p >= alpha or the bias test is not applicable.
void judge_targets(MetricReport& report, double alpha = 0.05);

}  // namespace hamrater::clinimetrics
