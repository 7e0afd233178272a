#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hamrater/agents.hpp"
#include "hamrater/backend.hpp"
#include "hamrater/clinimetrics.hpp"
#include "hamrater/instruments.hpp"
#include "hamrater/transcript.hpp"

namespace hamrater {

class HarnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  InstrumentId instrument_id = InstrumentId::HAMD17S;
  BackendConfig backend;
  std::string model_name = "mock-model";
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::optional<std::string> conventions_path;  // required for HAMD17S_EXT
  int retry_budget = 2;
  int parallelism_cap = 4;
  std::optional<std::string> probe_lexicon_path;
  int role_window = kDefaultRoleWindow;
  std::optional<std::string> output_dir;
  long seed = 0;  // reserved for stochastic test fixtures
  bool allow_partial = false;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config_file(const std::string& path);
std::string serialize_run_config(const RunConfig& cfg);

struct RateSummary {
  int succeeded = 0;
  int failed = 0;
  std::vector<std::string> failures;      // "file: error"
  std::vector<std::string> rating_paths;  // written documents
  std::string manifest_path;
  std::string config_digest;
};

// Batch rating: parse and role-attribute every transcript document in the
// directory, rate each interview, write one ratings document per interview
// plus a run manifest. Per-interview failures are collected, not fail-fast.
RateSummary cmd_rate(const RunConfig& cfg, const std::string& transcripts_dir,
                     const std::string& out_dir);

struct EvaluateOptions {
  double q = 0.05;
  double alpha = 0.05;
  std::optional<std::string> families_path;
  bool allow_mixed_digests = false;
};

struct FamilySpec {
  std::string name;
  std::string metric;               // pearson / spearman / icc_3_1 / icc_2_1 / bias
  std::vector<std::string> scopes;  // MetricScope::key() values
};

struct EvaluationResult {
  std::vector<clinimetrics::MetricReport> reports;
  std::vector<FamilySpec> families;
  std::string eval_json_path;
  std::string eval_csv_path;
};

// Resolve ground truth (per-item median over raters), compute full-scale and
// per-item metric reports, apply Benjamini-Hochberg per family, judge the
// target conditions, and write eval.json + eval.csv.
EvaluationResult cmd_evaluate(const std::vector<std::string>& ratings_paths,
                              const std::string& truth_path, const EvaluateOptions& opts,
                              const std::string& out_dir);

// Expand a ratings path (directory of *.rating.json, or one file) to files.
std::vector<std::string> resolve_ratings_paths(const std::string& path);

enum class ReportFormat { Csv, Md };

// Render the full-scale and item-level tables from an eval.json document.
std::string cmd_report(const std::string& eval_path, ReportFormat format);

struct MockDemoResult {
  std::string dir;
  RateSummary rate;
  EvaluationResult evaluation;
  std::vector<double> totals;  // recovered interview totals, by interview id order
};

// Self-contained offline demonstration: writes 3 synthetic transcripts, a
// full mock script, a 2-rater synthetic truth file, and a run config; then
// runs rate -> evaluate -> report and verifies internal consistency.
MockDemoResult cmd_mock_demo(const std::string& out_dir, int parallelism_cap = 4);

// The per-item scores embedded in the demo mock script, keyed by interview
// id; demo verification compares recovered totals against these sums.
std::vector<std::pair<std::string, int>> mock_demo_expected_totals();

}  // namespace hamrater
