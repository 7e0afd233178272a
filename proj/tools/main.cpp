#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hamrater/harness.hpp"
#include "hamrater/util.hpp"

using namespace hamrater;

int main(int argc, char** argv) {
  CLI::App app{"Item-level re-rating of Hamilton depression/anxiety interviews "
               "with a clinimetric evaluation harness"};
  app.require_subcommand(1);

  // rate
  std::string config_path, transcripts_dir, rate_out;
  CLI::App* rate = app.add_subcommand("rate", "Rate every transcript in a directory");
  rate->add_option("--config", config_path, "Run config JSON")->required();
  rate->add_option("--transcripts", transcripts_dir, "Directory of transcript documents")
      ->required();
  rate->add_option("--out", rate_out, "Output directory (default: config output_dir or ./ratings)");

  // evaluate
  std::string ratings_path, truth_path, families_path, eval_out = "eval";
  EvaluateOptions eval_opts;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score ratings against expert ground truth");
  evaluate->add_option("--ratings", ratings_path, "Ratings document or directory")->required();
  evaluate->add_option("--truth", truth_path, "Ground-truth JSON file")->required();
  evaluate->add_option("--q", eval_opts.q, "Benjamini-Hochberg FDR level");
  evaluate->add_option("--alpha", eval_opts.alpha, "Target-condition significance level");
  evaluate->add_option("--families", families_path, "Custom BH family definitions (JSON)");
  evaluate->add_flag("--allow-mixed-digests", eval_opts.allow_mixed_digests,
                     "Evaluate ratings produced under differing pipeline configs");
  evaluate->add_option("--out", eval_out, "Output directory");

  // report
  std::string eval_path, report_format = "md", report_out;
  CLI::App* report = app.add_subcommand("report", "Render full-scale and item-level tables");
  report->add_option("--eval", eval_path, "eval.json produced by evaluate")->required();
  report->add_option("--format", report_format, "csv or md")->check(CLI::IsMember({"csv", "md"}));
  report->add_option("--out", report_out, "Write to file instead of stdout");

  // mock-demo
  std::string demo_out;
  int demo_parallelism = 4;
  CLI::App* demo = app.add_subcommand(
      "mock-demo", "Run the self-contained offline rate -> evaluate -> report demonstration");
  demo->add_option("--out", demo_out, "Demo directory (default: a fresh temp directory)");
  demo->add_option("--parallelism", demo_parallelism, "Concurrent item agents");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*rate) {
      const RunConfig cfg = load_run_config_file(config_path);
      const std::string out =
          !rate_out.empty() ? rate_out : cfg.output_dir.value_or(std::string("ratings"));
      const RateSummary summary = cmd_rate(cfg, transcripts_dir, out);
      std::cout << "rated " << summary.succeeded << " interview(s), " << summary.failed
                << " failure(s); manifest: " << summary.manifest_path << "\n";
      for (const std::string& failure : summary.failures) std::cerr << "  " << failure << "\n";
      return summary.failed == 0 ? 0 : 1;
    }
    if (*evaluate) {
      if (!families_path.empty()) eval_opts.families_path = families_path;
      const EvaluationResult result =
          cmd_evaluate(resolve_ratings_paths(ratings_path), truth_path, eval_opts, eval_out);
      std::cout << "evaluated " << result.reports.size() << " scope(s); wrote "
                << result.eval_json_path << " and " << result.eval_csv_path << "\n";
      return 0;
    }
    if (*report) {
      const std::string rendered = cmd_report(
          eval_path, report_format == "csv" ? ReportFormat::Csv : ReportFormat::Md);
      if (report_out.empty()) {
        std::cout << rendered;
      } else {
        util::write_file(report_out, rendered);
        std::cout << "wrote " << report_out << "\n";
      }
      return 0;
    }
    if (*demo) {
      const MockDemoResult result = cmd_mock_demo(demo_out, demo_parallelism);
      std::cout << "mock demo complete under " << result.dir << "\n";
      std::cout << "  interviews rated: " << result.rate.succeeded << "\n";
      std::cout << "  recovered totals:";
      for (double total : result.totals) std::cout << " " << total;
      std::cout << "\n  evaluation: " << result.evaluation.eval_json_path << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
