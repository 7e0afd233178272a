#include "hamrater/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hamrater/util.hpp"

namespace hamrater {

namespace fs = std::filesystem;
using nlohmann::json;
using clinimetrics::MetricReport;
using clinimetrics::MetricScope;
using clinimetrics::PairedScores;

namespace {

constexpr const char* kCombinedDataset = "combined";

json json_num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double num_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw HarnessError(std::string("malformed run config: ") + e.what());
  }
  RunConfig cfg;
  try {
    cfg.instrument_id = instrument_from_string(doc.at("instrument").get<std::string>());
    const json& b = doc.at("backend");
    const std::string kind = util::to_lower(b.at("kind").get<std::string>());
    if (kind == "scripted_mock" || kind == "mock") {
      cfg.backend.kind = BackendKind::ScriptedMock;
    } else if (kind == "http_chat" || kind == "http") {
      cfg.backend.kind = BackendKind::HttpChat;
    } else {
      throw HarnessError("unknown backend kind: '" + kind + "'");
    }
    if (b.contains("endpoint_url")) cfg.backend.endpoint_url = b["endpoint_url"].get<std::string>();
    if (b.contains("api_key_env_var"))
      cfg.backend.api_key_env_var = b["api_key_env_var"].get<std::string>();
    cfg.backend.timeout_s = b.value("timeout_s", 60.0);
    cfg.backend.max_retries = b.value("max_retries", 2);
    if (b.contains("script_path")) cfg.backend.script_path = b["script_path"].get<std::string>();
    if (b.contains("in_flight_cap")) cfg.backend.in_flight_cap = b["in_flight_cap"].get<int>();

    cfg.model_name = doc.value("model_name", std::string("mock-model"));
    cfg.temperature = doc.value("temperature", 0.0);
    cfg.max_output_tokens = doc.value("max_output_tokens", 1024);
    if (doc.contains("conventions_path"))
      cfg.conventions_path = doc["conventions_path"].get<std::string>();
    cfg.retry_budget = doc.value("retry_budget", 2);
    cfg.parallelism_cap = doc.value("parallelism_cap", 4);
    if (doc.contains("probe_lexicon_path"))
      cfg.probe_lexicon_path = doc["probe_lexicon_path"].get<std::string>();
    cfg.role_window = doc.value("role_window", kDefaultRoleWindow);
    if (doc.contains("output_dir")) cfg.output_dir = doc["output_dir"].get<std::string>();
    cfg.seed = doc.value("seed", 0L);
    cfg.allow_partial = doc.value("allow_partial", false);
  } catch (const json::exception& e) {
    throw HarnessError(std::string("malformed run config: ") + e.what());
  }
  if (cfg.instrument_id == InstrumentId::HAMD17S_EXT && !cfg.conventions_path)
    throw HarnessError("run config: the Extended instrument requires conventions_path");
  cfg.backend.validate();
  return cfg;
}

RunConfig load_run_config_file(const std::string& path) {
  try {
    return parse_run_config(util::read_file(path));
  } catch (const HarnessError& e) {
    throw HarnessError(path + ": " + e.what());
  }
}

std::string serialize_run_config(const RunConfig& cfg) {
  json b;
  b["kind"] = cfg.backend.kind == BackendKind::ScriptedMock ? "scripted_mock" : "http_chat";
  if (cfg.backend.endpoint_url) b["endpoint_url"] = *cfg.backend.endpoint_url;
  if (cfg.backend.api_key_env_var) b["api_key_env_var"] = *cfg.backend.api_key_env_var;
  b["timeout_s"] = cfg.backend.timeout_s;
  b["max_retries"] = cfg.backend.max_retries;
  if (cfg.backend.script_path) b["script_path"] = *cfg.backend.script_path;
  if (cfg.backend.in_flight_cap) b["in_flight_cap"] = *cfg.backend.in_flight_cap;

  json doc;
  doc["instrument"] = to_string(cfg.instrument_id);
  doc["backend"] = std::move(b);
  doc["model_name"] = cfg.model_name;
  doc["temperature"] = cfg.temperature;
  doc["max_output_tokens"] = cfg.max_output_tokens;
  if (cfg.conventions_path) doc["conventions_path"] = *cfg.conventions_path;
  doc["retry_budget"] = cfg.retry_budget;
  doc["parallelism_cap"] = cfg.parallelism_cap;
  if (cfg.probe_lexicon_path) doc["probe_lexicon_path"] = *cfg.probe_lexicon_path;
  doc["role_window"] = cfg.role_window;
  if (cfg.output_dir) doc["output_dir"] = *cfg.output_dir;
  doc["seed"] = cfg.seed;
  doc["allow_partial"] = cfg.allow_partial;
  return doc.dump(2) + "\n";
}

RateSummary cmd_rate(const RunConfig& cfg, const std::string& transcripts_dir,
                     const std::string& out_dir) {
  if (!fs::is_directory(transcripts_dir))
    throw HarnessError("transcripts directory does not exist: " + transcripts_dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(transcripts_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw HarnessError("no transcript documents (*.json) in " + transcripts_dir);

  std::optional<ConventionSet> conventions;
  if (cfg.instrument_id == InstrumentId::HAMD17S_EXT)
    conventions = load_conventions_file(*cfg.conventions_path);
  const InstrumentSpec instrument = load_instrument(cfg.instrument_id, conventions);

  const std::vector<std::string> probes = cfg.probe_lexicon_path
                                              ? load_probe_lexicon_file(*cfg.probe_lexicon_path)
                                              : default_probe_lexicon();
  const std::unique_ptr<Backend> backend = make_backend(cfg.backend);

  AgentOptions agent_opts;
  agent_opts.model_name = cfg.model_name;
  agent_opts.temperature = cfg.temperature;
  agent_opts.max_output_tokens = cfg.max_output_tokens;
  agent_opts.retry_budget = cfg.retry_budget;
  agent_opts.parallelism_cap = cfg.parallelism_cap;
  agent_opts.allow_partial = cfg.allow_partial;

  fs::create_directories(out_dir);

  RateSummary summary;
  summary.config_digest = compute_config_digest(instrument, cfg.model_name);
  for (const std::string& file : files) {
    try {
      Transcript t = parse_transcript_file(file);
      t = attribute_roles(t, probes, cfg.role_window);
      const InterviewRating rating = rate_interview(*backend, instrument, t, agent_opts);
      const std::string out_path =
          (fs::path(out_dir) / (rating.interview_id + ".rating.json")).string();
      util::write_file(out_path, serialize_interview_rating(rating));
      summary.rating_paths.push_back(out_path);
      ++summary.succeeded;
    } catch (const std::exception& e) {
      summary.failures.push_back(file + ": " + e.what());
      ++summary.failed;
    }
  }

  json manifest;
  manifest["created_at"] = util::iso8601_utc_now();
  manifest["instrument"] = to_string(cfg.instrument_id);
  manifest["model"] = cfg.model_name;
  manifest["config_digest"] = summary.config_digest;
  manifest["transcripts"] = files.size();
  manifest["succeeded"] = summary.succeeded;
  manifest["failed"] = summary.failed;
  manifest["failures"] = summary.failures;
  manifest["outputs"] = summary.rating_paths;
  summary.manifest_path = (fs::path(out_dir) / "run_manifest.json").string();
  util::write_file(summary.manifest_path, manifest.dump(2) + "\n");
  return summary;
}

std::vector<std::string> resolve_ratings_paths(const std::string& path) {
  std::vector<std::string> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_regular_file() && name.size() > 12 &&
          name.substr(name.size() - 12) == ".rating.json")
        files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(path)) {
    files.push_back(path);
  }
  if (files.empty()) throw HarnessError("no ratings documents found at " + path);
  return files;
}

namespace {

// { interview_id -> { rater_id -> { item_id -> score } } }
std::map<std::string, std::vector<std::map<int, double>>> load_truth_file(
    const std::string& path) {
  json doc;
  try {
    doc = json::parse(util::read_file(path));
  } catch (const json::exception& e) {
    throw HarnessError(path + ": malformed ground-truth file: " + e.what());
  }
  if (!doc.is_object()) throw HarnessError(path + ": ground truth must be a JSON object");
  std::map<std::string, std::vector<std::map<int, double>>> out;
  for (const auto& [interview_id, raters] : doc.items()) {
    if (!raters.is_object())
      throw HarnessError(path + ": interview '" + interview_id + "' must map rater -> scores");
    std::vector<std::pair<std::string, std::map<int, double>>> ordered;
    for (const auto& [rater_id, scores] : raters.items()) {
      std::map<int, double> items;
      for (const auto& [item_key, score] : scores.items()) {
        try {
          items[std::stoi(item_key)] = score.get<double>();
        } catch (const std::exception&) {
          throw HarnessError(path + ": interview '" + interview_id + "', rater '" + rater_id +
                             "': bad item entry '" + item_key + "'");
        }
      }
      ordered.emplace_back(rater_id, std::move(items));
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    auto& raters_out = out[interview_id];
    for (auto& [rater_id, items] : ordered) raters_out.push_back(std::move(items));
  }
  return out;
}

std::string metric_family_name(const std::string& instrument, const std::string& model,
                               const std::string& dataset, const std::string& metric) {
  return instrument + "/" + model + "/" + dataset + "/" + metric + "/items";
}

json scope_to_json(const MetricScope& scope) {
  json j;
  j["instrument"] = scope.instrument;
  j["model"] = scope.model;
  j["dataset"] = scope.dataset;
  j["item"] = scope.item_id ? json(*scope.item_id) : json(nullptr);
  return j;
}

MetricScope scope_from_json(const json& j) {
  MetricScope scope;
  scope.instrument = j.at("instrument").get<std::string>();
  scope.model = j.at("model").get<std::string>();
  scope.dataset = j.at("dataset").get<std::string>();
  if (!j.at("item").is_null()) scope.item_id = j["item"].get<int>();
  return scope;
}

json report_to_json(const MetricReport& r, bool with_points) {
  json j;
  j["scope"] = scope_to_json(r.scope);
  j["n"] = r.n;
  j["mae"] = json_num(r.mae);
  j["rmse"] = json_num(r.rmse);
  j["sae"] = json_num(r.sae);
  j["pearson_r"] = json_num(r.pearson_r);
  j["pearson_p"] = json_num(r.pearson_test.p_value);
  j["pearson_note"] = r.pearson_test.method_note;
  j["spearman_rho"] = json_num(r.spearman_rho);
  j["spearman_p"] = json_num(r.spearman_test.p_value);
  j["spearman_note"] = r.spearman_test.method_note;
  j["icc_3_1"] = json_num(r.icc_3_1);
  j["icc_3_1_p"] = json_num(r.icc_3_1_test.p_value);
  j["icc_3_1_note"] = r.icc_3_1_test.method_note;
  j["icc_2_1"] = json_num(r.icc_2_1);
  j["icc_2_1_p"] = json_num(r.icc_2_1_test.p_value);
  j["icc_2_1_note"] = r.icc_2_1_test.method_note;
  j["bias_applicable"] = r.bias_test.has_value();
  if (r.bias_test) {
    j["bias_w"] = json_num(r.bias_test->statistic);
    j["bias_p"] = json_num(r.bias_test->p_value);
    j["bias_note"] = r.bias_test->method_note;
  }
  j["bias_mean"] = json_num(r.bias_mean);
  j["loa_low"] = json_num(r.loa_low);
  j["loa_high"] = json_num(r.loa_high);
  if (with_points) {
    json points = json::array();
    for (const auto& [m, d] : r.bland_altman_points) points.push_back(json::array({m, d}));
    j["bland_altman_points"] = std::move(points);
  }
  json adjusted = json::object();
  for (const auto& [metric, p] : r.p_adjusted) adjusted[metric] = json_num(p);
  j["p_adjusted"] = std::move(adjusted);
  json targets = json::object();
  for (const auto& [metric, pass] : r.target_flags) targets[metric] = pass;
  j["targets"] = std::move(targets);
  return j;
}

MetricReport report_from_json(const json& j) {
  MetricReport r;
  r.scope = scope_from_json(j.at("scope"));
  r.n = j.at("n").get<std::size_t>();
  r.mae = num_or_nan(j.at("mae"));
  r.rmse = num_or_nan(j.at("rmse"));
  r.sae = num_or_nan(j.at("sae"));
  r.pearson_r = num_or_nan(j.at("pearson_r"));
  r.pearson_test = {0.0, num_or_nan(j.at("pearson_p")), j.value("pearson_note", "")};
  r.spearman_rho = num_or_nan(j.at("spearman_rho"));
  r.spearman_test = {0.0, num_or_nan(j.at("spearman_p")), j.value("spearman_note", "")};
  r.icc_3_1 = num_or_nan(j.at("icc_3_1"));
  r.icc_3_1_test = {0.0, num_or_nan(j.at("icc_3_1_p")), j.value("icc_3_1_note", "")};
  r.icc_2_1 = num_or_nan(j.at("icc_2_1"));
  r.icc_2_1_test = {0.0, num_or_nan(j.at("icc_2_1_p")), j.value("icc_2_1_note", "")};
  if (j.at("bias_applicable").get<bool>())
    r.bias_test =
        clinimetrics::TestResult{num_or_nan(j.at("bias_w")), num_or_nan(j.at("bias_p")),
                                 j.value("bias_note", "")};
  r.bias_mean = num_or_nan(j.at("bias_mean"));
  r.loa_low = num_or_nan(j.at("loa_low"));
  r.loa_high = num_or_nan(j.at("loa_high"));
  if (j.contains("bland_altman_points")) {
    for (const json& point : j["bland_altman_points"])
      r.bland_altman_points.emplace_back(point.at(0).get<double>(), point.at(1).get<double>());
  }
  for (const auto& [metric, p] : j.at("p_adjusted").items())
    r.p_adjusted[metric] = num_or_nan(p);
  for (const auto& [metric, pass] : j.at("targets").items())
    r.target_flags[metric] = pass.get<bool>();
  return r;
}

double raw_p_for_metric(const MetricReport& r, const std::string& metric) {
  if (metric == clinimetrics::kMetricPearson) return r.pearson_test.p_value;
  if (metric == clinimetrics::kMetricSpearman) return r.spearman_test.p_value;
  if (metric == clinimetrics::kMetricIcc31) return r.icc_3_1_test.p_value;
  if (metric == clinimetrics::kMetricIcc21) return r.icc_2_1_test.p_value;
  if (metric == clinimetrics::kMetricBias)
    return r.bias_test ? r.bias_test->p_value : std::numeric_limits<double>::quiet_NaN();
  throw HarnessError("unknown metric in family spec: '" + metric + "'");
}

const std::vector<std::string>& all_metric_kinds() {
  static const std::vector<std::string> kinds = {
      clinimetrics::kMetricPearson, clinimetrics::kMetricSpearman, clinimetrics::kMetricIcc31,
      clinimetrics::kMetricIcc21, clinimetrics::kMetricBias};
  return kinds;
}

std::vector<FamilySpec> load_families_file(const std::string& path) {
  json doc;
  try {
    doc = json::parse(util::read_file(path));
  } catch (const json::exception& e) {
    throw HarnessError(path + ": malformed families file: " + e.what());
  }
  if (!doc.is_array()) throw HarnessError(path + ": families file must be a JSON array");
  std::vector<FamilySpec> out;
  for (const json& j : doc) {
    FamilySpec family;
    family.name = j.at("name").get<std::string>();
    family.metric = j.at("metric").get<std::string>();
    family.scopes = j.at("scopes").get<std::vector<std::string>>();
    out.push_back(std::move(family));
  }
  return out;
}

std::string csv_cell(double v, bool finite_only = true) {
  if (finite_only && !std::isfinite(v)) return "";
  return util::fmt_g(v);
}

std::string eval_csv(const std::vector<MetricReport>& reports) {
  std::ostringstream csv;
  csv << "instrument,model,dataset,item,n,mae,rmse,sae,"
         "pearson_r,pearson_p,pearson_p_adj,spearman_rho,spearman_p,spearman_p_adj,"
         "icc_3_1,icc_3_1_p,icc_3_1_p_adj,icc_2_1,icc_2_1_p,icc_2_1_p_adj,"
         "bias_w,bias_p,bias_p_adj,bias_mean,loa_low,loa_high,"
         "target_pearson,target_spearman,target_icc_3_1,target_icc_2_1,target_bias\n";
  for (const MetricReport& r : reports) {
    const auto adj = [&](const char* metric) {
      auto it = r.p_adjusted.find(metric);
      return it == r.p_adjusted.end() ? "" : csv_cell(it->second);
    };
    const auto flag = [&](const char* metric) -> std::string {
      auto it = r.target_flags.find(metric);
      return it == r.target_flags.end() ? "" : (it->second ? "pass" : "fail");
    };
    csv << r.scope.instrument << ',' << r.scope.model << ',' << r.scope.dataset << ','
        << (r.scope.item_id ? std::to_string(*r.scope.item_id) : "") << ',' << r.n << ','
        << csv_cell(r.mae) << ',' << csv_cell(r.rmse) << ',' << csv_cell(r.sae) << ','
        << csv_cell(r.pearson_r) << ',' << csv_cell(r.pearson_test.p_value) << ','
        << adj(clinimetrics::kMetricPearson) << ',' << csv_cell(r.spearman_rho) << ','
        << csv_cell(r.spearman_test.p_value) << ',' << adj(clinimetrics::kMetricSpearman) << ','
        << csv_cell(r.icc_3_1) << ',' << csv_cell(r.icc_3_1_test.p_value) << ','
        << adj(clinimetrics::kMetricIcc31) << ',' << csv_cell(r.icc_2_1) << ','
        << csv_cell(r.icc_2_1_test.p_value) << ',' << adj(clinimetrics::kMetricIcc21) << ','
        << (r.bias_test ? csv_cell(r.bias_test->statistic) : "") << ','
        << (r.bias_test ? csv_cell(r.bias_test->p_value) : "") << ','
        << adj(clinimetrics::kMetricBias) << ',' << csv_cell(r.bias_mean) << ','
        << csv_cell(r.loa_low) << ',' << csv_cell(r.loa_high) << ','
        << flag(clinimetrics::kMetricPearson) << ',' << flag(clinimetrics::kMetricSpearman) << ','
        << flag(clinimetrics::kMetricIcc31) << ',' << flag(clinimetrics::kMetricIcc21) << ','
        << flag(clinimetrics::kMetricBias) << '\n';
  }
  return csv.str();
}

}  // namespace

EvaluationResult cmd_evaluate(const std::vector<std::string>& ratings_paths,
                              const std::string& truth_path, const EvaluateOptions& opts,
                              const std::string& out_dir) {
  if (!(opts.q > 0.0 && opts.q < 1.0) || !(opts.alpha > 0.0 && opts.alpha < 1.0))
    throw HarnessError("evaluate: q and alpha must lie in (0, 1)");

  std::vector<InterviewRating> ratings;
  for (const std::string& path : ratings_paths)
    ratings.push_back(load_interview_rating_file(path));
  if (ratings.empty()) throw HarnessError("evaluate: no ratings documents");

  std::set<std::string> digests;
  for (const auto& r : ratings) digests.insert(r.pipeline_config_digest);
  if (digests.size() > 1 && !opts.allow_mixed_digests)
    throw HarnessError("evaluate: ratings carry " + std::to_string(digests.size()) +
                       " distinct config digests; pass --allow-mixed-digests to override");

  const auto truth_raw = load_truth_file(truth_path);
  std::map<std::string, std::map<int, double>> truth;
  for (const auto& [interview_id, raters] : truth_raw)
    truth[interview_id] = clinimetrics::resolve_ground_truth(raters);

  // Group interviews by (instrument, model); item roster from the instrument.
  struct Group {
    InstrumentId instrument_id;
    std::string model;
    std::vector<const InterviewRating*> members;
  };
  std::map<std::string, Group> groups;
  for (const auto& r : ratings) {
    const std::string key = to_string(r.instrument_id) + "|" + r.model_name;
    auto& group = groups[key];
    group.instrument_id = r.instrument_id;
    group.model = r.model_name;
    group.members.push_back(&r);
  }

  std::vector<MetricReport> reports;
  std::vector<FamilySpec> families;

  for (auto& [key, group] : groups) {
    const InstrumentSpec roster =
        load_instrument(group.instrument_id == InstrumentId::HAMD17S_EXT ? InstrumentId::HAMD17S
                                                                         : group.instrument_id);
    const std::vector<int> active = roster.active_item_ids();
    const std::string instrument_name = to_string(group.instrument_id);

    std::sort(group.members.begin(), group.members.end(),
              [](const InterviewRating* a, const InterviewRating* b) {
                return a->interview_id < b->interview_id;
              });

    for (const InterviewRating* r : group.members) {
      auto truth_it = truth.find(r->interview_id);
      if (truth_it == truth.end())
        throw HarnessError("evaluate: no ground truth for interview '" + r->interview_id + "'");
      if (!r->missing_items.empty())
        throw HarnessError("evaluate: interview '" + r->interview_id +
                           "' is a partial scorecard and cannot be evaluated at full scale");
      for (int item_id : active) {
        if (r->item_ratings.find(item_id) == r->item_ratings.end())
          throw HarnessError("evaluate: interview '" + r->interview_id + "' is missing item " +
                             std::to_string(item_id));
        if (truth_it->second.find(item_id) == truth_it->second.end())
          throw HarnessError("evaluate: ground truth for interview '" + r->interview_id +
                             "' is missing item " + std::to_string(item_id));
      }
      if (truth_it->second.size() != active.size())
        throw HarnessError("evaluate: ground truth for interview '" + r->interview_id +
                           "' covers items outside the active set of " + instrument_name);
    }

    // Full-scale scopes: combined, plus per-dataset when several are present.
    std::map<std::string, std::vector<const InterviewRating*>> by_dataset;
    for (const InterviewRating* r : group.members)
      by_dataset[r->dataset_tag.value_or("")].push_back(r);
    std::vector<std::pair<std::string, std::vector<const InterviewRating*>>> full_scopes;
    full_scopes.emplace_back(kCombinedDataset, group.members);
    if (by_dataset.size() > 1) {
      for (const auto& [tag, members] : by_dataset) {
        if (!tag.empty() && members.size() >= 2) full_scopes.emplace_back(tag, members);
      }
    }

    for (const auto& [dataset, members] : full_scopes) {
      PairedScores totals;
      for (const InterviewRating* r : members) {
        totals.labels.push_back(r->interview_id);
        totals.a.push_back(r->total);
        double truth_total = 0.0;
        for (const auto& [item_id, score] : truth.at(r->interview_id)) truth_total += score;
        totals.b.push_back(truth_total);
      }
      MetricScope scope{instrument_name, group.model, dataset, std::nullopt};
      reports.push_back(clinimetrics::compute_metric_report(scope, totals));
    }

    // Item scopes at the combined dataset.
    for (int item_id : active) {
      PairedScores pair;
      for (const InterviewRating* r : group.members) {
        pair.labels.push_back(r->interview_id);
        pair.a.push_back(r->item_ratings.at(item_id).score);
        pair.b.push_back(truth.at(r->interview_id).at(item_id));
      }
      MetricScope scope{instrument_name, group.model, kCombinedDataset, item_id};
      MetricReport report = clinimetrics::compute_metric_report(scope, pair);
      report.bland_altman_points.clear();  // points are emitted at full scale only
      reports.push_back(std::move(report));
    }

    if (!opts.families_path) {
      // Default correction scope: one family per metric kind across items,
      // singleton families for the full-scale scopes.
      for (const std::string& metric : all_metric_kinds()) {
        FamilySpec family;
        family.name = metric_family_name(instrument_name, group.model, kCombinedDataset, metric);
        family.metric = metric;
        for (int item_id : active)
          family.scopes.push_back(
              MetricScope{instrument_name, group.model, kCombinedDataset, item_id}.key());
        families.push_back(std::move(family));
        for (const auto& [dataset, unused] : full_scopes) {
          FamilySpec single;
          single.name = instrument_name + "/" + group.model + "/" + dataset + "/" + metric +
                        "/full-scale";
          single.metric = metric;
          single.scopes.push_back(
              MetricScope{instrument_name, group.model, dataset, std::nullopt}.key());
          families.push_back(std::move(single));
        }
      }
    }
  }

  if (opts.families_path) families = load_families_file(*opts.families_path);

  std::map<std::string, MetricReport*> by_key;
  for (MetricReport& r : reports) by_key[r.scope.key()] = &r;

  for (const FamilySpec& family : families) {
    std::vector<MetricReport*> members;
    std::vector<double> raw;
    for (const std::string& scope_key : family.scopes) {
      auto it = by_key.find(scope_key);
      if (it == by_key.end())
        throw HarnessError("family '" + family.name + "' references unknown scope '" + scope_key +
                           "'");
      const double p = raw_p_for_metric(*it->second, family.metric);
      if (std::isnan(p)) continue;  // undefined or not-applicable: nothing to adjust
      members.push_back(it->second);
      raw.push_back(p);
    }
    if (raw.empty()) continue;
    const clinimetrics::BhResult bh = clinimetrics::benjamini_hochberg(raw, opts.q);
    for (std::size_t i = 0; i < members.size(); ++i)
      members[i]->p_adjusted[family.metric] = bh.adjusted[i];
  }

  for (MetricReport& r : reports) clinimetrics::judge_targets(r, opts.alpha);

  std::sort(reports.begin(), reports.end(), [](const MetricReport& a, const MetricReport& b) {
    const int ai = a.scope.item_id.value_or(-1);
    const int bi = b.scope.item_id.value_or(-1);
    return std::tie(a.scope.instrument, a.scope.model, a.scope.dataset, ai) <
           std::tie(b.scope.instrument, b.scope.model, b.scope.dataset, bi);
  });

  fs::create_directories(out_dir);
  json doc;
  doc["created_at"] = util::iso8601_utc_now();
  doc["alpha"] = opts.alpha;
  doc["q"] = opts.q;
  doc["config_digests"] = std::vector<std::string>(digests.begin(), digests.end());
  json families_json = json::array();
  for (const FamilySpec& family : families)
    families_json.push_back(
        {{"name", family.name}, {"metric", family.metric}, {"scopes", family.scopes}});
  doc["families"] = std::move(families_json);
  json reports_json = json::array();
  for (const MetricReport& r : reports)
    reports_json.push_back(report_to_json(r, /*with_points=*/!r.scope.item_id.has_value()));
  doc["reports"] = std::move(reports_json);

  EvaluationResult result;
  result.reports = std::move(reports);
  result.families = std::move(families);
  result.eval_json_path = (fs::path(out_dir) / "eval.json").string();
  result.eval_csv_path = (fs::path(out_dir) / "eval.csv").string();
  util::write_file(result.eval_json_path, doc.dump(2) + "\n");
  util::write_file(result.eval_csv_path, eval_csv(result.reports));
  return result;
}

namespace {

std::string md_cell(double v, int digits = 3) {
  return std::isfinite(v) ? util::fmt_fixed(v, digits) : "---";
}

std::string target_cell(const MetricReport& r, const char* metric) {
  auto it = r.target_flags.find(metric);
  if (it == r.target_flags.end()) return "---";
  return it->second ? "pass" : "fail";
}

}  // namespace

std::string cmd_report(const std::string& eval_path, ReportFormat format) {
  json doc;
  try {
    doc = json::parse(util::read_file(eval_path));
  } catch (const json::exception& e) {
    throw HarnessError(eval_path + ": malformed evaluation document: " + e.what());
  }
  std::vector<MetricReport> reports;
  for (const json& j : doc.at("reports")) reports.push_back(report_from_json(j));

  std::vector<const MetricReport*> full_scale;
  std::vector<const MetricReport*> items;
  for (const MetricReport& r : reports) {
    (r.scope.item_id ? items : full_scale).push_back(&r);
  }
  const auto scope_less = [](const MetricReport* a, const MetricReport* b) {
    return std::tie(a->scope.instrument, a->scope.model, a->scope.dataset,
                    a->scope.item_id) <
           std::tie(b->scope.instrument, b->scope.model, b->scope.dataset, b->scope.item_id);
  };
  std::sort(full_scale.begin(), full_scale.end(), scope_less);
  std::sort(items.begin(), items.end(), scope_less);

  std::ostringstream out;
  if (format == ReportFormat::Md) {
    out << "## Full-scale performance\n\n"
        << "| Instrument | Model | Dataset | n | MAE | RMSE | Pearson's r | Spearman's rho | "
           "ICC (3,1) | ICC (2,1) |\n"
        << "|---|---|---|---|---|---|---|---|---|---|\n";
    for (const MetricReport* r : full_scale) {
      out << "| " << r->scope.instrument << " | " << r->scope.model << " | " << r->scope.dataset
          << " | " << r->n << " | " << md_cell(r->mae) << " | " << md_cell(r->rmse) << " | "
          << md_cell(r->pearson_r) << " | " << md_cell(r->spearman_rho) << " | "
          << md_cell(r->icc_3_1) << " | " << md_cell(r->icc_2_1) << " |\n";
    }
    out << "\n## Item-level performance\n\n"
        << "| Instrument | Model | Dataset | Item | n | MAE | Bias target | Pearson's r | "
           "Association target |\n"
        << "|---|---|---|---|---|---|---|---|---|\n";
    for (const MetricReport* r : items) {
      out << "| " << r->scope.instrument << " | " << r->scope.model << " | " << r->scope.dataset
          << " | " << *r->scope.item_id << " | " << r->n << " | " << md_cell(r->mae) << " | "
          << target_cell(*r, clinimetrics::kMetricBias) << " | " << md_cell(r->pearson_r)
          << " | " << target_cell(*r, clinimetrics::kMetricPearson) << " |\n";
    }
    return out.str();
  }

  out << "table,instrument,model,dataset,item,n,mae,rmse,pearson_r,spearman_rho,icc_3_1,"
         "icc_2_1,bias_target,association_target\n";
  for (const MetricReport* r : full_scale) {
    out << "full_scale," << r->scope.instrument << ',' << r->scope.model << ','
        << r->scope.dataset << ",," << r->n << ',' << md_cell(r->mae) << ',' << md_cell(r->rmse)
        << ',' << md_cell(r->pearson_r) << ',' << md_cell(r->spearman_rho) << ','
        << md_cell(r->icc_3_1) << ',' << md_cell(r->icc_2_1) << ",,\n";
  }
  for (const MetricReport* r : items) {
    out << "item," << r->scope.instrument << ',' << r->scope.model << ',' << r->scope.dataset
        << ',' << *r->scope.item_id << ',' << r->n << ',' << md_cell(r->mae) << ",,"
        << md_cell(r->pearson_r) << ",,,," << target_cell(*r, clinimetrics::kMetricBias) << ','
        << target_cell(*r, clinimetrics::kMetricPearson) << '\n';
  }
  return out.str();
}

}  // namespace hamrater
