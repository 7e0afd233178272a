#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hamrater/harness.hpp"
#include "hamrater/util.hpp"

using namespace hamrater;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("hamrater-test-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str(const std::string& rel = "") const {
    return rel.empty() ? path.string() : (path / rel).string();
  }
};

const char* kRunConfig = R"({
  "instrument": "HAMD17S",
  "model_name": "mock-model",
  "backend": {"kind": "scripted_mock", "script_path": "script.json", "max_retries": 1},
  "retry_budget": 1,
  "parallelism_cap": 2,
  "role_window": 10,
  "seed": 7
})";

// A rating document whose axes are consistent with its scores.
std::string synthetic_rating(const std::string& interview_id, InstrumentId instrument,
                             const std::string& model, const std::map<int, int>& scores,
                             const std::string& digest,
                             const std::optional<std::string>& dataset = std::nullopt) {
  InterviewRating rating;
  rating.interview_id = interview_id;
  rating.instrument_id = instrument;
  rating.model_name = model;
  rating.dataset_tag = dataset;
  rating.created_at = "2026-01-01T00:00:00Z";
  rating.pipeline_config_digest = digest;
  for (const auto& [item_id, score] : scores) {
    ItemRating item;
    item.item_id = item_id;
    item.justification = "synthetic";
    if (instrument == InstrumentId::HAMA14S) {
      item.severity = score;
    } else {
      item.dual_axis = DualAxisRating{score > 0 ? 2 : 0, score};
    }
    item.score = score;
    item.model_name = model;
    if (score > 0) item.evidence.push_back({"u1", "synthetic quote"});
    rating.item_ratings[item_id] = item;
    rating.total += score;
  }
  return serialize_interview_rating(rating);
}

}  // namespace

TEST_CASE("run config parsing and validation") {
  const RunConfig cfg = parse_run_config(kRunConfig);
  CHECK(cfg.instrument_id == InstrumentId::HAMD17S);
  CHECK(cfg.backend.kind == BackendKind::ScriptedMock);
  CHECK(cfg.backend.script_path == "script.json");
  CHECK(cfg.retry_budget == 1);
  CHECK(cfg.parallelism_cap == 2);
  CHECK(cfg.seed == 7);

  const RunConfig round = parse_run_config(serialize_run_config(cfg));
  CHECK(round.instrument_id == cfg.instrument_id);
  CHECK(round.backend.script_path == cfg.backend.script_path);

  json ext = json::parse(kRunConfig);
  ext["instrument"] = "HAMD17S_EXT";
  CHECK_THROWS_WITH_AS(parse_run_config(ext.dump()), doctest::Contains("conventions_path"),
                       HarnessError);

  json bad_kind = json::parse(kRunConfig);
  bad_kind["backend"]["kind"] = "telepathy";
  CHECK_THROWS_AS(parse_run_config(bad_kind.dump()), HarnessError);
}

TEST_CASE("cmd_rate: collects per-file failures without voiding the batch") {
  TempDir dir;
  const fs::path transcripts = dir.path / "transcripts";
  fs::create_directories(transcripts);

  // One well-formed interview plus one with an inverted timestamp.
  util::write_file((transcripts / "int01.json").string(), R"({
    "interview_id": "int01",
    "utterances": [
      {"id": "u0", "speaker": "S0", "start": 0.0, "end": 4.0,
       "text": "How has your mood been over the past week?"},
      {"id": "u1", "speaker": "S1", "start": 4.1, "end": 9.0,
       "text": "I have been feeling quite low."}
    ]
  })");
  util::write_file((transcripts / "broken.json").string(), R"({
    "interview_id": "bad01",
    "utterances": [
      {"id": "u0", "speaker": "S0", "start": 5.0, "end": 1.0, "text": "Inverted."}
    ]
  })");

  json script = json::object();
  const InstrumentSpec spec = load_instrument(InstrumentId::HAMD17S);
  for (const auto& item : spec.items) {
    json payload = {{"evidence", json::array({json{{"utterance_id", "u1"},
                                                   {"quote", "feeling quite low"}}})},
                    {"justification", "reported low mood"},
                    {"frequency", item.item_id % 2 == 0 ? 0 : 2},
                    {"intensity", item.item_id % 2 == 0 ? 0 : 1},
                    {"score", item.item_id % 2 == 0 ? 0 : 1}};
    if (payload["score"] == 0) payload["evidence"] = json::array();
    script[request_tag("int01", InstrumentId::HAMD17S, item.item_id, 1)] =
        "```json\n" + payload.dump() + "\n```";
  }
  util::write_file(dir.str("script.json"), script.dump());

  RunConfig cfg = parse_run_config(kRunConfig);
  cfg.backend.script_path = dir.str("script.json");
  const RateSummary summary = cmd_rate(cfg, transcripts.string(), dir.str("out"));

  CHECK(summary.succeeded == 1);
  CHECK(summary.failed == 1);
  REQUIRE(summary.failures.size() == 1);
  CHECK(summary.failures[0].find("broken.json") != std::string::npos);
  CHECK(fs::exists(dir.path / "out" / "int01.rating.json"));
  CHECK(fs::exists(summary.manifest_path));

  const json manifest = json::parse(util::read_file(summary.manifest_path));
  CHECK(manifest["succeeded"] == 1);
  CHECK(manifest["failed"] == 1);
  CHECK(manifest["config_digest"] == summary.config_digest);

  // Idempotent over unchanged inputs, modulo the created_at stamp.
  const std::string before = util::read_file(dir.str("out/int01.rating.json"));
  cmd_rate(cfg, transcripts.string(), dir.str("out"));
  json a = json::parse(before);
  json b = json::parse(util::read_file(dir.str("out/int01.rating.json")));
  a.erase("created_at");
  b.erase("created_at");
  CHECK(a == b);
}

TEST_CASE("cmd_rate: empty directory is an error") {
  TempDir dir;
  fs::create_directories(dir.path / "empty");
  RunConfig cfg = parse_run_config(kRunConfig);
  cfg.backend.script_path = dir.str("script.json");
  CHECK_THROWS_WITH_AS(cmd_rate(cfg, dir.str("empty"), dir.str("out")),
                       doctest::Contains("no transcript documents"), HarnessError);
}

TEST_CASE("cmd_evaluate: perfect agreement passes every target") {
  TempDir dir;
  const InstrumentSpec spec = load_instrument(InstrumentId::HAMA14S);

  json truth = json::object();
  std::vector<std::string> rating_paths;
  for (int i = 0; i < 5; ++i) {
    const std::string id = "int0" + std::to_string(i);
    std::map<int, int> scores;
    json rater = json::object();
    for (const auto& item : spec.items) {
      const int score = (i + item.item_id) % 4;
      scores[item.item_id] = score;
      rater[std::to_string(item.item_id)] = score;
    }
    truth[id] = json{{"expert", rater}};
    const std::string path = dir.str(id + ".rating.json");
    util::write_file(path, synthetic_rating(id, InstrumentId::HAMA14S, "m1", scores, "digest-1"));
    rating_paths.push_back(path);
  }
  util::write_file(dir.str("truth.json"), truth.dump());

  const EvaluationResult result =
      cmd_evaluate(rating_paths, dir.str("truth.json"), EvaluateOptions{}, dir.str("eval"));

  REQUIRE_FALSE(result.reports.empty());
  for (const auto& report : result.reports) {
    CHECK(report.mae == 0.0);
    CHECK(report.sae == 0.0);
    CHECK_FALSE(report.bias_test.has_value());  // all residuals zero
    CHECK(report.pearson_r == doctest::Approx(1.0));
    CHECK(report.icc_3_1 == doctest::Approx(1.0));
    for (const auto& [metric, pass] : report.target_flags) CHECK(pass);
  }
  CHECK(fs::exists(result.eval_json_path));
  CHECK(fs::exists(result.eval_csv_path));

  // Families were materialized explicitly (5 metric kinds x (items + full)).
  CHECK_FALSE(result.families.empty());
}

TEST_CASE("cmd_evaluate: median ground truth, id and digest checks") {
  TempDir dir;
  const std::map<int, int> agent_scores = {{1, 2}, {2, 1}};
  // Two-item pseudo instrument is not allowed; use the real HAM-A roster.
  const InstrumentSpec spec = load_instrument(InstrumentId::HAMA14S);

  auto write_pair = [&](const std::string& id, int offset, const std::string& digest) {
    std::map<int, int> scores;
    json rater_a = json::object(), rater_b = json::object();
    for (const auto& item : spec.items) {
      const int s = (item.item_id + offset) % 3;
      scores[item.item_id] = s;
      rater_a[std::to_string(item.item_id)] = s;
      rater_b[std::to_string(item.item_id)] = std::min(4, s + 1);  // medians land on +0.5
    }
    util::write_file(dir.str(id + ".rating.json"),
                     synthetic_rating(id, InstrumentId::HAMA14S, "m1", scores, digest));
    return json{{"rater-a", rater_a}, {"rater-b", rater_b}};
  };

  json truth = json::object();
  truth["int00"] = write_pair("int00", 0, "digest-1");
  truth["int01"] = write_pair("int01", 1, "digest-1");
  truth["int02"] = write_pair("int02", 2, "digest-1");
  util::write_file(dir.str("truth.json"), truth.dump());

  const std::vector<std::string> paths = {dir.str("int00.rating.json"),
                                          dir.str("int01.rating.json"),
                                          dir.str("int02.rating.json")};
  const EvaluationResult result =
      cmd_evaluate(paths, dir.str("truth.json"), EvaluateOptions{}, dir.str("eval"));

  // Every item median sits exactly 0.5 above the agent score.
  for (const auto& report : result.reports) {
    if (report.scope.item_id) CHECK(report.mae == doctest::Approx(0.5));
  }

  SUBCASE("missing truth id") {
    util::write_file(dir.str("int03.rating.json"),
                     synthetic_rating("int03", InstrumentId::HAMA14S, "m1", {{1, 1}}, "digest-1"));
    auto more = paths;
    more.push_back(dir.str("int03.rating.json"));
    CHECK_THROWS_WITH_AS(
        cmd_evaluate(more, dir.str("truth.json"), EvaluateOptions{}, dir.str("eval2")),
        doctest::Contains("int03"), HarnessError);
  }

  SUBCASE("mixed digests refused unless overridden") {
    truth["int03"] = write_pair("int03", 0, "digest-2");
    util::write_file(dir.str("truth.json"), truth.dump());
    auto more = paths;
    more.push_back(dir.str("int03.rating.json"));
    CHECK_THROWS_WITH_AS(
        cmd_evaluate(more, dir.str("truth.json"), EvaluateOptions{}, dir.str("eval3")),
        doctest::Contains("digests"), HarnessError);
    EvaluateOptions allow;
    allow.allow_mixed_digests = true;
    CHECK_NOTHROW(cmd_evaluate(more, dir.str("truth.json"), allow, dir.str("eval4")));
  }
}

TEST_CASE("cmd_evaluate: Extended-variant ratings evaluate on the HAM-D roster") {
  TempDir dir;
  const InstrumentSpec spec = load_instrument(InstrumentId::HAMD17S);
  json truth = json::object();
  std::vector<std::string> paths;
  for (int i = 0; i < 4; ++i) {
    const std::string id = "ext" + std::to_string(i);
    std::map<int, int> scores;
    json rater = json::object();
    for (const auto& item : spec.items) {
      const int s = (i + item.item_id) % std::min(3, item.max_score + 1);
      scores[item.item_id] = s;
      rater[std::to_string(item.item_id)] = s;
    }
    truth[id] = json{{"expert", rater}};
    const std::string path = dir.str(id + ".rating.json");
    util::write_file(path,
                     synthetic_rating(id, InstrumentId::HAMD17S_EXT, "m-ext", scores, "dx"));
    paths.push_back(path);
  }
  util::write_file(dir.str("truth.json"), truth.dump());
  const EvaluationResult result =
      cmd_evaluate(paths, dir.str("truth.json"), EvaluateOptions{}, dir.str("eval"));
  bool saw_full_scale = false;
  for (const auto& report : result.reports) {
    CHECK(report.scope.instrument == "HAMD17S_EXT");
    if (!report.scope.item_id) saw_full_scale = true;
  }
  CHECK(saw_full_scale);
  CHECK(result.reports.size() == 1 + spec.items.size());
}

TEST_CASE("cmd_evaluate: per-dataset full-scale scopes appear when tags differ") {
  TempDir dir;
  const InstrumentSpec spec = load_instrument(InstrumentId::HAMA14S);
  json truth = json::object();
  std::vector<std::string> paths;
  for (int i = 0; i < 6; ++i) {
    const std::string id = "int0" + std::to_string(i);
    const std::string dataset = i < 3 ? "siteA" : "siteB";
    std::map<int, int> scores;
    json rater = json::object();
    for (const auto& item : spec.items) {
      const int s = (i * 2 + item.item_id) % 5;
      scores[item.item_id] = s;
      rater[std::to_string(item.item_id)] = std::max(0, s - (i % 2));
    }
    truth[id] = json{{"expert", rater}};
    const std::string path = dir.str(id + ".rating.json");
    util::write_file(path, synthetic_rating(id, InstrumentId::HAMA14S, "m1", scores, "d", dataset));
    paths.push_back(path);
  }
  util::write_file(dir.str("truth.json"), truth.dump());
  const EvaluationResult result =
      cmd_evaluate(paths, dir.str("truth.json"), EvaluateOptions{}, dir.str("eval"));

  int combined_full = 0, site_full = 0;
  for (const auto& report : result.reports) {
    if (report.scope.item_id) continue;
    if (report.scope.dataset == "combined") ++combined_full;
    if (report.scope.dataset == "siteA" || report.scope.dataset == "siteB") ++site_full;
  }
  CHECK(combined_full == 1);
  CHECK(site_full == 2);
}

TEST_CASE("cmd_report renders deterministic tables in both formats") {
  TempDir dir;
  const InstrumentSpec spec = load_instrument(InstrumentId::HAMA14S);
  json truth = json::object();
  std::vector<std::string> paths;
  for (int i = 0; i < 4; ++i) {
    const std::string id = "r" + std::to_string(i);
    std::map<int, int> scores;
    json rater = json::object();
    for (const auto& item : spec.items) {
      scores[item.item_id] = (i + item.item_id) % 4;
      rater[std::to_string(item.item_id)] = (i + item.item_id + 1) % 4;
    }
    truth[id] = json{{"expert", rater}};
    const std::string path = dir.str(id + ".rating.json");
    util::write_file(path, synthetic_rating(id, InstrumentId::HAMA14S, "m1", scores, "d"));
    paths.push_back(path);
  }
  util::write_file(dir.str("truth.json"), truth.dump());
  const EvaluationResult result =
      cmd_evaluate(paths, dir.str("truth.json"), EvaluateOptions{}, dir.str("eval"));

  const std::string md = cmd_report(result.eval_json_path, ReportFormat::Md);
  const std::string csv = cmd_report(result.eval_json_path, ReportFormat::Csv);
  CHECK(md == cmd_report(result.eval_json_path, ReportFormat::Md));
  CHECK(csv == cmd_report(result.eval_json_path, ReportFormat::Csv));

  // One model: exactly one full-scale md row (header, separator, one row).
  CHECK(md.find("| HAMA14S | m1 | combined |") != std::string::npos);
  // Item rows exist for all 13 items in both formats.
  for (const auto& item : spec.items) {
    CHECK(md.find("| " + std::to_string(item.item_id) + " | ") != std::string::npos);
  }

  // The same numeric values appear in both renderings (spot-check MAE cells).
  const json eval_doc = json::parse(util::read_file(result.eval_json_path));
  for (const auto& report : eval_doc["reports"]) {
    if (report["scope"]["item"].is_null()) {
      const std::string mae = util::fmt_fixed(report["mae"].get<double>(), 3);
      CHECK(md.find(mae) != std::string::npos);
      CHECK(csv.find(mae) != std::string::npos);
    }
  }
}

TEST_CASE("mock demo end to end") {
  TempDir dir;
  const MockDemoResult result = cmd_mock_demo(dir.str("demo"), 4);
  CHECK(result.rate.succeeded == 3);
  CHECK(result.totals == std::vector<double>{6.0, 15.0, 27.0});
  CHECK(fs::exists(fs::path(result.dir) / "report.md"));
  CHECK(fs::exists(fs::path(result.dir) / "report.csv"));
  CHECK(fs::exists(result.evaluation.eval_json_path));

  // Rerun: identical ratings documents modulo the created_at stamp.
  const MockDemoResult rerun = cmd_mock_demo(dir.str("demo2"), 1);
  for (const auto& [id, total] : mock_demo_expected_totals()) {
    json a = json::parse(
        util::read_file((fs::path(result.dir) / "ratings" / (id + ".rating.json")).string()));
    json b = json::parse(
        util::read_file((fs::path(rerun.dir) / "ratings" / (id + ".rating.json")).string()));
    a.erase("created_at");
    b.erase("created_at");
    CHECK(a == b);
    CHECK(a["total"] == total);
  }
}
