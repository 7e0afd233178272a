#include <unistd.h>

#include <array>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "hamrater/harness.hpp"
#include "hamrater/util.hpp"

namespace hamrater {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct DemoItem {
  int id;
  const char* question;
  const char* present;          // quoted as evidence when the symptom is present
  const char* absent = nullptr; // defaults to a generic denial
};

constexpr const char* kGenericAbsent = "No, that has not really been a problem for me.";

const std::array<DemoItem, 15>& demo_items() {
  static const std::array<DemoItem, 15> items = {{
      {1, "How has your mood been over the past week?",
       "I have been feeling very low and heavy in my mood."},
      {2, "Have you been blaming yourself or feeling guilty about things?",
       "I keep blaming myself and feel like I have let everyone down."},
      {3, "Have you had any thoughts that life is not worth living?",
       "I sometimes feel that life is not worth living."},
      {4, "Have you had trouble falling asleep at night?",
       "It takes me more than an hour to fall asleep most nights."},
      {5, "Do you wake up in the middle of the night?",
       "I wake up in the middle of the night and toss and turn for a long time."},
      {6, "Are you waking up early in the morning and staying awake?",
       "I wake up around four in the morning and cannot get back to sleep."},
      {7, "How has your interest in work and your usual activities been?",
       "I have lost interest in my work and I have dropped most of my hobbies."},
      {10, "Have you been feeling anxious or worried lately?",
       "I feel tense and on edge and I worry about every small thing."},
      {11, "When you worry, do you notice physical symptoms like a racing heart?",
       "When I get worried my heart races and my stomach churns."},
      {12, "How has your appetite been?",
       "My appetite has been poor and I only eat because I have to."},
      {13, "How has your energy been during the day?",
       "My whole body feels heavy and I am tired nearly all the time."},
      {14, "Has your interest in intimacy changed?",
       "I have had no interest in intimacy at all lately."},
      {15, "Do you find yourself worrying a lot about your physical health?",
       "I keep worrying that there is something physically wrong with me."},
      {16, "Have you lost any weight recently?",
       "My clothes have become loose so I think I have lost some weight."},
      {17, "Do you feel you are unwell, or do you put this down to something else?",
       "I do not think I am ill; I just need rest and a proper holiday.",
       "I know that I am unwell and that this is more than ordinary stress."},
  }};
  return items;
}

struct DemoCell {
  int frequency;
  int intensity;
  int score;  // grid reconciliation of (frequency, intensity), written out literally
};

struct DemoInterview {
  const char* interview_id;
  const char* clinician_label;
  const char* patient_label;
  std::array<DemoCell, 15> cells;  // roster order: items 1-7, 10-17
  int total;                       // sum of cell scores
};

const std::array<DemoInterview, 3>& demo_interviews() {
  static const std::array<DemoInterview, 3> interviews = {{
      {"demo-001", "SPEAKER_00", "SPEAKER_01",
       {{{1, 1, 1}, {0, 0, 0}, {0, 0, 0}, {1, 1, 1}, {0, 0, 0}, {0, 0, 0}, {1, 2, 1},
         {1, 2, 1}, {0, 0, 0}, {1, 1, 1}, {1, 2, 1}, {0, 0, 0}, {0, 0, 0}, {0, 0, 0},
         {0, 0, 0}}},
       6},
      // Labels deliberately swapped: attribution must follow content, not label order.
      {"demo-002", "SPEAKER_01", "SPEAKER_00",
       {{{2, 2, 2}, {1, 2, 1}, {1, 1, 1}, {2, 1, 1}, {1, 1, 1}, {0, 0, 0}, {2, 2, 2},
         {2, 2, 2}, {1, 1, 1}, {2, 1, 1}, {2, 1, 1}, {1, 1, 1}, {1, 1, 1}, {0, 0, 0},
         {0, 0, 0}}},
       15},
      {"demo-003", "SPEAKER_00", "SPEAKER_01",
       {{{3, 3, 3}, {2, 2, 2}, {1, 2, 1}, {3, 2, 2}, {2, 1, 1}, {2, 2, 2}, {2, 3, 3},
         {3, 3, 3}, {2, 2, 2}, {1, 1, 1}, {3, 2, 2}, {2, 1, 1}, {1, 3, 2}, {2, 1, 1},
         {1, 1, 1}}},
       27},
  }};
  return interviews;
}

// rater-a scores the mock script values; rater-b deviates by -1/+1 on a few
// items so the resolved medians exercise fractional ground truth.
int rater_b_delta(const std::string& interview_id, int item_id) {
  if (interview_id == "demo-002" && (item_id == 1 || item_id == 7)) return -1;
  if (interview_id == "demo-003") {
    if (item_id == 1 || item_id == 4 || item_id == 7 || item_id == 10) return -1;
    if (item_id == 3) return 1;
  }
  return 0;
}

std::string uid(int index) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "u%03d", index);
  return std::string(buf);
}

const char* frequency_tail(int frequency) {
  switch (frequency) {
    case 1: return " It happens occasionally.";
    case 2: return " It happens much of the time.";
    case 3: return " It happens almost all of the time.";
    default: return "";
  }
}

json make_utterance(int index, const std::string& speaker, const std::string& text) {
  const double start = index * 5.0;
  return json{{"id", uid(index)},
              {"speaker", speaker},
              {"start", start},
              {"end", start + 4.5},
              {"text", text}};
}

std::string demo_transcript_json(const DemoInterview& interview) {
  json utterances = json::array();
  utterances.push_back(make_utterance(
      0, interview.clinician_label,
      "Thank you for coming in today. How have you been feeling over the past week?"));
  const auto& items = demo_items();
  for (std::size_t p = 0; p < items.size(); ++p) {
    const DemoItem& item = items[p];
    const DemoCell& cell = interview.cells[p];
    utterances.push_back(
        make_utterance(static_cast<int>(2 * p + 1), interview.clinician_label, item.question));
    std::string answer;
    if (cell.score > 0) {
      answer = std::string(item.present) + frequency_tail(cell.frequency);
    } else {
      answer = item.absent != nullptr ? item.absent : kGenericAbsent;
    }
    utterances.push_back(
        make_utterance(static_cast<int>(2 * p + 2), interview.patient_label, answer));
  }
  json doc;
  doc["interview_id"] = interview.interview_id;
  doc["dataset"] = "demo";
  doc["utterances"] = std::move(utterances);
  return doc.dump(2) + "\n";
}

std::string demo_mock_script_json() {
  json script = json::object();
  const auto& items = demo_items();
  for (const DemoInterview& interview : demo_interviews()) {
    for (std::size_t p = 0; p < items.size(); ++p) {
      const DemoItem& item = items[p];
      const DemoCell& cell = interview.cells[p];
      json payload;
      if (cell.score > 0) {
        payload["evidence"] = json::array(
            {json{{"utterance_id", uid(static_cast<int>(2 * p + 2))}, {"quote", item.present}}});
        payload["justification"] =
            std::string("The patient reported: \"") + item.present +
            "\" The frequency and intensity follow from that account.";
      } else {
        payload["evidence"] = json::array();
        payload["justification"] = "The patient denied difficulties in this domain.";
      }
      payload["frequency"] = cell.frequency;
      payload["intensity"] = cell.intensity;
      payload["score"] = cell.score;

      std::ostringstream response;
      response << "Stage 1 and 2 analysis for item " << item.id
               << " is summarized in the block below.\n\n```json\n"
               << payload.dump(2) << "\n```\n";
      script[request_tag(interview.interview_id, InstrumentId::HAMD17S, item.id, 1)] =
          response.str();
    }
  }
  return script.dump(2) + "\n";
}

std::string demo_truth_json() {
  json truth = json::object();
  const auto& items = demo_items();
  for (const DemoInterview& interview : demo_interviews()) {
    json rater_a = json::object();
    json rater_b = json::object();
    for (std::size_t p = 0; p < items.size(); ++p) {
      const std::string key = std::to_string(items[p].id);
      rater_a[key] = interview.cells[p].score;
      rater_b[key] = interview.cells[p].score +
                     rater_b_delta(interview.interview_id, items[p].id);
    }
    truth[interview.interview_id] = json{{"rater-a", rater_a}, {"rater-b", rater_b}};
  }
  return truth.dump(2) + "\n";
}

}  // namespace

std::vector<std::pair<std::string, int>> mock_demo_expected_totals() {
  std::vector<std::pair<std::string, int>> totals;
  for (const DemoInterview& interview : demo_interviews())
    totals.emplace_back(interview.interview_id, interview.total);
  return totals;
}

MockDemoResult cmd_mock_demo(const std::string& out_dir, int parallelism_cap) {
  const fs::path root =
      out_dir.empty() ? fs::temp_directory_path() / ("hamrater-demo-" + std::to_string(::getpid()))
                      : fs::path(out_dir);
  const fs::path inputs = root / "inputs";
  const fs::path transcripts = inputs / "transcripts";
  fs::create_directories(transcripts);

  for (const DemoInterview& interview : demo_interviews()) {
    util::write_file((transcripts / (std::string(interview.interview_id) + ".json")).string(),
                     demo_transcript_json(interview));
  }
  const std::string script_path = (inputs / "mock_script.json").string();
  util::write_file(script_path, demo_mock_script_json());
  const std::string truth_path = (inputs / "truth.json").string();
  util::write_file(truth_path, demo_truth_json());

  RunConfig cfg;
  cfg.instrument_id = InstrumentId::HAMD17S;
  cfg.backend.kind = BackendKind::ScriptedMock;
  cfg.backend.script_path = script_path;
  cfg.model_name = "mock-model";
  cfg.parallelism_cap = parallelism_cap;
  util::write_file((inputs / "config.json").string(), serialize_run_config(cfg));

  MockDemoResult result;
  result.dir = root.string();
  result.rate = cmd_rate(cfg, transcripts.string(), (root / "ratings").string());
  if (result.rate.failed != 0 || result.rate.succeeded != 3)
    throw HarnessError("mock demo: expected 3 rated interviews, got " +
                       std::to_string(result.rate.succeeded) + " with " +
                       std::to_string(result.rate.failed) + " failure(s)");

  // The recovered totals must equal the score sums embedded in the script.
  for (const auto& [interview_id, expected] : mock_demo_expected_totals()) {
    const std::string path =
        (root / "ratings" / (interview_id + ".rating.json")).string();
    const InterviewRating rating = load_interview_rating_file(path);
    if (rating.total != static_cast<double>(expected))
      throw HarnessError("mock demo: interview " + interview_id + " total " +
                         util::fmt_g(rating.total) + " != scripted sum " +
                         std::to_string(expected));
    result.totals.push_back(rating.total);
  }

  result.evaluation = cmd_evaluate(result.rate.rating_paths, truth_path, EvaluateOptions{},
                                   (root / "eval").string());

  const std::string md = cmd_report(result.evaluation.eval_json_path, ReportFormat::Md);
  const std::string csv = cmd_report(result.evaluation.eval_json_path, ReportFormat::Csv);
  if (md != cmd_report(result.evaluation.eval_json_path, ReportFormat::Md))
    throw HarnessError("mock demo: report rendering is not deterministic");
  util::write_file((root / "report.md").string(), md);
  util::write_file((root / "report.csv").string(), csv);
  return result;
}

}  // namespace hamrater
