#include "hamrater/transcript.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hamrater/util.hpp"

namespace hamrater {

using nlohmann::json;

std::string to_string(SpeakerRole role) {
  switch (role) {
    case SpeakerRole::Clinician: return "CLINICIAN";
    case SpeakerRole::Patient: return "PATIENT";
    case SpeakerRole::Unknown: return "UNKNOWN";
  }
  return "UNKNOWN";
}

const Utterance* Transcript::find_utterance(const std::string& utterance_id) const {
  for (const auto& u : utterances) {
    if (u.utterance_id == utterance_id) return &u;
  }
  return nullptr;
}

bool Transcript::roles_attributed() const {
  for (const auto& [label, role] : role_map) {
    if (role != SpeakerRole::Unknown) return true;
  }
  return false;
}

SpeakerRole Transcript::role_of(const std::string& speaker_label) const {
  auto it = role_map.find(speaker_label);
  return it == role_map.end() ? SpeakerRole::Unknown : it->second;
}

namespace {

[[noreturn]] void fail(const std::string& msg) { throw TranscriptError(msg); }

std::string where(const std::string& interview_id, std::size_t index, const std::string& id) {
  std::ostringstream os;
  os << "interview '" << interview_id << "', utterance #" << index;
  if (!id.empty()) os << " (id '" << id << "')";
  return os.str();
}

}  // namespace

Transcript parse_transcript(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(std::string("malformed transcript document: ") + e.what());
  }
  if (!doc.is_object()) fail("malformed transcript document: top level is not an object");
  if (!doc.contains("interview_id") || !doc["interview_id"].is_string())
    fail("transcript document missing string field 'interview_id'");

  Transcript t;
  t.interview_id = doc["interview_id"].get<std::string>();
  if (doc.contains("dataset")) {
    if (!doc["dataset"].is_string())
      fail("interview '" + t.interview_id + "': field 'dataset' must be a string");
    t.dataset_tag = doc["dataset"].get<std::string>();
  }

  if (!doc.contains("utterances") || !doc["utterances"].is_array())
    fail("interview '" + t.interview_id + "': missing array field 'utterances'");
  const json& arr = doc["utterances"];
  if (arr.empty()) fail("interview '" + t.interview_id + "': utterance list is empty");

  std::set<std::string> seen_ids;
  std::size_t index = 0;
  for (const json& ju : arr) {
    ++index;
    if (!ju.is_object()) fail(where(t.interview_id, index, "") + ": utterance is not an object");
    Utterance u;
    if (!ju.contains("id") || !ju["id"].is_string())
      fail(where(t.interview_id, index, "") + ": missing string field 'id'");
    u.utterance_id = ju["id"].get<std::string>();
    if (!ju.contains("speaker") || !ju["speaker"].is_string())
      fail(where(t.interview_id, index, u.utterance_id) + ": missing string field 'speaker'");
    u.speaker = ju["speaker"].get<std::string>();
    if (!ju.contains("start") || !ju["start"].is_number())
      fail(where(t.interview_id, index, u.utterance_id) + ": missing numeric field 'start'");
    if (!ju.contains("end") || !ju["end"].is_number())
      fail(where(t.interview_id, index, u.utterance_id) + ": missing numeric field 'end'");
    u.start_s = ju["start"].get<double>();
    u.end_s = ju["end"].get<double>();
    if (!ju.contains("text") || !ju["text"].is_string())
      fail(where(t.interview_id, index, u.utterance_id) + ": missing string field 'text'");
    u.text = ju["text"].get<std::string>();

    if (u.start_s < 0.0)
      fail(where(t.interview_id, index, u.utterance_id) + ": negative start timestamp");
    if (u.end_s < u.start_s)
      fail(where(t.interview_id, index, u.utterance_id) + ": end timestamp precedes start");
    if (util::normalize_ws(u.text).empty())
      fail(where(t.interview_id, index, u.utterance_id) + ": utterance text is empty");
    if (!seen_ids.insert(u.utterance_id).second)
      fail(where(t.interview_id, index, u.utterance_id) + ": duplicate utterance id");

    t.utterances.push_back(std::move(u));
  }

  // Upstream aligners commonly emit near-sorted segments; sort rather than reject.
  std::stable_sort(t.utterances.begin(), t.utterances.end(),
                   [](const Utterance& a, const Utterance& b) { return a.start_s < b.start_s; });

  for (const auto& u : t.utterances) t.role_map.emplace(u.speaker, SpeakerRole::Unknown);
  return t;
}

Transcript parse_transcript_file(const std::string& path) {
  try {
    return parse_transcript(util::read_file(path));
  } catch (const TranscriptError& e) {
    fail(path + ": " + e.what());
  }
}

std::string serialize_transcript(const Transcript& t) {
  json doc;
  doc["interview_id"] = t.interview_id;
  if (t.dataset_tag) doc["dataset"] = *t.dataset_tag;
  json arr = json::array();
  for (const auto& u : t.utterances) {
    arr.push_back({{"id", u.utterance_id},
                   {"speaker", u.speaker},
                   {"start", u.start_s},
                   {"end", u.end_s},
                   {"text", u.text}});
  }
  doc["utterances"] = std::move(arr);
  return doc.dump(2) + "\n";
}

std::vector<std::string> default_probe_lexicon() {
  return {
      "past week",          "over the last week",   "your mood",
      "feeling down",       "feeling depressed",    "trouble falling asleep",
      "staying asleep",     "middle of the night",  "waking up early",
      "early in the morning", "your appetite",      "your energy",
      "interest in",        "feeling guilty",       "blame yourself",
      "thoughts of death",  "better off dead",      "hurting yourself",
      "feeling anxious",    "feeling tense",        "worrying",
      "panic",              "concentrating",        "your work",
      "lost any weight",    "your sex drive",       "physical symptoms",
  };
}

std::vector<std::string> load_probe_lexicon_file(const std::string& path) {
  json doc;
  try {
    doc = json::parse(util::read_file(path));
  } catch (const json::exception& e) {
    fail(path + ": malformed probe lexicon: " + e.what());
  }
  if (!doc.is_array()) fail(path + ": probe lexicon must be a JSON array of strings");
  std::vector<std::string> out;
  for (const json& j : doc) {
    if (!j.is_string()) fail(path + ": probe lexicon entries must be strings");
    out.push_back(j.get<std::string>());
  }
  return out;
}

namespace {

// Fixed interrogative openers for the role heuristic.
constexpr std::array<std::string_view, 14> kInterrogativeWords = {
    "what", "how", "have", "has", "do",    "does",  "did",
    "are",  "is",  "were", "was", "would", "could", "can"};

bool is_interrogative(const std::string& text) {
  std::string_view sv(text);
  while (!sv.empty() && std::isspace(static_cast<unsigned char>(sv.back()))) sv.remove_suffix(1);
  if (!sv.empty() && sv.back() == '?') return true;

  std::string_view fw(text);
  while (!fw.empty() && !std::isalpha(static_cast<unsigned char>(fw.front()))) fw.remove_prefix(1);
  std::size_t end = 0;
  while (end < fw.size() && std::isalpha(static_cast<unsigned char>(fw[end]))) ++end;
  const std::string first = util::to_lower(fw.substr(0, end));
  for (std::string_view w : kInterrogativeWords) {
    if (first == w) return true;
  }
  return false;
}

double interrogative_score(const std::vector<const Utterance*>& windowed,
                           const std::vector<std::string>& probe_lexicon) {
  if (windowed.empty()) return 0.0;
  int interrogative = 0;
  int probe_hits = 0;
  for (const Utterance* u : windowed) {
    if (is_interrogative(u->text)) ++interrogative;
    for (const auto& probe : probe_lexicon) {
      if (!probe.empty() && util::contains_ci(u->text, probe)) {
        ++probe_hits;
        break;
      }
    }
  }
  const double n = static_cast<double>(windowed.size());
  return interrogative / n + probe_hits / n;
}

}  // namespace

Transcript attribute_roles(const Transcript& t,
                           const std::vector<std::string>& probe_lexicon,
                           int window) {
  if (window < 1) fail("attribute_roles: window must be >= 1");

  std::vector<std::string> labels;
  for (const auto& u : t.utterances) {
    if (std::find(labels.begin(), labels.end(), u.speaker) == labels.end())
      labels.push_back(u.speaker);  // order of first appearance
  }
  if (labels.size() != 2) {
    std::ostringstream os;
    os << "attribute_roles: interview '" << t.interview_id << "' has " << labels.size()
       << " distinct speaker label(s); exactly two are required";
    fail(os.str());
  }

  std::map<std::string, std::vector<const Utterance*>> windowed;
  for (const auto& u : t.utterances) {
    auto& v = windowed[u.speaker];
    if (static_cast<int>(v.size()) < window) v.push_back(&u);
  }

  const double score_first = interrogative_score(windowed[labels[0]], probe_lexicon);
  const double score_second = interrogative_score(windowed[labels[1]], probe_lexicon);

  Transcript out = t;
  out.attribution_tie_break = false;
  std::string clinician;
  if (score_first > score_second) {
    clinician = labels[0];
  } else if (score_second > score_first) {
    clinician = labels[1];
  } else {
    clinician = labels[0];  // speaker of the chronologically first utterance
    out.attribution_tie_break = true;
  }
  const std::string patient = (clinician == labels[0]) ? labels[1] : labels[0];
  out.role_map.clear();
  out.role_map[clinician] = SpeakerRole::Clinician;
  out.role_map[patient] = SpeakerRole::Patient;
  return out;
}

std::string render_for_prompt(const Transcript& t) {
  if (!t.roles_attributed())
    fail("render_for_prompt: interview '" + t.interview_id + "' has unresolved speaker roles");
  std::string out;
  for (const auto& u : t.utterances) {
    out += "[" + u.utterance_id + "] " + to_string(t.role_of(u.speaker)) + " (" +
           util::fmt_fixed(u.start_s, 2) + "-" + util::fmt_fixed(u.end_s, 2) + " s): " + u.text +
           "\n";
  }
  return out;
}

}  // namespace hamrater
