#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hamrater {

enum class SpeakerRole { Clinician, Patient, Unknown };

std::string to_string(SpeakerRole role);

// One diarized, time-aligned utterance. Overlap between consecutive
// utterances is permitted; overlapping speech is real.
struct Utterance {
  std::string utterance_id;  // unique within its transcript
  std::string speaker;       // raw diarization label, e.g. "SPEAKER_00"
  double start_s = 0.0;
  double end_s = 0.0;
  std::string text;

  bool operator==(const Utterance&) const = default;
};

struct Transcript {
  std::string interview_id;
  std::optional<std::string> dataset_tag;
  std::vector<Utterance> utterances;            // sorted by non-decreasing start_s
  std::map<std::string, SpeakerRole> role_map;  // raw label -> role
  bool attribution_tie_break = false;           // set when roles had to be tie-broken

  bool operator==(const Transcript&) const = default;

  const Utterance* find_utterance(const std::string& utterance_id) const;
  // True when at least one label resolved to a non-Unknown role.
  bool roles_attributed() const;
  SpeakerRole role_of(const std::string& speaker_label) const;
};

class TranscriptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Transcript document (the contract with the upstream ASR/diarization stage):
//   { "interview_id": str, "dataset": str?,
//     "utterances": [ { "id": str, "speaker": str, "start": sec, "end": sec, "text": str } ] }
// Out-of-order utterances are stably re-sorted by start time; structural
// problems (duplicate ids, inverted or negative timestamps, empty text,
// empty utterance list) raise TranscriptError naming the offending utterance.
Transcript parse_transcript(const std::string& json_text);
Transcript parse_transcript_file(const std::string& path);
std::string serialize_transcript(const Transcript& t);

inline constexpr int kDefaultRoleWindow = 10;

// Standardized Hamilton-style interview probe stems. Ships as data so sites
// can adapt it; this built-in list mirrors data/probe_lexicon.json.
std::vector<std::string> default_probe_lexicon();
std::vector<std::string> load_probe_lexicon_file(const std::string& path);

// Role attribution for a two-speaker transcript. For each raw label, over its
// first `window` utterances: interrogative score =
//   fraction of utterances that end in '?' or begin with an interrogative word
// + fraction of utterances containing any probe phrase (case-insensitive).
// The higher-scoring label becomes Clinician. An exact tie assigns Clinician
// to the speaker of the chronologically first utterance and sets
// attribution_tie_break on the result.
Transcript attribute_roles(const Transcript& t,
                           const std::vector<std::string>& probe_lexicon,
                           int window = kDefaultRoleWindow);

// Deterministic full-transcript rendering, one utterance per line:
//   [utterance_id] ROLE (start-end s): text
// Never truncates or summarizes; requires roles to be attributed.
std::string render_for_prompt(const Transcript& t);

}  // namespace hamrater
