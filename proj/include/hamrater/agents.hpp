#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hamrater/backend.hpp"
#include "hamrater/instruments.hpp"
#include "hamrater/transcript.hpp"

namespace hamrater {

struct EvidenceCitation {
  std::string utterance_id;
  std::string quote;  // verbatim span from that utterance

  bool operator==(const EvidenceCitation&) const = default;
};

// One agent's evidence-cited rating of a single item.
struct ItemRating {
  int item_id = 0;
  std::vector<EvidenceCitation> evidence;  // may be empty only when score = 0
  std::string justification;
  std::optional<DualAxisRating> dual_axis;  // dual-axis (HAM-D) items
  std::optional<int> severity;              // severity-anchor (HAM-A) items
  int score = 0;
  // The model's self-reported final integer disagreed with the recomputed
  // score and was overridden.
  bool score_discrepancy = false;
  std::string model_name;
  int attempts_used = 1;

  bool operator==(const ItemRating&) const = default;
};

struct InterviewRating {
  std::string interview_id;
  InstrumentId instrument_id = InstrumentId::HAMD17S;
  std::optional<std::string> dataset_tag;
  std::map<int, ItemRating> item_ratings;
  std::vector<int> missing_items;  // non-empty only for permissive partial scorecards
  double total = 0.0;
  std::string created_at;  // ISO-8601 UTC
  std::string pipeline_config_digest;
  std::string model_name;
};

enum class ParseFailureReason {
  NoStructuredBlock,
  MissingField,
  OutOfRange,
  UnknownUtteranceId,
  QuoteMismatch,
  ModeMismatch,
};

std::string to_string(ParseFailureReason reason);

struct ParseFailure {
  ParseFailureReason reason = ParseFailureReason::NoStructuredBlock;
  std::string detail;
};

class AgentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Retry budget exhausted for one item.
class ItemFailure : public AgentError {
 public:
  ItemFailure(int item_id, ParseFailure last, const std::string& message)
      : AgentError(message), item_id(item_id), last_failure(std::move(last)) {}
  int item_id;
  ParseFailure last_failure;
};

class InterviewFailure : public AgentError {
 public:
  InterviewFailure(std::map<int, std::string> failures, const std::string& message)
      : AgentError(message), item_failures(std::move(failures)) {}
  std::map<int, std::string> item_failures;  // item_id -> last failure description
};

struct Prompt {
  std::string system_text;
  std::string user_text;
};

// Hashed into the pipeline config digest; bump when prompt wording changes.
inline constexpr const char* kPromptTemplateVersion = "item-agent-prompt/1";

// Deterministic per-item prompt. The system text fixes the single-item role,
// the three-stage procedure (contextual identification, qualitative
// justification, quantitative mapping), the item's anchors verbatim, the
// Extended convention when applicable, and the required response block. The
// user text is the full transcript rendering, never a positional slice.
Prompt build_prompt(const ItemSpec& item, const Transcript& t, InstrumentId variant);

using ParseResult = std::variant<ItemRating, ParseFailure>;

// Extract and validate the structured response block against the item spec
// and the transcript. Out-of-range values are failures, never clamped; the
// final score of a dual-axis item is recomputed from its axes and any
// disagreeing self-reported integer is overridden with a discrepancy flag.
ParseResult parse_agent_response(const ItemSpec& item, const Transcript& t,
                                 const std::string& raw);

struct AgentOptions {
  std::string model_name = "mock-model";
  double temperature = 0.0;
  int max_output_tokens = 1024;
  int retry_budget = 2;     // re-asks after a malformed response
  int parallelism_cap = 4;  // concurrent backend calls per interview
  bool allow_partial = false;
};

// "<interview>/<scale>/<item>" with "#retryN" appended for re-asks, so a
// scripted mock can stage distinct responses per attempt while staying a
// pure function of the tag.
std::string request_tag(const std::string& interview_id, InstrumentId variant, int item_id,
                        int attempt);

// One backend call per attempt; malformed output triggers a repair re-ask
// quoting the failure reason, up to retry_budget times.
ItemRating rate_item(Backend& backend, const ItemSpec& item, const Transcript& t,
                     InstrumentId variant, const AgentOptions& opts);

// One independent agent per active item; no agent sees another's output.
// The result is independent of execution order and of the parallelism cap.
InterviewRating rate_interview(Backend& backend, const InstrumentSpec& instrument,
                               const Transcript& t, const AgentOptions& opts);

// Digest over everything that can change scores: prompt template version,
// instrument roster (anchors, conventions, reconciliation tables), frequency
// labels, and the backend model name.
std::string compute_config_digest(const InstrumentSpec& instrument,
                                  const std::string& model_name);

std::string serialize_interview_rating(const InterviewRating& rating);
InterviewRating parse_interview_rating(const std::string& json_text);
InterviewRating load_interview_rating_file(const std::string& path);

}  // namespace hamrater
