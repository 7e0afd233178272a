#include "hamrater/agents.hpp"

#include <algorithm>
#include <cmath>
#include <semaphore>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "hamrater/util.hpp"

namespace hamrater {

using nlohmann::json;

std::string to_string(ParseFailureReason reason) {
  switch (reason) {
    case ParseFailureReason::NoStructuredBlock: return "no-structured-block";
    case ParseFailureReason::MissingField: return "missing-field";
    case ParseFailureReason::OutOfRange: return "out-of-range";
    case ParseFailureReason::UnknownUtteranceId: return "unknown-utterance-id";
    case ParseFailureReason::QuoteMismatch: return "quote-mismatch";
    case ParseFailureReason::ModeMismatch: return "mode-mismatch";
  }
  return "no-structured-block";
}

namespace {

std::string scale_label(InstrumentId variant) {
  switch (variant) {
    case InstrumentId::HAMD17S: return "HAM-D 17*";
    case InstrumentId::HAMD17S_EXT: return "HAM-D 17* (Extended)";
    case InstrumentId::HAMA14S: return "HAM-A 14*";
  }
  return "HAM-D 17*";
}

std::string response_fields_line(const ItemSpec& item) {
  std::ostringstream os;
  os << "\"evidence\" (list of {\"utterance_id\", \"quote\"}), \"justification\", ";
  if (item.rating_mode == RatingMode::DualAxisGrid) {
    os << "\"frequency\" (integer 0-3), \"intensity\" (integer 0-" << item.max_score << "), ";
  } else {
    os << "\"severity\" (integer 0-" << item.max_score << "), ";
  }
  os << "\"score\" (final integer)";
  return os.str();
}

}  // namespace

Prompt build_prompt(const ItemSpec& item, const Transcript& t, InstrumentId variant) {
  if (variant == InstrumentId::HAMD17S_EXT && (!item.convention || item.convention->empty()))
    throw AgentError("build_prompt: Extended variant requires a convention for item " +
                     std::to_string(item.item_id));

  std::ostringstream sys;
  sys << "You are a clinical rating agent responsible for exactly one item of the "
      << scale_label(variant) << " instrument: item " << item.item_id << " (" << item.name
      << "). Rate only this item and ignore every other symptom domain.\n\n"
      << "Follow this three-stage procedure, in order.\n\n"
      << "1. CONTEXTUAL IDENTIFICATION\n"
      << "Scan the complete diarized interview transcript for dialog relevant to this item "
         "only. Relevant evidence may appear anywhere in the interview, regardless of which "
         "question elicited it; do not assume any fixed question order.\n\n"
      << "2. QUALITATIVE JUSTIFICATION\n"
      << "Write a justification for your rating, citing specific evidence from the patient's "
         "speech as verbatim quotes, each paired with the utterance id it was taken from.\n\n"
      << "3. QUANTITATIVE MAPPING\n";
  if (item.rating_mode == RatingMode::DualAxisGrid) {
    sys << "Rate the symptom on two separate axes: \"frequency\" (";
    for (int f = 0; f < kFrequencyLevels; ++f) {
      if (f) sys << ", ";
      sys << f << " = " << kFrequencyLabels[f];
    }
    sys << ") and \"intensity\" (0-" << item.max_score
        << ", using the anchors below). State the final integer score last.\n\n";
  } else {
    sys << "Map the evidence to a single \"severity\" rating on the anchored 0-" << item.max_score
        << " scale below. State the final integer score last.\n\n";
  }
  sys << "Scoring anchors for item " << item.item_id << " (" << item.name << "):\n";
  for (std::size_t level = 0; level < item.anchor_texts.size(); ++level) {
    sys << "  " << level << ": " << item.anchor_texts[level] << "\n";
  }
  if (variant == InstrumentId::HAMD17S_EXT) {
    sys << "\nItem convention (apply when judging this item):\n" << *item.convention << "\n";
  }
  sys << "\nRespond with exactly one fenced code block containing a JSON object with these "
         "fields: "
      << response_fields_line(item) << ".\n"
      << "Every \"quote\" must be a verbatim span of the cited utterance. If the symptom is "
         "absent, use an empty evidence list and score 0; a score above 0 requires at least "
         "one evidence citation.\n";

  return Prompt{sys.str(), render_for_prompt(t)};
}

namespace {

// Candidate payloads: every fenced block (last first), then the bare text
// when it looks like a JSON object.
std::vector<std::string> structured_block_candidates(const std::string& raw) {
  std::vector<std::string> blocks;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = raw.find("```", pos);
    if (open == std::string::npos) break;
    std::size_t body = open + 3;
    const std::size_t eol = raw.find('\n', body);
    const std::size_t close = raw.find("```", body);
    if (close == std::string::npos) break;
    if (eol != std::string::npos && eol < close) body = eol + 1;  // drop language tag line
    blocks.push_back(raw.substr(body, close - body));
    pos = close + 3;
  }
  std::reverse(blocks.begin(), blocks.end());
  if (blocks.empty()) {
    const std::size_t first = raw.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && raw[first] == '{') blocks.push_back(raw.substr(first));
  }
  return blocks;
}

std::optional<json> extract_structured_block(const std::string& raw) {
  for (const std::string& candidate : structured_block_candidates(raw)) {
    json parsed = json::parse(candidate, nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
  }
  return std::nullopt;
}

struct FieldError {
  ParseFailure failure;
};

int require_int(const json& obj, const std::string& field) {
  if (!obj.contains(field))
    throw FieldError{{ParseFailureReason::MissingField, "missing field '" + field + "'"}};
  const json& v = obj[field];
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d == std::floor(d)) return static_cast<int>(d);
    throw FieldError{{ParseFailureReason::OutOfRange,
                      "field '" + field + "' must be an integer, got " + v.dump()}};
  }
  throw FieldError{{ParseFailureReason::MissingField,
                    "field '" + field + "' must be an integer, got " + v.dump()}};
}

void check_range(const std::string& field, int value, int lo, int hi) {
  if (value < lo || value > hi) {
    std::ostringstream os;
    os << "field '" << field << "' = " << value << " outside [" << lo << ", " << hi << "]";
    throw FieldError{{ParseFailureReason::OutOfRange, os.str()}};
  }
}

}  // namespace

ParseResult parse_agent_response(const ItemSpec& item, const Transcript& t,
                                 const std::string& raw) {
  const std::optional<json> block = extract_structured_block(raw);
  if (!block)
    return ParseFailure{ParseFailureReason::NoStructuredBlock,
                        "no fenced JSON object found in the response"};
  const json& obj = *block;

  try {
    // Wrong-mode fields are diagnosed before absent right-mode fields.
    if (item.rating_mode == RatingMode::DualAxisGrid && obj.contains("severity"))
      throw FieldError{{ParseFailureReason::ModeMismatch,
                        "item " + std::to_string(item.item_id) +
                            " is a dual-axis item; 'severity' is not accepted"}};
    if (item.rating_mode == RatingMode::SeverityAnchor &&
        (obj.contains("frequency") || obj.contains("intensity")))
      throw FieldError{{ParseFailureReason::ModeMismatch,
                        "item " + std::to_string(item.item_id) +
                            " is a severity-anchor item; axis fields are not accepted"}};

    if (!obj.contains("evidence") || !obj["evidence"].is_array())
      throw FieldError{{ParseFailureReason::MissingField, "missing array field 'evidence'"}};
    if (!obj.contains("justification") || !obj["justification"].is_string() ||
        util::normalize_ws(obj["justification"].get<std::string>()).empty())
      throw FieldError{
          {ParseFailureReason::MissingField, "missing non-empty field 'justification'"}};

    ItemRating rating;
    rating.item_id = item.item_id;
    rating.justification = obj["justification"].get<std::string>();

    for (const json& cite : obj["evidence"]) {
      if (!cite.is_object() || !cite.contains("utterance_id") ||
          !cite["utterance_id"].is_string() || !cite.contains("quote") ||
          !cite["quote"].is_string() ||
          util::normalize_ws(cite["quote"].get<std::string>()).empty())
        throw FieldError{{ParseFailureReason::MissingField,
                          "evidence entries need string 'utterance_id' and non-empty 'quote'"}};
      EvidenceCitation citation{cite["utterance_id"].get<std::string>(),
                                cite["quote"].get<std::string>()};
      const Utterance* utterance = t.find_utterance(citation.utterance_id);
      if (utterance == nullptr)
        throw FieldError{{ParseFailureReason::UnknownUtteranceId,
                          "cited utterance '" + citation.utterance_id +
                              "' does not exist in the transcript"}};
      if (util::normalize_ws(utterance->text).find(util::normalize_ws(citation.quote)) ==
          std::string::npos)
        throw FieldError{{ParseFailureReason::QuoteMismatch,
                          "quote is not a span of utterance '" + citation.utterance_id + "'"}};
      rating.evidence.push_back(std::move(citation));
    }

    int computed = 0;
    if (item.rating_mode == RatingMode::DualAxisGrid) {
      DualAxisRating axes;
      axes.frequency = require_int(obj, "frequency");
      axes.intensity = require_int(obj, "intensity");
      check_range("frequency", axes.frequency, 0, kFrequencyLevels - 1);
      check_range("intensity", axes.intensity, 0, item.max_score);
      computed = grid_reconcile(item, axes);
      rating.dual_axis = axes;
    } else {
      const int severity = require_int(obj, "severity");
      check_range("severity", severity, 0, item.max_score);
      computed = severity;
      rating.severity = severity;
    }

    const int reported = require_int(obj, "score");
    rating.score = computed;
    rating.score_discrepancy = (reported != computed);

    if (rating.score > 0 && rating.evidence.empty())
      throw FieldError{{ParseFailureReason::MissingField,
                        "evidence required for nonzero score (" + std::to_string(rating.score) +
                            ")"}};
    return rating;
  } catch (const FieldError& e) {
    return e.failure;
  }
}

std::string request_tag(const std::string& interview_id, InstrumentId variant, int item_id,
                        int attempt) {
  std::string tag = interview_id + "/" + instrument_tag(variant) + "/" + std::to_string(item_id);
  if (attempt > 1) tag += "#retry" + std::to_string(attempt - 1);
  return tag;
}

namespace {

std::string repair_suffix(const ItemSpec& item, const ParseFailure& failure) {
  std::ostringstream os;
  os << "\n\n---\nYour previous response could not be accepted (reason: "
     << to_string(failure.reason) << ": " << failure.detail
     << "). Respond again with exactly one fenced code block containing a JSON object with "
        "these fields: "
     << response_fields_line(item) << ". Quotes must be verbatim spans of cited utterances.";
  return os.str();
}

}  // namespace

ItemRating rate_item(Backend& backend, const ItemSpec& item, const Transcript& t,
                     InstrumentId variant, const AgentOptions& opts) {
  if (opts.retry_budget < 0) throw AgentError("rate_item: retry_budget must be non-negative");
  const Prompt prompt = build_prompt(item, t, variant);

  ParseFailure last;
  const int total_attempts = opts.retry_budget + 1;
  for (int attempt = 1; attempt <= total_attempts; ++attempt) {
    CompletionRequest req;
    req.system_text = prompt.system_text;
    req.user_text =
        attempt == 1 ? prompt.user_text : prompt.user_text + repair_suffix(item, last);
    req.model_name = opts.model_name;
    req.temperature = opts.temperature;
    req.max_output_tokens = opts.max_output_tokens;
    req.request_tag = request_tag(t.interview_id, variant, item.item_id, attempt);

    const CompletionResponse response = backend.complete(req);
    ParseResult result = parse_agent_response(item, t, response.raw_text);
    if (auto* rating = std::get_if<ItemRating>(&result)) {
      rating->model_name = opts.model_name;
      rating->attempts_used = attempt;
      return *rating;
    }
    last = std::get<ParseFailure>(result);
  }
  throw ItemFailure(item.item_id, last,
                    "item " + std::to_string(item.item_id) + " failed after " +
                        std::to_string(total_attempts) + " attempt(s): " + to_string(last.reason) +
                        ": " + last.detail);
}

InterviewRating rate_interview(Backend& backend, const InstrumentSpec& instrument,
                               const Transcript& t, const AgentOptions& opts) {
  if (!t.roles_attributed())
    throw AgentError("rate_interview: transcript roles must be attributed first");
  const int cap = std::max(1, opts.parallelism_cap);

  const std::size_t item_count = instrument.items.size();
  std::vector<std::optional<ItemRating>> results(item_count);
  std::vector<std::string> errors(item_count);

  std::counting_semaphore<> gate(cap);
  std::vector<std::thread> workers;
  workers.reserve(item_count);
  for (std::size_t i = 0; i < item_count; ++i) {
    workers.emplace_back([&, i] {
      gate.acquire();
      try {
        results[i] = rate_item(backend, instrument.items[i], t, instrument.instrument_id, opts);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
      gate.release();
    });
  }
  for (auto& w : workers) w.join();

  std::map<int, std::string> failures;
  for (std::size_t i = 0; i < item_count; ++i) {
    if (!results[i]) failures[instrument.items[i].item_id] = errors[i];
  }

  if (!failures.empty() && !opts.allow_partial) {
    std::ostringstream os;
    os << "interview '" << t.interview_id << "' failed on item(s):";
    for (const auto& [item_id, unused] : failures) os << " " << item_id;
    throw InterviewFailure(failures, os.str());
  }

  InterviewRating rating;
  rating.interview_id = t.interview_id;
  rating.instrument_id = instrument.instrument_id;
  rating.dataset_tag = t.dataset_tag;
  rating.model_name = opts.model_name;
  rating.created_at = util::iso8601_utc_now();
  rating.pipeline_config_digest = compute_config_digest(instrument, opts.model_name);
  for (std::size_t i = 0; i < item_count; ++i) {
    if (results[i]) rating.item_ratings[instrument.items[i].item_id] = *results[i];
  }
  for (const auto& [item_id, unused] : failures) rating.missing_items.push_back(item_id);

  if (failures.empty()) {
    std::map<int, double> scores;
    for (const auto& [item_id, item_rating] : rating.item_ratings)
      scores[item_id] = item_rating.score;
    rating.total = total_score(instrument, scores);
  } else {
    for (const auto& [item_id, item_rating] : rating.item_ratings)
      rating.total += item_rating.score;
  }
  return rating;
}

std::string compute_config_digest(const InstrumentSpec& instrument,
                                  const std::string& model_name) {
  std::string canonical = std::string(kPromptTemplateVersion) + "\n";
  canonical += serialize_instrument(instrument);
  for (int f = 0; f < kFrequencyLevels; ++f) canonical += std::string(kFrequencyLabels[f]) + "\n";
  canonical += model_name;
  return util::fnv1a64_hex(canonical);
}

std::string serialize_interview_rating(const InterviewRating& rating) {
  json doc;
  doc["interview_id"] = rating.interview_id;
  doc["instrument"] = to_string(rating.instrument_id);
  doc["model"] = rating.model_name;
  if (rating.dataset_tag) doc["dataset"] = *rating.dataset_tag;
  doc["created_at"] = rating.created_at;
  doc["config_digest"] = rating.pipeline_config_digest;
  json items = json::array();
  for (const auto& [item_id, r] : rating.item_ratings) {
    json j;
    j["item_id"] = r.item_id;
    json evidence = json::array();
    for (const auto& cite : r.evidence)
      evidence.push_back({{"utterance_id", cite.utterance_id}, {"quote", cite.quote}});
    j["evidence"] = std::move(evidence);
    j["justification"] = r.justification;
    if (r.dual_axis) {
      j["frequency"] = r.dual_axis->frequency;
      j["intensity"] = r.dual_axis->intensity;
    }
    if (r.severity) j["severity"] = *r.severity;
    j["score"] = r.score;
    j["score_discrepancy"] = r.score_discrepancy;
    j["model_name"] = r.model_name;
    j["attempts_used"] = r.attempts_used;
    items.push_back(std::move(j));
  }
  doc["items"] = std::move(items);
  doc["missing_items"] = rating.missing_items;
  doc["total"] = rating.total;
  return doc.dump(2) + "\n";
}

InterviewRating parse_interview_rating(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw AgentError(std::string("malformed ratings document: ") + e.what());
  }
  InterviewRating rating;
  try {
    rating.interview_id = doc.at("interview_id").get<std::string>();
    rating.instrument_id = instrument_from_string(doc.at("instrument").get<std::string>());
    rating.model_name = doc.at("model").get<std::string>();
    if (doc.contains("dataset")) rating.dataset_tag = doc["dataset"].get<std::string>();
    rating.created_at = doc.value("created_at", "");
    rating.pipeline_config_digest = doc.at("config_digest").get<std::string>();
    for (const json& j : doc.at("items")) {
      ItemRating r;
      r.item_id = j.at("item_id").get<int>();
      for (const json& cite : j.at("evidence"))
        r.evidence.push_back({cite.at("utterance_id").get<std::string>(),
                              cite.at("quote").get<std::string>()});
      r.justification = j.at("justification").get<std::string>();
      if (j.contains("frequency"))
        r.dual_axis = DualAxisRating{j.at("frequency").get<int>(), j.at("intensity").get<int>()};
      if (j.contains("severity")) r.severity = j["severity"].get<int>();
      r.score = j.at("score").get<int>();
      r.score_discrepancy = j.value("score_discrepancy", false);
      r.model_name = j.value("model_name", rating.model_name);
      r.attempts_used = j.value("attempts_used", 1);
      rating.item_ratings[r.item_id] = std::move(r);
    }
    if (doc.contains("missing_items"))
      rating.missing_items = doc["missing_items"].get<std::vector<int>>();
    rating.total = doc.at("total").get<double>();
  } catch (const json::exception& e) {
    throw AgentError(std::string("malformed ratings document: ") + e.what());
  }
  return rating;
}

InterviewRating load_interview_rating_file(const std::string& path) {
  try {
    return parse_interview_rating(util::read_file(path));
  } catch (const AgentError& e) {
    throw AgentError(path + ": " + e.what());
  }
}

}  // namespace hamrater
