#include "hamrater/instruments.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "hamrater/util.hpp"

namespace hamrater {

using nlohmann::json;

const char* const kFrequencyLabels[kFrequencyLevels] = {
    "absent", "occasional", "much of the time", "almost all of the time"};

std::string to_string(InstrumentId id) {
  switch (id) {
    case InstrumentId::HAMD17S: return "HAMD17S";
    case InstrumentId::HAMD17S_EXT: return "HAMD17S_EXT";
    case InstrumentId::HAMA14S: return "HAMA14S";
  }
  return "HAMD17S";
}

InstrumentId instrument_from_string(const std::string& s) {
  const std::string u = util::to_lower(s);
  if (u == "hamd17s" || u == "hamd17*" || u == "hamd") return InstrumentId::HAMD17S;
  if (u == "hamd17s_ext" || u == "hamd17s-ext" || u == "hamd_ext") return InstrumentId::HAMD17S_EXT;
  if (u == "hama14s" || u == "hama14*" || u == "hama") return InstrumentId::HAMA14S;
  throw InstrumentError("unknown instrument id: '" + s + "'");
}

std::string instrument_tag(InstrumentId id) {
  switch (id) {
    case InstrumentId::HAMD17S: return "hamd";
    case InstrumentId::HAMD17S_EXT: return "hamd_ext";
    case InstrumentId::HAMA14S: return "hama";
  }
  return "hamd";
}

std::string to_string(RatingMode mode) {
  return mode == RatingMode::DualAxisGrid ? "dual_axis_grid" : "severity_anchor";
}

const ItemSpec* InstrumentSpec::find_item(int item_id) const {
  for (const auto& item : items) {
    if (item.item_id == item_id) return &item;
  }
  return nullptr;
}

std::vector<int> InstrumentSpec::active_item_ids() const {
  std::vector<int> ids;
  ids.reserve(items.size());
  for (const auto& item : items) ids.push_back(item.item_id);
  return ids;
}

namespace {

ItemSpec hamd_item(int id, std::string name, int max, std::vector<std::string> anchors) {
  ItemSpec item;
  item.item_id = id;
  item.name = std::move(name);
  item.max_score = max;
  item.rating_mode = RatingMode::DualAxisGrid;
  item.anchor_texts = std::move(anchors);
  return item;
}

std::vector<ItemSpec> hamd_roster() {
  std::vector<ItemSpec> items;
  items.push_back(hamd_item(1, "Depressed Mood", 4,
      {"Absent.",
       "Feelings of sadness or gloom indicated only on questioning.",
       "Sadness or hopelessness spontaneously reported verbally.",
       "Depressed mood communicated non-verbally through expression, posture, or tearfulness.",
       "Patient reports virtually only feelings of depression and hopelessness."}));
  items.push_back(hamd_item(2, "Guilt", 4,
      {"Absent.",
       "Self-reproach; feels they have let people down.",
       "Ideas of guilt or rumination over past errors or sinful deeds.",
       "Present illness experienced as a punishment; delusions of guilt.",
       "Hears accusatory or denunciatory voices or experiences threatening hallucinations."}));
  items.push_back(hamd_item(3, "Suicide", 4,
      {"Absent.",
       "Feels life is not worth living.",
       "Wishes to be dead or thoughts of possible death to self.",
       "Active suicidal ideas or gestures.",
       "Attempt at suicide."}));
  items.push_back(hamd_item(4, "Insomnia Early", 2,
      {"No difficulty falling asleep.",
       "Occasional difficulty falling asleep, taking more than half an hour.",
       "Nightly difficulty falling asleep."}));
  items.push_back(hamd_item(5, "Insomnia Middle", 2,
      {"No difficulty through the night.",
       "Restless and disturbed sleep during the night.",
       "Waking during the night and getting out of bed."}));
  items.push_back(hamd_item(6, "Insomnia Late", 2,
      {"No difficulty in the early hours.",
       "Waking in the early hours of the morning but falling back asleep.",
       "Unable to fall asleep again after waking early."}));
  items.push_back(hamd_item(7, "Work and Activities", 4,
      {"No difficulty.",
       "Thoughts and feelings of incapacity, fatigue, or weakness related to activities.",
       "Loss of interest in activities, hobbies, or work, reported directly or indirectly.",
       "Decrease in time spent in activities or a drop in productivity.",
       "Stopped working because of the present illness."}));
  items.push_back(hamd_item(10, "Anxiety Psychic", 4,
      {"No difficulty.",
       "Subjective tension and irritability.",
       "Worrying about minor matters.",
       "Apprehensive attitude apparent in speech.",
       "Fears expressed without questioning."}));
  items.push_back(hamd_item(11, "Anxiety Somatic", 4,
      {"Absent.",
       "Mild physiological concomitants of anxiety (dry mouth, indigestion, palpitations, sweating).",
       "Moderate physiological concomitants of anxiety.",
       "Severe physiological concomitants of anxiety.",
       "Incapacitating physiological concomitants of anxiety."}));
  items.push_back(hamd_item(12, "Somatic Gastrointestinal", 2,
      {"None.",
       "Loss of appetite but eating without encouragement; heavy feelings in the abdomen.",
       "Difficulty eating without urging; requires laxatives or gastrointestinal medication."}));
  items.push_back(hamd_item(13, "Somatic General", 2,
      {"None.",
       "Heaviness in limbs, back, or head; backaches, muscle aches; loss of energy and fatigability.",
       "Any clear-cut somatic symptom rated severe."}));
  items.push_back(hamd_item(14, "Genital Symptoms", 2,
      {"Absent.",
       "Mild loss of libido or menstrual disturbance.",
       "Severe loss of libido or menstrual disturbance."}));
  items.push_back(hamd_item(15, "Hypochondriasis", 4,
      {"Not present.",
       "Self-absorption in bodily concerns.",
       "Preoccupation with health.",
       "Frequent complaints, requests for help, or conviction of bodily illness.",
       "Hypochondriacal delusions."}));
  items.push_back(hamd_item(16, "Weight Loss", 2,
      {"No weight loss.",
       "Probable weight loss associated with the present illness.",
       "Definite weight loss according to the patient."}));
  items.push_back(hamd_item(17, "Insight", 2,
      {"Acknowledges being depressed and ill.",
       "Acknowledges illness but attributes cause to bad food, climate, overwork, or need for rest.",
       "Denies being ill at all."}));
  return items;
}

ItemSpec hama_item(int id, std::string name, const std::string& cluster) {
  ItemSpec item;
  item.item_id = id;
  item.name = std::move(name);
  item.max_score = 4;
  item.rating_mode = RatingMode::SeverityAnchor;
  item.anchor_texts = {
      "Not present.",
      "Mild - " + cluster + " present to a slight degree, occasional and not distressing.",
      "Moderate - " + cluster + " clearly present and distressing but manageable.",
      "Severe - " + cluster + " intense, frequent, and impairing daily function.",
      "Very severe - " + cluster + " grossly disabling."};
  return item;
}

std::vector<ItemSpec> hama_roster() {
  std::vector<ItemSpec> items;
  items.push_back(hama_item(1, "Anxious Mood",
      "worries, anticipation of the worst, fearful anticipation, or irritability"));
  items.push_back(hama_item(2, "Tension",
      "feelings of tension, fatigability, startle response, easy tearfulness, trembling, or inability to relax"));
  items.push_back(hama_item(3, "Fears",
      "fears of the dark, strangers, being left alone, animals, traffic, or crowds"));
  items.push_back(hama_item(4, "Insomnia",
      "difficulty falling asleep, broken or unsatisfying sleep, fatigue on waking, or nightmares"));
  items.push_back(hama_item(5, "Intellectual",
      "difficulty concentrating or poor memory"));
  items.push_back(hama_item(6, "Depressed Mood",
      "loss of interest, lack of pleasure in hobbies, depression, early waking, or diurnal swing"));
  items.push_back(hama_item(7, "Somatic (Muscular)",
      "muscular pains and aches, twitching, stiffness, jerks, grinding of teeth, or unsteady voice"));
  items.push_back(hama_item(8, "Somatic (Sensory)",
      "tinnitus, blurred vision, hot and cold flushes, feelings of weakness, or pricking sensations"));
  items.push_back(hama_item(9, "Cardiovascular",
      "tachycardia, palpitations, chest pain, throbbing of vessels, or fainting feelings"));
  items.push_back(hama_item(10, "Respiratory",
      "pressure or constriction in the chest, choking feelings, sighing, or shortness of breath"));
  items.push_back(hama_item(11, "Gastrointestinal",
      "difficulty swallowing, abdominal pain or fullness, burning, nausea, or bowel disturbance"));
  items.push_back(hama_item(12, "Genitourinary",
      "urinary frequency or urgency, menstrual disturbance, or loss of libido"));
  items.push_back(hama_item(13, "Autonomic",
      "dry mouth, flushing, pallor, tendency to sweat, giddiness, or tension headache"));
  return items;
}

}  // namespace

ConventionSet default_extended_conventions() {
  const std::string insomnia =
      "Rate only sleep disturbance attributable to the present condition, excluding insomnia "
      "caused by unambiguous external factors such as noise, shift work, or infant care.";
  return {
      {1, "Rate reported mood over the past week as a whole; discount transient reactions to "
          "single events unless they dominate the week."},
      {2, "Distinguish between realistic self-reproach and pathological guilt; rate only guilt "
          "disproportionate to circumstance."},
      {3, "Any endorsement of active ideation or a plan rates 3 or higher regardless of "
          "frequency; passive death wishes rate 2."},
      {4, insomnia},
      {5, insomnia},
      {6, insomnia},
      {7, "Rate loss of interest and reduced productivity; do not count reduced hours imposed "
          "by external scheduling alone."},
      {10, "Rate psychic anxiety from worry and subjective tension; do not double-count somatic "
           "complaints rated under the somatic anxiety item."},
      {11, "Rate physiological concomitants of anxiety only; exclude symptoms clearly explained "
           "by a medical condition or medication side effects."},
      {12, "Rate appetite and gastrointestinal complaints tied to mood; exclude deliberate "
           "dieting."},
      {13, "Rate diffuse heaviness, aches, and fatigability; a single clear-cut severe symptom "
           "rates the maximum."},
      {14, "Rate loss of libido or menstrual disturbance relative to the patient's usual "
           "baseline."},
      {15, "Rate preoccupation with bodily illness beyond what findings warrant; "
           "reassurance-seeking counts."},
      {16, "Rate weight loss associated with the present illness only; exclude intentional "
           "weight loss."},
      {17, "Rate denial of illness; attribution to physical causes such as overwork or a virus "
           "rates 1."},
  };
}

ConventionSet load_conventions_file(const std::string& path) {
  json doc;
  try {
    doc = json::parse(util::read_file(path));
  } catch (const json::exception& e) {
    throw InstrumentError(path + ": malformed conventions file: " + e.what());
  }
  if (!doc.is_object()) throw InstrumentError(path + ": conventions file must be a JSON object");
  ConventionSet out;
  for (const auto& [key, value] : doc.items()) {
    int id = 0;
    try {
      id = std::stoi(key);
    } catch (const std::exception&) {
      throw InstrumentError(path + ": convention key '" + key + "' is not an item id");
    }
    if (!value.is_string() || value.get<std::string>().empty())
      throw InstrumentError(path + ": convention for item " + key + " must be a non-empty string");
    out[id] = value.get<std::string>();
  }
  return out;
}

std::string serialize_conventions(const ConventionSet& conventions) {
  json doc = json::object();
  for (const auto& [id, text] : conventions) doc[std::to_string(id)] = text;
  return doc.dump(2) + "\n";
}

InstrumentSpec load_instrument(InstrumentId id, const std::optional<ConventionSet>& conventions) {
  InstrumentSpec spec;
  spec.instrument_id = id;
  if (id == InstrumentId::HAMA14S) {
    spec.items = hama_roster();
    spec.excluded_items = {{14, "Behavior at Interview requires direct observation"}};
  } else {
    spec.items = hamd_roster();
    spec.excluded_items = {{8, "Psychomotor Retardation requires direct observation"},
                           {9, "Psychomotor Agitation requires direct observation"}};
  }

  if (id == InstrumentId::HAMD17S_EXT) {
    if (!conventions || conventions->empty())
      throw InstrumentError("HAMD17S_EXT requires a non-empty convention set");
    for (const auto& [item_id, text] : *conventions) {
      ItemSpec* item = nullptr;
      for (auto& candidate : spec.items) {
        if (candidate.item_id == item_id) {
          item = &candidate;
          break;
        }
      }
      if (item == nullptr) {
        std::ostringstream os;
        os << "convention references item " << item_id << ", which is not an active HAM-D item";
        throw InstrumentError(os.str());
      }
      if (text.empty()) {
        std::ostringstream os;
        os << "convention for item " << item_id << " is empty";
        throw InstrumentError(os.str());
      }
      item->convention = text;
    }
  } else if (conventions && !conventions->empty()) {
    throw InstrumentError("conventions are only accepted for the HAMD17S_EXT variant");
  }
  return spec;
}

int grid_reconcile(const ItemSpec& item, const DualAxisRating& d) {
  if (item.rating_mode != RatingMode::DualAxisGrid)
    throw InstrumentError("grid_reconcile: item " + std::to_string(item.item_id) +
                          " is not a dual-axis item");
  if (d.frequency < 0 || d.frequency >= kFrequencyLevels)
    throw InstrumentError("grid_reconcile: frequency " + std::to_string(d.frequency) +
                          " out of bounds [0, 3]");
  if (d.intensity < 0 || d.intensity > item.max_score)
    throw InstrumentError("grid_reconcile: intensity " + std::to_string(d.intensity) +
                          " out of bounds [0, " + std::to_string(item.max_score) + "]");

  if (item.grid_override) {
    return (*item.grid_override)[static_cast<std::size_t>(d.frequency)]
                                [static_cast<std::size_t>(d.intensity)];
  }

  int score = 0;
  if (d.frequency == 0 || d.intensity == 0) {
    score = 0;
  } else if (d.frequency == 1) {
    score = std::max(1, d.intensity - 1);
  } else {
    score = d.intensity;
  }
  return std::clamp(score, 0, item.max_score);
}

double total_score(const InstrumentSpec& instrument, const std::map<int, double>& item_scores) {
  for (const auto& [item_id, score] : item_scores) {
    const ItemSpec* item = instrument.find_item(item_id);
    if (item == nullptr)
      throw InstrumentError("total_score: item " + std::to_string(item_id) +
                            " is not in the active set of " + to_string(instrument.instrument_id));
    if (score < 0.0 || score > item->max_score) {
      std::ostringstream os;
      os << "total_score: item " << item_id << " score " << score << " outside [0, "
         << item->max_score << "]";
      throw InstrumentError(os.str());
    }
  }
  double total = 0.0;
  for (const auto& item : instrument.items) {
    auto it = item_scores.find(item.item_id);
    if (it == item_scores.end())
      throw InstrumentError("total_score: missing score for item " + std::to_string(item.item_id));
    total += it->second;
  }
  return total;
}

bool validate_score(const ItemSpec& item, int score) {
  return score >= 0 && score <= item.max_score;
}

std::string serialize_instrument(const InstrumentSpec& spec) {
  json doc;
  doc["instrument"] = to_string(spec.instrument_id);
  json items = json::array();
  for (const auto& item : spec.items) {
    json j = {{"id", item.item_id},
              {"name", item.name},
              {"max", item.max_score},
              {"mode", to_string(item.rating_mode)},
              {"anchors", item.anchor_texts}};
    if (item.convention) j["convention"] = *item.convention;
    if (item.grid_override) j["grid"] = *item.grid_override;
    items.push_back(std::move(j));
  }
  doc["items"] = std::move(items);
  json excluded = json::array();
  for (const auto& e : spec.excluded_items)
    excluded.push_back({{"id", e.item_id}, {"reason", e.reason}});
  doc["excluded"] = std::move(excluded);
  return doc.dump(2) + "\n";
}

InstrumentSpec parse_instrument(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw InstrumentError(std::string("malformed instrument roster: ") + e.what());
  }
  InstrumentSpec spec;
  try {
    spec.instrument_id = instrument_from_string(doc.at("instrument").get<std::string>());
    for (const json& j : doc.at("items")) {
      ItemSpec item;
      item.item_id = j.at("id").get<int>();
      item.name = j.at("name").get<std::string>();
      item.max_score = j.at("max").get<int>();
      const std::string mode = j.at("mode").get<std::string>();
      if (mode == "dual_axis_grid") {
        item.rating_mode = RatingMode::DualAxisGrid;
      } else if (mode == "severity_anchor") {
        item.rating_mode = RatingMode::SeverityAnchor;
      } else {
        throw InstrumentError("unknown rating mode: '" + mode + "'");
      }
      item.anchor_texts = j.at("anchors").get<std::vector<std::string>>();
      if (static_cast<int>(item.anchor_texts.size()) != item.max_score + 1) {
        std::ostringstream os;
        os << "item " << item.item_id << " has " << item.anchor_texts.size()
           << " anchors; expected " << item.max_score + 1;
        throw InstrumentError(os.str());
      }
      if (j.contains("convention")) item.convention = j["convention"].get<std::string>();
      if (j.contains("grid")) {
        auto grid = j["grid"].get<std::vector<std::vector<int>>>();
        if (static_cast<int>(grid.size()) != kFrequencyLevels)
          throw InstrumentError("grid override must have one row per frequency level");
        for (const auto& row : grid) {
          if (static_cast<int>(row.size()) != item.max_score + 1)
            throw InstrumentError("grid override rows must cover intensities 0..max");
          for (int cell : row) {
            if (cell < 0 || cell > item.max_score)
              throw InstrumentError("grid override cell out of score range");
          }
        }
        item.grid_override = std::move(grid);
      }
      spec.items.push_back(std::move(item));
    }
    for (const json& j : doc.at("excluded"))
      spec.excluded_items.push_back({j.at("id").get<int>(), j.at("reason").get<std::string>()});
  } catch (const json::exception& e) {
    throw InstrumentError(std::string("malformed instrument roster: ") + e.what());
  }
  return spec;
}

}  // namespace hamrater
