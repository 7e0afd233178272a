#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hamrater {

enum class InstrumentId { HAMD17S, HAMD17S_EXT, HAMA14S };
enum class RatingMode { DualAxisGrid, SeverityAnchor };

std::string to_string(InstrumentId id);
InstrumentId instrument_from_string(const std::string& s);
// Short token used in backend request tags: hamd / hamd_ext / hama.
std::string instrument_tag(InstrumentId id);
std::string to_string(RatingMode mode);

class InstrumentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Frequency axis of the dual-axis (grid) structure, levels 0..3.
inline constexpr int kFrequencyLevels = 4;
extern const char* const kFrequencyLabels[kFrequencyLevels];

struct DualAxisRating {
  int frequency = 0;  // 0 absent .. 3 almost all of the time
  int intensity = 0;  // 0 .. item max_score

  bool operator==(const DualAxisRating&) const = default;
};

struct ItemSpec {
  int item_id = 0;  // instrument-local id
  std::string name;
  int max_score = 4;  // 2 or 4
  RatingMode rating_mode = RatingMode::SeverityAnchor;
  std::vector<std::string> anchor_texts;  // one per score level 0..max_score
  std::optional<std::string> convention;  // Extended-variant guidance
  // Site-supplied reconciliation table [frequency 0..3][intensity 0..max_score];
  // when absent the built-in gate-and-discount rule applies.
  std::optional<std::vector<std::vector<int>>> grid_override;

  bool operator==(const ItemSpec&) const = default;
};

struct ExcludedItem {
  int item_id = 0;
  std::string reason;

  bool operator==(const ExcludedItem&) const = default;
};

struct InstrumentSpec {
  InstrumentId instrument_id = InstrumentId::HAMD17S;
  std::vector<ItemSpec> items;  // active item set, ordered by item_id
  std::vector<ExcludedItem> excluded_items;

  bool operator==(const InstrumentSpec&) const = default;

  const ItemSpec* find_item(int item_id) const;
  std::vector<int> active_item_ids() const;
};

// item_id -> convention text for the Extended variant.
using ConventionSet = std::map<int, std::string>;

// Fixed rosters: HAM-D 17* = items 1-7 and 10-17 (8 and 9 excluded as
// observational); HAM-A 14* = items 1-13 (14 excluded as observational).
// The Extended HAM-D variant requires a non-empty ConventionSet whose keys
// all name active items; conventions attach to their matching items.
InstrumentSpec load_instrument(InstrumentId id,
                               const std::optional<ConventionSet>& conventions = std::nullopt);

// Built-in default conventions for the Extended variant; mirrors
// data/conventions/hamd_extended_default.json.
ConventionSet default_extended_conventions();
ConventionSet load_conventions_file(const std::string& path);
std::string serialize_conventions(const ConventionSet& conventions);

// Reconcile a dual-axis rating to one integer. Default rule: 0 when either
// axis is 0; frequency 1 discounts intensity by one (floor 1); frequency >= 2
// scores at intensity; clamped to [0, max_score]. A grid_override on the item
// replaces the rule cell-for-cell.
int grid_reconcile(const ItemSpec& item, const DualAxisRating& d);

// Arithmetic sum over exactly the active item set; fractional scores are
// legal (median ground truth can produce halves).
double total_score(const InstrumentSpec& instrument, const std::map<int, double>& item_scores);

// True iff 0 <= score <= item.max_score.
bool validate_score(const ItemSpec& item, int score);

// Roster data-file format:
//   { "instrument": str, "items": [ {id, name, max, mode, anchors[], convention?, grid?} ],
//     "excluded": [ {id, reason} ] }
std::string serialize_instrument(const InstrumentSpec& spec);
InstrumentSpec parse_instrument(const std::string& json_text);

}  // namespace hamrater
