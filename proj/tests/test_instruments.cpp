#include <doctest.h>

#include <map>

#include "hamrater/instruments.hpp"
#include "hamrater/util.hpp"
#include "oracles.hpp"

using namespace hamrater;

TEST_CASE("HAMD17S roster: 15 items, items 8 and 9 excluded") {
  const InstrumentSpec spec = load_instrument(InstrumentId::HAMD17S);
  CHECK(spec.items.size() == 15);
  REQUIRE(spec.excluded_items.size() == 2);
  CHECK(spec.excluded_items[0].item_id == 8);
  CHECK(spec.excluded_items[1].item_id == 9);
  CHECK(spec.find_item(8) == nullptr);
  CHECK(spec.find_item(9) == nullptr);
  for (const auto& item : spec.items) {
    CHECK(item.rating_mode == RatingMode::DualAxisGrid);
    CHECK((item.max_score == 2 || item.max_score == 4));
    CHECK(item.anchor_texts.size() == static_cast<std::size_t>(item.max_score + 1));
    CHECK_FALSE(item.convention.has_value());
  }
}

TEST_CASE("HAMA14S roster: 13 items, item 14 excluded, all severity-anchored 0-4") {
  const InstrumentSpec spec = load_instrument(InstrumentId::HAMA14S);
  CHECK(spec.items.size() == 13);
  REQUIRE(spec.excluded_items.size() == 1);
  CHECK(spec.excluded_items[0].item_id == 14);
  for (const auto& item : spec.items) {
    CHECK(item.rating_mode == RatingMode::SeverityAnchor);
    CHECK(item.max_score == 4);
    CHECK(item.anchor_texts.size() == 5);
  }
}

TEST_CASE("instrument rosters are byte-stable across loads") {
  CHECK(serialize_instrument(load_instrument(InstrumentId::HAMD17S)) ==
        serialize_instrument(load_instrument(InstrumentId::HAMD17S)));
  CHECK(load_instrument(InstrumentId::HAMA14S) == load_instrument(InstrumentId::HAMA14S));
}

TEST_CASE("roster serialization round-trips") {
  for (InstrumentId id : {InstrumentId::HAMD17S, InstrumentId::HAMA14S}) {
    const InstrumentSpec spec = load_instrument(id);
    CHECK(parse_instrument(serialize_instrument(spec)) == spec);
  }
}

TEST_CASE("extended variant attaches conventions to matching items") {
  const ConventionSet conventions = default_extended_conventions();
  const InstrumentSpec spec = load_instrument(InstrumentId::HAMD17S_EXT, conventions);
  for (const auto& item : spec.items) {
    REQUIRE(item.convention.has_value());
    CHECK_FALSE(item.convention->empty());
  }
  CHECK(spec.find_item(4)->convention->find(
            "excluding insomnia caused by unambiguous external factors") != std::string::npos);
  CHECK(spec.find_item(2)->convention->find(
            "realistic self-reproach and pathological guilt") != std::string::npos);
}

TEST_CASE("extended variant validates its conventions") {
  CHECK_THROWS_WITH_AS(load_instrument(InstrumentId::HAMD17S_EXT),
                       doctest::Contains("non-empty convention set"), InstrumentError);
  ConventionSet excluded_item{{8, "psychomotor guidance"}};
  CHECK_THROWS_WITH_AS(load_instrument(InstrumentId::HAMD17S_EXT, excluded_item),
                       doctest::Contains("not an active HAM-D item"), InstrumentError);
  ConventionSet partial{{4, "sleep guidance"}};
  const InstrumentSpec spec = load_instrument(InstrumentId::HAMD17S_EXT, partial);
  CHECK(spec.find_item(4)->convention == "sleep guidance");
  CHECK_FALSE(spec.find_item(1)->convention.has_value());
}

TEST_CASE("grid_reconcile matches the literal decision tables") {
  const InstrumentSpec spec = load_instrument(InstrumentId::HAMD17S);
  for (const auto& item : spec.items) {
    for (int f = 0; f < kFrequencyLevels; ++f) {
      for (int i = 0; i <= item.max_score; ++i) {
        const int expected = item.max_score == 4 ? oracle::kGridTableMax4[f][i]
                                                 : oracle::kGridTableMax2[f][i];
        CHECK(grid_reconcile(item, {f, i}) == expected);
      }
    }
  }
}

TEST_CASE("grid_reconcile named examples") {
  const InstrumentSpec spec = load_instrument(InstrumentId::HAMD17S);
  const ItemSpec& max4 = *spec.find_item(1);
  CHECK(grid_reconcile(max4, {0, 3}) == 0);  // absent symptom scores zero
  CHECK(grid_reconcile(max4, {3, 2}) == 2);  // persistent symptom scores at intensity
  CHECK(grid_reconcile(max4, {1, 4}) == 3);  // occasional discounts by one
}

TEST_CASE("grid_reconcile is monotone and gated on zero axes") {
  const InstrumentSpec spec = load_instrument(InstrumentId::HAMD17S);
  for (const auto& item : spec.items) {
    for (int f = 0; f < kFrequencyLevels; ++f) CHECK(grid_reconcile(item, {f, 0}) == 0);
    for (int i = 0; i <= item.max_score; ++i) CHECK(grid_reconcile(item, {0, i}) == 0);
    for (int f = 0; f < kFrequencyLevels; ++f) {
      for (int i = 0; i <= item.max_score; ++i) {
        if (f + 1 < kFrequencyLevels)
          CHECK(grid_reconcile(item, {f + 1, i}) >= grid_reconcile(item, {f, i}));
        if (i + 1 <= item.max_score)
          CHECK(grid_reconcile(item, {f, i + 1}) >= grid_reconcile(item, {f, i}));
      }
    }
  }
}

TEST_CASE("grid_reconcile rejects out-of-bounds axes and honors overrides") {
  const InstrumentSpec spec = load_instrument(InstrumentId::HAMD17S);
  ItemSpec item = *spec.find_item(1);
  CHECK_THROWS_AS(grid_reconcile(item, {4, 1}), InstrumentError);
  CHECK_THROWS_AS(grid_reconcile(item, {-1, 1}), InstrumentError);
  CHECK_THROWS_AS(grid_reconcile(item, {1, 5}), InstrumentError);

  item.grid_override = std::vector<std::vector<int>>{
      {0, 0, 0, 0, 0}, {0, 1, 2, 2, 3}, {0, 2, 3, 3, 4}, {0, 2, 3, 4, 4}};
  CHECK(grid_reconcile(item, {1, 2}) == 2);
  CHECK(grid_reconcile(item, {3, 1}) == 2);
}

TEST_CASE("total_score maxima match the instrument bounds") {
  const InstrumentSpec hamd = load_instrument(InstrumentId::HAMD17S);
  std::map<int, double> zero, maxed;
  for (const auto& item : hamd.items) {
    zero[item.item_id] = 0.0;
    maxed[item.item_id] = item.max_score;
  }
  CHECK(total_score(hamd, zero) == 0.0);
  CHECK(total_score(hamd, maxed) == 44.0);
  // Restoring the two excluded 0-4 observational items reaches the full-scale
  // 0-52 bound.
  CHECK(44.0 + 4.0 + 4.0 == 52.0);

  const InstrumentSpec hama = load_instrument(InstrumentId::HAMA14S);
  std::map<int, double> hama_max;
  for (const auto& item : hama.items) hama_max[item.item_id] = item.max_score;
  CHECK(total_score(hama, hama_max) == 52.0);
}

TEST_CASE("total_score validates coverage and ranges") {
  const InstrumentSpec hamd = load_instrument(InstrumentId::HAMD17S);
  std::map<int, double> scores;
  for (const auto& item : hamd.items) scores[item.item_id] = 1.0;

  auto missing = scores;
  missing.erase(3);
  CHECK_THROWS_WITH_AS(total_score(hamd, missing), doctest::Contains("missing score"),
                       InstrumentError);
  auto extra = scores;
  extra[8] = 1.0;
  CHECK_THROWS_WITH_AS(total_score(hamd, extra), doctest::Contains("not in the active set"),
                       InstrumentError);
  auto out_of_range = scores;
  out_of_range[4] = 3.0;  // item 4 is 0-2
  CHECK_THROWS_WITH_AS(total_score(hamd, out_of_range), doctest::Contains("outside"),
                       InstrumentError);
  // Fractional medians are legal: 14 items at 1 plus one at 2.5.
  scores[1] = 2.5;
  CHECK(total_score(hamd, scores) == doctest::Approx(16.5));
}

TEST_CASE("validate_score verdicts") {
  ItemSpec max4;
  max4.max_score = 4;
  ItemSpec max2;
  max2.max_score = 2;
  CHECK(validate_score(max4, 4));
  CHECK(validate_score(max4, 0));
  CHECK_FALSE(validate_score(max2, 3));
  CHECK_FALSE(validate_score(max4, -1));
}

TEST_CASE("shipped data files mirror the built-in defaults") {
  const std::string root = HAMRATER_SOURCE_DIR;
  CHECK(parse_instrument(hamrater::util::read_file(root + "/data/instruments/hamd17s.json")) ==
        load_instrument(InstrumentId::HAMD17S));
  CHECK(parse_instrument(hamrater::util::read_file(root + "/data/instruments/hama14s.json")) ==
        load_instrument(InstrumentId::HAMA14S));
  CHECK(load_conventions_file(root + "/data/conventions/hamd_extended_default.json") ==
        default_extended_conventions());
}

TEST_CASE("instrument id strings round-trip") {
  for (InstrumentId id :
       {InstrumentId::HAMD17S, InstrumentId::HAMD17S_EXT, InstrumentId::HAMA14S}) {
    CHECK(instrument_from_string(to_string(id)) == id);
  }
  CHECK_THROWS_AS(instrument_from_string("MADRS"), InstrumentError);
}
