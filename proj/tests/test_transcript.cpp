#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "hamrater/transcript.hpp"

using namespace hamrater;

namespace {

std::string doc_with(const std::string& utterances) {
  return R"({"interview_id": "int01", "dataset": "demo", "utterances": [)" + utterances + "]}";
}

std::string utt(const std::string& id, const std::string& speaker, double start, double end,
                const std::string& text) {
  std::ostringstream os;
  os << R"({"id": ")" << id << R"(", "speaker": ")" << speaker << R"(", "start": )" << start
     << R"(, "end": )" << end << R"(, "text": ")" << text << R"("})";
  return os.str();
}

Transcript two_speaker_transcript() {
  return parse_transcript(doc_with(
      utt("u0", "S0", 0.0, 3.1, "How has your mood been over the past week?") + "," +
      utt("u1", "S1", 3.2, 7.0, "Pretty flat, honestly. I have not wanted to do much.") + "," +
      utt("u2", "S0", 7.1, 9.0, "Have you had trouble falling asleep?") + "," +
      utt("u3", "S1", 9.1, 14.0, "Yes, it takes me hours some nights.")));
}

}  // namespace

TEST_CASE("parse_transcript accepts a well-formed minimal document") {
  const Transcript t = parse_transcript(
      doc_with(utt("a", "S0", 0.0, 3.1, "Hello there.") + "," +
               utt("b", "S1", 3.2, 7.0, "Hi.")));
  CHECK(t.interview_id == "int01");
  CHECK(t.dataset_tag == "demo");
  REQUIRE(t.utterances.size() == 2);
  CHECK(t.utterances[0].utterance_id == "a");
  CHECK(t.utterances[1].utterance_id == "b");
  CHECK(t.role_map.size() == 2);
  CHECK_FALSE(t.roles_attributed());
}

TEST_CASE("parse_transcript rejects structural problems with locations") {
  CHECK_THROWS_WITH_AS(
      parse_transcript(doc_with(utt("a", "S0", 3.0, 1.0, "Backwards."))),
      doctest::Contains("end timestamp precedes start"), TranscriptError);
  CHECK_THROWS_WITH_AS(
      parse_transcript(doc_with(utt("a", "S0", 0.0, 1.0, "One.") + "," +
                                utt("a", "S0", 1.0, 2.0, "Two."))),
      doctest::Contains("duplicate utterance id"), TranscriptError);
  CHECK_THROWS_WITH_AS(parse_transcript(doc_with(utt("a", "S0", -1.0, 1.0, "Negative."))),
                       doctest::Contains("negative start"), TranscriptError);
  CHECK_THROWS_WITH_AS(parse_transcript(doc_with(utt("a", "S0", 0.0, 1.0, "  "))),
                       doctest::Contains("text is empty"), TranscriptError);
  CHECK_THROWS_WITH_AS(parse_transcript(R"({"interview_id": "x", "utterances": []})"),
                       doctest::Contains("utterance list is empty"), TranscriptError);
  CHECK_THROWS_AS(parse_transcript("not json at all"), TranscriptError);
}

TEST_CASE("out-of-order utterances are stably re-sorted by start time") {
  const Transcript t = parse_transcript(
      doc_with(utt("late", "S0", 5.0, 6.0, "Later.") + "," +
               utt("early", "S1", 1.0, 2.0, "Earlier.") + "," +
               utt("tied", "S0", 5.0, 5.5, "Tied with late.")));
  REQUIRE(t.utterances.size() == 3);
  CHECK(t.utterances[0].utterance_id == "early");
  CHECK(t.utterances[1].utterance_id == "late");   // stable: original order kept on ties
  CHECK(t.utterances[2].utterance_id == "tied");
  CHECK(std::is_sorted(t.utterances.begin(), t.utterances.end(),
                       [](const Utterance& a, const Utterance& b) { return a.start_s < b.start_s; }));
}

TEST_CASE("parse -> serialize -> parse is identity") {
  const Transcript t = two_speaker_transcript();
  const Transcript reparsed = parse_transcript(serialize_transcript(t));
  CHECK(t == reparsed);
}

TEST_CASE("attribute_roles assigns the interrogative speaker as clinician") {
  const Transcript t = attribute_roles(two_speaker_transcript(), default_probe_lexicon());
  CHECK(t.role_of("S0") == SpeakerRole::Clinician);
  CHECK(t.role_of("S1") == SpeakerRole::Patient);
  CHECK_FALSE(t.attribution_tie_break);
  // Everything except role state is untouched.
  CHECK(t.utterances == two_speaker_transcript().utterances);
}

TEST_CASE("attribute_roles is stable under raw label permutation") {
  Transcript swapped = two_speaker_transcript();
  for (auto& u : swapped.utterances) u.speaker = (u.speaker == "S0") ? "S1" : "S0";
  swapped.role_map.clear();
  for (const auto& u : swapped.utterances) swapped.role_map.emplace(u.speaker, SpeakerRole::Unknown);

  const Transcript attributed = attribute_roles(swapped, default_probe_lexicon());
  // The same underlying utterances get the same roles, whatever the labels.
  CHECK(attributed.role_of("S1") == SpeakerRole::Clinician);
  CHECK(attributed.role_of("S0") == SpeakerRole::Patient);
}

TEST_CASE("attribute_roles tie resolves to the chronologically first speaker") {
  const Transcript t = parse_transcript(
      doc_with(utt("a", "S1", 0.0, 1.0, "Statement one.") + "," +
               utt("b", "S0", 1.0, 2.0, "Statement two.") + "," +
               utt("c", "S1", 2.0, 3.0, "Statement three.") + "," +
               utt("d", "S0", 3.0, 4.0, "Statement four.")));
  const Transcript attributed = attribute_roles(t, default_probe_lexicon());
  CHECK(attributed.attribution_tie_break);
  CHECK(attributed.role_of("S1") == SpeakerRole::Clinician);
  CHECK(attributed.role_of("S0") == SpeakerRole::Patient);
}

TEST_CASE("attribute_roles requires exactly two speakers and window >= 1") {
  const Transcript three = parse_transcript(
      doc_with(utt("a", "S0", 0.0, 1.0, "One?") + "," + utt("b", "S1", 1.0, 2.0, "Two.") + "," +
               utt("c", "S2", 2.0, 3.0, "Three.")));
  CHECK_THROWS_WITH_AS(attribute_roles(three, {}), doctest::Contains("exactly two"),
                       TranscriptError);
  CHECK_THROWS_AS(attribute_roles(two_speaker_transcript(), {}, 0), TranscriptError);
}

TEST_CASE("interrogative scoring counts openers and probe phrases") {
  // S0 never uses '?' but opens with interrogative words; S1 is narrative.
  const Transcript t = parse_transcript(
      doc_with(utt("a", "S0", 0.0, 1.0, "Have you been sleeping well.") + "," +
               utt("b", "S1", 1.0, 2.0, "Not really, to be honest.") + "," +
               utt("c", "S0", 2.0, 3.0, "Do you feel rested in the morning.") + "," +
               utt("d", "S1", 3.0, 4.0, "I feel tired all day.")));
  const Transcript attributed = attribute_roles(t, default_probe_lexicon());
  CHECK(attributed.role_of("S0") == SpeakerRole::Clinician);
}

TEST_CASE("render_for_prompt covers every utterance deterministically") {
  const Transcript t = attribute_roles(two_speaker_transcript(), default_probe_lexicon());
  const std::string rendered = render_for_prompt(t);
  CHECK(rendered == render_for_prompt(t));  // byte-identical

  std::size_t lines = 0;
  std::istringstream stream(rendered);
  std::string line;
  std::vector<std::string> seen;
  while (std::getline(stream, line)) {
    ++lines;
    seen.push_back(line);
  }
  CHECK(lines == t.utterances.size());
  for (std::size_t i = 0; i < t.utterances.size(); ++i) {
    CHECK(seen[i].find("[" + t.utterances[i].utterance_id + "]") == 0);
    CHECK(seen[i].find(t.utterances[i].text) != std::string::npos);
  }
  CHECK(rendered.find("CLINICIAN") != std::string::npos);
  CHECK(rendered.find("PATIENT") != std::string::npos);
}

TEST_CASE("render_for_prompt refuses unresolved roles") {
  CHECK_THROWS_WITH_AS(render_for_prompt(two_speaker_transcript()),
                       doctest::Contains("unresolved"), TranscriptError);
}

TEST_CASE("shipped probe lexicon mirrors the built-in list") {
  const std::string root = HAMRATER_SOURCE_DIR;
  CHECK(load_probe_lexicon_file(root + "/data/probe_lexicon.json") == default_probe_lexicon());
}
