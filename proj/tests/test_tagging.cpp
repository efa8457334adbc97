// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include <doctest.h>

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbrsql/services.hpp"
#include "cbrsql/tagging.hpp"
#include "cbrsql/util.hpp"

using namespace cbrsql;
using nlohmann::json;

namespace {

Gazetteer sample_gazetteer() {
  Gazetteer g;
  g.add("aspirin", "DRUG");
  g.add("coronary artery disease", "CONDITION");
  g.add("coronary artery disease/coronary artery bypass graft", "CONDITION");
  g.add("artery", "PROCEDURE");  // substring of the longer terms
  g.add("glucose", "MEASUREMENT");
  g.add("glucose, csf", "MEASUREMENT");
  return g;
}

}  // namespace

TEST_CASE("mask_question: replaces spans with numbered tags and unmasks back") {
  std::string q = "patients with sepsis who take aspirin and warfarin";
  std::vector<EntitySpan> spans = {
      {"sepsis", 14, 20, "CONDITION"},
      {"aspirin", 30, 37, "DRUG"},
      {"warfarin", 42, 50, "DRUG"},
  };
  MaskedQuestion masked = mask_question(q, spans);
  CHECK(masked.masked_text ==
        "patients with [CONDITION#1] who take [DRUG#1] and [DRUG#2]");
  REQUIRE(masked.spans.size() == 3);
  CHECK(masked.unmask() == q);
}

TEST_CASE("mask_question: rejects malformed span lists") {
  std::string q = "patients on aspirin";
  CHECK_THROWS_AS(mask_question(q, {{"aspirin", 12, 25, "DRUG"}}),
                  std::invalid_argument);  // end out of bounds
  CHECK_THROWS_AS(mask_question(q, {{"aspirin", 12, 12, "DRUG"}}),
                  std::invalid_argument);  // empty span
  CHECK_THROWS_AS(mask_question(q, {{"tylenol", 12, 19, "DRUG"}}),
                  std::invalid_argument);  // text mismatch
  CHECK_THROWS_AS(mask_question(q, {{"aspirin", 12, 19, "drug"}}),
                  std::invalid_argument);  // bad tag
  CHECK_THROWS_AS(mask_question(q, {{"on aspirin", 9, 19, "DRUG"},
                                    {"aspirin", 12, 19, "DRUG"}}),
                  std::invalid_argument);  // overlap
}

TEST_CASE("resolve_overlaps: keeps longer spans, earlier on ties") {
  std::vector<EntitySpan> spans = {
      {"aspirin", 12, 19, "DRUG"},
      {"on aspirin", 9, 19, "DRUG"},    // longer, overlapping -> wins
      {"sepsis", 25, 31, "CONDITION"},  // disjoint -> kept
  };
  auto out = resolve_overlaps(spans);
  REQUIRE(out.size() == 2);
  CHECK(out[0].text == "on aspirin");
  CHECK(out[1].text == "sepsis");

  // Equal length, same start: the earlier (stable) entry wins.
  std::vector<EntitySpan> tie = {{"abcd", 0, 4, "DRUG"}, {"abcd", 0, 4, "CONDITION"}};
  auto kept = resolve_overlaps(tie);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].category == "DRUG");

  // Output is sorted by start even when input is not.
  std::vector<EntitySpan> shuffled = {{"b", 5, 6, "DRUG"}, {"a", 0, 1, "DRUG"}};
  auto sorted = resolve_overlaps(shuffled);
  CHECK(sorted[0].start == 0);
  CHECK(sorted[1].start == 5);
}

TEST_CASE("gazetteer: longest match wins at word boundaries, case-insensitive") {
  Gazetteer g = sample_gazetteer();

  auto spans = g.tag("history of CORONARY ARTERY DISEASE today");
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].category == "CONDITION");
  CHECK(spans[0].text == "CORONARY ARTERY DISEASE");  // original casing kept
  CHECK(spans[0].start == 11);
  CHECK(spans[0].end == 34);

  // The even longer slash term is preferred when present.
  auto longer = g.tag("coronary artery disease/coronary artery bypass graft repair");
  REQUIRE(longer.size() == 1);
  CHECK(longer[0].text == "coronary artery disease/coronary artery bypass graft");

  // Word boundaries: "aspiring" must not match "aspirin".
  CHECK(g.tag("aspiring nurses").empty());
  CHECK(g.tag("the aspirin dose").size() == 1);

  // A term may not start mid-word.
  CHECK(g.tag("pasaspirin").empty());

  // Multiple disjoint matches, in question order.
  auto multi = g.tag("glucose, csf and aspirin levels");
  REQUIRE(multi.size() == 2);
  CHECK(multi[0].text == "glucose, csf");
  CHECK(multi[0].category == "MEASUREMENT");
  CHECK(multi[1].text == "aspirin");

  CHECK(g.size() == 6);
}

TEST_CASE("gazetteer: TSV parsing skips comments and validates entries") {
  Gazetteer g = Gazetteer::from_text(
      "# comment line\n"
      "aspirin\tDRUG\r\n"
      "\n"
      "glucose, csf\tMEASUREMENT\n");
  CHECK(g.size() == 2);
  CHECK(g.tag("took Aspirin").size() == 1);

  CHECK_THROWS_AS(Gazetteer::from_text("no-tab-here\n"), IoError);
  CHECK_THROWS_AS(Gazetteer::from_text("term\tlowercase\n"), IoError);
  CHECK_THROWS_AS(Gazetteer::from_text("\tDRUG\n"), IoError);
  CHECK_THROWS_AS(Gazetteer().add("!!!", "DRUG"), ConfigError);
  CHECK_THROWS_AS(Gazetteer().add("term", "bad tag"), ConfigError);
}

TEST_CASE("gazetteer tagger: spans feed mask_question directly") {
  GazetteerTagger tagger(sample_gazetteer());
  std::string q = "does the patient with coronary artery disease take aspirin";
  auto spans = tagger.tag(q);
  REQUIRE(spans.size() == 2);
  MaskedQuestion masked = mask_question(q, spans);
  CHECK(masked.masked_text == "does the patient with [CONDITION#1] take [DRUG#1]");
  CHECK(masked.unmask() == q);
}

TEST_CASE("llm tagger: accepts good spans and re-anchors bad offsets") {
  StubChatClient chat([](const std::string& question) {
    json spans = json::array();
    // Correct span.
    spans.push_back({{"text", "aspirin"},
                     {"start", question.find("aspirin")},
                     {"end", question.find("aspirin") + 7},
                     {"category", "DRUG"}});
    // Wrong offsets -> must be re-anchored to the first occurrence.
    spans.push_back({{"text", "sepsis"}, {"start", 3}, {"end", 9}, {"category", "CONDITION"}});
    // Wrong case -> re-anchored case-insensitively, text rewritten from the question.
    spans.push_back({{"text", "WARFARIN"}, {"start", -1}, {"end", -1}, {"category", "DRUG"}});
    // Not in the question at all -> dropped.
    spans.push_back({{"text", "tylenol"}, {"start", 0}, {"end", 7}, {"category", "DRUG"}});
    // Invalid category -> dropped.
    spans.push_back({{"text", "aspirin"}, {"start", 0}, {"end", 7}, {"category", "x"}});
    return spans;
  });
  LlmTagger tagger(chat);
  std::string q = "sepsis patients on aspirin or warfarin";
  auto spans = tagger.tag(q);
  REQUIRE(spans.size() == 3);
  CHECK(spans[0].text == "sepsis");
  CHECK(spans[0].start == 0);
  CHECK(spans[1].text == "aspirin");
  CHECK(spans[1].start == q.find("aspirin"));
  CHECK(spans[2].text == "warfarin");  // question casing, not the model's
  CHECK(spans[2].start == q.find("warfarin"));
  CHECK(tagger.dropped_spans() == 2);
  CHECK(tagger.fallback_uses() == 0);

  // Spans are usable by mask_question right away.
  CHECK_NOTHROW(mask_question(q, spans));
}

TEST_CASE("llm tagger: overlapping model spans are resolved") {
  StubChatClient chat([](const std::string& question) {
    json spans = json::array();
    spans.push_back({{"text", "coronary artery"},
                     {"start", 0},
                     {"end", 15},
                     {"category", "CONDITION"}});
    spans.push_back({{"text", "coronary artery disease"},
                     {"start", 0},
                     {"end", 23},
                     {"category", "CONDITION"}});
    (void)question;
    return spans;
  });
  LlmTagger tagger(chat);
  auto spans = tagger.tag("coronary artery disease admissions");
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].text == "coronary artery disease");
}

TEST_CASE("llm tagger: falls back to the gazetteer when the service fails") {
  // A chat stub with no tag function returns an empty span set, not an
  // error, so to exercise the failure path we use a client that throws.
  class ThrowingChat : public ChatClient {
   public:
    ChatResponse chat(const ChatRequest&) override {
      throw ServiceError("backend unavailable");
    }
    std::string model_id() const override { return "throwing"; }
  };

  ThrowingChat chat;
  Gazetteer g = sample_gazetteer();
  LlmTagger with_fallback(chat, &g);
  auto spans = with_fallback.tag("prescribed aspirin today");
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].text == "aspirin");
  CHECK(with_fallback.fallback_uses() == 1);

  LlmTagger without_fallback(chat);
  CHECK(without_fallback.tag("prescribed aspirin today").empty());
  CHECK(without_fallback.fallback_uses() == 1);
}

TEST_CASE("tag_frequency: histogram over a question set") {
  GazetteerTagger tagger(sample_gazetteer());
  std::vector<std::string> questions = {
      "patients on aspirin",
      "aspirin and glucose checks",
      "no entities here",
  };
  std::size_t failures = 9;
  auto freq = tag_frequency(questions, tagger, &failures);
  CHECK(failures == 0);
  CHECK(freq["DRUG"] == 2);
  CHECK(freq["MEASUREMENT"] == 1);
  CHECK(freq.count("CONDITION") == 0);
}
