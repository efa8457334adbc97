// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbrsql/casebase.hpp"
#include "cbrsql/datamodel.hpp"
#include "cbrsql/ehr.hpp"
#include "cbrsql/services.hpp"
#include "cbrsql/tagging.hpp"
#include "cbrsql/util.hpp"

using namespace cbrsql;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reference search: exact cosine over normalized copies, ties by ascending
// id, written independently of VectorStore for cross-checking.
std::vector<SearchHit> brute_force(const std::vector<std::string>& ids,
                                   const std::vector<std::vector<float>>& rows,
                                   std::vector<float> query, std::size_t k) {
  l2_normalize(query);
  std::vector<SearchHit> hits;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<float> v = rows[i];
    l2_normalize(v);
    hits.push_back({ids[i], cosine(v, query)});
  }
  std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

fs::path temp_dir(const std::string& leaf) {
  fs::path dir = fs::temp_directory_path() / ("cbrsql-test-" + leaf);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("vector store: add, search, payload access") {
  VectorStore store("case_base", "stub-embed-general", 3);
  CHECK(store.kind() == "case_base");
  CHECK(store.embedder_id() == "stub-embed-general");
  CHECK(store.dim() == 3);
  CHECK(store.size() == 0);

  Embedding ex, ey;
  ex.values = {1.0f, 0.0f, 0.0f};
  ey.values = {0.0f, 1.0f, 0.0f};
  store.add("x", ex, json{{"label", "x-axis"}});
  store.add("y", ey, json{{"label", "y-axis"}});
  CHECK(store.size() == 2);
  CHECK(store.ids() == std::vector<std::string>{"x", "y"});
  CHECK(store.payload("x")["label"] == "x-axis");

  std::vector<float> q = {0.9f, 0.1f, 0.0f};
  auto hits = store.search(q, 2);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].id == "x");
  CHECK(hits[1].id == "y");
  CHECK(hits[0].score > hits[1].score);

  // k larger than the store truncates to the store size.
  CHECK(store.search(q, 10).size() == 2);

  CHECK_THROWS_AS(store.payload("nope"), ConfigError);
  CHECK_THROWS_AS(store.search(q, 0), ConfigError);
  std::vector<float> wrong = {1.0f, 0.0f};
  CHECK_THROWS_AS(store.search(wrong, 1), ConfigError);
  CHECK_THROWS_AS(store.add("x", ex, json{}), ConfigError);  // duplicate id
  Embedding bad;
  bad.values = {1.0f};
  CHECK_THROWS_AS(store.add("z", bad, json{}), ConfigError);
  CHECK_THROWS_AS(VectorStore("k", "m", 0), ConfigError);
}

TEST_CASE("vector store: search equals brute force with ascending-id ties") {
  std::mt19937 gen(424242);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  const int dim = 16, rows = 80;

  VectorStore store("case_base", "m", dim);
  std::vector<std::string> ids;
  std::vector<std::vector<float>> raw;
  for (int i = 0; i < rows; ++i) {
    Embedding e;
    for (int d = 0; d < dim; ++d) e.values.push_back(dist(gen));
    // Duplicate every fourth vector so score ties actually occur.
    if (i % 4 == 3) e.values = raw.back();
    std::string id = "row-" + std::to_string(100 + i);  // lexicographic == numeric
    store.add(id, e, json{});
    ids.push_back(id);
    raw.push_back(e.values);
  }

  for (int t = 0; t < 25; ++t) {
    std::vector<float> q;
    for (int d = 0; d < dim; ++d) q.push_back(dist(gen));
    auto got = store.search(q, 10);
    auto want = brute_force(ids, raw, q, 10);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CAPTURE(t);
      CAPTURE(i);
      CHECK(got[i].id == want[i].id);
      CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-9));
    }
  }
}

TEST_CASE("vector store: snapshot round trip preserves results exactly") {
  fs::path dir = temp_dir("casebase-snapshot");
  std::mt19937 gen(7);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);

  VectorStore store("lookup", "stub-embed-medical", 8);
  for (int i = 0; i < 20; ++i) {
    Embedding e;
    for (int d = 0; d < 8; ++d) e.values.push_back(dist(gen));
    store.add("id" + std::to_string(i), e, json{{"n", i}});
  }
  store.save(dir);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "payloads.jsonl"));
  CHECK(fs::exists(dir / "vectors.bin"));

  VectorStore back = VectorStore::load(dir);
  CHECK(back.kind() == "lookup");
  CHECK(back.embedder_id() == "stub-embed-medical");
  CHECK(back.dim() == 8);
  CHECK(back.size() == 20);
  CHECK(back.ids() == store.ids());
  CHECK(back.payload("id7")["n"] == 7);

  std::vector<float> q;
  for (int d = 0; d < 8; ++d) q.push_back(dist(gen));
  auto before = store.search(q, 20);
  auto after = back.search(q, 20);
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(before[i].id == after[i].id);
    CHECK(before[i].score == after[i].score);  // bit-identical floats
  }

  CHECK_THROWS_AS(VectorStore::load(dir / "missing"), IoError);
}

TEST_CASE("vector store: snapshot refuses incompatible embedders") {
  VectorStore store("case_base", "stub-embed-general", 32);
  StubEmbedder matching(32, "general");
  CHECK_NOTHROW(store.require_compatible(matching));

  StubEmbedder wrong_dim(16, "general");
  CHECK_THROWS_AS(store.require_compatible(wrong_dim), ConfigError);
  StubEmbedder wrong_model(32, "medical");
  CHECK_THROWS_AS(store.require_compatible(wrong_model), ConfigError);
}

TEST_CASE("build_case_base: masks questions and SQL, reports anomalies") {
  Gazetteer g;
  g.add("aspirin", "DRUG");
  g.add("sepsis", "CONDITION");
  GazetteerTagger tagger(g);
  StubEmbedder embedder(64);

  std::vector<QuestionSqlPair> pairs = {
      {"p1", "how many patients take aspirin",
       R"(SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM PRESCRIPTIONS WHERE DRUG = "Aspirin")"},
      // The tagged span has no matching literal -> unmatched.
      {"p2", "patients with sepsis",
       R"(SELECT NAME FROM DEMOGRAPHIC WHERE DIAGNOSIS = "PNEUMONIA")"},
      // No entities at all is not a failure; the pair is indexed unmasked.
      {"p3", "how many admissions in total",
       "SELECT COUNT ( DISTINCT HADM_ID ) FROM DEMOGRAPHIC"},
  };

  CaseBaseReport report;
  VectorStore store = build_case_base(pairs, tagger, embedder, &report);
  CHECK(report.pairs == 3);
  CHECK(report.tagger_failures == 0);
  CHECK(report.unmatched_spans == 1);
  CHECK(store.kind() == "case_base");
  CHECK(store.size() == 3);
  store.require_compatible(embedder);

  MaskedCase c1 = masked_case_from_payload(store.payload("p1"));
  CHECK(c1.pair_id == "p1");
  CHECK(c1.masked_question == "how many patients take [DRUG#1]");
  CHECK(c1.masked_sql ==
        R"(SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM PRESCRIPTIONS WHERE DRUG = [DRUG#1])");
  REQUIRE(c1.spans.size() == 1);
  CHECK(c1.spans[0].text == "aspirin");
  CHECK(c1.spans[0].category == "DRUG");
  CHECK(c1.spans[0].start == 23);
  CHECK(c1.spans[0].end == 30);

  // Unmatched span: question masked, SQL literal untouched.
  MaskedCase c2 = masked_case_from_payload(store.payload("p2"));
  CHECK(c2.masked_question == "patients with [CONDITION#1]");
  CHECK(c2.masked_sql == R"(SELECT NAME FROM DEMOGRAPHIC WHERE DIAGNOSIS = "PNEUMONIA")");

  MaskedCase c3 = masked_case_from_payload(store.payload("p3"));
  CHECK(c3.masked_question == "how many admissions in total");
  CHECK(c3.spans.empty());

  // A tagger that raises degrades to an unmasked pair and is counted.
  class ThrowingTagger : public Tagger {
   public:
    std::vector<EntitySpan> tag(const std::string&) override {
      throw ServiceError("tagger offline");
    }
  };
  ThrowingTagger broken;
  CaseBaseReport broken_report;
  VectorStore degraded = build_case_base(pairs, broken, embedder, &broken_report);
  CHECK(broken_report.tagger_failures == 3);
  CHECK(degraded.size() == 3);
  CHECK(masked_case_from_payload(degraded.payload("p1")).masked_question ==
        pairs[0].question);

  // The index keys the MASKED question: two surface forms of the same
  // structure embed identically once their entities are masked.
  Embedding probe = embedder.embed_one("how many patients take [DRUG#1]");
  auto hits = store.search(probe.values, 1);
  CHECK(hits[0].id == "p1");
  CHECK(hits[0].score == doctest::Approx(1.0));
}

TEST_CASE("build_pair_base: indexes raw questions with gold SQL payloads") {
  StubEmbedder embedder(64);
  std::vector<QuestionSqlPair> pairs = {
      {"p1", "how many patients take aspirin", "SELECT NAME FROM T"},
      {"p2", "average age of sepsis patients", "SELECT AGE FROM T"},
  };
  VectorStore store = build_pair_base(pairs, embedder);
  CHECK(store.kind() == "pair_base");
  CHECK(store.size() == 2);
  CHECK(store.payload("p1")["question"] == "how many patients take aspirin");
  CHECK(store.payload("p2")["sql"] == "SELECT AGE FROM T");

  Embedding probe = embedder.embed_one("how many patients take aspirin");
  CHECK(store.search(probe.values, 1)[0].id == "p1");
}

TEST_CASE("build_lookup_table: distinct cells of mapped eligible columns") {
  EhrDb db = EhrDb::from_dump_text(R"SQL(
CREATE TABLE PRESCRIPTIONS ("SUBJECT_ID" INT, "DRUG" TEXT);
INSERT INTO PRESCRIPTIONS VALUES (1, 'Aspirin');
INSERT INTO PRESCRIPTIONS VALUES (2, 'Aspirin');
INSERT INTO PRESCRIPTIONS VALUES (3, 'Warfarin');
INSERT INTO PRESCRIPTIONS VALUES (4, NULL);
INSERT INTO PRESCRIPTIONS VALUES (5, '');
CREATE TABLE DEMOGRAPHIC ("SUBJECT_ID" INT, "DIAGNOSIS" TEXT);
INSERT INTO DEMOGRAPHIC VALUES (1, 'SEPSIS');
)SQL");
  SchemaDescriptor schema = schema_from_json(R"({"tables":[
    {"name":"PRESCRIPTIONS","columns":[
      {"name":"SUBJECT_ID","kind":"integer"},
      {"name":"DRUG","kind":"text","lookup_eligible":true}]},
    {"name":"DEMOGRAPHIC","columns":[
      {"name":"SUBJECT_ID","kind":"integer"},
      {"name":"DIAGNOSIS","kind":"text","lookup_eligible":true}]}]})");
  StubEmbedder medical(64, "medical");

  std::map<std::string, std::vector<std::string>> mapping = {
      {"DRUG", {"PRESCRIPTIONS.DRUG"}},
      {"CONDITION", {"DEMOGRAPHIC.DIAGNOSIS"}},
  };
  VectorStore store = build_lookup_table(db, schema, mapping, medical);
  CHECK(store.kind() == "lookup");
  // NULL and empty cells are excluded; duplicates collapse.
  CHECK(store.size() == 3);

  std::vector<std::string> values;
  for (const auto& id : store.ids()) {
    LookupEntry e = lookup_entry_from_payload(store.payload(id));
    values.push_back(e.value + "|" + e.table + "|" + e.column);
  }
  std::sort(values.begin(), values.end());
  CHECK(values == std::vector<std::string>{"Aspirin|PRESCRIPTIONS|DRUG",
                                           "SEPSIS|DEMOGRAPHIC|DIAGNOSIS",
                                           "Warfarin|PRESCRIPTIONS|DRUG"});

  // Semantic search over cell values works through the same store.
  Embedding probe = medical.embed_one("warfarin");
  auto hits = store.search(probe.values, 1);
  CHECK(lookup_entry_from_payload(store.payload(hits[0].id)).value == "Warfarin");

  // One category may map to several columns; entries stay unique.
  std::map<std::string, std::vector<std::string>> two = {
      {"DRUG", {"PRESCRIPTIONS.DRUG", "PRESCRIPTIONS.DRUG"}}};
  CHECK(build_lookup_table(db, schema, two, medical).size() == 2);
}

TEST_CASE("build_lookup_table: validates the category map against the schema") {
  EhrDb db = EhrDb::from_dump_text(
      "CREATE TABLE T (\"A\" TEXT);\nINSERT INTO T VALUES ('v');");
  SchemaDescriptor schema = schema_from_json(
      R"({"tables":[{"name":"T","columns":[
        {"name":"A","kind":"text","lookup_eligible":true},
        {"name":"B","kind":"text"}]}]})");
  StubEmbedder medical(16, "medical");

  std::map<std::string, std::vector<std::string>> bad_tag = {{"bad", {"T.A"}}};
  CHECK_THROWS_AS(build_lookup_table(db, schema, bad_tag, medical), ConfigError);

  std::map<std::string, std::vector<std::string>> no_dot = {{"DRUG", {"TA"}}};
  CHECK_THROWS_AS(build_lookup_table(db, schema, no_dot, medical), ConfigError);

  std::map<std::string, std::vector<std::string>> missing = {{"DRUG", {"T.NOPE"}}};
  CHECK_THROWS_AS(build_lookup_table(db, schema, missing, medical), ConfigError);

  std::map<std::string, std::vector<std::string>> ineligible = {{"DRUG", {"T.B"}}};
  CHECK_THROWS_AS(build_lookup_table(db, schema, ineligible, medical), ConfigError);
}
