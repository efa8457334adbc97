// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include <doctest.h>

#include <map>
#include <string>
#include <vector>

#include "cbrsql/datamodel.hpp"
#include "cbrsql/fixture.hpp"
#include "cbrsql/sql.hpp"
#include "cbrsql/util.hpp"

using namespace cbrsql;
using namespace cbrsql::sql;

namespace {

// Hand-written decomposition for one query, built independently of
// decompose() so the two can be cross-checked.
struct DecompOracle {
  std::vector<std::string> agg_ops;
  std::vector<std::string> agg_columns;
  std::vector<std::string> tables;
  std::vector<std::string> con_col_ops;
  std::vector<std::string> con_values;
};

struct ClinicalCase {
  std::string raw;        // as a human would have typed it
  std::string canonical;  // expected render(parse(raw))
  DecompOracle oracle;
};

// Representative clinical queries covering joins, lowercase keywords,
// quoted/unquoted join keys, AVG aggregates, OR groups, and literals with
// commas, parentheses, slashes, and question marks.
std::vector<ClinicalCase> clinical_cases() {
  std::vector<ClinicalCase> cases;

  cases.push_back(
      {R"(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC INNER JOIN DIAGNOSES ON DEMOGRAPHIC.HADM_ID = DIAGNOSES.HADM_ID WHERE DEMOGRAPHIC."LANGUAGE" = "ENGL" AND DIAGNOSES."LONG_TITLE" = "Sepsis")",
       R"(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC INNER JOIN DIAGNOSES ON DEMOGRAPHIC.HADM_ID = DIAGNOSES.HADM_ID WHERE DEMOGRAPHIC."LANGUAGE" = "ENGL" AND DIAGNOSES."LONG_TITLE" = "Sepsis")",
       {{"COUNT"},
        {"DEMOGRAPHIC.SUBJECT_ID"},
        {"DEMOGRAPHIC", "DIAGNOSES"},
        {"DEMOGRAPHIC.LANGUAGE =", "DIAGNOSES.LONG_TITLE ="},
        {"s:ENGL", "s:Sepsis"}}});

  cases.push_back(
      {R"(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."LANGUAGE" = "ENGL" AND DEMOGRAPHIC."DIAGNOSIS" = "SEPSIS")",
       R"(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."LANGUAGE" = "ENGL" AND DEMOGRAPHIC."DIAGNOSIS" = "SEPSIS")",
       {{"COUNT"},
        {"DEMOGRAPHIC.SUBJECT_ID"},
        {"DEMOGRAPHIC"},
        {"DEMOGRAPHIC.DIAGNOSIS =", "DEMOGRAPHIC.LANGUAGE ="},
        {"s:ENGL", "s:SEPSIS"}}});

  // Lowercase `on` keyword; literal containing a comma.
  cases.push_back(
      {R"(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC INNER JOIN LAB on DEMOGRAPHIC.HADM_ID = LAB.HADM_ID WHERE LAB."LABEL" = "Glucose, CSF")",
       R"(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC INNER JOIN LAB ON DEMOGRAPHIC.HADM_ID = LAB.HADM_ID WHERE LAB."LABEL" = "Glucose, CSF")",
       {{"COUNT"},
        {"DEMOGRAPHIC.SUBJECT_ID"},
        {"DEMOGRAPHIC", "LAB"},
        {"LAB.LABEL ="},
        {"s:Glucose, CSF"}}});

  // Literal containing parentheses.
  cases.push_back(
      {R"sql(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC INNER JOIN LAB on DEMOGRAPHIC.HADM_ID = LAB.HADM_ID WHERE LAB."FLUID" = "Cerebrospinal Fluid (CSF)")sql",
       R"sql(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC INNER JOIN LAB ON DEMOGRAPHIC.HADM_ID = LAB.HADM_ID WHERE LAB."FLUID" = "Cerebrospinal Fluid (CSF)")sql",
       {{"COUNT"},
        {"DEMOGRAPHIC.SUBJECT_ID"},
        {"DEMOGRAPHIC", "LAB"},
        {"LAB.FLUID ="},
        {"s:Cerebrospinal Fluid (CSF)"}}});

  // AVG aggregate; lowercase literal (uppercase 'H' sorts before lowercase
  // 'c' in the byte-wise decomposition ordering).
  cases.push_back(
      {R"(SELECT AVG ( DEMOGRAPHIC."AGE" ) FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."LANGUAGE" = "cape" AND DEMOGRAPHIC."DIAGNOSIS" = "HYPERGLYCEMIA")",
       R"(SELECT AVG ( DEMOGRAPHIC."AGE" ) FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."LANGUAGE" = "cape" AND DEMOGRAPHIC."DIAGNOSIS" = "HYPERGLYCEMIA")",
       {{"AVG"},
        {"DEMOGRAPHIC.AGE"},
        {"DEMOGRAPHIC"},
        {"DEMOGRAPHIC.DIAGNOSIS =", "DEMOGRAPHIC.LANGUAGE ="},
        {"s:HYPERGLYCEMIA", "s:cape"}}});

  cases.push_back(
      {R"(SELECT AVG ( DEMOGRAPHIC."AGE" ) FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."LANGUAGE" = "CAPE" AND DEMOGRAPHIC."DIAGNOSIS" = "HYPERGLYCEMIA")",
       R"(SELECT AVG ( DEMOGRAPHIC."AGE" ) FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."LANGUAGE" = "CAPE" AND DEMOGRAPHIC."DIAGNOSIS" = "HYPERGLYCEMIA")",
       {{"AVG"},
        {"DEMOGRAPHIC.AGE"},
        {"DEMOGRAPHIC"},
        {"DEMOGRAPHIC.DIAGNOSIS =", "DEMOGRAPHIC.LANGUAGE ="},
        {"s:CAPE", "s:HYPERGLYCEMIA"}}});

  // Quoted join keys (canonical form drops the quotes); an OR group nested
  // under an AND; a long literal with slash, semicolon, and question mark.
  cases.push_back(
      {R"(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC INNER JOIN DIAGNOSES ON DEMOGRAPHIC."HADM_ID" = DIAGNOSES."HADM_ID" WHERE DEMOGRAPHIC."ADMISSION_TYPE" = "EMERGENCY" AND ( DEMOGRAPHIC."DIAGNOSIS" = "CORONARY ARTERY DISEASE" OR DEMOGRAPHIC."DIAGNOSIS" = "CORONARY ARTERY DISEASE/CORONARY ARTERY BYPASS GRAFT WITH MVR; ? MAZE" ))",
       R"(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC INNER JOIN DIAGNOSES ON DEMOGRAPHIC.HADM_ID = DIAGNOSES.HADM_ID WHERE DEMOGRAPHIC."ADMISSION_TYPE" = "EMERGENCY" AND ( DEMOGRAPHIC."DIAGNOSIS" = "CORONARY ARTERY DISEASE" OR DEMOGRAPHIC."DIAGNOSIS" = "CORONARY ARTERY DISEASE/CORONARY ARTERY BYPASS GRAFT WITH MVR; ? MAZE" ))",
       {{"COUNT"},
        {"DEMOGRAPHIC.SUBJECT_ID"},
        {"DEMOGRAPHIC", "DIAGNOSES"},
        {"DEMOGRAPHIC.ADMISSION_TYPE =", "DEMOGRAPHIC.DIAGNOSIS =",
         "DEMOGRAPHIC.DIAGNOSIS ="},
        {"s:CORONARY ARTERY DISEASE",
         "s:CORONARY ARTERY DISEASE/CORONARY ARTERY BYPASS GRAFT WITH MVR; ? MAZE",
         "s:EMERGENCY"}}});

  cases.push_back(
      {R"(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."ADMISSION_TYPE" = "EMERGENCY" AND DEMOGRAPHIC."DIAGNOSIS" = "CORONARY ARTERY DISEASE/CORONARY ARTERY BYPASS GRAFT WITH MVR; ? MAZE")",
       R"(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."ADMISSION_TYPE" = "EMERGENCY" AND DEMOGRAPHIC."DIAGNOSIS" = "CORONARY ARTERY DISEASE/CORONARY ARTERY BYPASS GRAFT WITH MVR; ? MAZE")",
       {{"COUNT"},
        {"DEMOGRAPHIC.SUBJECT_ID"},
        {"DEMOGRAPHIC"},
        {"DEMOGRAPHIC.ADMISSION_TYPE =", "DEMOGRAPHIC.DIAGNOSIS ="},
        {"s:CORONARY ARTERY DISEASE/CORONARY ARTERY BYPASS GRAFT WITH MVR; ? MAZE",
         "s:EMERGENCY"}}});

  return cases;
}

SchemaDescriptor tiny_schema() {
  SchemaDescriptor schema;
  TableDesc demo;
  demo.name = "DEMOGRAPHIC";
  demo.columns = {{"SUBJECT_ID", ColumnKind::Integer, false},
                  {"HADM_ID", ColumnKind::Integer, false},
                  {"NAME", ColumnKind::Text, true},
                  {"AGE", ColumnKind::Integer, false},
                  {"DIAGNOSIS", ColumnKind::Text, true}};
  TableDesc rx;
  rx.name = "PRESCRIPTIONS";
  rx.columns = {{"SUBJECT_ID", ColumnKind::Integer, false},
                {"HADM_ID", ColumnKind::Integer, false},
                {"DRUG", ColumnKind::Text, true},
                {"DRUG_DOSE", ColumnKind::Text, false}};
  schema.tables = {demo, rx};
  return schema;
}

}  // namespace

TEST_CASE("clinical queries: parse, canonical render, and round trip") {
  for (const auto& c : clinical_cases()) {
    CAPTURE(c.raw);
    SqlQuery q = parse_sql(c.raw);
    std::string rendered = render(q);
    CHECK(rendered == c.canonical);

    // Rendering is a fixed point: parse(render(q)) renders identically and
    // compares equal as a tree.
    SqlQuery again = parse_sql(rendered);
    CHECK(render(again) == rendered);
    CHECK(tree_equal(q, again));
    CHECK(canonical_equal(q, again));
  }
}

TEST_CASE("clinical queries: clause decomposition matches hand oracle") {
  for (const auto& c : clinical_cases()) {
    CAPTURE(c.raw);
    ClauseDecomposition d = decompose(parse_sql(c.raw));
    CHECK(d.agg_ops == c.oracle.agg_ops);
    CHECK(d.agg_columns == c.oracle.agg_columns);
    CHECK(d.tables == c.oracle.tables);
    CHECK(d.con_col_ops == c.oracle.con_col_ops);
    CHECK(d.con_values == c.oracle.con_values);
  }
}

TEST_CASE("fixture corpus: every gold query round-trips") {
  FixtureBundle bundle = make_fixture();
  REQUIRE(bundle.corpus.size() >= 100);
  for (const auto& pair : bundle.corpus) {
    CAPTURE(pair.id);
    SqlQuery q = parse_sql(pair.sql);
    std::string rendered = render(q);
    SqlQuery again = parse_sql(rendered);
    CHECK(render(again) == rendered);
    CHECK(tree_equal(q, again));
  }
}

TEST_CASE("decompose: bare columns, numbers, masks, and comparison ops") {
  SqlQuery q = parse_sql(
      R"(SELECT MIN ( AGE ) , MAX ( AGE ) FROM DEMOGRAPHIC WHERE AGE > 40 AND DEMOGRAPHIC."DOB_YEAR" < 2199 AND NAME = [NAME#1])");
  ClauseDecomposition d = decompose(q);
  CHECK(d.agg_ops == std::vector<std::string>{"MAX", "MIN"});
  CHECK(d.agg_columns == std::vector<std::string>{"AGE"});
  CHECK(d.tables == std::vector<std::string>{"DEMOGRAPHIC"});
  CHECK(d.con_col_ops ==
        std::vector<std::string>{"AGE >", "DEMOGRAPHIC.DOB_YEAR <", "NAME ="});
  CHECK(d.con_values == std::vector<std::string>{"m:NAME#1", "n:2199", "n:40"});

  // A plain projection has no aggregate op; the decomposition records NULL.
  ClauseDecomposition plain = decompose(parse_sql("SELECT NAME FROM DEMOGRAPHIC"));
  CHECK(plain.agg_ops == std::vector<std::string>{"NULL"});
  CHECK(plain.agg_columns == std::vector<std::string>{"NAME"});
  CHECK(plain.con_col_ops.empty());
  CHECK(plain.con_values.empty());
}

TEST_CASE("decompose: identical content in different order compares equal") {
  SqlQuery a = parse_sql(
      R"(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."AGE" > 50 AND DEMOGRAPHIC."NAME" = "Bob")");
  SqlQuery b = parse_sql(
      R"(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."NAME" = "Bob" AND DEMOGRAPHIC."AGE" > 50)");
  ClauseDecomposition da = decompose(a), db = decompose(b);
  CHECK(da.agg_ops == db.agg_ops);
  CHECK(da.agg_columns == db.agg_columns);
  CHECK(da.tables == db.tables);
  CHECK(da.con_col_ops == db.con_col_ops);
  CHECK(da.con_values == db.con_values);
}

TEST_CASE("parse errors carry a byte offset and the offending token") {
  auto offset_of = [](const std::string& text) -> std::size_t {
    try {
      parse_sql(text);
    } catch (const SqlParseError& e) {
      return e.offset;
    }
    FAIL("expected SqlParseError for: ", text);
    return 0;
  };

  CHECK_THROWS_AS(parse_sql(""), SqlParseError);
  CHECK_THROWS_AS(parse_sql("SELECT"), SqlParseError);
  CHECK_THROWS_AS(parse_sql("SELECT NAME"), SqlParseError);  // missing FROM
  CHECK_THROWS_AS(parse_sql("FROM DEMOGRAPHIC"), SqlParseError);
  CHECK_THROWS_AS(parse_sql("SELECT NAME FROM DEMOGRAPHIC WHERE"), SqlParseError);
  CHECK_THROWS_AS(parse_sql("SELECT NAME FROM DEMOGRAPHIC WHERE AGE != 4"),
                  SqlParseError);
  CHECK_THROWS_AS(parse_sql(R"(SELECT COUNT ( NAME FROM DEMOGRAPHIC)"),
                  SqlParseError);
  CHECK_THROWS_AS(parse_sql(R"(SELECT NAME FROM DEMOGRAPHIC trailing)"),
                  SqlParseError);
  CHECK_THROWS_AS(parse_sql(R"(SELECT NAME FROM DEMOGRAPHIC WHERE NAME = "open)"),
                  SqlParseError);

  // The offset points into the original text at the offending token.
  std::string bad = R"(SELECT NAME FROM DEMOGRAPHIC WHERE AGE != 4)";
  CHECK(offset_of(bad) == bad.find("!="));

  std::string trailing = R"(SELECT NAME FROM DEMOGRAPHIC trailing)";
  CHECK(offset_of(trailing) == trailing.find("trailing"));

  try {
    parse_sql(bad);
    FAIL("expected SqlParseError");
  } catch (const SqlParseError& e) {
    CHECK(e.token == "!");
  }
}

TEST_CASE("mask_sql: spans number per category in question order") {
  SqlQuery q = parse_sql(
      R"(SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM PRESCRIPTIONS WHERE DRUG = "Warfarin" AND DRUG = "Aspirin")");
  // Question order: the patient asked about Aspirin before Warfarin, so
  // Aspirin takes DRUG#1 even though it appears second in the SQL.
  std::vector<SpanValue> spans = {{"Aspirin", "DRUG"}, {"Warfarin", "DRUG"}};
  MaskResult r = mask_sql(q, spans);
  CHECK(r.unmatched == 0);
  CHECK(r.text ==
        R"(SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM PRESCRIPTIONS WHERE DRUG = [DRUG#2] AND DRUG = [DRUG#1])");
  REQUIRE(r.masked.conditions.size() == 2);
  CHECK(r.masked.conditions[0].value.kind == Literal::Kind::Mask);
  CHECK(r.masked.conditions[0].value.mask_tag == "DRUG");
  CHECK(r.masked.conditions[0].value.mask_index == 2);
  CHECK(r.masked.conditions[1].value.mask_index == 1);

  // The masked query still parses and renders identically.
  SqlQuery reparsed = parse_sql(r.text);
  CHECK(render(reparsed) == r.text);
  CHECK(tree_equal(r.masked, reparsed));
}

TEST_CASE("mask_sql: exact match wins over case-insensitive; misses counted") {
  SqlQuery q = parse_sql(
      R"(SELECT NAME FROM DEMOGRAPHIC WHERE DIAGNOSIS = "sepsis" AND DIAGNOSIS = "SEPSIS")");

  // "SEPSIS" matches the second condition exactly even though the first
  // would match case-insensitively.
  MaskResult r = mask_sql(q, {{"SEPSIS", "CONDITION"}});
  CHECK(r.unmatched == 0);
  CHECK(r.masked.conditions[0].value.kind == Literal::Kind::Text);
  CHECK(r.masked.conditions[1].value.kind == Literal::Kind::Mask);
  CHECK(r.masked.conditions[1].value.mask_index == 1);

  // With no exact match, a case-insensitive match is used.
  MaskResult ci = mask_sql(q, {{"Sepsis", "CONDITION"}});
  CHECK(ci.unmatched == 0);
  CHECK(ci.masked.conditions[0].value.kind == Literal::Kind::Mask);

  // Spans with no matching literal are counted, and numbering still
  // advances per category so later spans keep their question-order index.
  MaskResult miss =
      mask_sql(q, {{"warfarin", "DRUG"}, {"SEPSIS", "CONDITION"}});
  CHECK(miss.unmatched == 1);
  CHECK(miss.masked.conditions[1].value.kind == Literal::Kind::Mask);
  CHECK(miss.masked.conditions[1].value.mask_tag == "CONDITION");
  CHECK(miss.masked.conditions[1].value.mask_index == 1);

  // A span can consume a literal only once.
  MaskResult twice =
      mask_sql(q, {{"SEPSIS", "CONDITION"}, {"SEPSIS", "CONDITION"}});
  CHECK(twice.unmatched == 0);
  CHECK(twice.masked.conditions[0].value.kind == Literal::Kind::Mask);
  CHECK(twice.masked.conditions[0].value.mask_index == 2);
  CHECK(twice.masked.conditions[1].value.mask_index == 1);
}

TEST_CASE("templates: placeholders parse, list in slot order, render back") {
  std::string text =
      R"(SELECT COUNT ( DISTINCT [SUBJECT_ID]@[COLUMN] ) FROM PRESCRIPTIONS WHERE DRUG = ["aspirin"]@[DRUG] AND DRUG_DOSE = ["5mg"]@[DOSE])";
  ParameterizedSql tmpl = parse_template(text);
  CHECK(render(tmpl) == text);
  CHECK(tmpl.placeholder_count() == 3);

  // A quoted element is stored unquoted, so both spellings parse to the
  // same template.
  ParameterizedSql quoted = parse_template(
      R"(SELECT COUNT ( DISTINCT ["SUBJECT_ID"]@[COLUMN] ) FROM PRESCRIPTIONS WHERE DRUG = ["aspirin"]@[DRUG] AND DRUG_DOSE = ["5mg"]@[DOSE])");
  CHECK(render(quoted) == text);

  auto refs = list_placeholders(tmpl);
  REQUIRE(refs.size() == 3);
  // Slot ordinals walk aggregate columns, the primary table, joins, then
  // each condition's column and value.
  CHECK(refs[0].ordinal == 0);
  CHECK(refs[0].placeholder.slot == Placeholder::Slot::Column);
  CHECK(refs[0].placeholder.element == "SUBJECT_ID");
  CHECK(refs[0].placeholder.tag == "COLUMN");
  CHECK(refs[1].ordinal == 3);  // agg col 0, table 1, cond col 2, cond value 3
  CHECK(refs[1].placeholder.slot == Placeholder::Slot::Value);
  CHECK(refs[1].placeholder.element == "aspirin");
  CHECK(refs[1].placeholder.tag == "DRUG");
  CHECK(refs[2].ordinal == 5);
  CHECK(refs[2].placeholder.element == "5mg");

  // A template with unresolved placeholders cannot become concrete.
  CHECK_THROWS_AS(to_concrete(tmpl), SqlParseError);
  CHECK_THROWS_AS(parse_sql(text), SqlParseError);
}

TEST_CASE("substitute: binds values; discovered cell may rebind the column") {
  SchemaDescriptor schema = tiny_schema();

  SUBCASE("agreeing location keeps the drafted spelling, bare stays bare") {
    ParameterizedSql tmpl = parse_template(
        R"(SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM PRESCRIPTIONS WHERE DRUG = ["aspirin"]@[DRUG])");
    BindingMap bindings;
    bindings[3] = Binding{"Aspirin", "PRESCRIPTIONS", "DRUG"};
    SqlQuery q = substitute(tmpl, bindings, schema);
    CHECK(render(q) ==
          R"(SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM PRESCRIPTIONS WHERE DRUG = "Aspirin")");
  }

  SUBCASE("disagreeing location rewrites the drafted column") {
    ParameterizedSql tmpl = parse_template(
        R"(SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM DEMOGRAPHIC WHERE NAME = ["sepsis"]@[CONDITION])");
    BindingMap bindings;
    bindings[3] = Binding{"SEPSIS", "DEMOGRAPHIC", "DIAGNOSIS"};
    SqlQuery q = substitute(tmpl, bindings, schema);
    CHECK(render(q) ==
          R"(SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."DIAGNOSIS" = "SEPSIS")");
  }

  SUBCASE("value-only binding keeps the drafted column untouched") {
    ParameterizedSql tmpl = parse_template(
        R"(SELECT NAME FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."DIAGNOSIS" = ["flu"]@[CONDITION])");
    BindingMap bindings;
    bindings[3] = Binding{"SEPSIS", std::nullopt, std::nullopt};
    SqlQuery q = substitute(tmpl, bindings, schema);
    CHECK(render(q) ==
          R"(SELECT NAME FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."DIAGNOSIS" = "SEPSIS")");
  }

  SUBCASE("column and table placeholders resolve from bindings") {
    ParameterizedSql tmpl = parse_template(
        R"(SELECT COUNT ( DISTINCT ["SUBJECT_ID"]@[COLUMN] ) FROM ["PRESCRIPTIONS"]@[TABLE] WHERE DRUG = ["aspirin"]@[DRUG])");
    BindingMap bindings;
    bindings[0] = Binding{"", "PRESCRIPTIONS", "SUBJECT_ID"};
    bindings[1] = Binding{"", "PRESCRIPTIONS", std::nullopt};
    bindings[3] = Binding{"Aspirin", "PRESCRIPTIONS", "DRUG"};
    SqlQuery q = substitute(tmpl, bindings, schema);
    CHECK(render(q) ==
          R"(SELECT COUNT ( DISTINCT PRESCRIPTIONS."SUBJECT_ID" ) FROM PRESCRIPTIONS WHERE DRUG = "Aspirin")");
  }
}

TEST_CASE("substitute: literal kind follows the bound column's declared kind") {
  SchemaDescriptor schema = tiny_schema();

  // AGE is an integer column: a numeric value becomes a bare number.
  ParameterizedSql t1 = parse_template(
      R"(SELECT NAME FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."AGE" = ["40"]@[AGE])");
  BindingMap b1;
  b1[3] = Binding{"62", "DEMOGRAPHIC", "AGE"};
  CHECK(render(substitute(t1, b1, schema)) ==
        R"(SELECT NAME FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."AGE" = 62)");

  // DRUG_DOSE is text: even a numeric-looking value stays quoted.
  ParameterizedSql t2 = parse_template(
      R"(SELECT DRUG FROM PRESCRIPTIONS WHERE PRESCRIPTIONS."DRUG_DOSE" = ["5"]@[DOSE])");
  BindingMap b2;
  b2[3] = Binding{"5", "PRESCRIPTIONS", "DRUG_DOSE"};
  CHECK(render(substitute(t2, b2, schema)) ==
        R"(SELECT DRUG FROM PRESCRIPTIONS WHERE PRESCRIPTIONS."DRUG_DOSE" = "5")");

  // A non-numeric value in a numeric column stays text rather than
  // producing an unparsable bare token.
  BindingMap b3;
  b3[3] = Binding{"unknown", "DEMOGRAPHIC", "AGE"};
  CHECK(render(substitute(t1, b3, schema)) ==
        R"(SELECT NAME FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."AGE" = "unknown")");
}

TEST_CASE("substitute: failure modes") {
  SchemaDescriptor schema = tiny_schema();
  ParameterizedSql tmpl = parse_template(
      R"(SELECT NAME FROM DEMOGRAPHIC WHERE DIAGNOSIS = ["flu"]@[CONDITION])");

  SUBCASE("missing binding") {
    CHECK_THROWS_AS(substitute(tmpl, {}, schema), PipelineError);
  }
  SUBCASE("binding rebinds to a table absent from the query") {
    BindingMap bindings;
    bindings[3] = Binding{"Aspirin", "PRESCRIPTIONS", "DRUG"};
    CHECK_THROWS_AS(substitute(tmpl, bindings, schema), PipelineError);
  }
  SUBCASE("unknown table fails schema validation") {
    ParameterizedSql t = parse_template(
        R"(SELECT NAME FROM NOSUCH WHERE DIAGNOSIS = ["flu"]@[CONDITION])");
    BindingMap bindings;
    bindings[3] = Binding{"FLU", std::nullopt, std::nullopt};
    CHECK_THROWS_AS(substitute(t, bindings, schema), PipelineError);
  }
  SUBCASE("unknown column fails schema validation") {
    ParameterizedSql t = parse_template(
        R"(SELECT NOSUCH FROM DEMOGRAPHIC WHERE DIAGNOSIS = ["flu"]@[CONDITION])");
    BindingMap bindings;
    bindings[3] = Binding{"FLU", std::nullopt, std::nullopt};
    CHECK_THROWS_AS(substitute(t, bindings, schema), PipelineError);
  }
}

TEST_CASE("canonical_equal: uniform WHERE chains compare as multisets") {
  SqlQuery a = parse_sql(
      R"(SELECT NAME FROM DEMOGRAPHIC WHERE AGE > 50 AND DIAGNOSIS = "SEPSIS" AND GENDER = "F")");
  SqlQuery b = parse_sql(
      R"(SELECT NAME FROM DEMOGRAPHIC WHERE GENDER = "F" AND AGE > 50 AND DIAGNOSIS = "SEPSIS")");
  CHECK(canonical_equal(a, b));
  CHECK_FALSE(tree_equal(a, b));
  CHECK(tree_equal(a, a));

  // Uniform OR chains reorder too.
  SqlQuery c = parse_sql(R"(SELECT NAME FROM DEMOGRAPHIC WHERE AGE > 50 OR GENDER = "F")");
  SqlQuery d = parse_sql(R"(SELECT NAME FROM DEMOGRAPHIC WHERE GENDER = "F" OR AGE > 50)");
  CHECK(canonical_equal(c, d));

  // An AND chain is never equal to an OR chain over the same conditions.
  SqlQuery e = parse_sql(R"(SELECT NAME FROM DEMOGRAPHIC WHERE AGE > 50 AND GENDER = "F")");
  CHECK_FALSE(canonical_equal(c, e));

  // Literal text comparison is case-sensitive.
  SqlQuery f = parse_sql(R"(SELECT NAME FROM DEMOGRAPHIC WHERE DIAGNOSIS = "SEPSIS")");
  SqlQuery g = parse_sql(R"(SELECT NAME FROM DEMOGRAPHIC WHERE DIAGNOSIS = "sepsis")");
  CHECK_FALSE(canonical_equal(f, g));
  CHECK_FALSE(tree_equal(f, g));
}

TEST_CASE("canonical_equal: mixed connectives stay order-sensitive") {
  SqlQuery a = parse_sql(
      R"(SELECT NAME FROM DEMOGRAPHIC WHERE AGE > 50 AND GENDER = "F" OR DIAGNOSIS = "SEPSIS")");
  SqlQuery b = parse_sql(
      R"(SELECT NAME FROM DEMOGRAPHIC WHERE GENDER = "F" AND AGE > 50 OR DIAGNOSIS = "SEPSIS")");
  // The chain AND-then-OR is mixed, so condition order is significant.
  CHECK_FALSE(canonical_equal(a, b));
  CHECK(canonical_equal(a, a));
}

TEST_CASE("canonical_equal: groups compare as units") {
  SqlQuery a = parse_sql(
      R"(SELECT NAME FROM DEMOGRAPHIC WHERE ADMISSION_TYPE = "EMERGENCY" AND ( DIAGNOSIS = "A" OR DIAGNOSIS = "B" ))");
  SqlQuery b = parse_sql(
      R"(SELECT NAME FROM DEMOGRAPHIC WHERE ADMISSION_TYPE = "EMERGENCY" AND ( DIAGNOSIS = "B" OR DIAGNOSIS = "A" ))");
  // Inside a uniform OR group the members reorder.
  CHECK(canonical_equal(a, b));
  CHECK_FALSE(tree_equal(a, b));

  // A grouped chain does not equal the flat chain of the same conditions.
  SqlQuery flat = parse_sql(
      R"(SELECT NAME FROM DEMOGRAPHIC WHERE ADMISSION_TYPE = "EMERGENCY" AND DIAGNOSIS = "A" OR DIAGNOSIS = "B")");
  CHECK_FALSE(canonical_equal(a, flat));

  // Group span survives a render round trip.
  CHECK(render(parse_sql(render(a))) == render(a));
}

TEST_CASE("tree and canonical equality ignore identifier case, not value case") {
  SqlQuery a = parse_sql(R"(SELECT NAME FROM DEMOGRAPHIC WHERE demographic."NAME" = "Bob")");
  SqlQuery b = parse_sql(R"(SELECT name FROM demographic WHERE DEMOGRAPHIC."name" = "Bob")");
  CHECK(tree_equal(a, b));
  CHECK(canonical_equal(a, b));
}

TEST_CASE("quoted literal escaping round-trips") {
  SqlQuery q;
  q.agg_items.push_back({AggOp::None, false, QualifiedColumn{"", "NAME"}});
  q.primary_table = "DEMOGRAPHIC";
  Condition c;
  c.column = QualifiedColumn{"DEMOGRAPHIC", "DIAGNOSIS"};
  c.op = ConOp::Eq;
  Literal lit;
  lit.kind = Literal::Kind::Text;
  lit.text = R"(5'10" TALL "QUOTED")";
  c.value = lit;
  q.conditions.push_back(c);

  std::string rendered = render(q);
  SqlQuery back = parse_sql(rendered);
  REQUIRE(back.conditions.size() == 1);
  CHECK(back.conditions[0].value.text == lit.text);
  CHECK(render(back) == rendered);
}

TEST_CASE("comparison operators parse and render symmetrically") {
  for (std::string op : {"=", ">", "<", ">=", "<="}) {
    std::string text = "SELECT NAME FROM DEMOGRAPHIC WHERE AGE " + op + " 40";
    CAPTURE(text);
    SqlQuery q = parse_sql(text);
    CHECK(render(q) == text);
  }
}
