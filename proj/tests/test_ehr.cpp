// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include <doctest.h>

#include <string>
#include <vector>

#include "cbrsql/ehr.hpp"
#include "cbrsql/sql.hpp"
#include "cbrsql/util.hpp"

using namespace cbrsql;

namespace {

EhrDb sample_db() {
  return EhrDb::from_dump_text(R"SQL(
CREATE TABLE DEMOGRAPHIC ("SUBJECT_ID" INT, "HADM_ID" INT, "NAME" TEXT, "AGE" INT, "DIAGNOSIS" TEXT);
INSERT INTO DEMOGRAPHIC VALUES (1, 101, 'Alice Good', 62, 'SEPSIS');
INSERT INTO DEMOGRAPHIC VALUES (2, 102, 'Bob Strong', 45, 'SEPSIS');
INSERT INTO DEMOGRAPHIC VALUES (3, 103, 'Cara Swift', 71, 'PNEUMONIA');
CREATE TABLE PRESCRIPTIONS ("SUBJECT_ID" INT, "HADM_ID" INT, "DRUG" TEXT, "DOSE" TEXT);
INSERT INTO PRESCRIPTIONS VALUES (1, 101, 'Aspirin', '4');
INSERT INTO PRESCRIPTIONS VALUES (2, 102, 'Aspirin', '81mg');
INSERT INTO PRESCRIPTIONS VALUES (2, 102, 'Warfarin', '5mg');
)SQL");
}

}  // namespace

TEST_CASE("dump loading: statements execute in order; failures name the index") {
  EhrDb db = sample_db();
  ResultSet rs = db.run(sql::parse_sql(
      "SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM DEMOGRAPHIC"));
  REQUIRE(rs.rows.size() == 1);
  CHECK(rs.rows[0][0].kind == Cell::Kind::Integer);
  CHECK(rs.rows[0][0].i == 3);

  // Quote-aware splitting: semicolons inside string literals stay put.
  EhrDb tricky = EhrDb::from_dump_text(
      "CREATE TABLE T (\"A\" TEXT);\n"
      "INSERT INTO T VALUES ('a; b; c');");
  auto values = tricky.distinct_values("T", "A");
  REQUIRE(values.size() == 1);
  CHECK(values[0] == "a; b; c");

  CHECK_THROWS_WITH_AS(EhrDb::from_dump_text("CREATE TABLE T (\"A\" TEXT);\nNOT SQL;"),
                       doctest::Contains("statement 2"), IoError);
  CHECK_THROWS_AS(EhrDb::load_dump("/nonexistent/dump.sql"), IoError);
}

TEST_CASE("run: typed cells distinguish integer 4 from text '4'") {
  EhrDb db = sample_db();

  ResultSet ints = db.run(sql::parse_sql(
      R"(SELECT AGE FROM DEMOGRAPHIC WHERE NAME = "Alice Good")"));
  REQUIRE(ints.rows.size() == 1);
  CHECK(ints.rows[0][0].kind == Cell::Kind::Integer);
  CHECK(ints.rows[0][0].i == 62);
  CHECK(ints.rows[0][0].key() == "i:62");

  ResultSet texts = db.run(sql::parse_sql(
      R"(SELECT DOSE FROM PRESCRIPTIONS WHERE DRUG = "Aspirin" AND SUBJECT_ID = 1)"));
  REQUIRE(texts.rows.size() == 1);
  CHECK(texts.rows[0][0].kind == Cell::Kind::Text);
  CHECK(texts.rows[0][0].t == "4");
  CHECK(texts.rows[0][0].key() == "t:4");

  // The two keys differ even though both print as "4".
  CHECK(ints.rows[0][0].key() != texts.rows[0][0].key());

  // Aggregates over numeric columns come back as floats.
  ResultSet avg = db.run(sql::parse_sql("SELECT AVG ( AGE ) FROM DEMOGRAPHIC"));
  CHECK(avg.rows[0][0].kind == Cell::Kind::Float);
  CHECK(avg.rows[0][0].f == doctest::Approx((62.0 + 45.0 + 71.0) / 3.0));

  // Empty result sets still carry the column count.
  ResultSet none = db.run(sql::parse_sql(
      R"(SELECT NAME FROM DEMOGRAPHIC WHERE DIAGNOSIS = "NOSUCH")"));
  CHECK(none.rows.empty());
  CHECK(none.column_count == 1);
}

TEST_CASE("run: text comparison is case-sensitive") {
  EhrDb db = sample_db();
  ResultSet exact = db.run(sql::parse_sql(
      R"(SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM DEMOGRAPHIC WHERE DIAGNOSIS = "SEPSIS")"));
  CHECK(exact.rows[0][0].i == 2);

  ResultSet wrong_case = db.run(sql::parse_sql(
      R"(SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM DEMOGRAPHIC WHERE DIAGNOSIS = "sepsis")"));
  CHECK(wrong_case.rows[0][0].i == 0);
}

TEST_CASE("run: joins, OR groups, and comparison operators") {
  EhrDb db = sample_db();
  ResultSet joined = db.run(sql::parse_sql(
      R"(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC INNER JOIN PRESCRIPTIONS ON DEMOGRAPHIC.HADM_ID = PRESCRIPTIONS.HADM_ID WHERE PRESCRIPTIONS."DRUG" = "Aspirin" AND DEMOGRAPHIC."AGE" > 50)"));
  CHECK(joined.rows[0][0].i == 1);  // only Alice is over 50 on aspirin

  ResultSet grouped = db.run(sql::parse_sql(
      R"(SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM DEMOGRAPHIC WHERE AGE >= 45 AND ( DIAGNOSIS = "SEPSIS" OR DIAGNOSIS = "PNEUMONIA" ))"));
  CHECK(grouped.rows[0][0].i == 3);

  // Without the group, AND binds the first two and OR adds the third.
  ResultSet flat = db.run(sql::parse_sql(
      R"(SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM DEMOGRAPHIC WHERE AGE >= 65 AND DIAGNOSIS = "SEPSIS" OR DIAGNOSIS = "PNEUMONIA")"));
  CHECK(flat.rows[0][0].i == 1);  // Cara via the OR branch

  ResultSet lt = db.run(sql::parse_sql(
      "SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM DEMOGRAPHIC WHERE AGE < 62"));
  CHECK(lt.rows[0][0].i == 1);
  ResultSet le = db.run(sql::parse_sql(
      "SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM DEMOGRAPHIC WHERE AGE <= 62"));
  CHECK(le.rows[0][0].i == 2);
}

TEST_CASE("render_executable: SQLite dialect with proper quoting") {
  sql::SqlQuery q = sql::parse_sql(
      R"(SELECT COUNT ( DISTINCT DEMOGRAPHIC."SUBJECT_ID" ) FROM DEMOGRAPHIC WHERE DEMOGRAPHIC."NAME" = "Alice Good" AND AGE > 50)");
  std::string text = EhrDb::render_executable(q);
  CHECK(text ==
        R"sql(SELECT COUNT(DISTINCT "DEMOGRAPHIC"."SUBJECT_ID") FROM "DEMOGRAPHIC" WHERE "DEMOGRAPHIC"."NAME" = 'Alice Good' AND "AGE" > 50)sql");

  // Single quotes inside literals are doubled for SQLite.
  sql::SqlQuery quoted = sql::parse_sql(
      R"(SELECT NAME FROM DEMOGRAPHIC WHERE DIAGNOSIS = "O'NEIL SYNDROME")");
  std::string qtext = EhrDb::render_executable(quoted);
  CHECK(qtext.find("'O''NEIL SYNDROME'") != std::string::npos);

  // The rendered form actually executes.
  EhrDb db = sample_db();
  CHECK_NOTHROW(db.run(quoted));

  // Unknown tables surface as evaluation errors naming the rendered SQL.
  CHECK_THROWS_AS(db.run(sql::parse_sql("SELECT X FROM NOSUCH")), EvalError);
}

TEST_CASE("distinct_values: sorted, non-null, non-empty; count matches") {
  EhrDb db = EhrDb::from_dump_text(R"SQL(
CREATE TABLE T ("V" TEXT);
INSERT INTO T VALUES ('b');
INSERT INTO T VALUES ('a');
INSERT INTO T VALUES ('b');
INSERT INTO T VALUES (NULL);
INSERT INTO T VALUES ('');
INSERT INTO T VALUES ('C');
)SQL");
  auto values = db.distinct_values("T", "V");
  CHECK(values == std::vector<std::string>{"C", "a", "b"});  // BINARY order
  CHECK(db.count_distinct("T", "V") == 3);

  CHECK_THROWS_AS(db.distinct_values("NOSUCH", "V"), IoError);
  CHECK_THROWS_AS(db.count_distinct("T", "NOSUCH"), IoError);
}

TEST_CASE("move semantics: a moved-from database can be destroyed safely") {
  EhrDb a = sample_db();
  EhrDb b = std::move(a);
  ResultSet rs = b.run(sql::parse_sql("SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM DEMOGRAPHIC"));
  CHECK(rs.rows[0][0].i == 3);

  EhrDb c = EhrDb::from_dump_text("CREATE TABLE X (\"A\" INT);");
  c = std::move(b);
  CHECK(c.run(sql::parse_sql("SELECT COUNT ( DISTINCT SUBJECT_ID ) FROM DEMOGRAPHIC"))
            .rows[0][0]
            .i == 3);
}
