// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cbrsql/sql.hpp"
#include "cbrsql/util.hpp"

struct sqlite3;

namespace cbrsql {

// One result cell, type-tagged so execution comparison can distinguish
// integer 4 from text '4'. key() is the canonical comparison string; text
// comparison is case-sensitive.
struct Cell {
  enum class Kind { Null, Integer, Float, Text };
  Kind kind = Kind::Null;
  long long i = 0;
  double f = 0.0;
  std::string t;

  std::string key() const;
};

struct ResultSet {
  std::size_t column_count = 0;
  std::vector<std::vector<Cell>> rows;
};

// In-memory SQLite database holding the records the queries run against.
class EhrDb {
 public:
  EhrDb(EhrDb&& other) noexcept;
  EhrDb& operator=(EhrDb&& other) noexcept;
  EhrDb(const EhrDb&) = delete;
  EhrDb& operator=(const EhrDb&) = delete;
  ~EhrDb();

  static EhrDb open_memory();
  // Executes a SQL dump (CREATE TABLE / INSERT statements). Statement
  // splitting is quote-aware; a failing statement raises IoError naming its
  // 1-based index. String comparisons in later queries are case-sensitive
  // (SQLite BINARY collation).
  static EhrDb load_dump(const std::filesystem::path& path);
  static EhrDb from_dump_text(const std::string& dump_sql);

  void exec(const std::string& statement);
  // Renders the canonical tree to SQLite syntax and executes it.
  ResultSet run(const sql::SqlQuery& query) const;

  // Distinct non-null, non-empty cell values of a column as text, sorted.
  std::vector<std::string> distinct_values(const std::string& table,
                                           const std::string& column) const;
  long long count_distinct(const std::string& table, const std::string& column) const;

  // SQLite rendering (single-quoted literals, double-quoted identifiers).
  static std::string render_executable(const sql::SqlQuery& query);

 private:
  EhrDb() = default;
  sqlite3* db_ = nullptr;
};

}  // namespace cbrsql
