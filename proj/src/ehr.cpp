// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include "cbrsql/ehr.hpp"

#include <sqlite3.h>

#include <cstdio>
#include <sstream>

namespace cbrsql {

std::string Cell::key() const {
  switch (kind) {
    case Kind::Null: return "n:";
    case Kind::Integer: return "i:" + std::to_string(i);
    case Kind::Float: {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "f:%.17g", f);
      return buf;
    }
    case Kind::Text: return "t:" + t;
  }
  return "n:";
}

EhrDb::EhrDb(EhrDb&& other) noexcept : db_(other.db_) { other.db_ = nullptr; }

EhrDb& EhrDb::operator=(EhrDb&& other) noexcept {
  if (this != &other) {
    if (db_) sqlite3_close(db_);
    db_ = other.db_;
    other.db_ = nullptr;
  }
  return *this;
}

EhrDb::~EhrDb() {
  if (db_) sqlite3_close(db_);
}

EhrDb EhrDb::open_memory() {
  EhrDb db;
  if (sqlite3_open(":memory:", &db.db_) != SQLITE_OK)
    throw IoError("cannot open in-memory database");
  // Disable the legacy double-quoted string fallback so a misquoted or
  // unknown identifier fails loudly instead of comparing against a constant.
  sqlite3_db_config(db.db_, SQLITE_DBCONFIG_DQS_DML, 0, nullptr);
  sqlite3_db_config(db.db_, SQLITE_DBCONFIG_DQS_DDL, 0, nullptr);
  return db;
}

namespace {

// Splits on ';' outside single- and double-quoted regions. '' and "" escapes
// stay inside their statement.
std::vector<std::string> split_statements(const std::string& dump) {
  std::vector<std::string> out;
  std::string cur;
  char quote = 0;
  for (std::size_t i = 0; i < dump.size(); ++i) {
    char c = dump[i];
    if (quote) {
      cur.push_back(c);
      if (c == quote) {
        if (i + 1 < dump.size() && dump[i + 1] == quote) {
          cur.push_back(dump[++i]);
        } else {
          quote = 0;
        }
      }
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
      cur.push_back(c);
      continue;
    }
    if (c == ';') {
      if (cur.find_first_not_of(" \t\r\n") != std::string::npos) out.push_back(cur);
      cur.clear();
      continue;
    }
    cur.push_back(c);
  }
  if (cur.find_first_not_of(" \t\r\n") != std::string::npos) out.push_back(cur);
  return out;
}

}  // namespace

EhrDb EhrDb::from_dump_text(const std::string& dump_sql) {
  EhrDb db = open_memory();
  auto statements = split_statements(dump_sql);
  for (std::size_t i = 0; i < statements.size(); ++i) {
    char* err = nullptr;
    if (sqlite3_exec(db.db_, statements[i].c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown error";
      sqlite3_free(err);
      throw IoError("dump statement " + std::to_string(i + 1) + " failed: " + msg);
    }
  }
  return db;
}

EhrDb EhrDb::load_dump(const std::filesystem::path& path) {
  return from_dump_text(read_file(path));
}

void EhrDb::exec(const std::string& statement) {
  char* err = nullptr;
  if (sqlite3_exec(db_, statement.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw IoError("statement failed: " + msg);
  }
}

namespace {

std::string quote_ident(const std::string& name) {
  std::string out = "\"";
  for (char c : name) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string quote_text(const std::string& value) {
  std::string out = "'";
  for (char c : value) {
    if (c == '\'') out.push_back('\'');
    out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

std::string exec_column(const sql::QualifiedColumn& qc) {
  if (qc.table.empty()) return quote_ident(qc.column);
  return quote_ident(qc.table) + "." + quote_ident(qc.column);
}

std::string exec_literal(const sql::Literal& lit) {
  switch (lit.kind) {
    case sql::Literal::Kind::Text: return quote_text(lit.text);
    case sql::Literal::Kind::Number: return lit.text;
    case sql::Literal::Kind::Mask:
      // Masks never execute meaningfully; compare as the literal token text.
      return quote_text("[" + lit.mask_tag + "#" + std::to_string(lit.mask_index) + "]");
  }
  return "NULL";
}

}  // namespace

std::string EhrDb::render_executable(const sql::SqlQuery& query) {
  std::ostringstream out;
  out << "SELECT ";
  for (std::size_t i = 0; i < query.agg_items.size(); ++i) {
    if (i) out << ", ";
    const auto& item = query.agg_items[i];
    if (item.op == sql::AggOp::None) {
      if (item.distinct) out << "DISTINCT ";
      out << exec_column(item.column);
    } else {
      out << sql::agg_op_name(item.op) << "(";
      if (item.distinct) out << "DISTINCT ";
      out << exec_column(item.column) << ")";
    }
  }
  out << " FROM " << quote_ident(query.primary_table);
  for (const auto& join : query.joins) {
    out << " INNER JOIN " << quote_ident(join.table) << " ON "
        << exec_column(join.left_key) << " = " << exec_column(join.right_key);
  }
  if (!query.conditions.empty()) {
    out << " WHERE ";
    std::size_t g = 0;
    for (std::size_t i = 0; i < query.conditions.size(); ++i) {
      if (i)
        out << (query.connectives[i - 1] == sql::Connective::And ? " AND " : " OR ");
      if (g < query.groups.size() && query.groups[g].begin == i) out << "(";
      const auto& c = query.conditions[i];
      out << exec_column(c.column) << " " << sql::con_op_text(c.op) << " "
          << exec_literal(c.value);
      if (g < query.groups.size() && query.groups[g].end == i + 1) {
        out << ")";
        ++g;
      }
    }
  }
  return out.str();
}

ResultSet EhrDb::run(const sql::SqlQuery& query) const {
  const std::string text = render_executable(query);
  sqlite3_stmt* stmt = nullptr;
  if (sqlite3_prepare_v2(db_, text.c_str(), -1, &stmt, nullptr) != SQLITE_OK) {
    std::string msg = sqlite3_errmsg(db_);
    throw EvalError("cannot prepare query: " + msg + " [" + text + "]");
  }
  ResultSet rs;
  rs.column_count = static_cast<std::size_t>(sqlite3_column_count(stmt));
  int rc;
  while ((rc = sqlite3_step(stmt)) == SQLITE_ROW) {
    std::vector<Cell> row;
    row.reserve(rs.column_count);
    for (std::size_t c = 0; c < rs.column_count; ++c) {
      Cell cell;
      switch (sqlite3_column_type(stmt, static_cast<int>(c))) {
        case SQLITE_INTEGER:
          cell.kind = Cell::Kind::Integer;
          cell.i = sqlite3_column_int64(stmt, static_cast<int>(c));
          break;
        case SQLITE_FLOAT:
          cell.kind = Cell::Kind::Float;
          cell.f = sqlite3_column_double(stmt, static_cast<int>(c));
          break;
        case SQLITE_NULL:
          cell.kind = Cell::Kind::Null;
          break;
        default: {
          cell.kind = Cell::Kind::Text;
          const unsigned char* p = sqlite3_column_text(stmt, static_cast<int>(c));
          cell.t = p ? reinterpret_cast<const char*>(p) : "";
          break;
        }
      }
      row.push_back(std::move(cell));
    }
    rs.rows.push_back(std::move(row));
  }
  if (rc != SQLITE_DONE) {
    std::string msg = sqlite3_errmsg(db_);
    sqlite3_finalize(stmt);
    throw EvalError("query execution failed: " + msg + " [" + text + "]");
  }
  sqlite3_finalize(stmt);
  return rs;
}

std::vector<std::string> EhrDb::distinct_values(const std::string& table,
                                                const std::string& column) const {
  const std::string text = "SELECT DISTINCT " + quote_ident(column) + " FROM " +
                           quote_ident(table) + " WHERE " + quote_ident(column) +
                           " IS NOT NULL ORDER BY " + quote_ident(column);
  sqlite3_stmt* stmt = nullptr;
  if (sqlite3_prepare_v2(db_, text.c_str(), -1, &stmt, nullptr) != SQLITE_OK)
    throw IoError("cannot read distinct values of " + table + "." + column + ": " +
                  sqlite3_errmsg(db_));
  std::vector<std::string> out;
  while (sqlite3_step(stmt) == SQLITE_ROW) {
    const unsigned char* p = sqlite3_column_text(stmt, 0);
    std::string v = p ? reinterpret_cast<const char*>(p) : "";
    if (!v.empty()) out.push_back(std::move(v));
  }
  sqlite3_finalize(stmt);
  return out;
}

long long EhrDb::count_distinct(const std::string& table, const std::string& column) const {
  const std::string text = "SELECT COUNT(DISTINCT " + quote_ident(column) + ") FROM " +
                           quote_ident(table) + " WHERE " + quote_ident(column) +
                           " IS NOT NULL AND CAST(" + quote_ident(column) +
                           " AS TEXT) != ''";
  sqlite3_stmt* stmt = nullptr;
  if (sqlite3_prepare_v2(db_, text.c_str(), -1, &stmt, nullptr) != SQLITE_OK)
    throw IoError("cannot count distinct values: " + std::string(sqlite3_errmsg(db_)));
  long long out = 0;
  if (sqlite3_step(stmt) == SQLITE_ROW) out = sqlite3_column_int64(stmt, 0);
  sqlite3_finalize(stmt);
  return out;
}

}  // namespace cbrsql
