// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include "cbrsql/datamodel.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cbrsql/sql.hpp"

namespace cbrsql {

using nlohmann::json;

const TableDesc* SchemaDescriptor::find_table(std::string_view name) const {
  for (const auto& t : tables)
    if (iequals(t.name, name)) return &t;
  return nullptr;
}

const ColumnDesc* SchemaDescriptor::find_column(std::string_view table,
                                                std::string_view column) const {
  const TableDesc* t = find_table(table);
  if (!t) return nullptr;
  for (const auto& c : t->columns)
    if (iequals(c.name, column)) return &c;
  return nullptr;
}

bool SchemaDescriptor::has_column_anywhere(std::string_view column) const {
  for (const auto& t : tables)
    for (const auto& c : t.columns)
      if (iequals(c.name, column)) return true;
  return false;
}

std::string SchemaDescriptor::summary() const {
  std::ostringstream out;
  for (const auto& t : tables) {
    out << t.name << "(";
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
      if (i) out << ", ";
      out << t.columns[i].name;
    }
    out << ")\n";
  }
  return out.str();
}

namespace {
const char* kind_name(ColumnKind k) {
  switch (k) {
    case ColumnKind::Text: return "text";
    case ColumnKind::Integer: return "integer";
    case ColumnKind::Real: return "real";
  }
  return "text";
}

ColumnKind kind_from_name(const std::string& s) {
  if (s == "integer") return ColumnKind::Integer;
  if (s == "real") return ColumnKind::Real;
  if (s == "text") return ColumnKind::Text;
  throw ConfigError("unknown column kind '" + s + "'");
}
}  // namespace

SchemaDescriptor schema_from_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schema JSON malformed: ") + e.what());
  }
  SchemaDescriptor schema;
  try {
    for (const auto& t : doc.at("tables")) {
      TableDesc table;
      table.name = t.at("name").get<std::string>();
      for (const auto& c : t.at("columns")) {
        ColumnDesc col;
        col.name = c.at("name").get<std::string>();
        col.kind = kind_from_name(c.value("kind", std::string("text")));
        col.lookup_eligible = c.value("lookup_eligible", false);
        table.columns.push_back(std::move(col));
      }
      schema.tables.push_back(std::move(table));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schema JSON missing fields: ") + e.what());
  }
  std::set<std::string> seen;
  for (const auto& t : schema.tables)
    if (!seen.insert(to_upper(t.name)).second)
      throw ConfigError("duplicate table in schema: " + t.name);
  return schema;
}

std::string schema_to_json(const SchemaDescriptor& schema) {
  json doc;
  doc["tables"] = json::array();
  for (const auto& t : schema.tables) {
    json jt;
    jt["name"] = t.name;
    jt["columns"] = json::array();
    for (const auto& c : t.columns) {
      json jc;
      jc["name"] = c.name;
      jc["kind"] = kind_name(c.kind);
      jc["lookup_eligible"] = c.lookup_eligible;
      jt["columns"].push_back(jc);
    }
    doc["tables"].push_back(jt);
  }
  return doc.dump(2);
}

SchemaDescriptor load_schema(const std::filesystem::path& path) {
  return schema_from_json(read_file(path));
}

bool valid_tag(std::string_view tag) {
  if (tag.empty() || !(tag[0] >= 'A' && tag[0] <= 'Z')) return false;
  for (char c : tag)
    if (!((c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_')) return false;
  return true;
}

const std::vector<std::string>& predefined_tags() {
  static const std::vector<std::string> tags = {
      "CONDITION", "MEASUREMENT", "PROCEDURE", "DRUG",     "EQUIPMENT",
      "CODE",      "NAME",        "TIME",      "ETHNICITY", "LOCATION"};
  return tags;
}

bool is_predefined_tag(std::string_view tag) {
  for (const auto& t : predefined_tags())
    if (t == tag) return true;
  return false;
}

std::vector<QuestionSqlPair> load_dataset(const std::filesystem::path& path, bool lenient,
                                          LoadStats* stats) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path.string());
  std::vector<QuestionSqlPair> pairs;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  LoadStats local;
  while (std::getline(in, line)) {
    ++lineno;
    ++local.total_lines;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    QuestionSqlPair pair;
    std::string problem;
    try {
      json rec = json::parse(line);
      pair.id = rec.contains("id") ? rec.at("id").get<std::string>()
                                   : std::to_string(lineno);
      pair.question = rec.at("question").get<std::string>();
      pair.sql = rec.at("sql").get<std::string>();
      sql::parse_sql(pair.sql);
    } catch (const json::exception& e) {
      problem = std::string("bad record JSON: ") + e.what();
    } catch (const SqlParseError& e) {
      problem = std::string("gold SQL out of dialect: ") + e.what();
    }
    if (!problem.empty()) {
      if (!lenient)
        throw IoError("line " + std::to_string(lineno) + ": " + problem);
      ++local.skipped;
      local.skipped_ids.push_back(pair.id.empty() ? std::to_string(lineno) : pair.id);
      continue;
    }
    if (!ids.insert(pair.id).second)
      throw IoError("duplicate pair id '" + pair.id + "' at line " + std::to_string(lineno));
    pairs.push_back(std::move(pair));
  }
  if (stats) *stats = std::move(local);
  return pairs;
}

void save_dataset(const std::vector<QuestionSqlPair>& pairs,
                  const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& p : pairs) {
    json rec;
    rec["id"] = p.id;
    rec["question"] = p.question;
    rec["sql"] = p.sql;
    out << rec.dump() << "\n";
  }
  write_file(path, out.str());
}

CorpusSplit split_corpus(const std::vector<QuestionSqlPair>& pairs, int train_parts,
                         int validation_parts, int test_parts) {
  if (train_parts < 0 || validation_parts < 0 || test_parts < 0 ||
      train_parts + validation_parts + test_parts <= 0)
    throw ConfigError("split ratio parts must be non-negative and sum to > 0");
  const std::size_t n = pairs.size();
  const long total = train_parts + validation_parts + test_parts;
  std::size_t n_train = n * static_cast<std::size_t>(train_parts) / total;
  std::size_t n_val = n * static_cast<std::size_t>(validation_parts) / total;
  CorpusSplit split;
  split.train.assign(pairs.begin(), pairs.begin() + n_train);
  split.validation.assign(pairs.begin() + n_train, pairs.begin() + n_train + n_val);
  split.test.assign(pairs.begin() + n_train + n_val, pairs.end());
  return split;
}

CorpusStats corpus_stats(const std::vector<QuestionSqlPair>& pairs) {
  CorpusStats stats;
  stats.pair_count = pairs.size();
  if (pairs.empty()) return stats;
  double words = 0, conds = 0;
  for (const auto& p : pairs) {
    words += static_cast<double>(count_ws_tokens(p.question));
    conds += static_cast<double>(sql::parse_sql(p.sql).conditions.size());
  }
  stats.mean_question_words = words / static_cast<double>(pairs.size());
  stats.mean_condition_count = conds / static_cast<double>(pairs.size());
  return stats;
}

}  // namespace cbrsql
