// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cbrsql/util.hpp"

namespace cbrsql {

// One natural-language question with its gold SQL. id is taken from the
// record's "id" field when present, else the 1-based JSONL line number.
struct QuestionSqlPair {
  std::string id;
  std::string question;
  std::string sql;
};

enum class ColumnKind { Text, Integer, Real };

struct ColumnDesc {
  std::string name;
  ColumnKind kind = ColumnKind::Text;
  // Whether distinct cell values of this column belong in the value lookup
  // table. Identifier, flag, and numeric columns are left out.
  bool lookup_eligible = false;
};

struct TableDesc {
  std::string name;
  std::vector<ColumnDesc> columns;
};

struct SchemaDescriptor {
  std::vector<TableDesc> tables;

  const TableDesc* find_table(std::string_view name) const;
  const ColumnDesc* find_column(std::string_view table, std::string_view column) const;
  // True when some table contains the column (used for bare column names).
  bool has_column_anywhere(std::string_view column) const;
  // One-line-per-table summary for prompts.
  std::string summary() const;
};

SchemaDescriptor schema_from_json(const std::string& json_text);
std::string schema_to_json(const SchemaDescriptor& schema);
SchemaDescriptor load_schema(const std::filesystem::path& path);

// Entity category tags. A tag is uppercase [A-Z][A-Z0-9_]*; the predefined
// set covers the clinically common categories, and domain-specific tags may
// be added freely as long as they satisfy the grammar.
bool valid_tag(std::string_view tag);
bool is_predefined_tag(std::string_view tag);
const std::vector<std::string>& predefined_tags();

struct LoadStats {
  std::size_t total_lines = 0;
  std::size_t skipped = 0;
  std::vector<std::string> skipped_ids;
};

// Reads a JSONL dataset of {"question": ..., "sql": ...} records and
// validates each gold SQL against the dialect grammar. In strict mode the
// first bad record throws; in lenient mode bad records are skipped and
// counted. Duplicate ids throw in both modes.
std::vector<QuestionSqlPair> load_dataset(const std::filesystem::path& path,
                                          bool lenient = false,
                                          LoadStats* stats = nullptr);
void save_dataset(const std::vector<QuestionSqlPair>& pairs,
                  const std::filesystem::path& path);

struct CorpusSplit {
  std::vector<QuestionSqlPair> train;
  std::vector<QuestionSqlPair> validation;
  std::vector<QuestionSqlPair> test;
};

// Deterministic contiguous split by ratio triple, e.g. {8, 1, 1}.
CorpusSplit split_corpus(const std::vector<QuestionSqlPair>& pairs, int train_parts,
                         int validation_parts, int test_parts);

struct CorpusStats {
  std::size_t pair_count = 0;
  double mean_question_words = 0.0;
  double mean_condition_count = 0.0;
};
CorpusStats corpus_stats(const std::vector<QuestionSqlPair>& pairs);

}  // namespace cbrsql
