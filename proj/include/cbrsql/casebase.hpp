// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbrsql/datamodel.hpp"
#include "cbrsql/ehr.hpp"
#include "cbrsql/services.hpp"
#include "cbrsql/tagging.hpp"

namespace cbrsql {

struct SearchHit {
  std::string id;
  double score = 0.0;  // cosine similarity
};

// Exact-cosine flat vector index with JSON payloads. Vectors are normalized
// on insert; search scans every row, so results carry no approximation. Ties
// break by ascending id.
class VectorStore {
 public:
  VectorStore() = default;
  VectorStore(std::string kind, std::string embedder_id, int dim);

  void add(const std::string& id, const Embedding& embedding,
           nlohmann::json payload);
  std::vector<SearchHit> search(std::span<const float> query_vector,
                                std::size_t k) const;

  const nlohmann::json& payload(const std::string& id) const;
  std::span<const float> vector(std::size_t index) const;
  const std::vector<std::string>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  int dim() const { return dim_; }
  const std::string& kind() const { return kind_; }
  const std::string& embedder_id() const { return embedder_id_; }

  // Refuses to pair a snapshot with a different embedding model or width.
  void require_compatible(const Embedder& embedder) const;

  // Snapshot layout: manifest.json, payloads.jsonl (insertion order),
  // vectors.bin (row-major little-endian float32).
  void save(const std::filesystem::path& dir) const;
  static VectorStore load(const std::filesystem::path& dir);

 private:
  std::string kind_;
  std::string embedder_id_;
  int dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> vectors_;  // flat row-major
  std::vector<nlohmann::json> payloads_;
  std::map<std::string, std::size_t> index_;
};

// A retained case: the masked question (indexed), its masked SQL, and the
// entity spans that produced the masks.
struct MaskedCase {
  std::string pair_id;
  std::string masked_question;
  std::string masked_sql;
  std::vector<EntitySpan> spans;
};

struct CaseBaseReport {
  std::size_t pairs = 0;
  std::size_t tagger_failures = 0;   // pairs whose tagging raised (kept, unmasked)
  std::size_t unmatched_spans = 0;   // spans with no SQL literal to mask
};

// Masks every pair's question and gold SQL and indexes the masked question
// text. Failed taggings degrade to empty span lists (the pair stays in).
VectorStore build_case_base(const std::vector<QuestionSqlPair>& pairs, Tagger& tagger,
                            Embedder& embedder, CaseBaseReport* report = nullptr);

// Raw question index used by the retrieval-only baseline; payloads keep the
// unmasked question and gold SQL.
VectorStore build_pair_base(const std::vector<QuestionSqlPair>& pairs,
                            Embedder& embedder);

MaskedCase masked_case_from_payload(const nlohmann::json& payload);

struct LookupEntry {
  std::string value;
  std::string table;
  std::string column;
};

// Indexes every distinct cell value of the mapped lookup-eligible columns
// under the medical embedding space. category_columns maps CATEGORY ->
// ["TABLE.COLUMN", ...]; every referenced column must exist and be
// lookup-eligible. Entries are unique on (value, table, column).
VectorStore build_lookup_table(const EhrDb& db, const SchemaDescriptor& schema,
                               const std::map<std::string, std::vector<std::string>>&
                                   category_columns,
                               Embedder& medical_embedder);

LookupEntry lookup_entry_from_payload(const nlohmann::json& payload);

}  // namespace cbrsql
