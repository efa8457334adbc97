// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbrsql/casebase.hpp"
#include "cbrsql/levenshtein.hpp"
#include "cbrsql/sql.hpp"

namespace cbrsql {

struct RetrievalConfig {
  int k = 5;             // exemplars retrieved for drafting
  int top_semantic = 100;  // lookup candidates kept after the vector search
  int top_final = 5;       // candidates kept after edit-distance re-ranking
  // Extra hits fetched when a post-retrieval hook is installed, so a hook
  // that removes exemplars can refill the list back up to k.
  int hook_overfetch = 0;

  void validate() const {
    if (k < 1) throw ConfigError("retrieval k must be >= 1");
    if (top_semantic < 1) throw ConfigError("top_semantic must be >= 1");
    if (top_final < 1 || top_final > top_semantic)
      throw ConfigError("top_final must be in [1, top_semantic]");
    if (hook_overfetch < 0) throw ConfigError("hook_overfetch must be >= 0");
  }
};

struct Candidate {
  LookupEntry entry;
  double semantic_score = 0.0;
  std::size_t edit_distance = 0;
};

// Candidates for one placeholder, ordered by (edit distance asc, semantic
// score desc, value asc, table asc, column asc).
struct CandidateSet {
  int ordinal = 0;
  std::string element;
  std::string tag;
  sql::Placeholder::Slot slot = sql::Placeholder::Slot::Value;
  std::vector<Candidate> candidates;
  bool fallback_raw = false;  // no candidates; the raw element was used
};

// Post-retrieval hook: receives the retrieved hits and the query id, returns
// the surviving hits. Used for dropout-style perturbation.
using RetrievalHook =
    std::function<std::vector<SearchHit>(std::vector<SearchHit>, const std::string&)>;

enum class PipelineVariant { Full, ReplaceTemplateConstruction, NoSourceDiscovery };
PipelineVariant parse_variant(const std::string& name);
const char* variant_name(PipelineVariant variant);

// Every query produces a trace, error or not: retrieval hits, prompts and
// raw model outputs per stage, candidate sets, and the final SQL or the
// stage that failed.
struct PipelineTrace {
  std::string query_id;
  std::string question;
  nlohmann::json stages = nlohmann::json::array();
  std::string error;      // empty on success
  std::string error_stage;
  UsageRecord usage;

  nlohmann::json to_json() const;
};

struct PipelineResult {
  std::optional<sql::SqlQuery> query;
  PipelineTrace trace;
  bool ok() const { return query.has_value(); }
};

struct PipelineContext {
  const VectorStore* case_base = nullptr;  // masked questions (CBR stage one)
  const VectorStore* pair_base = nullptr;  // raw questions (baseline + ablation)
  const VectorStore* lookup = nullptr;     // cell values (stage two)
  const SchemaDescriptor* schema = nullptr;
  Tagger* tagger = nullptr;
  Embedder* general_embedder = nullptr;
  Embedder* medical_embedder = nullptr;
  ChatClient* chat = nullptr;
  RetrievalConfig retrieval;
  bool levenshtein_case_insensitive = true;
  bool include_draft_in_revision = false;
};

// Case-based pipeline: mask -> retrieve masked exemplars -> draft a template
// -> discover value sources -> revise bindings -> substitute against the
// schema. One reprompt per model stage, then the query fails with a trace.
PipelineResult run_cbr(const PipelineContext& ctx, const std::string& question,
                       const std::string& query_id, const RetrievalHook* hook = nullptr,
                       PipelineVariant variant = PipelineVariant::Full);

// Retrieval-augmented baseline: retrieve raw question neighbors, draft the
// SQL in one shot, no masking and no source discovery.
PipelineResult run_rag(const PipelineContext& ctx, const std::string& question,
                       const std::string& query_id, const RetrievalHook* hook = nullptr);

// Re-ranks lookup candidates for one placeholder element.
std::vector<Candidate> rerank_candidates(const std::string& element,
                                         const std::vector<SearchHit>& hits,
                                         const VectorStore& lookup,
                                         const RetrievalConfig& cfg,
                                         bool case_insensitive);

}  // namespace cbrsql
