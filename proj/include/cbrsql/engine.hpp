// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "cbrsql/casebase.hpp"
#include "cbrsql/config.hpp"
#include "cbrsql/ehr.hpp"
#include "cbrsql/evalkit.hpp"
#include "cbrsql/idb.hpp"

namespace cbrsql {

// Owns the configured services, datasets and snapshot artifacts, and exposes
// one method per CLI subcommand. Services and artifacts load lazily; indexes
// built by one step stay warm for the next step in the same process. Every
// method returns a JSON summary; artifact files land under paths.out_dir, and
// partially written artifacts are removed when a step fails.
class Engine {
 public:
  explicit Engine(RunConfig config);
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const RunConfig& config() const { return config_; }

  // Masks and indexes the corpus; snapshots out_dir/case_base (masked
  // questions) and out_dir/pair_base (raw questions).
  nlohmann::json retain();

  // Indexes the distinct cell values of the mapped lookup-eligible columns;
  // snapshots out_dir/lookup.
  nlohmann::json build_lookup();

  // Clusters the corpus by masked SQL structure and keeps one representative
  // per cluster plus all noise; writes out_dir/idb/corpus.jsonl and
  // out_dir/idb/clusters.json.
  nlohmann::json build_idb_corpus();

  // Answers one question with "cbr" or "rag". k overrides retrieval.k for
  // this call; a non-empty trace_path receives the full pipeline trace.
  nlohmann::json query(const std::string& question, const std::string& pipeline,
                       std::optional<int> k = std::nullopt,
                       const std::string& trace_path = {});

  // Scores "cbr", "rag" or "both" on paths.eval_dataset; writes
  // out_dir/report.json, report.txt and traces.jsonl. Reports depend only on
  // the config and inputs, so stub-backed runs are byte-reproducible.
  nlohmann::json eval(const std::string& pipeline = "both");

  // Dropout-perturbation comparison for one pipeline; optional overrides
  // replace dropout.p_top / dropout.seed from the config. Writes
  // out_dir/brittleness_<pipeline>.json.
  nlohmann::json brittleness(const std::string& pipeline,
                             std::optional<double> p_top = std::nullopt,
                             std::optional<std::uint64_t> seed = std::nullopt);

  // Entity-tag histogram over the corpus questions.
  nlohmann::json tag_stats();

 private:
  ChatClient& chat();
  Embedder& general();
  Embedder& medical();
  Tagger& tagger();
  const Gazetteer& gazetteer();
  const EhrDb& db();
  const SchemaDescriptor& schema();
  VectorStore& case_base();
  VectorStore& pair_base();
  VectorStore& lookup_store();

  std::map<std::string, std::vector<std::string>> category_columns();
  PipelineContext context_for(const std::string& pipeline);
  PipelineFn pipeline_fn(const std::string& pipeline);

  RunConfig config_;
  std::optional<Gazetteer> gazetteer_;
  std::unique_ptr<ChatClient> chat_;
  std::unique_ptr<Embedder> general_;
  std::unique_ptr<Embedder> medical_;
  std::unique_ptr<Tagger> tagger_;
  std::optional<EhrDb> db_;
  std::optional<SchemaDescriptor> schema_;
  std::optional<VectorStore> case_base_;
  std::optional<VectorStore> pair_base_;
  std::optional<VectorStore> lookup_;
};

}  // namespace cbrsql
