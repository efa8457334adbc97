// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbrsql/datamodel.hpp"
#include "cbrsql/ehr.hpp"
#include "cbrsql/inference.hpp"

namespace cbrsql {

struct MetricReport {
  std::size_t n = 0;
  std::size_t n_exec = 0;
  std::size_t n_lf = 0;
  double acc_exec = 0.0;
  double acc_lf = 0.0;
};

// Per-aspect accuracy over the clause decomposition: aggregation operators,
// aggregation columns, table set, condition column+operator pairs, and
// condition values. An unparsable prediction scores false on every aspect.
struct BreakdownReport {
  double agg_op = 0.0;
  double agg_col = 0.0;
  double table = 0.0;
  double con_col_op = 0.0;
  double con_val = 0.0;
  std::size_t n = 0;
};

// Rank-weighted exemplar dropout. Rank 1 (the best hit) drops with p_top and
// the weight decays linearly to zero at rank k: p_i = p_top * (k-i) / (k-1).
// With k = 1 the single survivor uses p_top directly.
struct DropoutPolicy {
  double p_top = 1.0;
  int k = 5;
  std::uint64_t seed = 0;
  int trials = 1;

  void validate() const {
    if (p_top < 0.0 || p_top > 1.0) throw ConfigError("p_top must be within [0, 1]");
    if (k < 1) throw ConfigError("dropout k must be >= 1");
    if (trials < 1) throw ConfigError("dropout trials must be >= 1");
  }
};

std::vector<double> rank_dropout_probs(int k, double p_top);

// Drops each retrieved hit independently with its rank probability. The RNG
// stream is a pure function of (policy.seed, query_id, trial), so identical
// inputs reproduce identical survivor sets.
std::vector<SearchHit> apply_dropout(const std::vector<SearchHit>& hits,
                                     const DropoutPolicy& policy,
                                     const std::string& query_id, int trial);

// Execution accuracy: run both queries on the database and compare result
// multisets (column arity must match, column names are ignored, text compares
// case-sensitively). A failing prediction scores false; a failing gold query
// raises EvalError.
bool exec_match(const sql::SqlQuery& pred, const sql::SqlQuery& gold, const EhrDb& db);

// Logical-form accuracy over canonicalized trees.
bool lf_match(const sql::SqlQuery& pred, const sql::SqlQuery& gold);

struct PerQueryResult {
  std::string id;
  std::string pred_sql;  // canonical text; empty when the pipeline failed
  bool exec_correct = false;
  bool lf_correct = false;
  bool strict_text_match = false;
  bool aspects[5] = {false, false, false, false, false};
  std::string error;
  nlohmann::json trace;
  UsageRecord usage;
};

struct EvalReport {
  std::string label;
  MetricReport metrics;
  BreakdownReport breakdown;
  UsageRecord usage_total;
  std::size_t pipeline_errors = 0;
  double strict_text_accuracy = 0.0;
  std::vector<PerQueryResult> per_query;

  nlohmann::json to_json(bool include_traces = false) const;
  std::string to_text_table() const;
};

using PipelineFn =
    std::function<PipelineResult(const QuestionSqlPair&, const RetrievalHook*)>;

// Runs the pipeline over every pair and scores it. Requires n >= 1.
EvalReport evaluate(const PipelineFn& pipeline, const std::vector<QuestionSqlPair>& dataset,
                    const EhrDb& db, const std::string& label,
                    const RetrievalHook* hook = nullptr);

struct BrittlenessReport {
  MetricReport original;
  // Mean accuracy across trials under dropout, and the per-trial values.
  double acc_exec_drop = 0.0;
  double acc_lf_drop = 0.0;
  std::vector<double> trial_acc_exec;
  std::vector<double> trial_acc_lf;
  // delta = original accuracy - mean dropped accuracy, by definition.
  double delta_exec = 0.0;
  double delta_lf = 0.0;
  DropoutPolicy policy;

  nlohmann::json to_json() const;
};

// Evaluates once untouched and once per trial under dropout.
BrittlenessReport brittleness(const PipelineFn& pipeline,
                              const std::vector<QuestionSqlPair>& dataset, const EhrDb& db,
                              const DropoutPolicy& policy, const std::string& label);

}  // namespace cbrsql
