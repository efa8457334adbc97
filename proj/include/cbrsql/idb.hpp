// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbrsql/datamodel.hpp"
#include "cbrsql/services.hpp"

namespace cbrsql {

inline constexpr int kNoiseLabel = -1;

struct ClusteringConfig {
  int min_cluster_size = 2;
  // Clusters whose dendrogram birth distance falls below epsilon are merged
  // upward (density-based cluster selection epsilon).
  double epsilon = 0.10;
  // Neighborhood size for core distances; <= 0 means min_cluster_size.
  int min_samples = 0;
  std::uint64_t selection_seed = 0;

  int effective_min_samples() const {
    return min_samples > 0 ? min_samples : min_cluster_size;
  }
  void validate() const {
    if (min_cluster_size < 2) throw ConfigError("min_cluster_size must be >= 2");
    if (!(epsilon > 0.0)) throw ConfigError("cluster selection epsilon must be > 0");
  }
};

// HDBSCAN over cosine distance: core distances, mutual reachability graph,
// minimum spanning tree, condensed cluster tree, excess-of-mass selection,
// then epsilon-based upward merging. Returns one label per point,
// kNoiseLabel for noise; labels are dense and deterministic.
std::vector<int> hdbscan_labels(const std::vector<std::vector<float>>& points,
                                const ClusteringConfig& config);

struct IdbStats {
  std::size_t input_pairs = 0;
  std::size_t cluster_count = 0;
  std::size_t noise_count = 0;
  std::size_t retained_pairs = 0;
  double reduction_ratio = 0.0;  // retained / input
  int min_samples_used = 0;

  nlohmann::json to_json() const;
};

struct IdbResult {
  // One uniformly chosen representative per cluster plus every noise pair,
  // in the input corpus order.
  std::vector<QuestionSqlPair> retained;
  // pair id -> cluster label (kNoiseLabel for noise), input order.
  std::vector<std::pair<std::string, int>> assignments;
  std::vector<std::string> masked_sql;  // structure key per input pair
  IdbStats stats;
};

// Masks every gold SQL's condition values by column category (falling back
// to the VALUE tag for unmapped columns), embeds the masked SQL text, and
// clusters it. category_columns maps CATEGORY -> ["TABLE.COLUMN", ...].
IdbResult build_idb(const std::vector<QuestionSqlPair>& pairs,
                    const std::map<std::string, std::vector<std::string>>&
                        category_columns,
                    Embedder& general_embedder, const ClusteringConfig& config);

// The structure key used for clustering, exposed for tests.
std::string mask_sql_by_schema(const std::string& sql_text,
                               const std::map<std::string, std::string>&
                                   column_to_category);

}  // namespace cbrsql
