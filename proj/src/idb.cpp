// Copyright the cbrsql authors. Licensed under the terms of the Apache 2.0 license.
// See LICENSE in the project root.
#include "cbrsql/idb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cbrsql/sql.hpp"

namespace cbrsql {

using nlohmann::json;

namespace {

// Lambda cap standing in for "infinite density" at zero distance; finite so
// stability arithmetic stays well-behaved.
constexpr double kMaxLambda = 1e12;

double lambda_of(double dist) { return dist > 1e-12 ? 1.0 / dist : kMaxLambda; }

struct MstEdge {
  int a = 0, b = 0;
  double w = 0.0;
};

// Single-linkage dendrogram node over mutual reachability distances.
struct DendroNode {
  int left = 0, right = 0;  // < n: point, >= n: node index
  double dist = 0.0;
  int size = 0;
};

// Condensed tree edge: parent cluster -> child (cluster id >= n or point).
struct CondensedEdge {
  int parent = 0;
  int child = 0;
  double lambda = 0.0;
  int size = 0;
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  int find(int x) {
    while (parent_[static_cast<std::size_t>(x)] != x) {
      parent_[static_cast<std::size_t>(x)] =
          parent_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(x)])];
      x = parent_[static_cast<std::size_t>(x)];
    }
    return x;
  }
  // Attaches the root of `child` beneath the root of `parent`.
  void attach(int parent, int child) {
    parent_[static_cast<std::size_t>(find(child))] = find(parent);
  }

 private:
  std::vector<int> parent_;
};

}  // namespace

std::vector<int> hdbscan_labels(const std::vector<std::vector<float>>& points,
                                const ClusteringConfig& config) {
  config.validate();
  const int n = static_cast<int>(points.size());
  std::vector<int> labels(static_cast<std::size_t>(n), kNoiseLabel);
  if (n < 2) return labels;
  const std::size_t dim = points[0].size();
  for (const auto& p : points)
    if (p.size() != dim) throw ConfigError("clustering points must share one dimension");

  auto dist = [&](int i, int j) {
    const auto& a = points[static_cast<std::size_t>(i)];
    const auto& b = points[static_cast<std::size_t>(j)];
    double dot = 0.0;
    for (std::size_t d = 0; d < dim; ++d)
      dot += static_cast<double>(a[d]) * static_cast<double>(b[d]);
    return std::max(0.0, 1.0 - dot);
  };

  // Core distance: distance to the min_samples-th nearest neighbor, the
  // point itself included.
  const int ms = std::min(config.effective_min_samples(), n);
  std::vector<double> core(static_cast<std::size_t>(n), 0.0);
  {
    std::vector<double> row(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = dist(i, j);
      std::nth_element(row.begin(), row.begin() + (ms - 1), row.end());
      core[static_cast<std::size_t>(i)] = row[static_cast<std::size_t>(ms - 1)];
    }
  }
  auto mreach = [&](int i, int j) {
    return std::max({core[static_cast<std::size_t>(i)], core[static_cast<std::size_t>(j)],
                     dist(i, j)});
  };

  // Prim MST over the complete mutual reachability graph.
  std::vector<MstEdge> edges;
  {
    std::vector<bool> in_tree(static_cast<std::size_t>(n), false);
    std::vector<double> best(static_cast<std::size_t>(n));
    std::vector<int> from(static_cast<std::size_t>(n), 0);
    in_tree[0] = true;
    for (int j = 1; j < n; ++j) best[static_cast<std::size_t>(j)] = mreach(0, j);
    for (int step = 1; step < n; ++step) {
      int pick = -1;
      for (int j = 0; j < n; ++j) {
        if (in_tree[static_cast<std::size_t>(j)]) continue;
        if (pick < 0 || best[static_cast<std::size_t>(j)] <
                            best[static_cast<std::size_t>(pick)])
          pick = j;
      }
      edges.push_back({from[static_cast<std::size_t>(pick)], pick,
                       best[static_cast<std::size_t>(pick)]});
      in_tree[static_cast<std::size_t>(pick)] = true;
      for (int j = 0; j < n; ++j) {
        if (in_tree[static_cast<std::size_t>(j)]) continue;
        double w = mreach(pick, j);
        if (w < best[static_cast<std::size_t>(j)]) {
          best[static_cast<std::size_t>(j)] = w;
          from[static_cast<std::size_t>(j)] = pick;
        }
      }
    }
  }
  std::sort(edges.begin(), edges.end(), [](const MstEdge& a, const MstEdge& b) {
    if (a.w != b.w) return a.w < b.w;
    int amin = std::min(a.a, a.b), bmin = std::min(b.a, b.b);
    if (amin != bmin) return amin < bmin;
    return std::max(a.a, a.b) < std::max(b.a, b.b);
  });

  // Merge points bottom-up into the single-linkage dendrogram.
  std::vector<DendroNode> nodes;  // node id = n + index
  {
    UnionFind uf(static_cast<std::size_t>(2 * n - 1));
    std::vector<int> root_node(static_cast<std::size_t>(2 * n - 1));
    std::iota(root_node.begin(), root_node.end(), 0);
    std::vector<int> sizes(static_cast<std::size_t>(2 * n - 1), 1);
    for (const auto& e : edges) {
      int ra = uf.find(e.a), rb = uf.find(e.b);
      int node_id = n + static_cast<int>(nodes.size());
      nodes.push_back({root_node[static_cast<std::size_t>(ra)],
                       root_node[static_cast<std::size_t>(rb)], e.w,
                       sizes[static_cast<std::size_t>(ra)] +
                           sizes[static_cast<std::size_t>(rb)]});
      uf.attach(ra, rb);
      int r = uf.find(ra);
      root_node[static_cast<std::size_t>(r)] = node_id;
      sizes[static_cast<std::size_t>(r)] =
          nodes.back().size;
    }
  }

  // Condense: walk top-down; a child side smaller than min_cluster_size
  // spills its points at the current lambda, a large side either keeps the
  // parent's cluster id (single survivor) or starts a new cluster (split).
  const int root_node_id = n + static_cast<int>(nodes.size()) - 1;
  const int root_cluster = n;
  int next_cluster = n + 1;
  std::vector<CondensedEdge> condensed;
  std::vector<int> point_size(static_cast<std::size_t>(n), 1);
  auto node_size = [&](int id) {
    return id < n ? 1 : nodes[static_cast<std::size_t>(id - n)].size;
  };
  auto leaf_points = [&](int id) {
    std::vector<int> out, stack{id};
    while (!stack.empty()) {
      int cur = stack.back();
      stack.pop_back();
      if (cur < n) {
        out.push_back(cur);
      } else {
        const auto& nd = nodes[static_cast<std::size_t>(cur - n)];
        stack.push_back(nd.left);
        stack.push_back(nd.right);
      }
    }
    return out;
  };
  {
    struct Item {
      int node_id;
      int cluster;
    };
    std::vector<Item> stack{{root_node_id, root_cluster}};
    while (!stack.empty()) {
      Item item = stack.back();
      stack.pop_back();
      if (item.node_id < n) continue;  // single points were spilled by parents
      const auto& nd = nodes[static_cast<std::size_t>(item.node_id - n)];
      const double lambda = lambda_of(nd.dist);
      const int ls = node_size(nd.left), rs = node_size(nd.right);
      const bool left_big = ls >= config.min_cluster_size;
      const bool right_big = rs >= config.min_cluster_size;
      if (left_big && right_big) {
        int lc = next_cluster++;
        condensed.push_back({item.cluster, lc, lambda, ls});
        int rc = next_cluster++;
        condensed.push_back({item.cluster, rc, lambda, rs});
        stack.push_back({nd.left, lc});
        stack.push_back({nd.right, rc});
      } else if (!left_big && !right_big) {
        for (int p : leaf_points(nd.left)) condensed.push_back({item.cluster, p, lambda, 1});
        for (int p : leaf_points(nd.right))
          condensed.push_back({item.cluster, p, lambda, 1});
      } else {
        const int small = left_big ? nd.right : nd.left;
        const int big = left_big ? nd.left : nd.right;
        for (int p : leaf_points(small)) condensed.push_back({item.cluster, p, lambda, 1});
        stack.push_back({big, item.cluster});
      }
    }
  }

  // Stability per cluster: sum over children of (lambda_leave - lambda_birth)
  // weighted by child size.
  std::map<int, double> birth;  // cluster id -> birth lambda
  birth[root_cluster] = 0.0;
  for (const auto& e : condensed)
    if (e.child >= n) birth[e.child] = e.lambda;
  std::map<int, double> stability;
  for (const auto& e : condensed) {
    double b = birth.count(e.parent) ? birth[e.parent] : 0.0;
    stability[e.parent] += (e.lambda - b) * static_cast<double>(e.size);
  }
  std::map<int, std::vector<int>> cluster_children;
  for (const auto& e : condensed)
    if (e.child >= n) cluster_children[e.parent].push_back(e.child);

  // Excess-of-mass: bottom-up (ids descend toward the root), a parent keeps
  // itself only when at least as stable as its selected subtree.
  std::map<int, bool> selected;
  std::vector<int> cluster_ids;
  for (const auto& [cid, _] : stability)
    if (cid != root_cluster) cluster_ids.push_back(cid);
  for (const auto& [cid, _] : birth)
    if (cid != root_cluster && !stability.count(cid)) cluster_ids.push_back(cid);
  std::sort(cluster_ids.begin(), cluster_ids.end(), std::greater<>());
  for (int cid : cluster_ids) selected[cid] = true;
  for (int cid : cluster_ids) {
    double subtree = 0.0;
    for (int ch : cluster_children[cid]) subtree += stability[ch];
    if (cluster_children[cid].empty()) continue;
    if (subtree > stability[cid]) {
      selected[cid] = false;
      stability[cid] = subtree;
    } else {
      // Deselect every cluster strictly below.
      std::vector<int> stack = cluster_children[cid];
      while (!stack.empty()) {
        int cur = stack.back();
        stack.pop_back();
        selected[cur] = false;
        for (int ch : cluster_children[cur]) stack.push_back(ch);
      }
    }
  }

  // Epsilon merge: a selected cluster born closer than epsilon climbs to its
  // first ancestor born at >= epsilon (never the root).
  std::map<int, int> parent_of;
  for (const auto& e : condensed)
    if (e.child >= n) parent_of[e.child] = e.parent;
  if (config.epsilon > 0.0) {
    std::map<int, bool> merged_selection;
    for (const auto& [cid, sel] : selected) {
      if (!sel) continue;
      int cur = cid;
      double eps = 1.0 / birth[cur];
      while (eps < config.epsilon) {
        auto it = parent_of.find(cur);
        if (it == parent_of.end() || it->second == root_cluster) break;
        cur = it->second;
        eps = 1.0 / birth[cur];
      }
      merged_selection[cur] = true;
    }
    selected.clear();
    for (const auto& [cid, sel] : merged_selection) selected[cid] = sel;
  }

  std::vector<int> chosen;
  for (const auto& [cid, sel] : selected)
    if (sel) chosen.push_back(cid);
  std::sort(chosen.begin(), chosen.end());

  if (chosen.empty()) {
    // No cluster below the root survived; treat the root itself as the lone
    // candidate cluster and keep the points dense enough for epsilon.
    const double min_lambda = 1.0 / config.epsilon;
    bool any = false;
    for (const auto& e : condensed) {
      if (e.child >= n || e.parent != root_cluster) continue;
      if (e.lambda >= min_lambda) {
        labels[static_cast<std::size_t>(e.child)] = 0;
        any = true;
      }
    }
    if (!any) std::fill(labels.begin(), labels.end(), kNoiseLabel);
    return labels;
  }

  // Label: walk each point's condensed ancestry to the nearest selected
  // cluster; points that reach the root unselected are noise.
  std::map<int, int> cluster_label;
  for (std::size_t i = 0; i < chosen.size(); ++i)
    cluster_label[chosen[i]] = static_cast<int>(i);
  std::map<int, int> point_parent;
  for (const auto& e : condensed)
    if (e.child < n) point_parent[e.child] = e.parent;
  for (int p = 0; p < n; ++p) {
    auto it = point_parent.find(p);
    int cur = it == point_parent.end() ? root_cluster : it->second;
    int label = kNoiseLabel;
    while (true) {
      auto found = cluster_label.find(cur);
      if (found != cluster_label.end()) {
        label = found->second;
        break;
      }
      if (cur == root_cluster) break;
      auto up = parent_of.find(cur);
      cur = up == parent_of.end() ? root_cluster : up->second;
    }
    labels[static_cast<std::size_t>(p)] = label;
  }
  (void)point_size;
  return labels;
}

json IdbStats::to_json() const {
  return json{{"input_pairs", input_pairs},
              {"cluster_count", cluster_count},
              {"noise_count", noise_count},
              {"retained_pairs", retained_pairs},
              {"reduction_ratio", reduction_ratio},
              {"min_samples_used", min_samples_used}};
}

std::string mask_sql_by_schema(
    const std::string& sql_text,
    const std::map<std::string, std::string>& column_to_category) {
  sql::SqlQuery query = sql::parse_sql(sql_text);
  std::map<std::string, int> counts;
  for (auto& cond : query.conditions) {
    if (cond.value.kind == sql::Literal::Kind::Mask) continue;
    std::string key = to_upper(cond.column.table) + "." + to_upper(cond.column.column);
    auto it = column_to_category.find(key);
    const std::string tag = it != column_to_category.end() ? it->second : "VALUE";
    cond.value.kind = sql::Literal::Kind::Mask;
    cond.value.text.clear();
    cond.value.mask_tag = tag;
    cond.value.mask_index = ++counts[tag];
  }
  return sql::render(query);
}

IdbResult build_idb(const std::vector<QuestionSqlPair>& pairs,
                    const std::map<std::string, std::vector<std::string>>&
                        category_columns,
                    Embedder& general_embedder, const ClusteringConfig& config) {
  config.validate();
  IdbResult result;
  result.stats.input_pairs = pairs.size();
  result.stats.min_samples_used = config.effective_min_samples();

  std::map<std::string, std::string> column_to_category;
  for (const auto& [category, columns] : category_columns)
    for (const auto& qualified : columns)
      column_to_category[to_upper(qualified)] = category;

  for (const auto& pair : pairs)
    result.masked_sql.push_back(mask_sql_by_schema(pair.sql, column_to_category));

  if (pairs.size() < static_cast<std::size_t>(config.min_cluster_size)) {
    // Too small to cluster; everything is noise and everything is retained.
    for (const auto& pair : pairs) result.assignments.emplace_back(pair.id, kNoiseLabel);
    result.retained = pairs;
    result.stats.noise_count = pairs.size();
    result.stats.retained_pairs = pairs.size();
    result.stats.reduction_ratio =
        pairs.empty() ? 0.0
                      : static_cast<double>(result.retained.size()) /
                            static_cast<double>(pairs.size());
    return result;
  }

  std::vector<Embedding> embedded = general_embedder.embed_batch(result.masked_sql);
  std::vector<std::vector<float>> points;
  points.reserve(embedded.size());
  for (auto& e : embedded) {
    l2_normalize(e.values);
    points.push_back(std::move(e.values));
  }
  std::vector<int> labels = hdbscan_labels(points, config);

  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    result.assignments.emplace_back(pairs[i].id, labels[i]);
    if (labels[i] != kNoiseLabel) members[labels[i]].push_back(i);
  }

  // One uniformly random representative per cluster, drawn from a stream
  // keyed by the selection seed and the cluster's member ids so the choice
  // is independent of input permutation.
  std::vector<bool> keep(pairs.size(), false);
  std::size_t noise = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (labels[i] == kNoiseLabel) {
      keep[i] = true;
      ++noise;
    }
  for (auto& [label, idxs] : members) {
    std::vector<std::string> ids;
    for (std::size_t i : idxs) ids.push_back(pairs[i].id);
    std::sort(ids.begin(), ids.end());
    std::uint64_t h = kFnvOffset;
    for (const auto& id : ids) {
      h = fnv1a64(id, h);
      h = fnv1a64("\x1f", h);
    }
    std::mt19937_64 gen(mix_seed(config.selection_seed, h));
    const std::string& chosen_id = ids[gen() % ids.size()];
    for (std::size_t i : idxs)
      if (pairs[i].id == chosen_id) keep[i] = true;
  }
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (keep[i]) result.retained.push_back(pairs[i]);

  result.stats.cluster_count = members.size();
  result.stats.noise_count = noise;
  result.stats.retained_pairs = result.retained.size();
  result.stats.reduction_ratio = static_cast<double>(result.retained.size()) /
                                 static_cast<double>(pairs.size());
  return result;
}

}  // namespace cbrsql
