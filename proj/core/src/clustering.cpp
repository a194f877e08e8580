#include "compass/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "compass/error.hpp"
#include "compass/util.hpp"

namespace compass::clustering {

void ClusterParams::validate() const {
  if (min_cluster_size < 2) throw ConfigError("min_cluster_size must be >= 2");
  if (min_samples < 1) throw ConfigError("min_samples must be >= 1");
  if (min_samples > min_cluster_size) throw ConfigError("min_samples must not exceed min_cluster_size");
  if (!(soft_threshold > 0.0 && soft_threshold < 1.0)) throw ConfigError("soft_threshold must be in (0,1)");
  if (!(softmax_temperature > 0.0)) throw ConfigError("softmax_temperature must be > 0");
}

std::string featurize_finding(const pipeline::ErrorFinding& f) {
  return util::collapse_spaces(f.error_type.path + " | " + f.explanation + " | " + f.evidence);
}

namespace {

double lambda_of(double distance) { return 1.0 / std::max(distance, 1.0 / kMaxLambda); }

// Merge tree over points: nodes [0, n) are points, later nodes merge two or
// more earlier components at one distance.
struct MergeNode {
  double weight = 0.0;
  std::size_t size = 1;
  std::vector<std::size_t> children;
};

std::vector<double> pairwise(std::span<const embedding::Vector> points) {
  const auto n = points.size();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      d[i * n + j] = d[j * n + i] = embedding::euclidean(points[i], points[j]);
    }
  }
  return d;
}

struct Edge {
  double w;
  std::size_t a;
  std::size_t b;
};

// Prim over mutual reachability; ties go to the lower vertex index.
std::vector<Edge> mutual_reachability_mst(const std::vector<double>& d, std::size_t n, std::size_t min_samples) {
  const std::size_t k = std::min(min_samples, n);
  std::vector<double> core(n);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(d.begin() + static_cast<std::ptrdiff_t>(i * n), d.begin() + static_cast<std::ptrdiff_t>((i + 1) * n),
              row.begin());
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
    core[i] = row[k - 1];
  }
  auto mrd = [&](std::size_t i, std::size_t j) { return std::max({core[i], core[j], d[i * n + j]}); };

  std::vector<Edge> edges;
  std::vector<bool> in_tree(n, false);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> from(n, 0);
  std::size_t current = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double w = mrd(current, j);
      if (w < best[j]) {
        best[j] = w;
        from[j] = current;
      }
      if (next == n || best[j] < best[next]) next = j;
    }
    in_tree[next] = true;
    edges.push_back({best[next], std::min(from[next], next), std::max(from[next], next)});
    current = next;
  }
  std::sort(edges.begin(), edges.end(),
            [](const Edge& x, const Edge& y) { return std::tie(x.w, x.a, x.b) < std::tie(y.w, y.a, y.b); });
  return edges;
}

std::vector<MergeNode> merge_tree(const std::vector<Edge>& edges, std::size_t n) {
  std::vector<MergeNode> nodes(n);
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::size_t> node_of(n);
  std::iota(node_of.begin(), node_of.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };

  for (std::size_t i = 0; i < edges.size();) {
    std::size_t j = i;
    while (j < edges.size() && edges[j].w == edges[i].w) ++j;
    // Components touched by this weight, captured before merging.
    std::vector<std::pair<std::size_t, std::size_t>> touched;  // (old root, node)
    for (std::size_t e = i; e < j; ++e) {
      for (auto v : {edges[e].a, edges[e].b}) {
        const auto r = find(v);
        touched.emplace_back(r, node_of[r]);
      }
    }
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    for (std::size_t e = i; e < j; ++e) {
      const auto ra = find(edges[e].a);
      const auto rb = find(edges[e].b);
      if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
    }
    std::map<std::size_t, std::vector<std::size_t>> groups;  // new root -> child nodes
    for (const auto& [old_root, node] : touched) groups[find(old_root)].push_back(node);
    for (auto& [root, children] : groups) {
      std::sort(children.begin(), children.end());
      MergeNode m;
      m.weight = edges[i].w;
      m.size = 0;
      for (auto c : children) m.size += nodes[c].size;
      m.children = std::move(children);
      node_of[root] = nodes.size();
      nodes.push_back(std::move(m));
    }
    i = j;
  }
  return nodes;
}

void collect_points(const std::vector<MergeNode>& nodes, std::size_t node, std::size_t n, std::vector<std::size_t>& out) {
  std::vector<std::size_t> stack{node};
  while (!stack.empty()) {
    const auto x = stack.back();
    stack.pop_back();
    if (x < n) {
      out.push_back(x);
    } else {
      for (auto c : nodes[x].children) stack.push_back(c);
    }
  }
}

struct Condensed {
  int parent = -1;
  double birth = 0.0;
  double death = 0.0;
  double stability = 0.0;
  std::vector<int> children;
};

}  // namespace

ClusteringResult hdbscan(std::span<const embedding::Vector> points, const ClusterParams& params) {
  params.validate();
  const auto n = points.size();
  ClusteringResult result;
  result.labels.assign(n, kNoise);
  result.probabilities.assign(n, 0.0);
  if (n == 0) return result;
  for (const auto& p : points) {
    if (p.dim() != points[0].dim()) throw InvariantError("all points must share one dimension");
  }
  if (n < params.min_cluster_size) return result;

  const auto dist = pairwise(points);
  const auto nodes = merge_tree(mutual_reachability_mst(dist, n, params.min_samples), n);
  const auto mcs = params.min_cluster_size;

  std::vector<Condensed> clusters(1);
  std::vector<double> point_lambda(n, 0.0);
  std::vector<int> point_cluster(n, 0);

  auto fall_out = [&](std::size_t node, int c, double lambda) {
    std::vector<std::size_t> pts;
    collect_points(nodes, node, n, pts);
    for (auto p : pts) {
      point_lambda[p] = lambda;
      point_cluster[p] = c;
      clusters[static_cast<std::size_t>(c)].stability += lambda - clusters[static_cast<std::size_t>(c)].birth;
    }
  };

  std::vector<std::pair<std::size_t, int>> stack{{nodes.size() - 1, 0}};
  while (!stack.empty()) {
    auto [node, c] = stack.back();
    stack.pop_back();
    const auto& m = nodes[node];
    const double lambda = lambda_of(m.weight);
    std::vector<std::size_t> big;
    for (auto child : m.children) {
      if (nodes[child].size >= mcs) big.push_back(child);
    }
    for (auto child : m.children) {
      if (nodes[child].size < mcs) fall_out(child, c, lambda);
    }
    const auto ci = static_cast<std::size_t>(c);
    if (big.size() == 1) {
      stack.emplace_back(big.front(), c);
    } else if (big.empty()) {
      clusters[ci].death = lambda;
    } else {
      clusters[ci].death = lambda;
      // Push in reverse so children are created in merge-tree child order.
      std::vector<int> ids;
      for (auto child : big) {
        clusters[ci].stability += static_cast<double>(nodes[child].size) * (lambda - clusters[ci].birth);
        Condensed next;
        next.parent = c;
        next.birth = lambda;
        ids.push_back(static_cast<int>(clusters.size()));
        clusters[ci].children.push_back(ids.back());
        clusters.push_back(next);
      }
      for (std::size_t k = big.size(); k-- > 0;) stack.emplace_back(big[k], ids[k]);
    }
  }

  // Excess of mass: a cluster beats its descendants on ties.
  std::vector<double> best(clusters.size(), 0.0);
  std::vector<bool> keep_self(clusters.size(), true);
  for (std::size_t c = clusters.size(); c-- > 0;) {
    double below = 0.0;
    for (int child : clusters[c].children) below += best[static_cast<std::size_t>(child)];
    if (!clusters[c].children.empty() && below > clusters[c].stability) {
      keep_self[c] = false;
      best[c] = below;
    } else {
      best[c] = clusters[c].stability;
    }
  }
  std::vector<bool> selected(clusters.size(), false);
  std::vector<int> walk{0};
  while (!walk.empty()) {
    const auto c = static_cast<std::size_t>(walk.back());
    walk.pop_back();
    if (keep_self[c]) {
      selected[c] = true;
    } else {
      for (int child : clusters[c].children) walk.push_back(child);
    }
  }

  std::vector<int> owner(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    for (int c = point_cluster[p]; c >= 0; c = clusters[static_cast<std::size_t>(c)].parent) {
      if (selected[static_cast<std::size_t>(c)]) {
        owner[p] = c;
        break;
      }
    }
  }
  std::map<int, double> max_lambda;
  for (std::size_t p = 0; p < n; ++p) {
    if (owner[p] >= 0) max_lambda[owner[p]] = std::max(max_lambda[owner[p]], point_lambda[p]);
  }
  std::map<int, int> label_of;
  for (std::size_t p = 0; p < n; ++p) {
    if (owner[p] < 0) continue;
    auto [it, inserted] = label_of.emplace(owner[p], static_cast<int>(label_of.size()));
    const int label = it->second;
    result.labels[p] = label;
    const double top = max_lambda[owner[p]];
    result.probabilities[p] = top > 0.0 ? std::clamp(point_lambda[p] / top, 0.0, 1.0) : 1.0;
    if (point_lambda[p] == top) result.exemplars[label].push_back(p);
  }
  result.n_clusters = static_cast<int>(label_of.size());
  return result;
}

ClusteringResult soft_assign_noise(std::span<const embedding::Vector> points, ClusteringResult result,
                                   const ClusterParams& params) {
  params.validate();
  if (result.n_clusters < 1) return result;
  if (result.labels.size() != points.size()) throw InvariantError("clustering result does not match the points");
  const auto k = static_cast<std::size_t>(result.n_clusters);
  for (std::size_t p = 0; p < points.size(); ++p) {
    if (result.labels[p] != kNoise) continue;
    std::vector<double> logits(k, -std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < k; ++c) {
      auto it = result.exemplars.find(static_cast<int>(c));
      if (it == result.exemplars.end()) continue;
      double d = std::numeric_limits<double>::infinity();
      for (auto e : it->second) d = std::min(d, embedding::euclidean(points[p], points[e]));
      logits[c] = -d / params.softmax_temperature;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    if (!std::isfinite(top)) continue;
    double z = 0.0;
    for (auto l : logits) z += std::exp(l - top);
    std::size_t arg = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (logits[c] > logits[arg]) arg = c;
    }
    const double prob = std::exp(logits[arg] - top) / z;
    if (prob >= params.soft_threshold) {
      result.labels[p] = static_cast<int>(arg);
      result.probabilities[p] = prob;
      result.soft_assigned.insert(p);
    }
  }
  return result;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw InputError("labelings differ in length");
  const auto n = a.size();
  auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows;
  std::map<int, double> cols;
  for (std::size_t i = 0; i < n; ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  double index = 0.0;
  double sum_rows = 0.0;
  double sum_cols = 0.0;
  for (const auto& [key, v] : table) index += choose2(v);
  for (const auto& [key, v] : rows) sum_rows += choose2(v);
  for (const auto& [key, v] : cols) sum_cols += choose2(v);
  const double total = choose2(static_cast<double>(n));
  if (total == 0.0) return 1.0;
  const double expected = sum_rows * sum_cols / total;
  const double max_index = (sum_rows + sum_cols) / 2.0;
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace compass::clustering
