#include "dasf/graph.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <random>

namespace dasf {

int NetworkGraph::total_channels() const {
  return std::accumulate(channels.begin(), channels.end(), 0);
}

std::vector<int> NetworkGraph::neighbors(int k) const {
  std::vector<int> out;
  for (auto [a, b] : edges) {
    if (a == k) out.push_back(b);
    if (b == k) out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> NetworkGraph::degrees() const {
  std::vector<int> deg(channels.size(), 0);
  for (auto [a, b] : edges) {
    deg[static_cast<size_t>(a)]++;
    deg[static_cast<size_t>(b)]++;
  }
  return deg;
}

bool NetworkGraph::is_connected() const {
  const int K = node_count();
  if (K == 0) return false;
  std::vector<char> seen(static_cast<size_t>(K), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : neighbors(u)) {
      if (!seen[static_cast<size_t>(v)]) {
        seen[static_cast<size_t>(v)] = 1;
        reached++;
        q.push(v);
      }
    }
  }
  return reached == K;
}

void NetworkGraph::validate() const {
  const int K = node_count();
  if (K == 0) throw Error("graph: no nodes");
  for (int m : channels)
    if (m <= 0) throw Error("graph: channel counts must be positive");
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= K || b >= K) throw Error("graph: edge endpoint out of range");
    if (a == b) throw Error("graph: self-loop");
    if (a > b) throw Error("graph: edges must be stored as (low, high)");
  }
  for (size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i - 1] < edges[i])) throw Error("graph: edges must be sorted and unique");
  if (!is_connected()) throw Error("graph: not connected");
}

NetworkGraph make_graph(std::vector<int> channels, std::vector<std::pair<int, int>> edges) {
  for (auto& [a, b] : edges)
    if (a > b) std::swap(a, b);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  NetworkGraph g{std::move(channels), std::move(edges)};
  g.validate();
  return g;
}

NetworkGraph make_path(std::vector<int> channels) {
  std::vector<std::pair<int, int>> edges;
  for (int k = 0; k + 1 < static_cast<int>(channels.size()); ++k) edges.emplace_back(k, k + 1);
  return make_graph(std::move(channels), std::move(edges));
}

NetworkGraph make_complete(std::vector<int> channels) {
  std::vector<std::pair<int, int>> edges;
  const int K = static_cast<int>(channels.size());
  for (int a = 0; a < K; ++a)
    for (int b = a + 1; b < K; ++b) edges.emplace_back(a, b);
  return make_graph(std::move(channels), std::move(edges));
}

NetworkGraph make_erdos_renyi(std::vector<int> channels, double p, std::uint64_t seed) {
  if (p <= 0.0 || p > 1.0) throw Error("erdos-renyi: p must lie in (0, 1]");
  const int K = static_cast<int>(channels.size());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  constexpr int kMaxResamples = 1000;
  for (int attempt = 0; attempt < kMaxResamples; ++attempt) {
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < K; ++a)
      for (int b = a + 1; b < K; ++b)
        if (unif(rng) < p) edges.emplace_back(a, b);
    NetworkGraph g{channels, std::move(edges)};
    if (g.is_connected()) {
      g.validate();
      return g;
    }
  }
  throw Error("erdos-renyi: failed to sample a connected graph");
}

NetworkGraph make_random_tree(std::vector<int> channels, std::uint64_t seed) {
  const int K = static_cast<int>(channels.size());
  std::mt19937_64 rng(seed);
  std::vector<std::pair<int, int>> edges;
  for (int k = 1; k < K; ++k) {
    std::uniform_int_distribution<int> pick(0, k - 1);
    edges.emplace_back(pick(rng), k);
  }
  return make_graph(std::move(channels), std::move(edges));
}

NetworkGraph make_demo_tree10(int channels_per_node) {
  std::vector<std::pair<int, int>> edges = {{0, 2}, {1, 2}, {2, 3}, {3, 4}, {4, 5},
                                            {5, 6}, {6, 7}, {4, 8}, {8, 9}};
  return make_graph(std::vector<int>(10, channels_per_node), std::move(edges));
}

int PrunedTree::branch_of(int k) const {
  if (k == root) return -1;
  for (size_t b = 0; b < branches.size(); ++b)
    if (std::binary_search(branches[b].begin(), branches[b].end(), k)) return static_cast<int>(b);
  throw Error("pruned tree: node not covered by any branch");
}

PrunedTree prune_to_tree(const NetworkGraph& g, int root, std::uint64_t policy_seed) {
  g.validate();
  const int K = g.node_count();
  if (root < 0 || root >= K) throw Error("prune: root out of range");

  PrunedTree t;
  t.root = root;
  t.parent.assign(static_cast<size_t>(K), -1);
  t.depth.assign(static_cast<size_t>(K), 0);
  std::vector<char> seen(static_cast<size_t>(K), 0);
  std::mt19937_64 rng(policy_seed);

  std::queue<int> frontier;
  frontier.push(root);
  seen[static_cast<size_t>(root)] = 1;
  while (!frontier.empty()) {
    int u = frontier.front();
    frontier.pop();
    t.order.push_back(u);
    std::vector<int> next = g.neighbors(u);  // ascending by construction
    if (policy_seed != 0) std::shuffle(next.begin(), next.end(), rng);
    for (int v : next) {
      if (seen[static_cast<size_t>(v)]) continue;
      seen[static_cast<size_t>(v)] = 1;
      t.parent[static_cast<size_t>(v)] = u;
      t.depth[static_cast<size_t>(v)] = t.depth[static_cast<size_t>(u)] + 1;
      frontier.push(v);
    }
  }
  if (static_cast<int>(t.order.size()) != K) throw Error("prune: graph not connected");

  t.root_neighbors = g.neighbors(root);  // all depth-1 children by BFS from the root
  t.branches = subtree_partition(t);
  return t;
}

std::vector<std::vector<int>> subtree_partition(const PrunedTree& t) {
  std::vector<int> root_children;
  for (int k = 0; k < t.node_count(); ++k)
    if (t.parent[static_cast<size_t>(k)] == t.root) root_children.push_back(k);
  std::sort(root_children.begin(), root_children.end());

  std::vector<std::vector<int>> parts(root_children.size());
  for (int k = 0; k < t.node_count(); ++k) {
    if (k == t.root) continue;
    int walk = k;
    while (t.parent[static_cast<size_t>(walk)] != t.root) walk = t.parent[static_cast<size_t>(walk)];
    auto it = std::lower_bound(root_children.begin(), root_children.end(), walk);
    parts[static_cast<size_t>(it - root_children.begin())].push_back(k);
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

int next_hop(const PrunedTree& t, int k) {
  if (k == t.root) throw Error("next_hop: undefined at the root");
  if (k < 0 || k >= t.node_count()) throw Error("next_hop: node out of range");
  return t.parent[static_cast<size_t>(k)];
}

}  // namespace dasf
