#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dasf/types.hpp"

namespace dasf {

// Undirected, connected sensor network. Node k owns channels[k] signal channels.
// Edges are stored normalized (a < b), sorted, without duplicates.
struct NetworkGraph {
  std::vector<int> channels;
  std::vector<std::pair<int, int>> edges;

  int node_count() const { return static_cast<int>(channels.size()); }
  int total_channels() const;
  BlockLayout layout() const { return BlockLayout::from_sizes(channels); }
  std::vector<int> neighbors(int k) const;
  std::vector<int> degrees() const;
  bool is_connected() const;

  // Throws on out-of-range or self-loop edges, non-positive channel counts,
  // or a disconnected topology.
  void validate() const;
};

NetworkGraph make_graph(std::vector<int> channels, std::vector<std::pair<int, int>> edges);
NetworkGraph make_path(std::vector<int> channels);
NetworkGraph make_complete(std::vector<int> channels);

// Erdos-Renyi with edge probability p, resampled until connected (bounded retries).
NetworkGraph make_erdos_renyi(std::vector<int> channels, double p, std::uint64_t seed);

// Uniform attachment tree: node k (k>=1) picks a parent among 0..k-1.
NetworkGraph make_random_tree(std::vector<int> channels, std::uint64_t seed);

// Fixed 10-node, three-branch demo tree used in examples and tests. Rooted at
// node 4 it has neighbors {3,5,8} and branch member sets {0,1,2,3}, {5,6,7}, {8,9}.
NetworkGraph make_demo_tree10(int channels_per_node = 5);

// Spanning tree of `g` rooted at `root`, produced by breadth-first search so every
// neighbor of the root keeps its direct link. Tie-breaks visit lower node indices
// first; a nonzero policy_seed shuffles the per-node visit order instead (still
// deterministic for a fixed seed, and root adjacency is preserved either way).
struct PrunedTree {
  int root = 0;
  std::vector<int> parent;                 // -1 at the root
  std::vector<int> order;                  // breadth-first from the root
  std::vector<int> depth;
  std::vector<int> root_neighbors;         // ascending
  std::vector<std::vector<int>> branches;  // per root neighbor: its side of the tree, sorted

  int node_count() const { return static_cast<int>(parent.size()); }
  // Index into root_neighbors of the branch containing k; -1 for the root itself.
  int branch_of(int k) const;
};

PrunedTree prune_to_tree(const NetworkGraph& g, int root, std::uint64_t policy_seed = 0);

// Partition of all non-root nodes by the root neighbor their path passes through.
// Recomputed from parent pointers; branches are disjoint and cover every non-root node.
std::vector<std::vector<int>> subtree_partition(const PrunedTree& t);

// The neighbor of k on the unique path toward the root. Throws for k == root.
int next_hop(const PrunedTree& t, int k);

}  // namespace dasf
