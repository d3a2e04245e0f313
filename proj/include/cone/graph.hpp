#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace cone::graph {

using Index = std::size_t;
using Edge = std::pair<Index, Index>;

// Compressed neighbor lists. Each row is sorted by target index.
class Adjacency {
 public:
  Adjacency() = default;
  Adjacency(std::vector<Index> offsets, std::vector<Index> targets);

  Index num_nodes() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  Index num_entries() const { return targets_.size(); }
  std::span<const Index> neighbors(Index i) const;
  Index degree(Index i) const;

  const std::vector<Index>& offsets() const { return offsets_; }
  const std::vector<Index>& targets() const { return targets_; }
  // Row index of every entry, i.e. the segment each target belongs to.
  std::vector<Index> sources() const;

  bool operator==(const Adjacency&) const = default;

 private:
  std::vector<Index> offsets_{0};
  std::vector<Index> targets_;
};

// Immutable undirected graph without self-edges.
class Graph {
 public:
  Graph() = default;

  Index num_nodes() const { return adj_.num_nodes(); }
  Index num_edges() const { return edges_.size(); }
  // Canonical edge list: i < j, lexicographically sorted.
  const std::vector<Edge>& edges() const { return edges_; }
  const Adjacency& adjacency() const { return adj_; }

  std::span<const Index> neighbors(Index i) const { return adj_.neighbors(i); }
  Index degree(Index i) const { return adj_.degree(i); }
  bool has_edge(Index i, Index j) const;

  bool operator==(const Graph&) const = default;

  friend Graph build_graph(Index n, std::span<const Edge> edge_list);

 private:
  std::vector<Edge> edges_;
  Adjacency adj_;
};

// Accepts duplicates and both orientations. Throws GraphError on an
// out-of-range index or a self-edge.
Graph build_graph(Index n, std::span<const Edge> edge_list);
inline Graph build_graph(Index n, const std::vector<Edge>& edge_list) {
  return build_graph(n, std::span<const Edge>(edge_list));
}

std::span<const Index> neighbors(const Graph& g, Index i);

// Every row gains its own node exactly once. Idempotent.
Adjacency add_self_loops(const Adjacency& adj);
inline Adjacency add_self_loops(const Graph& g) { return add_self_loops(g.adjacency()); }

}  // namespace cone::graph
