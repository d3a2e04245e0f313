#include "cone/graph.hpp"

#include <algorithm>
#include <string>

#include "cone/error.hpp"

namespace cone::graph {

Adjacency::Adjacency(std::vector<Index> offsets, std::vector<Index> targets)
    : offsets_(std::move(offsets)), targets_(std::move(targets)) {
  if (offsets_.empty() || offsets_.front() != 0 || offsets_.back() != targets_.size())
    throw GraphError("malformed adjacency offsets");
  if (!std::is_sorted(offsets_.begin(), offsets_.end()))
    throw GraphError("adjacency offsets must be nondecreasing");
  const Index n = num_nodes();
  for (Index t : targets_)
    if (t >= n) throw GraphError("adjacency target out of range");
}

std::span<const Index> Adjacency::neighbors(Index i) const {
  if (i >= num_nodes())
    throw GraphError("node index " + std::to_string(i) + " out of range [0, " +
                     std::to_string(num_nodes()) + ")");
  return {targets_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
}

Index Adjacency::degree(Index i) const { return neighbors(i).size(); }

std::vector<Index> Adjacency::sources() const {
  std::vector<Index> src(targets_.size());
  for (Index i = 0; i < num_nodes(); ++i)
    std::fill(src.begin() + offsets_[i], src.begin() + offsets_[i + 1], i);
  return src;
}

bool Graph::has_edge(Index i, Index j) const {
  auto nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

Graph build_graph(Index n, std::span<const Edge> edge_list) {
  std::vector<Edge> canon;
  canon.reserve(edge_list.size());
  for (auto [i, j] : edge_list) {
    if (i >= n || j >= n)
      throw GraphError("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                       ") out of range for " + std::to_string(n) + " nodes");
    if (i == j) throw GraphError("self-edge at node " + std::to_string(i));
    canon.emplace_back(std::min(i, j), std::max(i, j));
  }
  std::sort(canon.begin(), canon.end());
  canon.erase(std::unique(canon.begin(), canon.end()), canon.end());

  std::vector<Index> offsets(n + 1, 0);
  for (auto [i, j] : canon) {
    ++offsets[i + 1];
    ++offsets[j + 1];
  }
  for (Index i = 0; i < n; ++i) offsets[i + 1] += offsets[i];
  std::vector<Index> targets(offsets.back());
  std::vector<Index> fill(offsets.begin(), offsets.end() - 1);
  // canon is sorted by (i, j), so pushing j into row i and i into row j
  // keeps every row sorted without a second pass.
  for (auto [i, j] : canon) targets[fill[j]++] = i;
  for (auto [i, j] : canon) targets[fill[i]++] = j;

  Graph g;
  g.edges_ = std::move(canon);
  g.adj_ = Adjacency(std::move(offsets), std::move(targets));
  return g;
}

std::span<const Index> neighbors(const Graph& g, Index i) { return g.neighbors(i); }

Adjacency add_self_loops(const Adjacency& adj) {
  const Index n = adj.num_nodes();
  std::vector<Index> offsets(n + 1, 0);
  std::vector<Index> targets;
  targets.reserve(adj.num_entries() + n);
  for (Index i = 0; i < n; ++i) {
    auto nb = adj.neighbors(i);
    auto pos = std::lower_bound(nb.begin(), nb.end(), i);
    targets.insert(targets.end(), nb.begin(), pos);
    targets.push_back(i);
    if (pos != nb.end() && *pos == i) ++pos;
    targets.insert(targets.end(), pos, nb.end());
    offsets[i + 1] = targets.size();
  }
  return Adjacency(std::move(offsets), std::move(targets));
}

}  // namespace cone::graph
