#include "gpb/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "gpb/error.hpp"
#include "gpb/rng.hpp"

namespace gpb::perturb {
namespace {

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate <= 1.0))
    fail(ErrorCategory::config,
         "perturbation rate must lie in [0, 1], got " + std::to_string(rate));
}

long long budget_of(double rate, long long base) {
  return std::llround(rate * static_cast<double>(base));
}

std::vector<std::pair<int, int>> edge_list(const graphs::Graph& g) {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<size_t>(g.undirected_edges()));
  for (int v = 0; v < g.n; ++v)
    for (int u : g.neighbors(v))
      if (v < u) out.emplace_back(v, u);
  return out;
}

// Move `count` uniformly-chosen elements to the front, in choice order.
template <typename T>
void choose_prefix(std::vector<T>& items, size_t count, Rng& rng) {
  for (size_t i = 0; i < count; ++i) {
    size_t j = i + static_cast<size_t>(rng.below(items.size() - i));
    std::swap(items[i], items[j]);
  }
}

graphs::Graph rebuilt(const graphs::Graph& g,
                      const std::vector<std::pair<int, int>>& edges) {
  graphs::Graph out = graphs::graph_from_edges(g.n, edges, g.x);
  out.node_labels = g.node_labels;
  out.graph_label = g.graph_label;
  return out;
}

}  // namespace

graphs::Graph add_edges(const graphs::Graph& g, double rate, uint64_t seed) {
  check_rate(rate);
  long long m = g.undirected_edges();
  long long pairs = static_cast<long long>(g.n) * (g.n - 1) / 2;
  long long missing = pairs - m;
  long long budget = std::min(budget_of(rate, m), missing);
  std::vector<std::pair<int, int>> edges = edge_list(g);
  if (budget == 0) return rebuilt(g, edges);

  if (budget == missing) {
    for (int v = 0; v < g.n; ++v)
      for (int u = v + 1; u < g.n; ++u)
        if (!g.has_edge(v, u)) edges.emplace_back(v, u);
    return rebuilt(g, edges);
  }

  // budget < missing: draw distinct non-edges by rejection
  Rng rng(seed);
  std::set<std::pair<int, int>> chosen;
  while (static_cast<long long>(chosen.size()) < budget) {
    int v = static_cast<int>(rng.below(static_cast<uint64_t>(g.n)));
    int u = static_cast<int>(rng.below(static_cast<uint64_t>(g.n)));
    if (v == u) continue;
    std::pair<int, int> e{std::min(v, u), std::max(v, u)};
    if (g.has_edge(e.first, e.second)) continue;
    chosen.insert(e);
  }
  edges.insert(edges.end(), chosen.begin(), chosen.end());
  return rebuilt(g, edges);
}

graphs::Graph drop_edges(const graphs::Graph& g, double rate, uint64_t seed) {
  check_rate(rate);
  std::vector<std::pair<int, int>> edges = edge_list(g);
  size_t budget = static_cast<size_t>(
      std::min<long long>(budget_of(rate, static_cast<long long>(edges.size())),
                          static_cast<long long>(edges.size())));
  Rng rng(seed);
  choose_prefix(edges, budget, rng);
  edges.erase(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(budget));
  return rebuilt(g, edges);
}

graphs::Graph mask_features(const graphs::Graph& g, double rate, uint64_t seed) {
  check_rate(rate);
  size_t budget = static_cast<size_t>(
      std::min<long long>(budget_of(rate, g.n), g.n));
  std::vector<int> nodes(static_cast<size_t>(g.n));
  for (int v = 0; v < g.n; ++v) nodes[static_cast<size_t>(v)] = v;
  Rng rng(seed);
  choose_prefix(nodes, budget, rng);
  graphs::Graph out = g;
  for (size_t i = 0; i < budget; ++i) out.x.row(nodes[i]).setZero();
  return out;
}

graphs::Graph knn_rewire(const graphs::Graph& g, int k) {
  if (k < 1) fail(ErrorCategory::config, "k must be at least 1");
  if (k >= g.n)
    fail(ErrorCategory::dimension,
         "k = " + std::to_string(k) + " needs more neighbors than the " +
             std::to_string(g.n) + "-node graph has");
  std::set<std::pair<int, int>> edges;
  std::vector<std::pair<double, int>> order;
  for (int v = 0; v < g.n; ++v) {
    order.clear();
    for (int u = 0; u < g.n; ++u) {
      if (u == v) continue;
      order.emplace_back((g.x.row(v) - g.x.row(u)).norm(), u);
    }
    std::sort(order.begin(), order.end());  // distance, then lower index
    for (int i = 0; i < k; ++i) {
      int u = order[static_cast<size_t>(i)].second;
      edges.emplace(std::min(v, u), std::max(v, u));
    }
  }
  return rebuilt(g, {edges.begin(), edges.end()});
}

std::vector<int> flip_labels(const std::vector<int>& labels, double rate,
                             int class_count, uint64_t seed) {
  check_rate(rate);
  if (class_count < 2)
    fail(ErrorCategory::config, "label flipping needs at least two classes");
  for (int y : labels)
    if (y < 0 || y >= class_count)
      fail(ErrorCategory::dimension,
           "label " + std::to_string(y) + " outside [0, " +
               std::to_string(class_count) + ")");
  size_t budget = static_cast<size_t>(std::min<long long>(
      budget_of(rate, static_cast<long long>(labels.size())),
      static_cast<long long>(labels.size())));
  std::vector<int> nodes(labels.size());
  for (size_t v = 0; v < labels.size(); ++v) nodes[v] = static_cast<int>(v);
  Rng rng(seed);
  choose_prefix(nodes, budget, rng);
  std::vector<int> out = labels;
  for (size_t i = 0; i < budget; ++i) {
    int v = nodes[i];
    int other = static_cast<int>(rng.below(static_cast<uint64_t>(class_count - 1)));
    if (other >= out[static_cast<size_t>(v)]) ++other;  // skip the current class
    out[static_cast<size_t>(v)] = other;
  }
  return out;
}

}  // namespace gpb::perturb
