#include "gpb/synthetic.hpp"

#include <utility>

#include "gpb/error.hpp"
#include "gpb/rng.hpp"

namespace gpb::synth {
namespace {

Eigen::MatrixXd noisy_features(int n, int d, double mean, double sigma,
                               Rng& rng) {
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = mean + sigma * rng.gaussian();
  return x;
}

}  // namespace

std::vector<graphs::Graph> separable_two_class(int count, uint64_t seed) {
  if (count < 1) fail(ErrorCategory::config, "graph count must be positive");
  Rng rng(seed);
  std::vector<graphs::Graph> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    int label = i % 2;  // alternate so every prefix stays near-balanced
    int n = 6 + static_cast<int>(rng.below(7));
    std::vector<std::pair<int, int>> edges;
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v)
        if (rng.uniform() < 0.3) edges.emplace_back(u, v);
    graphs::Graph g = graphs::graph_from_edges(
        n, edges, noisy_features(n, 4, label == 0 ? -1.0 : 1.0, 0.5, rng));
    g.graph_label = static_cast<double>(label);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<graphs::Graph> feature_mean_regression(int count, uint64_t seed) {
  if (count < 1) fail(ErrorCategory::config, "graph count must be positive");
  Rng rng(seed);
  std::vector<graphs::Graph> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    int n = 5 + static_cast<int>(rng.below(6));
    std::vector<std::pair<int, int>> edges;
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v)
        if (rng.uniform() < 0.3) edges.emplace_back(u, v);
    Eigen::MatrixXd x(n, 3);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < 3; ++c) x(r, c) = rng.uniform(-1.0, 1.0);
    graphs::Graph g = graphs::graph_from_edges(n, edges, x);
    g.graph_label = x.col(0).mean();
    out.push_back(std::move(g));
  }
  return out;
}

graphs::Graph two_community_graph(int community_size, uint64_t seed) {
  if (community_size < 2)
    fail(ErrorCategory::config, "community size must be at least 2");
  Rng rng(seed);
  int s = community_size, n = 2 * s;
  std::vector<std::pair<int, int>> edges;
  for (int c = 0; c < 2; ++c)
    for (int u = c * s; u < (c + 1) * s; ++u)
      for (int v = u + 1; v < (c + 1) * s; ++v) edges.emplace_back(u, v);
  edges.emplace_back(s - 1, s);  // the single bridge
  Eigen::MatrixXd x(n, 4);
  for (int v = 0; v < n; ++v) {
    double mean = v < s ? -1.0 : 1.0;
    for (int j = 0; j < 4; ++j) x(v, j) = mean + rng.gaussian();
  }
  graphs::Graph g = graphs::graph_from_edges(n, edges, std::move(x));
  g.node_labels.resize(static_cast<size_t>(n));
  for (int v = 0; v < n; ++v) g.node_labels[static_cast<size_t>(v)] = v < s ? 0 : 1;
  return g;
}

}  // namespace gpb::synth
