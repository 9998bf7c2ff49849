#pragma once

#include <cstdint>
#include <vector>

#include "gpb/graph.hpp"

namespace gpb::perturb {

/// Add round(rate * m) distinct uniformly-sampled non-edges (m counts
/// undirected edges). If the graph has fewer non-edges than that, all of
/// them are added. Existing edges are never touched.
graphs::Graph add_edges(const graphs::Graph& g, double rate, uint64_t seed);

/// Remove round(rate * m) uniformly-chosen undirected edges.
graphs::Graph drop_edges(const graphs::Graph& g, double rate, uint64_t seed);

/// Zero the feature rows of round(rate * n) uniformly-chosen nodes; the
/// structure is untouched.
graphs::Graph mask_features(const graphs::Graph& g, double rate, uint64_t seed);

/// Replace the structure by the symmetrized k-nearest-neighbor graph under
/// Euclidean feature distance (distance ties break toward the lower index).
/// Features and labels are preserved. Requires 1 <= k < n.
graphs::Graph knn_rewire(const graphs::Graph& g, int k);

/// Reassign round(rate * labels.size()) uniformly-chosen entries to a
/// uniformly-chosen *different* class in [0, class_count).
std::vector<int> flip_labels(const std::vector<int>& labels, double rate,
                             int class_count, uint64_t seed);

}  // namespace gpb::perturb
