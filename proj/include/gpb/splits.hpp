#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gpb/graph.hpp"

namespace gpb::splits {

enum class SplitKind { random_holdout, kfold, size, density, degree, closeness };

const char* split_kind_name(SplitKind kind);

/// Index lists over graphs (graph-level generators) or nodes (node-level
/// generators). Parts are pairwise disjoint, sorted ascending, and cover the
/// full index set; val is empty only for kfold splits.
struct Split {
  std::vector<int> train, val, test;
  SplitKind kind = SplitKind::random_holdout;
  uint64_t seed = 0;
};

/// Uniform shuffle, then floor-sized parts with the remainder going to train.
Split random_split(int n_items,
                   std::array<double, 3> fractions = {0.7, 0.15, 0.15},
                   uint64_t seed = 0);

/// k near-equal test folds (the first n_items % k folds hold one extra item);
/// each split trains on the complement of its fold.
std::vector<Split> kfold(int n_items, int k, uint64_t seed);

/// Graphs sorted by node count ascending (ties toward the lower index):
/// train = smallest floor(0.5 G), test = largest floor(0.2 G), val = middle.
Split size_split(const std::vector<graphs::Graph>& gs);

/// Same shape as size_split with edge density m / (n (n-1) / 2) as the key;
/// single-node graphs count as density 0.
Split density_split(const std::vector<graphs::Graph>& gs);

/// Nodes sorted by degree descending (ties toward the lower index):
/// train = highest floor(0.5 n), test = lowest floor(0.25 n), val = middle.
Split degree_split(const graphs::Graph& g);

/// Nodes sorted by closeness ascending (ties toward the lower index):
/// train = lowest floor(0.5 n), test = highest floor(0.25 n), val = middle.
Split closeness_split(const graphs::Graph& g);

}  // namespace gpb::splits
