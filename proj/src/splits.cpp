#include "gpb/splits.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "gpb/error.hpp"
#include "gpb/rng.hpp"

namespace gpb::splits {
namespace {

// floor(f * n) robust against products like 0.15 * 20 landing a hair under
// the exact integer
int floor_share(double f, int n) {
  return static_cast<int>(std::floor(f * static_cast<double>(n) + 1e-9));
}

void sort_parts(Split& s) {
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
}

// Ranks items ascending by key, equal keys toward the lower index, and cuts
// the order into train (first half), test (last test_share), val (middle).
Split ordered_split(const std::vector<double>& keys, double test_share,
                    SplitKind kind) {
  int n = static_cast<int>(keys.size());
  std::vector<int> order(keys.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return keys[static_cast<size_t>(a)] != keys[static_cast<size_t>(b)]
               ? keys[static_cast<size_t>(a)] < keys[static_cast<size_t>(b)]
               : a < b;
  });
  int n_train = floor_share(0.5, n);
  int n_test = floor_share(test_share, n);
  Split s;
  s.kind = kind;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.end() - n_test);
  s.test.assign(order.end() - n_test, order.end());
  sort_parts(s);
  return s;
}

double density_of(const graphs::Graph& g) {
  if (g.n < 2) return 0.0;
  double pairs = static_cast<double>(g.n) * (g.n - 1) / 2.0;
  return static_cast<double>(g.undirected_edges()) / pairs;
}

}  // namespace

const char* split_kind_name(SplitKind kind) {
  switch (kind) {
    case SplitKind::random_holdout: return "random";
    case SplitKind::kfold: return "kfold";
    case SplitKind::size: return "size";
    case SplitKind::density: return "density";
    case SplitKind::degree: return "degree";
    case SplitKind::closeness: return "closeness";
  }
  fail(ErrorCategory::internal, "unknown split kind");
}

Split random_split(int n_items, std::array<double, 3> fractions,
                   uint64_t seed) {
  for (double f : fractions)
    if (!(f > 0.0))
      fail(ErrorCategory::config, "split fractions must be positive");
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
    fail(ErrorCategory::config, "split fractions must sum to 1");
  if (n_items < 1) fail(ErrorCategory::dimension, "nothing to split");

  int n_val = floor_share(fractions[1], n_items);
  int n_test = floor_share(fractions[2], n_items);
  int n_train = n_items - n_val - n_test;  // floor share plus the remainder
  if (n_train < 1 || n_val < 1 || n_test < 1)
    fail(ErrorCategory::dimension,
         "split of " + std::to_string(n_items) +
             " items leaves an empty part");

  std::vector<int> order(static_cast<size_t>(n_items));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  Split s;
  s.kind = SplitKind::random_holdout;
  s.seed = seed;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  sort_parts(s);
  return s;
}

std::vector<Split> kfold(int n_items, int k, uint64_t seed) {
  if (k < 2) fail(ErrorCategory::config, "cross-validation needs k >= 2");
  if (n_items < k)
    fail(ErrorCategory::dimension,
         std::to_string(n_items) + " items cannot fill " + std::to_string(k) +
             " folds");
  std::vector<int> order(static_cast<size_t>(n_items));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<Split> out;
  out.reserve(static_cast<size_t>(k));
  int base = n_items / k, extra = n_items % k, at = 0;
  for (int fold = 0; fold < k; ++fold) {
    int len = base + (fold < extra ? 1 : 0);
    Split s;
    s.kind = SplitKind::kfold;
    s.seed = seed;
    s.test.assign(order.begin() + at, order.begin() + at + len);
    s.train.assign(order.begin(), order.begin() + at);
    s.train.insert(s.train.end(), order.begin() + at + len, order.end());
    at += len;
    sort_parts(s);
    out.push_back(std::move(s));
  }
  return out;
}

Split size_split(const std::vector<graphs::Graph>& gs) {
  if (gs.size() < 5)
    fail(ErrorCategory::dimension, "size split needs at least 5 graphs");
  std::vector<double> keys;
  keys.reserve(gs.size());
  for (const auto& g : gs) keys.push_back(static_cast<double>(g.n));
  return ordered_split(keys, 0.2, SplitKind::size);
}

Split density_split(const std::vector<graphs::Graph>& gs) {
  if (gs.size() < 5)
    fail(ErrorCategory::dimension, "density split needs at least 5 graphs");
  std::vector<double> keys;
  keys.reserve(gs.size());
  for (const auto& g : gs) keys.push_back(density_of(g));
  return ordered_split(keys, 0.2, SplitKind::density);
}

Split degree_split(const graphs::Graph& g) {
  if (g.n < 4)
    fail(ErrorCategory::dimension, "degree split needs at least 4 nodes");
  // negate so "descending degree, ties toward the lower index" reuses the
  // ascending machinery
  std::vector<double> keys(static_cast<size_t>(g.n));
  for (int v = 0; v < g.n; ++v)
    keys[static_cast<size_t>(v)] = -static_cast<double>(g.degree(v));
  return ordered_split(keys, 0.25, SplitKind::degree);
}

Split closeness_split(const graphs::Graph& g) {
  if (g.n < 4)
    fail(ErrorCategory::dimension, "closeness split needs at least 4 nodes");
  return ordered_split(graphs::closeness_centrality(g), 0.25,
                       SplitKind::closeness);
}

}  // namespace gpb::splits
