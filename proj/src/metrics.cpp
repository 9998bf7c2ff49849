#include "gpb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "gpb/error.hpp"

namespace gpb::metrics {
namespace {

void check_lengths(size_t a, size_t b, const char* what) {
  if (a == 0)
    fail(ErrorCategory::dimension, std::string(what) + " got empty inputs");
  if (a != b)
    fail(ErrorCategory::dimension,
         std::string(what) + " got " + std::to_string(a) +
             " predictions for " + std::to_string(b) + " targets");
}

void check_class_labels(const std::vector<int>& ys, const char* what) {
  for (int y : ys)
    if (y < 0)
      fail(ErrorCategory::dimension,
           std::string(what) + " got negative class label " + std::to_string(y));
}

struct Counts {
  long long tp = 0, fp = 0, fn = 0;
};

std::map<int, Counts> one_vs_rest(const std::vector<int>& pred,
                                  const std::vector<int>& truth) {
  std::map<int, Counts> by_class;
  for (size_t i = 0; i < pred.size(); ++i) {
    by_class[pred[i]];  // make sure predicted-only classes enter the universe
    by_class[truth[i]];
    if (pred[i] == truth[i]) {
      ++by_class[pred[i]].tp;
    } else {
      ++by_class[pred[i]].fp;
      ++by_class[truth[i]].fn;
    }
  }
  return by_class;
}

void check_binary(const std::vector<double>& scores,
                  const std::vector<int>& targets, const char* what) {
  check_lengths(scores.size(), targets.size(), what);
  for (double s : scores)
    if (!std::isfinite(s))
      fail(ErrorCategory::numeric, std::string(what) + " got non-finite score");
  for (int t : targets)
    if (t != 0 && t != 1)
      fail(ErrorCategory::dimension,
           std::string(what) + " needs 0/1 targets, got " + std::to_string(t));
}

}  // namespace

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  check_lengths(pred.size(), truth.size(), "accuracy");
  long long hits = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == truth[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double micro_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
  check_lengths(pred.size(), truth.size(), "micro_f1");
  check_class_labels(pred, "micro_f1");
  check_class_labels(truth, "micro_f1");
  long long tp = 0, fp = 0, fn = 0;
  for (const auto& [cls, c] : one_vs_rest(pred, truth)) {
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  long long den = 2 * tp + fp + fn;
  return den == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
}

double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
  check_lengths(pred.size(), truth.size(), "macro_f1");
  check_class_labels(pred, "macro_f1");
  check_class_labels(truth, "macro_f1");
  auto by_class = one_vs_rest(pred, truth);
  double total = 0.0;
  for (const auto& [cls, c] : by_class) {
    long long den = 2 * c.tp + c.fp + c.fn;
    total += den == 0 ? 0.0
                      : 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
  }
  return total / static_cast<double>(by_class.size());
}

double average_precision(const std::vector<double>& scores,
                         const std::vector<int>& targets) {
  check_binary(scores, targets, "average_precision");
  long long pos = std::accumulate(targets.begin(), targets.end(), 0LL);
  if (pos == 0)
    fail(ErrorCategory::numeric,
         "average_precision is undefined without positive targets");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0, prev_recall = 0.0;
  long long tp = 0, seen = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;  // advance over the whole tie group at this threshold
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += targets[order[j]];
      ++seen;
      ++j;
    }
    double recall = static_cast<double>(tp) / static_cast<double>(pos);
    double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double auroc(const std::vector<double>& scores,
             const std::vector<int>& targets) {
  check_binary(scores, targets, "auroc");
  long long pos = std::accumulate(targets.begin(), targets.end(), 0LL);
  long long neg = static_cast<long long>(targets.size()) - pos;
  if (pos == 0 || neg == 0)
    fail(ErrorCategory::numeric,
         "auroc is undefined for single-class targets");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  double rank_sum = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    long long group_pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      group_pos += targets[order[j]];
      ++j;
    }
    double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    rank_sum += mid_rank * static_cast<double>(group_pos);
    i = j;
  }
  double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
  check_lengths(pred.size(), truth.size(), "rmse");
  double total = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - truth[i];
    total += d * d;
  }
  return std::sqrt(total / static_cast<double>(pred.size()));
}

double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
  check_lengths(pred.size(), truth.size(), "mae");
  double total = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) total += std::abs(pred[i] - truth[i]);
  return total / static_cast<double>(pred.size());
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) fail(ErrorCategory::dimension, "mean of nothing");
  return std::accumulate(xs.begin(), xs.end(), 0.0) /
         static_cast<double>(xs.size());
}

double population_std(const std::vector<double>& xs) {
  double mu = mean_of(xs);
  double var = 0.0;
  for (double x : xs) var += (x - mu) * (x - mu);
  return std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace gpb::metrics
