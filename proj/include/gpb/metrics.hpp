#pragma once

#include <vector>

namespace gpb::metrics {

/// Share of positions where pred == truth.
double accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

/// F1 over one-vs-rest counts pooled across all observed classes. For
/// single-label classification this coincides with accuracy.
double micro_f1(const std::vector<int>& pred, const std::vector<int>& truth);

/// Unweighted mean of per-class F1 over every class observed in pred or
/// truth; a class with no true positives scores 0.
double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth);

/// Area under the precision-recall step curve for binary targets, walking
/// distinct score thresholds from high to low. Needs at least one positive.
double average_precision(const std::vector<double>& scores,
                         const std::vector<int>& targets);

/// Rank-statistic area under the ROC curve, ties resolved by mid-ranks.
/// Undefined (an error) when targets are single-class.
double auroc(const std::vector<double>& scores,
             const std::vector<int>& targets);

double rmse(const std::vector<double>& pred, const std::vector<double>& truth);
double mae(const std::vector<double>& pred, const std::vector<double>& truth);

double mean_of(const std::vector<double>& xs);
double population_std(const std::vector<double>& xs);

}  // namespace gpb::metrics
