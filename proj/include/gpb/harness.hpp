#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gpb/graph.hpp"
#include "gpb/pooling.hpp"
#include "gpb/splits.hpp"

namespace gpb::harness {

/// One benchmark run description, read from flat key=value text. Every field
/// has a default except `dataset`; unknown or duplicate keys are config
/// errors so sweep typos fail loudly.
struct ExperimentConfig {
  std::string task = "graph-classification";  ///< or graph-regression, node-classification
  std::string dataset;      ///< synthetic:..., tudataset:<dir>[:<name>], edgelist:<e>:<x>:<y>
  std::string pooler = "topk";
  double ratio = 0.5;       ///< dropping-family keep share
  int k = 1;                ///< kmis hop radius
  int clusters = 8;         ///< clustering-family first-stage budget
  int stage2_clusters = 4;  ///< clustering-family second-stage budget
  int hidden = 64;
  int head_mid = 32;
  int epochs = 200;
  double lr = 1e-3;
  int batch_size = 32;      ///< timing runs set 512 explicitly
  std::string split = "random:0.7:0.15:0.15";  ///< random[:f:f:f], kfold:<k>, size, density, degree, closeness
  std::string perturb = "none";  ///< none, add:<rate>, drop:<rate>, mask:<rate>, flip:<rate>, knn:<k>
  std::string perturb_target = "all";  ///< train, test, or all
  std::vector<uint64_t> seeds = {0};
  std::string fusion = "sum";       ///< node-task skip connection: sum or concat
  std::string selection = "final";  ///< final, or best_val to restore the best validation epoch
};

/// Parse config text / file. Errors carry line numbers.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

/// Enforce the config invariants (positive sizes, known names, pooler/task
/// compatibility, parsable split and perturbation specs).
void validate(const ExperimentConfig& cfg);

/// Fixed-order key=value serialization; parsing it reproduces the config.
std::string canonical_text(const ExperimentConfig& cfg);

/// 16-hex-char FNV-1a digest of canonical_text, used to group result records.
std::string config_digest(const ExperimentConfig& cfg);

/// Outcome of one (seed, fold) run. `fold` is -1 for holdout splits. A
/// nonempty `failure` marks an aborted run ("nan_loss"): its metrics map is
/// empty and summaries skip it.
struct ResultRecord {
  std::string config;
  uint64_t seed = 0;
  int fold = -1;
  std::vector<double> train_loss;  ///< per epoch, mean per-graph (or node-batch) loss
  std::map<std::string, double> metrics;
  double wall_seconds = 0.0;
  long long peak_rss_bytes = 0;
  std::string failure;
};

/// Dataset plus the task-level facts the models need.
struct LoadedData {
  std::vector<graphs::Graph> graphs;  ///< node tasks hold exactly one graph
  bool node_task = false;
  bool regression = false;
  int feature_dim = 1;
  int class_count = 0;  ///< 0 for regression
};

LoadedData load_dataset(const ExperimentConfig& cfg);

/// The splits a given seed trains against: one element for holdout and
/// ordered splits, k elements for k-fold.
std::vector<splits::Split> make_splits(const ExperimentConfig& cfg,
                                       const LoadedData& data, uint64_t seed);

/// The dataset after the config's perturbation hits the designated
/// partitions, exactly as run_experiment applies it for this seed.
LoadedData perturbed_dataset(const ExperimentConfig& cfg, const LoadedData& data,
                             const splits::Split& sp, uint64_t seed);

/// Full protocol: for every seed (and fold), seed all randomness, split,
/// perturb the designated partitions, train, evaluate, and return one record
/// per run. Diverged runs come back tagged instead of throwing.
std::vector<ResultRecord> run_experiment(const ExperimentConfig& cfg);

struct TimingReport {
  double wall_seconds = 0.0;
  long long peak_rss_bytes = 0;
};

/// Wall-clock the training loop alone (loading, splitting, perturbation, and
/// evaluation excluded) for the first configured seed.
TimingReport time_training(const ExperimentConfig& cfg);

/// One JSON object per line; load inverts save. Open failures are io errors;
/// malformed lines are format errors naming the line.
void save_results(const std::vector<ResultRecord>& records,
                  const std::string& path);
std::vector<ResultRecord> load_results(const std::string& path);

/// Per-config mean and population standard deviation of every metric over the
/// successful records, as CSV with both full-precision columns and a
/// human-readable "mean±std" column.
std::string summary_csv(const std::vector<ResultRecord>& records);
void save_summary_csv(const std::vector<ResultRecord>& records,
                      const std::string& path);

/// Train on the first seed's first split, then write one CSV row per entity
/// (graph or node) holding its pre-head embedding with the label in the last
/// column. Diverged training is a numeric error.
void export_embeddings(const ExperimentConfig& cfg, const std::string& path);

}  // namespace gpb::harness
