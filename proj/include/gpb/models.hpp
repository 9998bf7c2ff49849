#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gpb/gnn.hpp"
#include "gpb/graph.hpp"
#include "gpb/pooling.hpp"
#include "gpb/rng.hpp"
#include "gpb/tensor.hpp"

namespace gpb::models {

using ad::Matrix;
using ad::Tensor;

/// Prediction head: in -> mid linear with bias and relu, mid -> out linear
/// with bias. Classifiers get row-wise log-probabilities on top; regression
/// heads return the raw output.
struct Head {
  Matrix w1, b1, w2, b2;
  bool log_probs;

  Head(int in, int mid, int out, bool classification, Rng& rng);
  Tensor forward(ad::ParamBinder& pb, const Tensor& x);
};

/// Mean negative log-likelihood of the true classes under row-wise
/// log-probabilities. `labels[i]` indexes the class of row i.
Tensor nll_loss(const Tensor& log_probs, const std::vector<int>& labels);

/// Mean squared error of a column of predictions against targets.
Tensor mse_loss(const Tensor& preds, const std::vector<double>& targets);

/// Inverse of slice_rows: an n-row matrix whose row idx[j] equals row j of
/// `hp`, with zeros everywhere else.
Tensor unpool(const Tensor& hp, const std::vector<int>& idx, int n);

struct ModelOutput {
  Tensor predictions;  ///< one row per graph (hierarchical) or per node (u-net)
  Tensor embeddings;   ///< pre-head representations, same row order
  /// Auxiliary pooling losses averaged over the graphs in the batch, keyed
  /// "pool1/<name>" and "pool2/<name>".
  std::map<std::string, Tensor> aux;
};

struct HierarchicalConfig {
  int in_dim = 1;
  int hidden = 64;
  int head_mid = 32;
  int out_dim = 2;
  bool classification = true;
  std::string pooler = "topk";
  pool::PoolerSettings stage1;
  /// Cluster budget for the second stage (clustering family only); the
  /// effective count is still capped at the pooled graph size.
  int stage2_clusters = 1;
};

/// Graph-level model: gcn -> pool -> gcn -> pool -> gcn -> mean readout ->
/// head. Each graph in a batch is processed independently, so results never
/// depend on what else shares the batch.
class HierarchicalModel {
 public:
  HierarchicalModel(const HierarchicalConfig& cfg, Rng& rng);

  ModelOutput forward(ad::ParamBinder& pb, const std::vector<graphs::Graph>& gs);
  ModelOutput forward(ad::ParamBinder& pb, const graphs::GraphBatch& batch);

  std::vector<std::pair<std::string, Matrix*>> named_params();
  const HierarchicalConfig& config() const { return cfg_; }

 private:
  HierarchicalConfig cfg_;
  nn::GcnLayer gcn1_, gcn2_, gcn3_;
  std::unique_ptr<pool::Pooler> pool1_, pool2_;
  Head head_;
};

struct UNetConfig {
  int in_dim = 1;
  int hidden = 64;
  int out_dim = 2;
  std::string pooler = "topk";
  pool::PoolerSettings settings;
  bool concat_fusion = false;  ///< false: sum the skip connection instead
};

/// Node-level encoder-decoder: gcn -> pool -> gcn -> unpool back to the
/// original node set, fuse with the skip connection, then a linear gcn with
/// row-wise log-probabilities. Only index-keeping pooling operators can be
/// unpooled, so the clustering family is rejected at construction.
class UNetModel {
 public:
  UNetModel(const UNetConfig& cfg, Rng& rng);

  ModelOutput forward(ad::ParamBinder& pb, const graphs::Graph& g);

  std::vector<std::pair<std::string, Matrix*>> named_params();
  const UNetConfig& config() const { return cfg_; }

 private:
  UNetConfig cfg_;
  nn::GcnLayer gcn1_, gcn2_, gcn3_;
  std::unique_ptr<pool::Pooler> pooler_;
};

/// Serialize named parameters to a JSON file together with the model kind and
/// the seed that produced them.
void save_checkpoint(const std::string& path, const std::string& kind,
                     uint64_t seed,
                     const std::vector<std::pair<std::string, Matrix*>>& params);

/// Restore parameters saved by save_checkpoint into matching names and
/// shapes; any mismatch in kind, parameter set, or shape is an error.
/// Returns the stored seed.
uint64_t load_checkpoint(const std::string& path, const std::string& kind,
                         const std::vector<std::pair<std::string, Matrix*>>& params);

}  // namespace gpb::models
