#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gpb/gnn.hpp"
#include "gpb/rng.hpp"
#include "gpb/tensor.hpp"

namespace gpb::pool {

using ad::Matrix;
using ad::Tensor;

// Result of one pooling step. Dropping operators fill `idx` with the kept
// node indices (ascending); clustering operators fill `assignment` with the
// row-stochastic n x n' matrix instead. `aux` holds the operator's named
// scalar regularizers, empty for operators that have none.
struct PoolOutcome {
  Tensor h;  // n' x d pooled features
  Tensor a;  // n' x n' pooled adjacency, symmetric when the input was
  std::vector<int> idx;
  std::optional<Tensor> assignment;
  std::map<std::string, Tensor> aux;
};

// Survivor count for a keep-ratio: max(1, ceil(ratio * n)). A small nudge
// keeps exact products (0.5 * 4) from being pushed to the next integer by
// floating-point error.
int keep_count(int n, double ratio);

// Indices of the keep_count(n, ratio) largest scores, ties won by the lower
// index, returned ascending.
std::vector<int> select_topk(const std::vector<double>& scores, double ratio);

// --- node dropping ---------------------------------------------------------

// Scores y = H p / ||p||, keeps the top ratio share of nodes, and gates the
// surviving features by tanh(y). p is a d x 1 column. The pooled adjacency
// is the induced submatrix.
PoolOutcome topk_pool(const Tensor& h, const Tensor& a, const Tensor& p,
                      double ratio);

// Like topk_pool but scored by tanh of a one-channel graph convolution over
// the normalized adjacency; the same scores serve as the feature gate.
// The scorer layer must be linear (no relu).
PoolOutcome sag_pool(ad::ParamBinder& pb, const Tensor& h, const Tensor& a,
                     nn::GcnLayer& scorer, double ratio);

// Greedy distance-k independent set: repeatedly pick the unremoved node with
// the highest score (ties -> lower index) and remove its closed k-hop ball;
// each removed node joins the cluster of the anchor that removed it first.
struct KmisSelection {
  std::vector<int> idx;      // selected anchors, ascending
  std::vector<int> cluster;  // node -> position of its anchor in idx
};
KmisSelection kmis_select(const Matrix& a, const std::vector<double>& scores,
                          int k);

// Pooled row a = mean of cluster a's feature rows; A'[a][b] = 1 iff some
// input edge joins the two clusters (intra-cluster edges set the diagonal).
PoolOutcome kmis_pool(const Tensor& h, const Tensor& a,
                      const std::vector<double>& scores, int k);

// --- node clustering --------------------------------------------------------

// Soft assignment S = row_softmax(GCN(H, Ahat)). When 0 < max_cols < C the
// logits are truncated to the first max_cols columns first, which is how
// small graphs are kept from being assigned to more clusters than they have
// nodes. The assigner layer must be linear.
Tensor cluster_assign(ad::ParamBinder& pb, const Tensor& h,
                      const Tensor& ahat, nn::GcnLayer& assigner,
                      int max_cols = 0);

// H' = S^T H, A' = S^T A S.
std::pair<Tensor, Tensor> coarsen_cluster(const Tensor& h, const Tensor& a,
                                          const Tensor& s);

// --- clustering regularizers -----------------------------------------------
// Each takes the dense adjacency and a row-stochastic assignment and returns
// named 1x1 tensors, differentiable in both arguments.

// link: ||A - S S^T||_F / n^2. entropy: mean over nodes of the assignment
// row entropy.
std::map<std::string, Tensor> diffpool_losses(const Tensor& a,
                                              const Tensor& s);

// cut: -Tr(S^T A S) / Tr(S^T D S), defined 0 on edgeless input.
// ortho: || S^T S / ||S^T S||_F - I/sqrt(C) ||_F.
std::map<std::string, Tensor> mincut_losses(const Tensor& a, const Tensor& s);

// modularity: -(1/2m) Tr(S^T (A - d d^T / 2m) S), defined 0 on edgeless
// input. collapse: (sqrt(C)/n) ||sum of S's rows||_2 - 1.
std::map<std::string, Tensor> dmon_losses(const Tensor& a, const Tensor& s);

// -Tr((S^T S)^(1/2)) / sqrt(n C); minimized by balanced hard assignments.
Tensor justbalance_loss(const Tensor& s);

// --- operator objects --------------------------------------------------------

class Pooler {
 public:
  virtual ~Pooler() = default;
  // h: n x d node features; a: dense symmetric adjacency, raw (unnormalized)
  // and possibly weighted. Returns the pooled graph at the same rawness, so
  // stages compose: consumers normalize for themselves.
  virtual PoolOutcome pool(ad::ParamBinder& pb, const Tensor& h,
                           const Tensor& a) = 0;
  // True for operators that keep node indices usable for unpooling.
  virtual bool index_based() const = 0;
  virtual const char* name() const = 0;
  // Trainable parameters by name, for optimizers and checkpoints.
  virtual std::vector<std::pair<std::string, Matrix*>> named_params() = 0;
};

struct PoolerSettings {
  double ratio = 0.5;  // dropping-family keep share
  int k = 1;           // kmis hop radius
  int clusters = 1;    // clustering-family supernode budget
};

// name: one of topk, sag, kmis, diffpool, mincut, dmon, justbalance.
// in_dim is the node feature width the operator will see.
std::unique_ptr<Pooler> make_pooler(const std::string& name, int in_dim,
                                    const PoolerSettings& settings, Rng& rng);

const std::vector<std::string>& pooler_names();
bool pooler_name_known(const std::string& name);
// Whether the named operator is in the dropping family (usable in the U-Net).
bool pooler_is_index_based(const std::string& name);

}  // namespace gpb::pool
