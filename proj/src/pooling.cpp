#include "gpb/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "gpb/error.hpp"

namespace gpb::pool {

using namespace ad;

namespace {

void check_graph_pair(const Tensor& h, const Tensor& a, const char* who) {
  if (a.rows() != a.cols())
    fail(ErrorCategory::dimension,
         std::string(who) + ": adjacency must be square");
  if (h.rows() != a.rows())
    fail(ErrorCategory::dimension,
         std::string(who) + ": feature rows and adjacency size disagree");
}

std::vector<double> column_of(const Matrix& m) {
  std::vector<double> v(static_cast<size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[static_cast<size_t>(i)] = m(i, 0);
  return v;
}

// sqrt of a non-negative 1x1 tensor; an exact zero is returned as an on-tape
// zero because sqrt has no derivative there (subgradient 0, as for relu).
Tensor sqrt_or_zero(const Tensor& sumsq) {
  if (sumsq.value()(0, 0) > 0.0) return cpow(sumsq, 0.5);
  return scale(sumsq, 0.0);
}

Tensor frobenius(const Tensor& m) { return sqrt_or_zero(sum(hadamard(m, m))); }

// Shared tail of the dropping operators: rank by `ranking`, gate rows of h
// by the (tape-tracked) gate column, take the induced submatrix of a.
PoolOutcome drop_by_scores(const Tensor& h, const Tensor& a,
                           const std::vector<double>& ranking,
                           const Tensor& gate, double ratio) {
  PoolOutcome out;
  out.idx = select_topk(ranking, ratio);
  out.h = slice_rows(row_scale(h, gate), out.idx);
  out.a = slice_rows(slice_cols(a, out.idx), out.idx);
  return out;
}

}  // namespace

int keep_count(int n, double ratio) {
  if (n < 1) fail(ErrorCategory::dimension, "keep_count of an empty graph");
  if (!(ratio > 0.0) || ratio > 1.0)
    fail(ErrorCategory::config, "keep ratio must lie in (0, 1]");
  int k = static_cast<int>(std::ceil(ratio * n - 1e-9));
  return std::min(n, std::max(1, k));
}

std::vector<int> select_topk(const std::vector<double>& scores, double ratio) {
  if (scores.empty())
    fail(ErrorCategory::dimension, "select_topk on empty scores");
  for (double s : scores)
    if (!std::isfinite(s))
      fail(ErrorCategory::numeric, "select_topk needs finite scores");
  int n = static_cast<int>(scores.size());
  int k = keep_count(n, ratio);
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  // stable sort by descending score keeps the lower index first among ties
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return scores[static_cast<size_t>(i)] > scores[static_cast<size_t>(j)];
  });
  order.resize(static_cast<size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

PoolOutcome topk_pool(const Tensor& h, const Tensor& a, const Tensor& p,
                      double ratio) {
  check_graph_pair(h, a, "topk_pool");
  if (p.rows() != h.cols() || p.cols() != 1)
    fail(ErrorCategory::dimension,
         "topk_pool scoring vector must be feature-width x 1");
  if (!(p.value().squaredNorm() > 0.0))
    fail(ErrorCategory::numeric, "topk_pool scoring vector has zero norm");
  Tensor norm = cpow(sum(hadamard(p, p)), 0.5);
  Tensor y = div_scalar(matmul(h, p), norm);
  return drop_by_scores(h, a, column_of(y.value()), ad::tanh(y), ratio);
}

PoolOutcome sag_pool(ad::ParamBinder& pb, const Tensor& h, const Tensor& a,
                     nn::GcnLayer& scorer, double ratio) {
  check_graph_pair(h, a, "sag_pool");
  if (scorer.w.cols() != 1)
    fail(ErrorCategory::dimension, "sag_pool scorer must map to one channel");
  if (scorer.use_relu)
    fail(ErrorCategory::internal, "sag_pool scorer must be linear");
  Tensor scores = ad::tanh(scorer.forward(pb, h, nn::gcn_norm(a)));
  return drop_by_scores(h, a, column_of(scores.value()), scores, ratio);
}

KmisSelection kmis_select(const Matrix& a, const std::vector<double>& scores,
                          int k) {
  if (a.rows() != a.cols())
    fail(ErrorCategory::dimension, "kmis_select adjacency must be square");
  int n = static_cast<int>(a.rows());
  if (static_cast<int>(scores.size()) != n)
    fail(ErrorCategory::dimension, "kmis_select score count mismatch");
  if (k < 1) fail(ErrorCategory::config, "kmis radius must be at least 1");
  if (n == 0) fail(ErrorCategory::dimension, "kmis_select on empty graph");
  for (double s : scores)
    if (!std::isfinite(s))
      fail(ErrorCategory::numeric, "kmis_select needs finite scores");

  std::vector<std::vector<int>> nbr(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && a(i, j) != 0.0) nbr[static_cast<size_t>(i)].push_back(j);

  std::vector<int> claimer(static_cast<size_t>(n), -1);
  std::vector<char> removed(static_cast<size_t>(n), 0);
  std::vector<int> anchors;
  std::vector<int> dist(static_cast<size_t>(n));
  std::vector<int> queue;
  queue.reserve(static_cast<size_t>(n));
  for (;;) {
    int best = -1;
    for (int v = 0; v < n; ++v)
      if (!removed[static_cast<size_t>(v)] &&
          (best < 0 ||
           scores[static_cast<size_t>(v)] > scores[static_cast<size_t>(best)]))
        best = v;
    if (best < 0) break;
    anchors.push_back(best);
    // claim whatever is still standing inside the closed k-ball; distances
    // are measured in the full graph so anchors stay pairwise > k apart
    std::fill(dist.begin(), dist.end(), -1);
    queue.clear();
    queue.push_back(best);
    dist[static_cast<size_t>(best)] = 0;
    for (size_t head = 0; head < queue.size(); ++head) {
      int u = queue[head];
      if (dist[static_cast<size_t>(u)] == k) continue;
      for (int w : nbr[static_cast<size_t>(u)])
        if (dist[static_cast<size_t>(w)] < 0) {
          dist[static_cast<size_t>(w)] = dist[static_cast<size_t>(u)] + 1;
          queue.push_back(w);
        }
    }
    for (int v : queue)
      if (!removed[static_cast<size_t>(v)]) {
        removed[static_cast<size_t>(v)] = 1;
        claimer[static_cast<size_t>(v)] = best;
      }
  }

  KmisSelection sel;
  sel.idx = anchors;
  std::sort(sel.idx.begin(), sel.idx.end());
  std::vector<int> slot(static_cast<size_t>(n), -1);
  for (size_t i = 0; i < sel.idx.size(); ++i)
    slot[static_cast<size_t>(sel.idx[i])] = static_cast<int>(i);
  sel.cluster.resize(static_cast<size_t>(n));
  for (int v = 0; v < n; ++v)
    sel.cluster[static_cast<size_t>(v)] =
        slot[static_cast<size_t>(claimer[static_cast<size_t>(v)])];
  return sel;
}

PoolOutcome kmis_pool(const Tensor& h, const Tensor& a,
                      const std::vector<double>& scores, int k) {
  check_graph_pair(h, a, "kmis_pool");
  KmisSelection sel = kmis_select(a.value(), scores, k);
  int n = static_cast<int>(a.rows());
  int np = static_cast<int>(sel.idx.size());

  std::vector<int> size(static_cast<size_t>(np), 0);
  for (int v = 0; v < n; ++v) ++size[static_cast<size_t>(sel.cluster[v])];
  Matrix averager = Matrix::Zero(np, n);
  for (int v = 0; v < n; ++v) {
    int c = sel.cluster[static_cast<size_t>(v)];
    averager(c, v) = 1.0 / size[static_cast<size_t>(c)];
  }
  Matrix coarse = Matrix::Zero(np, np);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (a.value()(i, j) != 0.0)
        coarse(sel.cluster[static_cast<size_t>(i)],
               sel.cluster[static_cast<size_t>(j)]) = 1.0;

  PoolOutcome out;
  out.h = matmul(Tensor(std::move(averager)), h);
  out.a = Tensor(std::move(coarse));  // discrete construction: no gradient
  out.idx = sel.idx;
  return out;
}

Tensor cluster_assign(ad::ParamBinder& pb, const Tensor& h, const Tensor& ahat,
                      nn::GcnLayer& assigner, int max_cols) {
  if (assigner.use_relu)
    fail(ErrorCategory::internal, "assignment layer must be linear");
  Tensor logits = assigner.forward(pb, h, ahat);
  if (max_cols > 0 && max_cols < logits.cols()) {
    std::vector<int> keep(static_cast<size_t>(max_cols));
    std::iota(keep.begin(), keep.end(), 0);
    logits = slice_cols(logits, keep);
  }
  return row_softmax(logits);
}

std::pair<Tensor, Tensor> coarsen_cluster(const Tensor& h, const Tensor& a,
                                          const Tensor& s) {
  check_graph_pair(h, a, "coarsen_cluster");
  if (s.rows() != a.rows())
    fail(ErrorCategory::dimension,
         "coarsen_cluster assignment rows and adjacency size disagree");
  Tensor st = transpose(s);
  return {matmul(st, h), matmul(st, matmul(a, s))};
}

std::map<std::string, Tensor> diffpool_losses(const Tensor& a,
                                              const Tensor& s) {
  check_graph_pair(s, a, "diffpool_losses");
  double n = static_cast<double>(a.rows());
  Tensor residual = sub(a, matmul(s, transpose(s)));
  Tensor link = scale(frobenius(residual), 1.0 / (n * n));
  Tensor entropy =
      scale(sum(hadamard(s, ad::log(add_const(s, 1e-12)))), -1.0 / n);
  return {{"entropy", entropy}, {"link", link}};
}

std::map<std::string, Tensor> mincut_losses(const Tensor& a, const Tensor& s) {
  check_graph_pair(s, a, "mincut_losses");
  Tensor num = sum(hadamard(s, matmul(a, s)));               // Tr(S^T A S)
  Tensor den = sum(hadamard(row_scale(s, row_sums(a)), s));  // Tr(S^T D S)
  Tensor cut = den.value()(0, 0) != 0.0 ? scale(div_scalar(num, den), -1.0)
                                        : scale(num, 0.0);
  int c = static_cast<int>(s.cols());
  Tensor sts = matmul(transpose(s), s);
  Tensor deviation = sub(div_scalar(sts, frobenius(sts)),
                         Tensor(Matrix::Identity(c, c) / std::sqrt(c)));
  return {{"cut", cut}, {"ortho", frobenius(deviation)}};
}

std::map<std::string, Tensor> dmon_losses(const Tensor& a, const Tensor& s) {
  check_graph_pair(s, a, "dmon_losses");
  double n = static_cast<double>(s.rows());
  double c = static_cast<double>(s.cols());
  Tensor two_m = sum(a);
  Tensor modularity;
  if (two_m.value()(0, 0) != 0.0) {
    Tensor intra = sum(hadamard(s, matmul(a, s)));  // Tr(S^T A S)
    Tensor sd = matmul(transpose(s), row_sums(a));  // S^T d
    Tensor expected = div_scalar(sum(hadamard(sd, sd)), two_m);
    modularity = scale(div_scalar(sub(intra, expected), two_m), -1.0);
  } else {
    modularity = scale(sum(s), 0.0);
  }
  Tensor col_mass = matmul(Tensor(Matrix::Ones(1, static_cast<int>(n))), s);
  Tensor collapse = add_const(
      scale(sqrt_or_zero(sum(hadamard(col_mass, col_mass))), std::sqrt(c) / n),
      -1.0);
  return {{"collapse", collapse}, {"modularity", modularity}};
}

Tensor justbalance_loss(const Tensor& s) {
  double n = static_cast<double>(s.rows());
  double c = static_cast<double>(s.cols());
  return scale(trace_psd_sqrt(matmul(transpose(s), s)),
               -1.0 / std::sqrt(n * c));
}

namespace {

class TopKPooler final : public Pooler {
 public:
  TopKPooler(int in_dim, double ratio, Rng& rng)
      : p_(nn::glorot(in_dim, 1, rng)), ratio_(ratio) {}
  PoolOutcome pool(ad::ParamBinder& pb, const Tensor& h,
                   const Tensor& a) override {
    return topk_pool(h, a, pb.bind(p_), ratio_);
  }
  bool index_based() const override { return true; }
  const char* name() const override { return "topk"; }
  std::vector<std::pair<std::string, Matrix*>> named_params() override {
    return {{"p", &p_}};
  }

 private:
  Matrix p_;
  double ratio_;
};

class SagPooler final : public Pooler {
 public:
  SagPooler(int in_dim, double ratio, Rng& rng)
      : scorer_(in_dim, 1, false, rng), ratio_(ratio) {}
  PoolOutcome pool(ad::ParamBinder& pb, const Tensor& h,
                   const Tensor& a) override {
    return sag_pool(pb, h, a, scorer_, ratio_);
  }
  bool index_based() const override { return true; }
  const char* name() const override { return "sag"; }
  std::vector<std::pair<std::string, Matrix*>> named_params() override {
    return {{"scorer.w", &scorer_.w}};
  }

 private:
  nn::GcnLayer scorer_;
  double ratio_;
};

class KmisPooler final : public Pooler {
 public:
  KmisPooler(int in_dim, int k, Rng& rng)
      : scorer_(in_dim, 1, false, rng), k_(k) {}
  PoolOutcome pool(ad::ParamBinder& pb, const Tensor& h,
                   const Tensor& a) override {
    Tensor scores = ad::tanh(scorer_.forward(pb, h, nn::gcn_norm(a)));
    return kmis_pool(h, a, column_of(scores.value()), k_);
  }
  bool index_based() const override { return true; }
  const char* name() const override { return "kmis"; }
  std::vector<std::pair<std::string, Matrix*>> named_params() override {
    return {{"scorer.w", &scorer_.w}};
  }

 private:
  nn::GcnLayer scorer_;
  int k_;
};

class ClusterPooler : public Pooler {
 public:
  ClusterPooler(int in_dim, int clusters, Rng& rng)
      : assigner_(in_dim, clusters, false, rng) {}
  PoolOutcome pool(ad::ParamBinder& pb, const Tensor& h,
                   const Tensor& a) override {
    // tiny graphs get at most one cluster per node, so S keeps full rank
    int cap = static_cast<int>(std::min(assigner_.w.cols(), h.rows()));
    Tensor s = cluster_assign(pb, h, nn::gcn_norm(a), assigner_, cap);
    auto [hp, ap] = coarsen_cluster(h, a, s);
    PoolOutcome out;
    out.h = hp;
    out.a = ap;
    out.assignment = s;
    out.aux = losses(a, s);
    return out;
  }
  bool index_based() const override { return false; }
  std::vector<std::pair<std::string, Matrix*>> named_params() override {
    return {{"assign.w", &assigner_.w}};
  }

 protected:
  virtual std::map<std::string, Tensor> losses(const Tensor& a,
                                               const Tensor& s) = 0;

 private:
  nn::GcnLayer assigner_;
};

class DiffPooler final : public ClusterPooler {
 public:
  using ClusterPooler::ClusterPooler;
  const char* name() const override { return "diffpool"; }

 protected:
  std::map<std::string, Tensor> losses(const Tensor& a,
                                       const Tensor& s) override {
    return diffpool_losses(a, s);
  }
};

class MincutPooler final : public ClusterPooler {
 public:
  using ClusterPooler::ClusterPooler;
  const char* name() const override { return "mincut"; }

 protected:
  std::map<std::string, Tensor> losses(const Tensor& a,
                                       const Tensor& s) override {
    return mincut_losses(a, s);
  }
};

class DmonPooler final : public ClusterPooler {
 public:
  using ClusterPooler::ClusterPooler;
  const char* name() const override { return "dmon"; }

 protected:
  std::map<std::string, Tensor> losses(const Tensor& a,
                                       const Tensor& s) override {
    return dmon_losses(a, s);
  }
};

class JustBalancePooler final : public ClusterPooler {
 public:
  using ClusterPooler::ClusterPooler;
  const char* name() const override { return "justbalance"; }

 protected:
  std::map<std::string, Tensor> losses(const Tensor&,
                                       const Tensor& s) override {
    return {{"balance", justbalance_loss(s)}};
  }
};

}  // namespace

std::unique_ptr<Pooler> make_pooler(const std::string& name, int in_dim,
                                    const PoolerSettings& settings, Rng& rng) {
  if (in_dim < 1)
    fail(ErrorCategory::config, "pooler input width must be positive");
  if (name == "topk" || name == "sag") {
    if (!(settings.ratio > 0.0) || settings.ratio > 1.0)
      fail(ErrorCategory::config, "keep ratio must lie in (0, 1]");
    if (name == "topk")
      return std::make_unique<TopKPooler>(in_dim, settings.ratio, rng);
    return std::make_unique<SagPooler>(in_dim, settings.ratio, rng);
  }
  if (name == "kmis") {
    if (settings.k < 1)
      fail(ErrorCategory::config, "kmis radius must be at least 1");
    return std::make_unique<KmisPooler>(in_dim, settings.k, rng);
  }
  if (name == "diffpool" || name == "mincut" || name == "dmon" ||
      name == "justbalance") {
    if (settings.clusters < 1)
      fail(ErrorCategory::config, "cluster budget must be at least 1");
    if (name == "diffpool")
      return std::make_unique<DiffPooler>(in_dim, settings.clusters, rng);
    if (name == "mincut")
      return std::make_unique<MincutPooler>(in_dim, settings.clusters, rng);
    if (name == "dmon")
      return std::make_unique<DmonPooler>(in_dim, settings.clusters, rng);
    return std::make_unique<JustBalancePooler>(in_dim, settings.clusters, rng);
  }
  fail(ErrorCategory::config, "unknown pooling operator '" + name + "'");
}

const std::vector<std::string>& pooler_names() {
  static const std::vector<std::string> names = {
      "topk", "sag", "kmis", "diffpool", "mincut", "dmon", "justbalance"};
  return names;
}

bool pooler_name_known(const std::string& name) {
  const auto& all = pooler_names();
  return std::find(all.begin(), all.end(), name) != all.end();
}

bool pooler_is_index_based(const std::string& name) {
  if (!pooler_name_known(name))
    fail(ErrorCategory::config, "unknown pooling operator '" + name + "'");
  return name == "topk" || name == "sag" || name == "kmis";
}

}  // namespace gpb::pool
