#include "gpb/models.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <utility>

#include <json.hpp>

#include "gpb/error.hpp"

namespace gpb::models {

using namespace ad;

namespace {

const HierarchicalConfig& checked(const HierarchicalConfig& cfg) {
  if (cfg.in_dim < 1 || cfg.hidden < 1 || cfg.head_mid < 1 || cfg.out_dim < 1)
    fail(ErrorCategory::config, "model widths must be positive");
  if (cfg.classification && cfg.out_dim < 2)
    fail(ErrorCategory::config, "a classifier needs at least two classes");
  return cfg;
}

pool::PoolerSettings stage2_settings(const HierarchicalConfig& cfg) {
  pool::PoolerSettings s = cfg.stage1;
  s.clusters = cfg.stage2_clusters;
  return s;
}

const UNetConfig& checked(const UNetConfig& cfg) {
  if (cfg.in_dim < 1 || cfg.hidden < 1 || cfg.out_dim < 2)
    fail(ErrorCategory::config,
         "u-net needs positive widths and at least two classes");
  if (!pool::pooler_is_index_based(cfg.pooler))
    fail(ErrorCategory::unsupported,
         "u-net unpooling needs an index-keeping pooling operator; '" +
             cfg.pooler + "' clusters nodes instead");
  return cfg;
}

void accumulate_aux(std::map<std::string, Tensor>& sums,
                    const std::string& prefix,
                    const std::map<std::string, Tensor>& aux) {
  for (const auto& [key, val] : aux) {
    std::string full = prefix + key;
    auto it = sums.find(full);
    if (it == sums.end())
      sums.emplace(std::move(full), val);
    else
      it->second = add(it->second, val);
  }
}

void append_prefixed(std::vector<std::pair<std::string, Matrix*>>& out,
                     const std::string& prefix,
                     std::vector<std::pair<std::string, Matrix*>> items) {
  for (auto& [name, m] : items) out.emplace_back(prefix + name, m);
}

}  // namespace

Head::Head(int in, int mid, int out, bool classification, Rng& rng)
    : w1(nn::glorot(in, mid, rng)),
      b1(Matrix::Zero(1, mid)),
      w2(nn::glorot(mid, out, rng)),
      b2(Matrix::Zero(1, out)),
      log_probs(classification) {}

Tensor Head::forward(ad::ParamBinder& pb, const Tensor& x) {
  Tensor hidden = relu(add_row_vector(matmul(x, pb.bind(w1)), pb.bind(b1)));
  Tensor out = add_row_vector(matmul(hidden, pb.bind(w2)), pb.bind(b2));
  return log_probs ? row_log_softmax(out) : out;
}

Tensor nll_loss(const Tensor& log_probs, const std::vector<int>& labels) {
  Eigen::Index rows = log_probs.rows(), cols = log_probs.cols();
  if (static_cast<Eigen::Index>(labels.size()) != rows)
    fail(ErrorCategory::dimension,
         "nll_loss got " + std::to_string(labels.size()) + " labels for " +
             std::to_string(rows) + " rows");
  Matrix onehot = Matrix::Zero(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    int c = labels[static_cast<size_t>(i)];
    if (c < 0 || c >= cols)
      fail(ErrorCategory::dimension,
           "class label " + std::to_string(c) + " outside [0, " +
               std::to_string(cols) + ")");
    onehot(i, c) = 1.0;
  }
  return scale(sum(hadamard(log_probs, Tensor(std::move(onehot)))),
               -1.0 / static_cast<double>(rows));
}

Tensor mse_loss(const Tensor& preds, const std::vector<double>& targets) {
  if (preds.cols() != 1)
    fail(ErrorCategory::dimension, "mse_loss expects a single output column");
  if (static_cast<Eigen::Index>(targets.size()) != preds.rows())
    fail(ErrorCategory::dimension,
         "mse_loss got " + std::to_string(targets.size()) + " targets for " +
             std::to_string(preds.rows()) + " rows");
  Matrix t(preds.rows(), 1);
  for (Eigen::Index i = 0; i < preds.rows(); ++i)
    t(i, 0) = targets[static_cast<size_t>(i)];
  Tensor diff = sub(preds, Tensor(std::move(t)));
  return mean(hadamard(diff, diff));
}

Tensor unpool(const Tensor& hp, const std::vector<int>& idx, int n) {
  return scatter_rows(hp, idx, n);
}

HierarchicalModel::HierarchicalModel(const HierarchicalConfig& cfg, Rng& rng)
    : cfg_(checked(cfg)),
      gcn1_(cfg.in_dim, cfg.hidden, true, rng),
      gcn2_(cfg.hidden, cfg.hidden, true, rng),
      gcn3_(cfg.hidden, cfg.hidden, true, rng),
      pool1_(pool::make_pooler(cfg.pooler, cfg.hidden, cfg.stage1, rng)),
      pool2_(pool::make_pooler(cfg.pooler, cfg.hidden, stage2_settings(cfg), rng)),
      head_(cfg.hidden, cfg.head_mid, cfg.out_dim, cfg.classification, rng) {}

ModelOutput HierarchicalModel::forward(ad::ParamBinder& pb,
                                       const std::vector<graphs::Graph>& gs) {
  if (gs.empty()) fail(ErrorCategory::dimension, "empty graph batch");
  std::vector<Tensor> readouts;
  readouts.reserve(gs.size());
  std::map<std::string, Tensor> aux_sums;
  for (const graphs::Graph& g : gs) {
    if (g.x.cols() != cfg_.in_dim)
      fail(ErrorCategory::dimension,
           "graph features have width " + std::to_string(g.x.cols()) +
               ", model expects " + std::to_string(cfg_.in_dim));
    Tensor a(g.dense_adjacency());
    Tensor h = gcn1_.forward(pb, Tensor(g.x), nn::gcn_norm(a));
    pool::PoolOutcome p1 = pool1_->pool(pb, h, a);
    h = gcn2_.forward(pb, p1.h, nn::gcn_norm(p1.a));
    pool::PoolOutcome p2 = pool2_->pool(pb, h, p1.a);
    h = gcn3_.forward(pb, p2.h, nn::gcn_norm(p2.a));
    readouts.push_back(nn::mean_rows(h));
    accumulate_aux(aux_sums, "pool1/", p1.aux);
    accumulate_aux(aux_sums, "pool2/", p2.aux);
  }
  ModelOutput out;
  out.embeddings = concat_rows(readouts);
  out.predictions = head_.forward(pb, out.embeddings);
  double inv = 1.0 / static_cast<double>(gs.size());
  for (auto& [key, total] : aux_sums) out.aux.emplace(key, scale(total, inv));
  return out;
}

ModelOutput HierarchicalModel::forward(ad::ParamBinder& pb,
                                       const graphs::GraphBatch& batch) {
  return forward(pb, graphs::split_batch(batch));
}

std::vector<std::pair<std::string, Matrix*>> HierarchicalModel::named_params() {
  std::vector<std::pair<std::string, Matrix*>> out = {
      {"gcn1.w", &gcn1_.w}, {"gcn2.w", &gcn2_.w}, {"gcn3.w", &gcn3_.w}};
  append_prefixed(out, "pool1.", pool1_->named_params());
  append_prefixed(out, "pool2.", pool2_->named_params());
  out.emplace_back("head.w1", &head_.w1);
  out.emplace_back("head.b1", &head_.b1);
  out.emplace_back("head.w2", &head_.w2);
  out.emplace_back("head.b2", &head_.b2);
  return out;
}

UNetModel::UNetModel(const UNetConfig& cfg, Rng& rng)
    : cfg_(checked(cfg)),
      gcn1_(cfg.in_dim, cfg.hidden, true, rng),
      gcn2_(cfg.hidden, cfg.hidden, true, rng),
      gcn3_(cfg.concat_fusion ? 2 * cfg.hidden : cfg.hidden, cfg.out_dim,
            false, rng),
      pooler_(pool::make_pooler(cfg.pooler, cfg.hidden, cfg.settings, rng)) {}

ModelOutput UNetModel::forward(ad::ParamBinder& pb, const graphs::Graph& g) {
  if (g.x.cols() != cfg_.in_dim)
    fail(ErrorCategory::dimension,
         "graph features have width " + std::to_string(g.x.cols()) +
             ", model expects " + std::to_string(cfg_.in_dim));
  Tensor a(g.dense_adjacency());
  Tensor ahat = nn::gcn_norm(a);
  Tensor h1 = gcn1_.forward(pb, Tensor(g.x), ahat);
  pool::PoolOutcome p = pooler_->pool(pb, h1, a);
  Tensor h2 = gcn2_.forward(pb, p.h, nn::gcn_norm(p.a));
  Tensor up = unpool(h2, p.idx, g.n);
  Tensor fused = cfg_.concat_fusion ? concat_cols(up, h1) : add(up, h1);
  ModelOutput out;
  out.embeddings = fused;
  out.predictions = row_log_softmax(gcn3_.forward(pb, fused, ahat));
  accumulate_aux(out.aux, "pool1/", p.aux);
  return out;
}

std::vector<std::pair<std::string, Matrix*>> UNetModel::named_params() {
  std::vector<std::pair<std::string, Matrix*>> out = {
      {"gcn1.w", &gcn1_.w}, {"gcn2.w", &gcn2_.w}, {"gcn3.w", &gcn3_.w}};
  append_prefixed(out, "pool1.", pooler_->named_params());
  return out;
}

void save_checkpoint(const std::string& path, const std::string& kind,
                     uint64_t seed,
                     const std::vector<std::pair<std::string, Matrix*>>& params) {
  nlohmann::json j;
  j["kind"] = kind;
  j["seed"] = seed;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [name, m] : params) {
    nlohmann::json p;
    p["name"] = name;
    p["rows"] = m->rows();
    p["cols"] = m->cols();
    std::vector<double> data;
    data.reserve(static_cast<size_t>(m->size()));
    for (Eigen::Index r = 0; r < m->rows(); ++r)
      for (Eigen::Index c = 0; c < m->cols(); ++c) data.push_back((*m)(r, c));
    p["data"] = std::move(data);
    arr.push_back(std::move(p));
  }
  j["params"] = std::move(arr);
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot write checkpoint: " + path);
  out << j.dump() << '\n';
  if (!out.good()) fail(ErrorCategory::io, "write failed: " + path);
}

uint64_t load_checkpoint(const std::string& path, const std::string& kind,
                         const std::vector<std::pair<std::string, Matrix*>>& params) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open checkpoint: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    fail(ErrorCategory::format, "checkpoint is not valid JSON: " + path);
  try {
    if (j.at("kind").get<std::string>() != kind)
      fail(ErrorCategory::format,
           "checkpoint holds a '" + j.at("kind").get<std::string>() +
               "' model, expected '" + kind + "'");
    uint64_t seed = j.at("seed").get<uint64_t>();
    const nlohmann::json& arr = j.at("params");
    if (arr.size() != params.size())
      fail(ErrorCategory::format,
           "checkpoint has " + std::to_string(arr.size()) +
               " parameters, model has " + std::to_string(params.size()));
    std::map<std::string, const nlohmann::json*> by_name;
    for (const nlohmann::json& p : arr)
      by_name[p.at("name").get<std::string>()] = &p;
    for (const auto& [name, m] : params) {
      auto it = by_name.find(name);
      if (it == by_name.end())
        fail(ErrorCategory::format, "checkpoint is missing parameter " + name);
      const nlohmann::json& p = *it->second;
      auto rows = p.at("rows").get<Eigen::Index>();
      auto cols = p.at("cols").get<Eigen::Index>();
      if (rows != m->rows() || cols != m->cols())
        fail(ErrorCategory::format,
             "parameter " + name + " is " + std::to_string(rows) + "x" +
                 std::to_string(cols) + " in the checkpoint, " +
                 std::to_string(m->rows()) + "x" + std::to_string(m->cols()) +
                 " in the model");
      auto data = p.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        fail(ErrorCategory::format, "parameter " + name + " has wrong length");
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
          (*m)(r, c) = data[static_cast<size_t>(r * cols + c)];
    }
    return seed;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::format,
         "malformed checkpoint " + path + ": " + e.what());
  }
}

}  // namespace gpb::models
