#include "gpb/gnn.hpp"

#include <cmath>

#include "gpb/error.hpp"

namespace gpb::nn {

using namespace gpb::ad;

Tensor gcn_norm(const Tensor& a) {
  if (a.rows() != a.cols())
    fail(ErrorCategory::dimension,
         "gcn_norm needs a square adjacency, got " +
             std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  Eigen::Index n = a.rows();
  Tensor with_loops = add(a, Tensor(Matrix::Identity(n, n)));
  Tensor d = cpow(row_sums(with_loops), -0.5);
  return hadamard(with_loops, matmul(d, transpose(d)));
}

Matrix gcn_norm_dense(const Matrix& a) { return gcn_norm(Tensor(a)).value(); }

Matrix glorot(int fan_in, int fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (int i = 0; i < fan_in; ++i)
    for (int j = 0; j < fan_out; ++j) w(i, j) = rng.uniform(-limit, limit);
  return w;
}

Tensor gcn_forward(const Tensor& h, const Tensor& ahat, const Tensor& w,
                   bool use_relu) {
  Tensor out = matmul(ahat, matmul(h, w));
  return use_relu ? relu(out) : out;
}

Tensor global_mean_readout(const Tensor& h, const std::vector<int>& indicator,
                           int num_graphs) {
  if (static_cast<Eigen::Index>(indicator.size()) != h.rows())
    fail(ErrorCategory::dimension,
         "readout indicator covers " + std::to_string(indicator.size()) +
             " nodes for " + std::to_string(h.rows()) + " rows");
  std::vector<int> sizes(static_cast<size_t>(num_graphs), 0);
  int prev = 0;
  for (int g : indicator) {
    if (g < prev || g >= num_graphs)
      fail(ErrorCategory::dimension,
           "readout indicator must be non-decreasing graph ids");
    prev = g;
    ++sizes[static_cast<size_t>(g)];
  }
  Matrix averaging = Matrix::Zero(num_graphs, h.rows());
  for (int g = 0; g < num_graphs; ++g)
    if (sizes[static_cast<size_t>(g)] == 0)
      fail(ErrorCategory::dimension,
           "readout group " + std::to_string(g) + " is empty");
  for (size_t v = 0; v < indicator.size(); ++v)
    averaging(indicator[v], static_cast<Eigen::Index>(v)) =
        1.0 / sizes[static_cast<size_t>(indicator[v])];
  return matmul(Tensor(std::move(averaging)), h);
}

Tensor mean_rows(const Tensor& h) {
  Matrix averaging =
      Matrix::Constant(1, h.rows(), 1.0 / static_cast<double>(h.rows()));
  return matmul(Tensor(std::move(averaging)), h);
}

}  // namespace gpb::nn
