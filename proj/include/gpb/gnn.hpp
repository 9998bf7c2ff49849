#pragma once

#include <vector>

#include "gpb/rng.hpp"
#include "gpb/tensor.hpp"

namespace gpb::nn {

using ad::Matrix;
using ad::Tensor;

// Symmetric renormalization D^(-1/2) (A + I) D^(-1/2) with D the degree of
// A + I. Differentiable in A, so coarsened adjacencies that depend on
// parameters keep their gradient path. Weighted entries are treated as
// capacities; they must be non-negative.
Tensor gcn_norm(const Tensor& a);
Matrix gcn_norm_dense(const Matrix& a);

// Uniform init on [-limit, limit] with limit = sqrt(6 / (fan_in + fan_out)).
Matrix glorot(int fan_in, int fan_out, Rng& rng);

// One graph-convolution step: activation(Ahat * H * W).
Tensor gcn_forward(const Tensor& h, const Tensor& ahat, const Tensor& w,
                   bool use_relu);

struct GcnLayer {
  Matrix w;
  bool use_relu;

  GcnLayer(int in, int out, bool relu_activation, Rng& rng)
      : w(glorot(in, out, rng)), use_relu(relu_activation) {}
  Tensor forward(ad::ParamBinder& pb, const Tensor& h, const Tensor& ahat) {
    return gcn_forward(h, ahat, pb.bind(w), use_relu);
  }
};

// Mean of each indicator group's rows; indicator must be non-decreasing and
// cover every graph id in [0, num_graphs).
Tensor global_mean_readout(const Tensor& h, const std::vector<int>& indicator,
                           int num_graphs);

// Column means as a single row; readout for a lone graph.
Tensor mean_rows(const Tensor& h);

}  // namespace gpb::nn
