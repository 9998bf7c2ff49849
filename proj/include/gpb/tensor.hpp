#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gpb::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

// 2-D double tensor: a value plus an optional tape node. Tensors made from a
// bare Matrix are constants; gradients flow only through tensors created by
// Tape::leaf or derived from one by the ops below.
class Tensor {
 public:
  Tensor() : value_(std::make_shared<const Matrix>()) {}
  explicit Tensor(Matrix v)
      : value_(std::make_shared<const Matrix>(std::move(v))) {}
  Tensor(std::shared_ptr<const Matrix> v, Tape* tape, int node)
      : value_(std::move(v)), tape_(tape), node_(node) {}

  const Matrix& value() const { return *value_; }
  std::shared_ptr<const Matrix> shared_value() const { return value_; }
  Eigen::Index rows() const { return value_->rows(); }
  Eigen::Index cols() const { return value_->cols(); }
  bool on_tape() const { return tape_ != nullptr; }
  bool requires_grad() const { return on_tape(); }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

 private:
  std::shared_ptr<const Matrix> value_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Append-only record of operations. Insertion order is a topological order,
// so backward() is a single reverse sweep that visits each node exactly once;
// gradient accumulation order is fixed, which keeps runs bitwise
// reproducible. A tape supports one backward pass.
class Tape {
 public:
  using BackFn = std::function<void(const Matrix& grad, Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Gradient-tracked input (parameters and gradcheck probes).
  Tensor leaf(const Matrix& value);

  // Records an op result; back may be empty for leaves.
  int record(std::shared_ptr<const Matrix> value, BackFn back);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse.
  // loss must be a 1x1 tensor recorded on this tape.
  void backward(const Tensor& loss);

  // Gradient of the last backward() w.r.t. t; zero for nodes the loss never
  // reached. t must live on this tape.
  Matrix grad(const Tensor& t) const;

  void accumulate(int node, const Matrix& g);

  int size() const { return static_cast<int>(nodes_.size()); }
  bool check_finite() const { return check_finite_; }
  void set_check_finite(bool v) { check_finite_ = v; }

 private:
  struct Node {
    std::shared_ptr<const Matrix> value;
    BackFn back;
    Matrix grad;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
  bool ran_backward_ = false;
#ifdef NDEBUG
  bool check_finite_ = false;
#else
  bool check_finite_ = true;
#endif
};

// Elementwise and structural ops. Each checks shapes up front and raises a
// dimension error naming the offending shapes; each registers its reverse
// rule when an input is on a tape.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor log(const Tensor& a);          // entries must be positive
Tensor row_softmax(const Tensor& a);
Tensor row_log_softmax(const Tensor& a);
Tensor sum(const Tensor& a);          // 1x1
Tensor mean(const Tensor& a);         // 1x1
Tensor row_sums(const Tensor& a);     // n x 1
Tensor trace(const Tensor& a);        // 1x1, square input
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, const std::vector<int>& idx);
Tensor slice_cols(const Tensor& a, const std::vector<int>& idx);
// Rows of a placed at positions idx of an n-row zero matrix; idx must be
// unique and cover every row of a.
Tensor scatter_rows(const Tensor& a, const std::vector<int>& idx, int n);
Tensor cpow(const Tensor& a, double p);  // fractional p needs positive entries
Tensor add_const(const Tensor& a, double c);
Tensor scale(const Tensor& a, double c);
Tensor div_scalar(const Tensor& a, const Tensor& s);   // s is 1x1, nonzero
Tensor row_scale(const Tensor& a, const Tensor& y);    // y is rows(a) x 1
Tensor add_row_vector(const Tensor& a, const Tensor& b);  // b is 1 x cols(a)
// Tr(M^(1/2)) of a symmetric positive semidefinite matrix via its
// eigendecomposition; the gradient (1/2) M^(-1/2) assumes M positive
// definite (near-zero eigenvalues are clamped).
Tensor trace_psd_sqrt(const Tensor& a);

// Binds persistent parameter matrices to a tape, once each, so a forward
// pass that reuses a layer accumulates into a single leaf. After backward,
// grads() returns d(loss)/d(param) in bind order.
class ParamBinder {
 public:
  explicit ParamBinder(Tape& tape) : tape_(&tape) {}
  Tensor bind(Matrix& param);
  std::vector<Matrix*> params() const;
  std::vector<Matrix> grads() const;
  Tape& tape() { return *tape_; }

 private:
  Tape* tape_;
  std::vector<std::pair<Matrix*, Tensor>> bound_;
};

// Adam with bias-corrected moments. State shapes are fixed by the first
// step; a mismatching later call is an internal error.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void step(const std::vector<Matrix*>& params,
            const std::vector<Matrix>& grads);
  long long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long long t_ = 0;
  std::vector<Matrix> m_, v_;
};

// Central-difference gradient check. f must build a scalar loss from the
// given leaves and be deterministic; returns the max over all entries of
// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double gradcheck(
    const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& f,
    const std::vector<Matrix>& inputs, double h = 1e-5);

}  // namespace gpb::ad
