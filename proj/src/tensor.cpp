#include "gpb/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gpb/error.hpp"

namespace gpb::ad {

namespace {

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

[[noreturn]] void shape_fail(const std::string& op, const Tensor& a,
                             const Tensor& b) {
  fail(ErrorCategory::dimension,
       op + " shape mismatch (" + shape_str(a) + " vs " + shape_str(b) + ")");
}

[[noreturn]] void shape_fail(const std::string& op, const Tensor& a) {
  fail(ErrorCategory::dimension, op + " got shape " + shape_str(a));
}

Tape* tape_of(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->on_tape()) continue;
    if (tape && tape != t->tape())
      fail(ErrorCategory::internal, "op mixes tensors from different tapes");
    tape = t->tape();
  }
  return tape;
}

Tensor emit(Tape* tape, Matrix out, Tape::BackFn back) {
  auto value = std::make_shared<const Matrix>(std::move(out));
  if (!tape) return Tensor(value, nullptr, -1);
  if (tape->check_finite() && !value->allFinite())
    fail(ErrorCategory::numeric, "op produced a non-finite value");
  int id = tape->record(value, std::move(back));
  return Tensor(value, tape, id);
}

void check_index_range(const std::vector<int>& idx, int limit,
                       const std::string& op) {
  for (int i : idx)
    if (i < 0 || i >= limit)
      fail(ErrorCategory::dimension,
           op + " index " + std::to_string(i) + " outside [0, " +
               std::to_string(limit) + ")");
}

}  // namespace

Tensor Tape::leaf(const Matrix& value) {
  auto v = std::make_shared<const Matrix>(value);
  if (check_finite_ && !v->allFinite())
    fail(ErrorCategory::numeric, "leaf holds a non-finite value");
  int id = record(v, nullptr);
  return Tensor(v, this, id);
}

int Tape::record(std::shared_ptr<const Matrix> value, BackFn back) {
  nodes_.push_back(Node{std::move(value), std::move(back), Matrix(), false});
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accumulate(int node, const Matrix& g) {
  if (node < 0) return;  // constant input
  Node& n = nodes_[static_cast<size_t>(node)];
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value->rows(), n.value->cols());
    n.has_grad = true;
  }
  n.grad += g;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.on_tape() || loss.tape() != this)
    fail(ErrorCategory::internal, "backward target is not on this tape");
  if (loss.rows() != 1 || loss.cols() != 1)
    fail(ErrorCategory::dimension,
         "backward needs a scalar loss, got " + std::to_string(loss.rows()) +
             "x" + std::to_string(loss.cols()));
  if (ran_backward_)
    fail(ErrorCategory::unsupported, "tape supports a single backward pass");
  ran_backward_ = true;
  accumulate(loss.node(), Matrix::Ones(1, 1));
  for (int id = loss.node(); id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.has_grad && n.back) n.back(n.grad, *this);
  }
}

Matrix Tape::grad(const Tensor& t) const {
  if (!t.on_tape() || t.tape() != this)
    fail(ErrorCategory::internal, "gradient asked for a tensor not on this tape");
  const Node& n = nodes_[static_cast<size_t>(t.node())];
  if (!n.has_grad) return Matrix::Zero(t.rows(), t.cols());
  return n.grad;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  Tape* tape = tape_of({&a, &b});
  return emit(tape, a.value() * b.value(),
              [a, b](const Matrix& g, Tape& t) {
                t.accumulate(a.node(), g * b.value().transpose());
                t.accumulate(b.node(), a.value().transpose() * g);
              });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("add", a, b);
  Tape* tape = tape_of({&a, &b});
  return emit(tape, a.value() + b.value(), [a, b](const Matrix& g, Tape& t) {
    t.accumulate(a.node(), g);
    t.accumulate(b.node(), g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("sub", a, b);
  Tape* tape = tape_of({&a, &b});
  return emit(tape, a.value() - b.value(), [a, b](const Matrix& g, Tape& t) {
    t.accumulate(a.node(), g);
    t.accumulate(b.node(), -g);
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    shape_fail("hadamard", a, b);
  Tape* tape = tape_of({&a, &b});
  return emit(tape, a.value().cwiseProduct(b.value()),
              [a, b](const Matrix& g, Tape& t) {
                t.accumulate(a.node(), g.cwiseProduct(b.value()));
                t.accumulate(b.node(), g.cwiseProduct(a.value()));
              });
}

Tensor transpose(const Tensor& a) {
  Tape* tape = tape_of({&a});
  return emit(tape, a.value().transpose(), [a](const Matrix& g, Tape& t) {
    t.accumulate(a.node(), g.transpose());
  });
}

Tensor relu(const Tensor& a) {
  Tape* tape = tape_of({&a});
  return emit(tape, a.value().cwiseMax(0.0), [a](const Matrix& g, Tape& t) {
    t.accumulate(a.node(),
                 (a.value().array() > 0.0).cast<double>().matrix()
                     .cwiseProduct(g));
  });
}

Tensor tanh(const Tensor& a) {
  Tape* tape = tape_of({&a});
  Matrix out = a.value().array().tanh().matrix();
  return emit(tape, std::move(out), [a](const Matrix& g, Tape& t) {
    Matrix th = a.value().array().tanh();
    t.accumulate(a.node(),
                 g.cwiseProduct((1.0 - th.array().square()).matrix()));
  });
}

Tensor log(const Tensor& a) {
  if ((a.value().array() <= 0.0).any())
    fail(ErrorCategory::numeric, "log needs strictly positive entries");
  Tape* tape = tape_of({&a});
  return emit(tape, a.value().array().log().matrix(),
              [a](const Matrix& g, Tape& t) {
    t.accumulate(a.node(), g.cwiseQuotient(a.value()));
  });
}

Tensor row_softmax(const Tensor& a) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    Eigen::ArrayXd row = a.value().row(r).array();
    row -= row.maxCoeff();
    Eigen::ArrayXd e = row.exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  Tape* tape = tape_of({&a});
  auto value = std::make_shared<const Matrix>(std::move(out));
  if (!tape) return Tensor(value, nullptr, -1);
  int id = tape->record(value, [a, value](const Matrix& g, Tape& t) {
    Matrix ga(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      double dot = g.row(r).dot(value->row(r));
      ga.row(r) = value->row(r).cwiseProduct(
          (g.row(r).array() - dot).matrix());
    }
    t.accumulate(a.node(), ga);
  });
  return Tensor(value, tape, id);
}

Tensor row_log_softmax(const Tensor& a) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    Eigen::ArrayXd row = a.value().row(r).array();
    double mx = row.maxCoeff();
    double lse = mx + std::log((row - mx).exp().sum());
    out.row(r) = (row - lse).matrix();
  }
  Tape* tape = tape_of({&a});
  auto value = std::make_shared<const Matrix>(std::move(out));
  if (!tape) return Tensor(value, nullptr, -1);
  int id = tape->record(value, [a, value](const Matrix& g, Tape& t) {
    Matrix ga(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      double total = g.row(r).sum();
      ga.row(r) =
          g.row(r) - (value->row(r).array().exp() * total).matrix();
    }
    t.accumulate(a.node(), ga);
  });
  return Tensor(value, tape, id);
}

Tensor sum(const Tensor& a) {
  Tape* tape = tape_of({&a});
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return emit(tape, std::move(out), [a](const Matrix& g, Tape& t) {
    t.accumulate(a.node(),
                 Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  Tape* tape = tape_of({&a});
  double count = static_cast<double>(a.rows() * a.cols());
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / count;
  return emit(tape, std::move(out), [a, count](const Matrix& g, Tape& t) {
    t.accumulate(a.node(),
                 Matrix::Constant(a.rows(), a.cols(), g(0, 0) / count));
  });
}

Tensor row_sums(const Tensor& a) {
  Tape* tape = tape_of({&a});
  return emit(tape, a.value().rowwise().sum(),
              [a](const Matrix& g, Tape& t) {
                t.accumulate(a.node(),
                             g * Matrix::Ones(1, a.cols()));
              });
}

Tensor trace(const Tensor& a) {
  if (a.rows() != a.cols()) shape_fail("trace", a);
  Tape* tape = tape_of({&a});
  Matrix out(1, 1);
  out(0, 0) = a.value().trace();
  return emit(tape, std::move(out), [a](const Matrix& g, Tape& t) {
    t.accumulate(a.node(),
                 (g(0, 0) * Matrix::Identity(a.rows(), a.rows())).eval());
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) shape_fail("concat_cols", a, b);
  Tape* tape = tape_of({&a, &b});
  Matrix out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a.value();
  out.rightCols(b.cols()) = b.value();
  return emit(tape, std::move(out), [a, b](const Matrix& g, Tape& t) {
    t.accumulate(a.node(), g.leftCols(a.cols()));
    t.accumulate(b.node(), g.rightCols(b.cols()));
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty())
    fail(ErrorCategory::dimension, "concat_rows needs at least one part");
  Eigen::Index cols = parts[0].cols(), rows = 0;
  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    if (p.cols() != cols) shape_fail("concat_rows", parts[0], p);
    rows += p.rows();
    if (p.on_tape()) {
      if (tape && tape != p.tape())
        fail(ErrorCategory::internal, "op mixes tensors from different tapes");
      tape = p.tape();
    }
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Tensor& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return emit(tape, std::move(out), [parts](const Matrix& g, Tape& t) {
    Eigen::Index at = 0;
    for (const Tensor& p : parts) {
      t.accumulate(p.node(), g.middleRows(at, p.rows()));
      at += p.rows();
    }
  });
}

Tensor slice_rows(const Tensor& a, const std::vector<int>& idx) {
  check_index_range(idx, static_cast<int>(a.rows()), "slice_rows");
  Tape* tape = tape_of({&a});
  Matrix out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(idx[i]);
  return emit(tape, std::move(out), [a, idx](const Matrix& g, Tape& t) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    for (size_t i = 0; i < idx.size(); ++i)
      ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(a.node(), ga);
  });
}

Tensor slice_cols(const Tensor& a, const std::vector<int>& idx) {
  check_index_range(idx, static_cast<int>(a.cols()), "slice_cols");
  Tape* tape = tape_of({&a});
  Matrix out(a.rows(), static_cast<Eigen::Index>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = a.value().col(idx[i]);
  return emit(tape, std::move(out), [a, idx](const Matrix& g, Tape& t) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    for (size_t i = 0; i < idx.size(); ++i)
      ga.col(idx[i]) += g.col(static_cast<Eigen::Index>(i));
    t.accumulate(a.node(), ga);
  });
}

Tensor scatter_rows(const Tensor& a, const std::vector<int>& idx, int n) {
  if (static_cast<Eigen::Index>(idx.size()) != a.rows())
    fail(ErrorCategory::dimension,
         "scatter_rows got " + std::to_string(idx.size()) +
             " indices for " + std::to_string(a.rows()) + " rows");
  check_index_range(idx, n, "scatter_rows");
  if (std::set<int>(idx.begin(), idx.end()).size() != idx.size())
    fail(ErrorCategory::dimension, "scatter_rows indices must be unique");
  Tape* tape = tape_of({&a});
  Matrix out = Matrix::Zero(n, a.cols());
  for (size_t i = 0; i < idx.size(); ++i)
    out.row(idx[i]) = a.value().row(static_cast<Eigen::Index>(i));
  return emit(tape, std::move(out), [a, idx](const Matrix& g, Tape& t) {
    Matrix ga(a.rows(), a.cols());
    for (size_t i = 0; i < idx.size(); ++i)
      ga.row(static_cast<Eigen::Index>(i)) = g.row(idx[i]);
    t.accumulate(a.node(), ga);
  });
}

Tensor cpow(const Tensor& a, double p) {
  bool integral = p == std::floor(p);
  if (!integral && (a.value().array() <= 0.0).any())
    fail(ErrorCategory::numeric,
         "cpow with fractional exponent needs positive entries");
  Tape* tape = tape_of({&a});
  return emit(tape, a.value().array().pow(p).matrix(),
              [a, p](const Matrix& g, Tape& t) {
    Matrix d = (p * a.value().array().pow(p - 1.0)).matrix();
    t.accumulate(a.node(), g.cwiseProduct(d));
  });
}

Tensor add_const(const Tensor& a, double c) {
  Tape* tape = tape_of({&a});
  return emit(tape, (a.value().array() + c).matrix(),
              [a](const Matrix& g, Tape& t) {
    t.accumulate(a.node(), g);
  });
}

Tensor scale(const Tensor& a, double c) {
  Tape* tape = tape_of({&a});
  return emit(tape, c * a.value(), [a, c](const Matrix& g, Tape& t) {
    t.accumulate(a.node(), c * g);
  });
}

Tensor div_scalar(const Tensor& a, const Tensor& s) {
  if (s.rows() != 1 || s.cols() != 1) shape_fail("div_scalar divisor", s);
  double denom = s.value()(0, 0);
  if (denom == 0.0)
    fail(ErrorCategory::numeric, "div_scalar by exact zero");
  Tape* tape = tape_of({&a, &s});
  return emit(tape, a.value() / denom, [a, s, denom](const Matrix& g, Tape& t) {
    t.accumulate(a.node(), g / denom);
    Matrix gs(1, 1);
    gs(0, 0) = -g.cwiseProduct(a.value()).sum() / (denom * denom);
    t.accumulate(s.node(), gs);
  });
}

Tensor row_scale(const Tensor& a, const Tensor& y) {
  if (y.rows() != a.rows() || y.cols() != 1) shape_fail("row_scale", a, y);
  Tape* tape = tape_of({&a, &y});
  Matrix out =
      (a.value().array().colwise() * y.value().col(0).array()).matrix();
  return emit(tape, std::move(out), [a, y](const Matrix& g, Tape& t) {
    t.accumulate(a.node(),
                 (g.array().colwise() * y.value().col(0).array()).matrix());
    Matrix gy = g.cwiseProduct(a.value()).rowwise().sum();
    t.accumulate(y.node(), gy);
  });
}

Tensor add_row_vector(const Tensor& a, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != a.cols())
    shape_fail("add_row_vector", a, b);
  Tape* tape = tape_of({&a, &b});
  Matrix out =
      (a.value().array().rowwise() + b.value().row(0).array()).matrix();
  return emit(tape, std::move(out), [a, b](const Matrix& g, Tape& t) {
    t.accumulate(a.node(), g);
    t.accumulate(b.node(), g.colwise().sum());
  });
}

Tensor trace_psd_sqrt(const Tensor& a) {
  if (a.rows() != a.cols()) shape_fail("trace_psd_sqrt", a);
  if ((a.value() - a.value().transpose()).cwiseAbs().maxCoeff() > 1e-9)
    fail(ErrorCategory::numeric, "trace_psd_sqrt needs a symmetric matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.value());
  if (es.info() != Eigen::Success)
    fail(ErrorCategory::numeric, "eigendecomposition failed");
  Eigen::ArrayXd lambda = es.eigenvalues().array().max(0.0);
  Matrix out(1, 1);
  out(0, 0) = lambda.sqrt().sum();
  Tape* tape = tape_of({&a});
  Matrix v = es.eigenvectors();
  return emit(tape, std::move(out),
              [a, v, lambda](const Matrix& g, Tape& t) {
                Eigen::ArrayXd inv_sqrt =
                    0.5 / lambda.max(1e-12).sqrt();
                Matrix d =
                    v * inv_sqrt.matrix().asDiagonal() * v.transpose();
                t.accumulate(a.node(), g(0, 0) * d);
              });
}

Tensor ParamBinder::bind(Matrix& param) {
  for (const auto& [ptr, tensor] : bound_)
    if (ptr == &param) return tensor;
  Tensor t = tape_->leaf(param);
  bound_.emplace_back(&param, t);
  return t;
}

std::vector<Matrix*> ParamBinder::params() const {
  std::vector<Matrix*> out;
  out.reserve(bound_.size());
  for (const auto& [ptr, tensor] : bound_) out.push_back(ptr);
  return out;
}

std::vector<Matrix> ParamBinder::grads() const {
  std::vector<Matrix> out;
  out.reserve(bound_.size());
  for (const auto& [ptr, tensor] : bound_) out.push_back(tape_->grad(tensor));
  return out;
}

void Adam::step(const std::vector<Matrix*>& params,
                const std::vector<Matrix>& grads) {
  if (params.size() != grads.size())
    fail(ErrorCategory::internal, "adam got mismatched params and grads");
  if (m_.empty()) {
    for (const Matrix* p : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (m_.size() != params.size())
    fail(ErrorCategory::internal, "adam parameter count changed");
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = grads[i];
    if (p.rows() != g.rows() || p.cols() != g.cols() ||
        m_[i].rows() != p.rows() || m_[i].cols() != p.cols())
      fail(ErrorCategory::internal, "adam parameter shape changed");
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Eigen::ArrayXXd mhat = m_[i].array() / bc1;
    Eigen::ArrayXXd vhat = v_[i].array() / bc2;
    p.array() -= cfg_.lr * mhat / (vhat.sqrt() + cfg_.eps);
  }
}

double gradcheck(
    const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& f,
    const std::vector<Matrix>& inputs, double h) {
  std::vector<Matrix> analytic;
  {
    Tape tape;
    tape.set_check_finite(true);
    std::vector<Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const Matrix& m : inputs) leaves.push_back(tape.leaf(m));
    Tensor loss = f(tape, leaves);
    if (loss.rows() != 1 || loss.cols() != 1)
      fail(ErrorCategory::dimension, "gradcheck needs a scalar loss");
    tape.backward(loss);
    for (const Tensor& l : leaves) analytic.push_back(tape.grad(l));
  }
  auto eval = [&](const std::vector<Matrix>& probe) {
    Tape tape;
    tape.set_check_finite(false);
    std::vector<Tensor> leaves;
    leaves.reserve(probe.size());
    for (const Matrix& m : probe) leaves.push_back(tape.leaf(m));
    return f(tape, leaves).value()(0, 0);
  };
  double worst = 0.0;
  std::vector<Matrix> probe = inputs;
  for (size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].rows(); ++i) {
      for (Eigen::Index j = 0; j < inputs[k].cols(); ++j) {
        double kept = probe[k](i, j);
        probe[k](i, j) = kept + h;
        double up = eval(probe);
        probe[k](i, j) = kept - h;
        double down = eval(probe);
        probe[k](i, j) = kept;
        double numeric = (up - down) / (2.0 * h);
        double a = analytic[k](i, j);
        double rel =
            std::abs(a - numeric) /
            std::max(1e-8, std::abs(a) + std::abs(numeric));
        worst = std::max(worst, rel);
      }
    }
  }
  return worst;
}

}  // namespace gpb::ad
