#include "dmls2r/siamese.hpp"

#include <cmath>
#include <stdexcept>

#include "dmls2r/rng.hpp"

namespace dmls2r {

void SiameseModel::validate() const {
  subnet.validate();
  if (head_weights.size() != 2 * embed_dim()) {
    throw std::invalid_argument("siamese: head width must be 2 * embed dim");
  }
  if (!head_weights.allFinite() || !std::isfinite(head_bias)) {
    throw std::invalid_argument("siamese: non-finite head parameter");
  }
}

SiameseModel init_siamese(int input_dim, std::uint64_t seed, int hidden) {
  if (input_dim <= 0 || hidden <= 0) {
    throw std::invalid_argument("init_siamese: dimensions must be positive");
  }
  SiameseModel m;
  m.subnet = init_mlp_all_rectifier({input_dim, hidden, hidden},
                                    derive_seed(seed, "subnet"));
  const int e2 = 2 * hidden;
  const double scale = 1.0 / std::sqrt(static_cast<double>(e2));
  Rng rng(derive_seed(seed, "head"));
  m.head_weights.resize(e2);
  for (int i = 0; i < e2; ++i) {
    m.head_weights[i] = rng.uniform(-scale, scale);
  }
  m.head_bias = 0.0;
  return m;
}

Eigen::MatrixXd embed(const SiameseModel& m, const Eigen::MatrixXd& batch) {
  return forward(m.subnet, batch).output();
}

namespace {

Eigen::VectorXd head_combine(const SiameseModel& m, const Eigen::MatrixXd& el,
                             const Eigen::MatrixXd& er) {
  const int e = m.embed_dim();
  Eigen::VectorXd out = el * m.head_weights.head(e) + er * m.head_weights.tail(e);
  out.array() += m.head_bias;
  return out;
}

}  // namespace

PairTrace pair_forward_trace(const SiameseModel& m, const Eigen::MatrixXd& xi,
                             const Eigen::MatrixXd& xj) {
  if (xi.rows() != xj.rows()) {
    throw std::invalid_argument("pair_forward: batch size mismatch");
  }
  PairTrace trace;
  trace.left = forward(m.subnet, xi);
  trace.right = forward(m.subnet, xj);
  trace.output = head_combine(m, trace.left.output(), trace.right.output());
  return trace;
}

Eigen::VectorXd pair_forward(const SiameseModel& m, const Eigen::MatrixXd& xi,
                             const Eigen::MatrixXd& xj) {
  return pair_forward_trace(m, xi, xj).output;
}

SiameseGradients SiameseGradients::zeros_like(const SiameseModel& m) {
  SiameseGradients g;
  g.subnet = Gradients::zeros_like(m.subnet);
  g.head_weights = Eigen::VectorXd::Zero(m.head_weights.size());
  g.head_bias = 0.0;
  return g;
}

void SiameseGradients::add(const SiameseGradients& other) {
  subnet.add(other.subnet);
  head_weights += other.head_weights;
  head_bias += other.head_bias;
}

void SiameseGradients::scale(double factor) {
  subnet.scale(factor);
  head_weights *= factor;
  head_bias *= factor;
}

SiameseGradients pair_backward(const SiameseModel& m, const PairTrace& trace,
                               const Eigen::VectorXd& output_grad) {
  if (output_grad.size() != trace.output.size()) {
    throw std::invalid_argument("pair_backward: output_grad size mismatch");
  }
  const int e = m.embed_dim();
  SiameseGradients g = SiameseGradients::zeros_like(m);

  g.head_weights.head(e) = trace.left.output().transpose() * output_grad;
  g.head_weights.tail(e) = trace.right.output().transpose() * output_grad;
  g.head_bias = output_grad.sum();

  const Eigen::MatrixXd left_embed_grad =
      output_grad * m.head_weights.head(e).transpose();
  const Eigen::MatrixXd right_embed_grad =
      output_grad * m.head_weights.tail(e).transpose();

  g.subnet = backward(m.subnet, trace.left, left_embed_grad).grads;
  g.subnet.add(backward(m.subnet, trace.right, right_embed_grad).grads);
  return g;
}

Gradients embed_backward(const SiameseModel& m, const ForwardTrace& trace,
                         const Eigen::MatrixXd& embedding_grad) {
  return backward(m.subnet, trace, embedding_grad).grads;
}

double embed_distance(const SiameseModel& m, const Eigen::RowVectorXd& a,
                      const Eigen::RowVectorXd& b) {
  const Eigen::MatrixXd ea = embed(m, a);
  const Eigen::MatrixXd eb = embed(m, b);
  return (ea - eb).norm();
}

BlockView param_blocks(SiameseModel& m) {
  BlockView view = param_blocks(m.subnet);
  view.emplace_back(m.head_weights.data(), m.head_weights.size());
  view.emplace_back(&m.head_bias, 1);
  return view;
}

ConstBlockView param_blocks(const SiameseModel& m) {
  ConstBlockView view = param_blocks(m.subnet);
  view.emplace_back(m.head_weights.data(), m.head_weights.size());
  view.emplace_back(&m.head_bias, 1);
  return view;
}

BlockView grad_blocks(SiameseGradients& g) {
  BlockView view = grad_blocks(g.subnet);
  view.emplace_back(g.head_weights.data(), g.head_weights.size());
  view.emplace_back(&g.head_bias, 1);
  return view;
}

ConstBlockView grad_blocks(const SiameseGradients& g) {
  ConstBlockView view = grad_blocks(g.subnet);
  view.emplace_back(g.head_weights.data(), g.head_weights.size());
  view.emplace_back(&g.head_bias, 1);
  return view;
}

AdamState init_adam(const SiameseModel& m, AdamConfig cfg) {
  return AdamState::init(param_blocks(m), cfg);
}

void adam_step(SiameseModel& m, const SiameseGradients& g, AdamState& s) {
  adam_step(param_blocks(m), grad_blocks(g), s);
}

Eigen::MatrixXd cross_diff(const SiameseModel& m, const Eigen::MatrixXd& a,
                           const Eigen::MatrixXd& b) {
  const int e = m.embed_dim();
  const Eigen::VectorXd left = embed(m, a) * m.head_weights.head(e);
  const Eigen::VectorXd right = embed(m, b) * m.head_weights.tail(e);
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    out.row(r) = (right.array() + left[r] + m.head_bias).transpose();
  }
  return out;
}

CrossDiffFn cross_diff_fn(const SiameseModel& m) {
  return [m](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return cross_diff(m, a, b);
  };
}

}  // namespace dmls2r
