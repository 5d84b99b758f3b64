#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>

#include "dmls2r/nn.hpp"

namespace dmls2r {

// Siamese network: a shared sub-network tower producing embeddings, plus a
// linear pair head over the concatenated embeddings of an ordered pair.
// pair value = head_weights[0:E] . embed(left)
//            + head_weights[E:2E] . embed(right) + head_bias
// The head is deliberately asymmetric in its arguments; the predictor
// symmetrizes at estimation time.
struct SiameseModel {
  MlpParams subnet;
  Eigen::VectorXd head_weights;
  double head_bias = 0.0;

  int input_dim() const { return subnet.input_dim(); }
  int embed_dim() const { return subnet.output_dim(); }
  void validate() const;
};

// Tower: input_dim -> hidden -> hidden, rectifier on both layers; the second
// hidden layer's post-activation is the embedding.
SiameseModel init_siamese(int input_dim, std::uint64_t seed, int hidden = 100);

Eigen::MatrixXd embed(const SiameseModel& m, const Eigen::MatrixXd& batch);

// Row-aligned pair values: output[r] = f_d(xi.row(r), xj.row(r)).
Eigen::VectorXd pair_forward(const SiameseModel& m, const Eigen::MatrixXd& xi,
                             const Eigen::MatrixXd& xj);

struct PairTrace {
  ForwardTrace left;
  ForwardTrace right;
  Eigen::VectorXd output;
};

PairTrace pair_forward_trace(const SiameseModel& m, const Eigen::MatrixXd& xi,
                             const Eigen::MatrixXd& xj);

struct SiameseGradients {
  Gradients subnet;
  Eigen::VectorXd head_weights;
  double head_bias = 0.0;

  static SiameseGradients zeros_like(const SiameseModel& m);
  void add(const SiameseGradients& other);
  void scale(double factor);
};

// Backward through the head and both towers; the shared sub-network receives
// the sum of both towers' parameter gradients.
SiameseGradients pair_backward(const SiameseModel& m, const PairTrace& trace,
                               const Eigen::VectorXd& output_grad);

// Backward from embedding-space gradients only (no head involvement); used by
// the metric-learning step.
Gradients embed_backward(const SiameseModel& m, const ForwardTrace& trace,
                         const Eigen::MatrixXd& embedding_grad);

// Euclidean distance between two samples in embedding space.
double embed_distance(const SiameseModel& m, const Eigen::RowVectorXd& a,
                      const Eigen::RowVectorXd& b);

BlockView param_blocks(SiameseModel& m);
ConstBlockView param_blocks(const SiameseModel& m);
BlockView grad_blocks(SiameseGradients& g);
ConstBlockView grad_blocks(const SiameseGradients& g);

AdamState init_adam(const SiameseModel& m, AdamConfig cfg = {});
void adam_step(SiameseModel& m, const SiameseGradients& g, AdamState& s);

// All-pairs difference matrix: result(r, c) = f_d(a.row(r), b.row(c)).
// Evaluated with one embedding pass per side. The std::function form is the
// seam where tests inject exact oracles in place of a trained model.
using CrossDiffFn =
    std::function<Eigen::MatrixXd(const Eigen::MatrixXd&, const Eigen::MatrixXd&)>;

Eigen::MatrixXd cross_diff(const SiameseModel& m, const Eigen::MatrixXd& a,
                           const Eigen::MatrixXd& b);
CrossDiffFn cross_diff_fn(const SiameseModel& m);

}  // namespace dmls2r
