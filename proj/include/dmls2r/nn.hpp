#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

namespace dmls2r {

enum class Activation { Rectifier, Identity };

// Fully connected network parameters. Layer l maps fan_in -> fan_out via
// post = act(input * W^T + b). Weight matrices are [fan_out x fan_in].
struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  std::vector<Activation> activations;

  std::size_t layer_count() const { return weights.size(); }
  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }
  std::vector<int> layer_sizes() const;

  // Throws std::invalid_argument on dimension mismatch or non-finite entries.
  void validate() const;
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static Gradients zeros_like(const MlpParams& p);
  void add(const Gradients& other);
  void scale(double factor);
};

// Per-layer pre/post activations retained by forward() for the backward pass.
struct ForwardTrace {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> pre;
  std::vector<Eigen::MatrixXd> post;

  const Eigen::MatrixXd& output() const { return post.back(); }
};

// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
// Hidden layers get the rectifier, the final layer is identity.
MlpParams init_mlp(const std::vector<int>& layer_sizes, std::uint64_t seed);

// Same shapes, rectifier on every layer. Used for embedding towers where the
// last layer output is itself a hidden representation.
MlpParams init_mlp_all_rectifier(const std::vector<int>& layer_sizes,
                                 std::uint64_t seed);

ForwardTrace forward(const MlpParams& p, const Eigen::MatrixXd& batch);

struct BackwardResult {
  Gradients grads;
  Eigen::MatrixXd input_grad;
};

// Reverse-mode gradients of the scalar whose gradient w.r.t. the network
// output is output_grad. input_grad is returned so Siamese towers can chain
// through a shared head. Rectifier units pass zero gradient where the
// pre-activation is <= 0 (tie at exactly 0 propagates zero).
BackwardResult backward(const MlpParams& p, const ForwardTrace& trace,
                        const Eigen::MatrixXd& output_grad);

// Flat, ordered views over parameter storage (weights then bias, per layer).
// The optimizer and the gradient checker operate on these.
using BlockView = std::vector<Eigen::Map<Eigen::ArrayXd>>;
using ConstBlockView = std::vector<Eigen::Map<const Eigen::ArrayXd>>;

BlockView param_blocks(MlpParams& p);
ConstBlockView param_blocks(const MlpParams& p);
BlockView grad_blocks(Gradients& g);
ConstBlockView grad_blocks(const Gradients& g);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  long step_count = 0;
  std::vector<Eigen::ArrayXd> first_moment;
  std::vector<Eigen::ArrayXd> second_moment;

  static AdamState init(const ConstBlockView& params, AdamConfig cfg = {});
};

// Bias-corrected Adam update; increments step_count. Throws on non-finite
// gradient entries.
void adam_step(BlockView params, const ConstBlockView& grads, AdamState& s);
void adam_step(MlpParams& p, const Gradients& g, AdamState& s);

// Compares the analytic gradient against central finite differences on a
// random subsample of parameters; returns the worst relative deviation.
// loss_at_current re-evaluates the loss after in-place perturbation of the
// parameter blocks (they are restored afterwards).
double grad_check(const std::function<double()>& loss_at_current,
                  BlockView params, const ConstBlockView& analytic,
                  double step, int probe_count, std::uint64_t seed);

double grad_check(const std::function<double(const MlpParams&)>& loss,
                  MlpParams& p, const Gradients& analytic, double step,
                  int probe_count = 200, std::uint64_t seed = 0);

}  // namespace dmls2r
