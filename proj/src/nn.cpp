#include "dmls2r/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dmls2r/rng.hpp"

namespace dmls2r {

std::vector<int> MlpParams::layer_sizes() const {
  std::vector<int> sizes;
  sizes.push_back(input_dim());
  for (const auto& w : weights) {
    sizes.push_back(static_cast<int>(w.rows()));
  }
  return sizes;
}

void MlpParams::validate() const {
  if (weights.empty() || weights.size() != biases.size() ||
      weights.size() != activations.size()) {
    throw std::invalid_argument("mlp: inconsistent layer storage");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (biases[l].size() != weights[l].rows()) {
      throw std::invalid_argument("mlp: bias size mismatch at layer " +
                                  std::to_string(l));
    }
    if (l > 0 && weights[l].cols() != weights[l - 1].rows()) {
      throw std::invalid_argument("mlp: fan mismatch between layers " +
                                  std::to_string(l - 1) + " and " +
                                  std::to_string(l));
    }
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      throw std::invalid_argument("mlp: non-finite parameter at layer " +
                                  std::to_string(l));
    }
  }
}

Gradients Gradients::zeros_like(const MlpParams& p) {
  Gradients g;
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    g.weights.emplace_back(
        Eigen::MatrixXd::Zero(p.weights[l].rows(), p.weights[l].cols()));
    g.biases.emplace_back(Eigen::VectorXd::Zero(p.biases[l].size()));
  }
  return g;
}

void Gradients::add(const Gradients& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
}

void Gradients::scale(double factor) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] *= factor;
    biases[l] *= factor;
  }
}

namespace {

MlpParams init_layers(const std::vector<int>& layer_sizes, std::uint64_t seed,
                      bool rectify_last) {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("init_mlp: need at least 2 layer sizes");
  }
  for (int s : layer_sizes) {
    if (s <= 0) {
      throw std::invalid_argument("init_mlp: layer sizes must be positive");
    }
  }
  Rng rng(seed);
  MlpParams p;
  for (std::size_t l = 1; l < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l - 1];
    const int fan_out = layer_sizes[l];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) {
        w(r, c) = rng.uniform(-scale, scale);
      }
    }
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(Eigen::VectorXd::Zero(fan_out));
    const bool last = l + 1 == layer_sizes.size();
    p.activations.push_back(last && !rectify_last ? Activation::Identity
                                                  : Activation::Rectifier);
  }
  return p;
}

Eigen::MatrixXd apply_activation(Activation act, const Eigen::MatrixXd& pre) {
  if (act == Activation::Rectifier) {
    return pre.cwiseMax(0.0);
  }
  return pre;
}

}  // namespace

MlpParams init_mlp(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  return init_layers(layer_sizes, seed, /*rectify_last=*/false);
}

MlpParams init_mlp_all_rectifier(const std::vector<int>& layer_sizes,
                                 std::uint64_t seed) {
  return init_layers(layer_sizes, seed, /*rectify_last=*/true);
}

ForwardTrace forward(const MlpParams& p, const Eigen::MatrixXd& batch) {
  if (batch.cols() != p.input_dim()) {
    throw std::invalid_argument(
        "forward: batch width " + std::to_string(batch.cols()) +
        " does not match input dim " + std::to_string(p.input_dim()));
  }
  ForwardTrace trace;
  trace.input = batch;
  const Eigen::MatrixXd* current = &trace.input;
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    Eigen::MatrixXd pre = (*current) * p.weights[l].transpose();
    pre.rowwise() += p.biases[l].transpose();
    trace.pre.push_back(std::move(pre));
    trace.post.push_back(apply_activation(p.activations[l], trace.pre.back()));
    current = &trace.post.back();
  }
  return trace;
}

BackwardResult backward(const MlpParams& p, const ForwardTrace& trace,
                        const Eigen::MatrixXd& output_grad) {
  if (output_grad.rows() != trace.output().rows() ||
      output_grad.cols() != trace.output().cols()) {
    throw std::invalid_argument("backward: output_grad shape mismatch");
  }
  BackwardResult result;
  result.grads = Gradients::zeros_like(p);
  Eigen::MatrixXd post_grad = output_grad;
  for (std::size_t i = p.layer_count(); i-- > 0;) {
    Eigen::MatrixXd pre_grad;
    if (p.activations[i] == Activation::Rectifier) {
      // Zero subgradient at exactly 0.
      pre_grad = (trace.pre[i].array() > 0.0)
                     .select(post_grad.array(), 0.0)
                     .matrix();
    } else {
      pre_grad = post_grad;
    }
    const Eigen::MatrixXd& layer_input = i == 0 ? trace.input : trace.post[i - 1];
    result.grads.weights[i] = pre_grad.transpose() * layer_input;
    result.grads.biases[i] = pre_grad.colwise().sum().transpose();
    post_grad = pre_grad * p.weights[i];
  }
  result.input_grad = std::move(post_grad);
  return result;
}

BlockView param_blocks(MlpParams& p) {
  BlockView view;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    view.emplace_back(p.weights[l].data(), p.weights[l].size());
    view.emplace_back(p.biases[l].data(), p.biases[l].size());
  }
  return view;
}

ConstBlockView param_blocks(const MlpParams& p) {
  ConstBlockView view;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    view.emplace_back(p.weights[l].data(), p.weights[l].size());
    view.emplace_back(p.biases[l].data(), p.biases[l].size());
  }
  return view;
}

BlockView grad_blocks(Gradients& g) {
  BlockView view;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    view.emplace_back(g.weights[l].data(), g.weights[l].size());
    view.emplace_back(g.biases[l].data(), g.biases[l].size());
  }
  return view;
}

ConstBlockView grad_blocks(const Gradients& g) {
  ConstBlockView view;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    view.emplace_back(g.weights[l].data(), g.weights[l].size());
    view.emplace_back(g.biases[l].data(), g.biases[l].size());
  }
  return view;
}

AdamState AdamState::init(const ConstBlockView& params, AdamConfig cfg) {
  AdamState s;
  s.config = cfg;
  for (const auto& block : params) {
    s.first_moment.emplace_back(Eigen::ArrayXd::Zero(block.size()));
    s.second_moment.emplace_back(Eigen::ArrayXd::Zero(block.size()));
  }
  return s;
}

void adam_step(BlockView params, const ConstBlockView& grads, AdamState& s) {
  if (params.size() != grads.size() || params.size() != s.first_moment.size()) {
    throw std::invalid_argument("adam_step: block count mismatch");
  }
  for (const auto& g : grads) {
    if (!g.allFinite()) {
      throw std::invalid_argument("adam_step: non-finite gradient");
    }
  }
  s.step_count += 1;
  const auto& c = s.config;
  const double m_corr = 1.0 - std::pow(c.beta1, static_cast<double>(s.step_count));
  const double v_corr = 1.0 - std::pow(c.beta2, static_cast<double>(s.step_count));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = s.first_moment[b];
    auto& v = s.second_moment[b];
    m = c.beta1 * m + (1.0 - c.beta1) * grads[b];
    v = c.beta2 * v + (1.0 - c.beta2) * grads[b].square();
    params[b] -= c.learning_rate * (m / m_corr) /
                 ((v / v_corr).sqrt() + c.epsilon);
  }
}

void adam_step(MlpParams& p, const Gradients& g, AdamState& s) {
  adam_step(param_blocks(p), grad_blocks(g), s);
}

double grad_check(const std::function<double()>& loss_at_current,
                  BlockView params, const ConstBlockView& analytic,
                  double step, int probe_count, std::uint64_t seed) {
  if (step <= 0.0) {
    throw std::invalid_argument("grad_check: step must be positive");
  }
  std::size_t total = 0;
  for (const auto& block : params) {
    total += static_cast<std::size_t>(block.size());
  }
  Rng rng(seed);
  double worst = 0.0;
  const std::size_t probes =
      probe_count > 0
          ? std::min(static_cast<std::size_t>(probe_count), total)
          : total;
  for (std::size_t n = 0; n < probes; ++n) {
    std::size_t flat = probes < total ? rng.uniform_index(total) : n;
    std::size_t b = 0;
    while (flat >= static_cast<std::size_t>(params[b].size())) {
      flat -= static_cast<std::size_t>(params[b].size());
      ++b;
    }
    const double original = params[b][flat];
    params[b][flat] = original + step;
    const double loss_plus = loss_at_current();
    params[b][flat] = original - step;
    const double loss_minus = loss_at_current();
    params[b][flat] = original;
    const double numeric = (loss_plus - loss_minus) / (2.0 * step);
    const double exact = analytic[b][flat];
    const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-10});
    worst = std::max(worst, std::abs(numeric - exact) / denom);
  }
  return worst;
}

double grad_check(const std::function<double(const MlpParams&)>& loss,
                  MlpParams& p, const Gradients& analytic, double step,
                  int probe_count, std::uint64_t seed) {
  return grad_check([&] { return loss(p); }, param_blocks(p),
                    grad_blocks(analytic), step, probe_count, seed);
}

}  // namespace dmls2r
