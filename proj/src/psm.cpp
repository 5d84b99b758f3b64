#include "dmls2r/psm.hpp"

#include <numeric>
#include <stdexcept>

#include "dmls2r/rng.hpp"

namespace dmls2r {

PairBatch build_pairs(const Eigen::VectorXd& labeled_targets) {
  const int n = static_cast<int>(labeled_targets.size());
  if (n < 2) {
    throw std::invalid_argument("build_pairs: need at least 2 labeled samples");
  }
  PairBatch pairs;
  const std::size_t count = static_cast<std::size_t>(n) * (n - 1);
  pairs.left.reserve(count);
  pairs.right.reserve(count);
  pairs.diffs.resize(static_cast<Eigen::Index>(count));
  Eigen::Index p = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      pairs.left.push_back(i);
      pairs.right.push_back(j);
      pairs.diffs[p++] = labeled_targets[i] - labeled_targets[j];
    }
  }
  return pairs;
}

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& x, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
  }
  return out;
}

}  // namespace

double psm_loss(const PairDiffFn& diff_fn, const PairBatch& pairs,
                const Eigen::MatrixXd& labeled_features) {
  if (pairs.size() == 0) {
    throw std::invalid_argument("psm_loss: empty pair batch");
  }
  const Eigen::VectorXd estimated =
      diff_fn(gather(labeled_features, pairs.left),
              gather(labeled_features, pairs.right));
  return (pairs.diffs - estimated).squaredNorm() /
         static_cast<double>(pairs.size());
}

double psm_loss(const SiameseModel& m, const PairBatch& pairs,
                const Eigen::MatrixXd& labeled_features) {
  return psm_loss(
      [&m](const Eigen::MatrixXd& xi, const Eigen::MatrixXd& xj) {
        return pair_forward(m, xi, xj);
      },
      pairs, labeled_features);
}

std::pair<double, SiameseGradients> psm_loss_gradient(
    const SiameseModel& m, const PairBatch& pairs,
    const Eigen::MatrixXd& labeled_features) {
  const PairTrace trace =
      pair_forward_trace(m, gather(labeled_features, pairs.left),
                         gather(labeled_features, pairs.right));
  const Eigen::VectorXd residual = trace.output - pairs.diffs;
  const double loss = residual.squaredNorm() / static_cast<double>(pairs.size());
  const Eigen::VectorXd output_grad =
      (2.0 / static_cast<double>(pairs.size())) * residual;
  return {loss, pair_backward(m, trace, output_grad)};
}

EpochStats psm_epoch(SiameseModel& m, const PairBatch& pairs,
                     const Eigen::MatrixXd& labeled_features, AdamState& opt,
                     int batch_size, std::uint64_t shuffle_seed) {
  if (batch_size < 1) {
    throw std::invalid_argument("psm_epoch: batch_size must be >= 1");
  }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(shuffle_seed);
  rng.shuffle(order);

  EpochStats stats;
  double loss_sum = 0.0;
  for (std::size_t begin = 0; begin < order.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
    PairBatch batch;
    batch.diffs.resize(static_cast<Eigen::Index>(end - begin));
    for (std::size_t p = begin; p < end; ++p) {
      batch.left.push_back(pairs.left[order[p]]);
      batch.right.push_back(pairs.right[order[p]]);
      batch.diffs[static_cast<Eigen::Index>(p - begin)] =
          pairs.diffs[static_cast<Eigen::Index>(order[p])];
    }
    const auto [loss, grads] = psm_loss_gradient(m, batch, labeled_features);
    adam_step(m, grads, opt);
    loss_sum += loss;
    stats.step_count += 1;
  }
  stats.mean_loss = loss_sum / static_cast<double>(stats.step_count);
  return stats;
}

}  // namespace dmls2r
